/**
 * Editor commands: generation/repair with accept-reject flow, and delta
 * minimization with per-removal preview. One job runs per editor window;
 * invoking a command while another job is active asks to cancel it first.
 */

import { RpcFailure, ServiceClient, ServiceUnreachable } from "./client.js";
import {
  DiffPreview,
  EditorBuffer,
  Notifier,
  ProgressView,
  lineDiffHunks,
  removalHunks,
} from "./editor.js";
import { GenerateResult, JobKind, MinimizeResult, SelectionSpan } from "./protocol.js";

export type CommandOutcome = "applied" | "rejected" | "failed" | "unreachable" | "busy";

export interface CommandDeps {
  client: ServiceClient;
  buffer: EditorBuffer;
  notifier: Notifier;
  progress: ProgressView;
  preview: DiffPreview;
}

export interface GenerateOptions {
  kind?: Extract<JobKind, "generate" | "repair">;
  useSelection?: boolean;
  /** Restrict generation to clause kinds, e.g. ["invariant"]; empty = all. */
  clauseKinds?: string[];
  retryLimit?: number;
}

export class CommandController {
  private activeJob: string | null = null;

  constructor(private readonly deps: CommandDeps) {}

  private async acquire(): Promise<boolean> {
    if (this.activeJob === null) {
      return true;
    }
    const takeOver = await this.deps.notifier.confirm(
      "another assistant job is already running; cancel it?",
    );
    if (!takeOver) {
      return false;
    }
    try {
      await this.deps.client.cancel(this.activeJob);
    } catch {
      // job may have finished in the meantime; proceed either way
    }
    this.activeJob = null;
    return true;
  }

  async commandGenerate(options: GenerateOptions = {}): Promise<CommandOutcome> {
    const { client, buffer, notifier, progress, preview } = this.deps;
    const original = buffer.getText();
    if (!original.trim()) {
      notifier.error("the buffer is empty; nothing to annotate");
      return "failed";
    }
    if (!(await this.acquire())) {
      return "busy";
    }

    const kind = options.kind ?? "generate";
    let selection: SelectionSpan | undefined;
    if (options.useSelection) {
      const span = buffer.getSelection();
      if (span) {
        selection = { start_line: span.startLine, end_line: span.endLine };
      }
    }
    const overrides: Record<string, unknown> = {};
    if (options.clauseKinds?.length) {
      overrides["clause_kinds"] = options.clauseKinds;
    }
    if (options.retryLimit !== undefined) {
      overrides["retry_limit"] = options.retryLimit;
    }

    progress.clear();
    let jobId: string;
    try {
      jobId = await client.submit({
        kind,
        program_text: original,
        selection_span: selection,
        config_overrides: overrides,
      });
    } catch (err) {
      if (err instanceof ServiceUnreachable) {
        notifier.error(`${err.message} — is 'specforge serve' running?`);
        return "unreachable";
      }
      notifier.error(err instanceof RpcFailure ? err.message : String(err));
      return "failed";
    }
    this.activeJob = jobId;

    try {
      const completion = await client.waitForCompletion(jobId, (event) => progress.render(event));
      if (completion.state === "cancelled") {
        notifier.info("assistant job cancelled");
        return "rejected";
      }
      if (completion.state === "failed") {
        notifier.error(`annotation job failed: ${completion.error ?? "unknown error"}`);
        return "failed";
      }
      const result = completion.result as GenerateResult;
      if (!result.solved || !result.program) {
        const detail = result.explanation ?? "no candidate verified";
        notifier.error(
          result.program
            ? `no fully verified version; best effort shown in preview panel.\n${detail}`
            : `annotation generation failed: ${detail}`,
        );
        return "failed"; // buffer untouched; best-effort is display-only
      }
      const accepted = await preview.show(
        original,
        result.program,
        lineDiffHunks(original, result.program),
        kind === "repair" ? "repaired annotations" : "generated annotations",
      );
      if (!accepted) {
        return "rejected";
      }
      buffer.replaceAll(result.program);
      if (result.negative_tests_passed === false) {
        notifier.info("applied, but some negative tests unexpectedly verify; review the spec");
      }
      return "applied";
    } catch (err) {
      if (err instanceof ServiceUnreachable) {
        notifier.error(err.message);
        return "unreachable";
      }
      notifier.error(String(err));
      return "failed";
    } finally {
      this.activeJob = null;
    }
  }

  async commandMinimize(originalText: string): Promise<CommandOutcome> {
    const { client, buffer, notifier, progress, preview } = this.deps;
    const current = buffer.getText();
    if (!current.trim()) {
      notifier.error("the buffer is empty; nothing to minimize");
      return "failed";
    }
    if (!(await this.acquire())) {
      return "busy";
    }

    progress.clear();
    let jobId: string;
    try {
      jobId = await client.submit({
        kind: "minimize",
        program_text: current,
        config_overrides: { original_text: originalText },
      });
    } catch (err) {
      if (err instanceof ServiceUnreachable) {
        notifier.error(`${err.message} — is 'specforge serve' running?`);
        return "unreachable";
      }
      notifier.error(err instanceof RpcFailure ? err.message : String(err));
      return "failed";
    }
    this.activeJob = jobId;

    try {
      const completion = await client.waitForCompletion(jobId, (event) => progress.render(event));
      if (completion.state === "failed") {
        // typically: the buffer does not verify
        notifier.error(`minimization not possible: ${completion.error ?? "unknown error"}`);
        return "failed";
      }
      if (completion.state === "cancelled") {
        notifier.info("minimization cancelled");
        return "rejected";
      }
      const result = completion.result as MinimizeResult;
      if (!result.removals.length) {
        notifier.info("nothing to remove; the program is already minimal");
        return "rejected";
      }
      const accepted = await preview.show(
        current,
        result.program,
        removalHunks(result.removals),
        `minimization: ${result.removals.length} removals in ${result.rounds} rounds`,
      );
      if (!accepted) {
        return "rejected";
      }
      buffer.replaceAll(result.program);
      return "applied";
    } catch (err) {
      if (err instanceof ServiceUnreachable) {
        notifier.error(err.message);
        return "unreachable";
      }
      notifier.error(String(err));
      return "failed";
    } finally {
      this.activeJob = null;
    }
  }
}
