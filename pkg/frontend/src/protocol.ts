/**
 * Wire protocol spoken with the local assistant service.
 * Mirrors service/wire_schema.json on the backend; version is fixed at 1.
 */

export const WIRE_VERSION = 1;

export type JobKind = "generate" | "repair" | "minimize";
export type JobState = "queued" | "running" | "done" | "failed" | "cancelled";
export type RpcMethod = "submit" | "events" | "cancel" | "config";

export interface RpcRequest {
  version: number;
  id: string | number;
  method: RpcMethod;
  params: Record<string, unknown>;
}

export interface RpcError {
  code: "BadVersion" | "BadRequest" | "UnknownJob";
  message: string;
}

export interface RpcResponse {
  id: string | number;
  ok: boolean;
  payload?: Record<string, unknown>;
  error?: RpcError;
}

export interface SelectionSpan {
  start_line: number;
  end_line: number;
}

export interface SubmitParams {
  kind: JobKind;
  program_text: string;
  selection_span?: SelectionSpan;
  config_overrides?: Record<string, unknown>;
}

export interface ProgressEvent {
  ordinal: number;
  attempt_index: number;
  phase: "prompting" | "verifying" | "minimizing";
  summary: string;
  obligations_verified: number;
  obligations_failed: number;
}

export interface Removal {
  category: string;
  start_line: number;
  end_line: number;
  round: number;
  text: string;
}

export interface GenerateResult {
  program: string | null;
  solved: boolean;
  best_effort: boolean;
  explanation?: string;
  attempts: unknown[];
  negative_tests_passed?: boolean;
}

export interface MinimizeResult {
  program: string;
  rounds: number;
  aborted?: boolean;
  removals: Removal[];
}

export interface EventsPayload {
  state: JobState;
  events: ProgressEvent[];
  result?: (GenerateResult | MinimizeResult) | null;
  error?: string | null;
}
