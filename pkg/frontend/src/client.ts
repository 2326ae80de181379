/**
 * Thin client for the assistant service.
 *
 * All communication goes through a single injectable transport (one rpc
 * envelope in, one out), so tests script the service without any network.
 * Event polling deduplicates by ordinal: the UI layer sees every progress
 * event exactly once even if the server re-sends a window.
 */

import {
  EventsPayload,
  JobState,
  ProgressEvent,
  RpcRequest,
  RpcResponse,
  SubmitParams,
  WIRE_VERSION,
} from "./protocol.js";

export interface Transport {
  send(request: RpcRequest): Promise<RpcResponse>;
}

export class ServiceUnreachable extends Error {
  constructor(cause: unknown) {
    super(`assistant service unreachable: ${String(cause)}`);
    this.name = "ServiceUnreachable";
  }
}

export class RpcFailure extends Error {
  constructor(public readonly code: string, message: string) {
    super(message);
    this.name = "RpcFailure";
  }
}

/** Default transport: HTTP POST to the service's /v1/rpc endpoint. */
export class HttpTransport implements Transport {
  constructor(private readonly baseUrl: string) {}

  async send(request: RpcRequest): Promise<RpcResponse> {
    let response: Response;
    try {
      response = await fetch(`${this.baseUrl.replace(/\/$/, "")}/v1/rpc`, {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(request),
      });
    } catch (err) {
      throw new ServiceUnreachable(err);
    }
    if (!response.ok) {
      throw new ServiceUnreachable(`HTTP ${response.status}`);
    }
    return (await response.json()) as RpcResponse;
  }
}

export interface JobCompletion {
  state: JobState;
  result: EventsPayload["result"];
  error?: string | null;
}

export class ServiceClient {
  private nextId = 1;

  constructor(
    private readonly transport: Transport,
    private readonly pollIntervalMs = 100,
    private readonly sleep: (ms: number) => Promise<void> = (ms) =>
      new Promise((resolve) => setTimeout(resolve, ms)),
  ) {}

  private async call(method: RpcRequest["method"], params: Record<string, unknown>) {
    const response = await this.transport.send({
      version: WIRE_VERSION,
      id: this.nextId++,
      method,
      params,
    });
    if (!response.ok || !response.payload) {
      const error = response.error ?? { code: "BadRequest", message: "missing payload" };
      throw new RpcFailure(error.code, error.message);
    }
    return response.payload;
  }

  async submit(params: SubmitParams): Promise<string> {
    const payload = await this.call("submit", params as unknown as Record<string, unknown>);
    return payload["job_id"] as string;
  }

  async events(jobId: string, since: number): Promise<EventsPayload> {
    return (await this.call("events", { job_id: jobId, since })) as unknown as EventsPayload;
  }

  async cancel(jobId: string): Promise<void> {
    await this.call("cancel", { job_id: jobId });
  }

  async config(): Promise<Record<string, unknown>> {
    return this.call("config", {});
  }

  /**
   * Poll until the job leaves the queued/running states, delivering each
   * progress event ordinal exactly once to `onEvent`.
   */
  async waitForCompletion(
    jobId: string,
    onEvent: (event: ProgressEvent) => void,
    timeoutMs = 600_000,
  ): Promise<JobCompletion> {
    const seen = new Set<number>();
    let since = 0;
    const deadline = Date.now() + timeoutMs;
    for (;;) {
      const payload = await this.events(jobId, since);
      for (const event of payload.events) {
        if (!seen.has(event.ordinal)) {
          seen.add(event.ordinal);
          onEvent(event);
        }
        since = Math.max(since, event.ordinal);
      }
      if (payload.state !== "queued" && payload.state !== "running") {
        return { state: payload.state, result: payload.result, error: payload.error };
      }
      if (Date.now() > deadline) {
        throw new RpcFailure("Timeout", `job ${jobId} did not finish in ${timeoutMs}ms`);
      }
      await this.sleep(this.pollIntervalMs);
    }
  }
}
