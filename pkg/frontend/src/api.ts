/** Thin HTTP client for the simulation service.
 *
 * The fetch implementation is injectable so tests can run against a stub
 * transport; everything else is plain JSON plumbing with explicit error
 * mapping.
 */

import type {
  EventBatch,
  RequestEnvelope,
  RequestOutcome,
  Snapshot,
} from "./types.js";

export type FetchLike = (
  input: string,
  init?: { method?: string; headers?: Record<string, string>; body?: string },
) => Promise<{ ok: boolean; status: number; json(): Promise<unknown> }>;

export class ServiceError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    detail?: string,
  ) {
    super(detail ? `${code}: ${detail}` : code);
  }
}

export class ApiClient {
  constructor(
    private readonly base: string,
    private readonly fetchImpl: FetchLike = fetch as unknown as FetchLike,
  ) {}

  async snapshot(): Promise<Snapshot> {
    return (await this.get("/snapshot")) as Snapshot;
  }

  async eventsSince(seq: number): Promise<EventBatch> {
    return (await this.get(`/events?since=${seq}`)) as EventBatch;
  }

  /** Submit a request envelope; a non-2xx reply (malformed envelope,
   * duplicate id, version mismatch) becomes a ServiceError, while domain
   * rejections and conflicts come back as normal outcomes. */
  async submit(env: RequestEnvelope): Promise<RequestOutcome> {
    const res = await this.fetchImpl(`${this.base}/requests`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(env),
    });
    const body = (await res.json()) as Record<string, unknown>;
    if (!res.ok) {
      throw new ServiceError(
        res.status,
        String(body["error"] ?? "ServiceError"),
        body["detail"] === undefined ? undefined : String(body["detail"]),
      );
    }
    return body as unknown as RequestOutcome;
  }

  /** Advance a paused simulation (used by tests and manual stepping). */
  async step(ticks = 1): Promise<{ clock: number; seq: number }> {
    const res = await this.fetchImpl(`${this.base}/step?ticks=${ticks}`, {
      method: "POST",
    });
    if (!res.ok) {
      throw new ServiceError(res.status, "StepFailed");
    }
    return (await res.json()) as { clock: number; seq: number };
  }

  private async get(path: string): Promise<unknown> {
    const res = await this.fetchImpl(`${this.base}${path}`);
    if (!res.ok) {
      throw new ServiceError(res.status, "ServiceUnavailable");
    }
    return res.json();
  }
}
