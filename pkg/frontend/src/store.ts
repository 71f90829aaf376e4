/** Client-side view model.
 *
 * Holds the last server snapshot plus everything derived from the event
 * stream: per-robot trails, pending conflict prompts, and connection
 * health. Renders only server-provided data — no planning happens here.
 */

import type {
  EventRecord,
  RequestOutcome,
  Snapshot,
} from "./types.js";

const TRAIL_LENGTH = 40;

export interface ConflictPrompt {
  /** ids of the parked requests the operator must choose between */
  requests: string[];
  constraint: string;
  at: number;
}

export interface ViewState {
  snapshot: Snapshot | null;
  /** highest event sequence number merged so far */
  seq: number;
  /** trailing robot positions, most recent last */
  trails: Map<string, [number, number][]>;
  /** conflicts awaiting an operator decision, oldest first */
  conflicts: ConflictPrompt[];
  /** outcomes of requests submitted from this console */
  submitted: Map<string, RequestOutcome>;
  /** true while polls are failing */
  stale: boolean;
}

type Listener = (state: ViewState) => void;

export class ConsoleStore {
  private state: ViewState = {
    snapshot: null,
    seq: 0,
    trails: new Map(),
    conflicts: [],
    submitted: new Map(),
    stale: false,
  };
  private listeners: Listener[] = [];

  getState(): ViewState {
    return this.state;
  }

  subscribe(fn: Listener): () => void {
    this.listeners.push(fn);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== fn);
    };
  }

  applySnapshot(snap: Snapshot): void {
    for (const robot of snap.robots) {
      const trail = this.state.trails.get(robot.id) ?? [];
      const last = trail[trail.length - 1];
      if (!last || last[0] !== robot.position[0] ||
          last[1] !== robot.position[1]) {
        trail.push([robot.position[0], robot.position[1]]);
        if (trail.length > TRAIL_LENGTH) trail.shift();
      }
      this.state.trails.set(robot.id, trail);
    }
    // conflicts the executor has parked but this store has not prompted for
    const known = new Set(
      this.state.conflicts.flatMap((c) => c.requests),
    );
    for (const ev of snap.recentEvents) {
      if (ev.seq > this.state.seq) this.mergeEvent(ev, known);
    }
    this.state = {
      ...this.state,
      snapshot: snap,
      seq: Math.max(this.state.seq, snap.seq),
      stale: false,
    };
    this.emit();
  }

  applyEvents(events: EventRecord[]): void {
    const known = new Set(
      this.state.conflicts.flatMap((c) => c.requests),
    );
    let seq = this.state.seq;
    for (const ev of events) {
      if (ev.seq <= seq) continue;
      this.mergeEvent(ev, known);
      seq = ev.seq;
    }
    this.state = { ...this.state, seq, stale: false };
    this.emit();
  }

  recordOutcome(outcome: RequestOutcome): void {
    this.state.submitted.set(outcome.requestId, outcome);
    if (outcome.status === "conflict") {
      // the warning event carries the implicated requests; prompting here
      // too keeps the modal responsive when polling lags the submit
      const known = new Set(
        this.state.conflicts.flatMap((c) => c.requests),
      );
      if (!known.has(outcome.requestId)) {
        this.state.conflicts.push({
          requests: [outcome.requestId],
          constraint: outcome.detail ?? "constraint violation",
          at: this.state.snapshot?.clock ?? 0,
        });
      }
    }
    this.state = { ...this.state };
    this.emit();
  }

  resolveConflict(requestId: string): void {
    this.state.conflicts = this.state.conflicts.filter(
      (c) => !c.requests.includes(requestId),
    );
    this.state = { ...this.state };
    this.emit();
  }

  markStale(): void {
    if (this.state.stale) return;
    this.state = { ...this.state, stale: true };
    this.emit();
  }

  private mergeEvent(ev: EventRecord, knownConflicts: Set<string>): void {
    if (ev.kind !== "conflictWarning") return;
    const requests = (ev.payload["requests"] as string[] | undefined) ?? [];
    if (requests.length === 0) return; // planner warnings, not operator ones
    if (requests.some((r) => knownConflicts.has(r))) return;
    for (const r of requests) knownConflicts.add(r);
    this.state.conflicts.push({
      requests,
      constraint: String(ev.payload["constraint"] ?? ""),
      at: ev.t,
    });
  }

  private emit(): void {
    for (const fn of this.listeners) fn(this.state);
  }
}
