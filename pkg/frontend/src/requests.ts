/** Request drafting: template builders and client-side validation for the
 * four operator request kinds. Every builder returns a complete envelope;
 * validation failures throw DraftError before anything touches the wire.
 */

import { PROTOCOL_VERSION, type RequestEnvelope } from "./types.js";

export class DraftError extends Error {}

let counter = 0;

/** Monotonic client-local request ids; the prefix keeps them disjoint from
 * scripted trace ids. */
export function nextRequestId(prefix = "ui"): string {
  counter += 1;
  return `${prefix}-${counter}`;
}

export function resetRequestIds(): void {
  counter = 0;
}

// -- formula templates -------------------------------------------------

/** "Visit A then B": F(A & F B) */
export function sequenceFormula(taskIds: string[]): string {
  if (taskIds.length === 0) throw new DraftError("select at least one task");
  let out = `F ${taskIds[taskIds.length - 1]}`;
  for (let i = taskIds.length - 2; i >= 0; i -= 1) {
    out = `F(${taskIds[i]} & ${out})`;
  }
  return out;
}

/** "Do all of these, any order": F A & F B & ... */
export function coverAllFormula(taskIds: string[]): string {
  if (taskIds.length === 0) throw new DraftError("select at least one task");
  return taskIds.map((t) => `F ${t}`).join(" & ");
}

/** "B is unsafe until A is done": (!B U A) & F B */
export function guardedFormula(guarded: string, prerequisite: string): string {
  if (!guarded || !prerequisite) {
    throw new DraftError("both tasks are required");
  }
  return `(!${guarded} U ${prerequisite}) & F ${guarded}`;
}

/** Cheap structural screen for free-text formulas; the server performs the
 * authoritative parse and reports MalformedFormula. */
export function validateFormulaText(text: string): string {
  const trimmed = text.trim();
  if (!trimmed) throw new DraftError("formula is empty");
  let depth = 0;
  for (const ch of trimmed) {
    if (ch === "(") depth += 1;
    if (ch === ")") depth -= 1;
    if (depth < 0) throw new DraftError("unbalanced parentheses");
  }
  if (depth !== 0) throw new DraftError("unbalanced parentheses");
  return trimmed;
}

// -- envelope builders ---------------------------------------------------

export interface TaskDraft {
  id: string;
  class: string;
  region: [number, number][];
  subtasks: { n: number; action: string; loc: [number, number] }[];
  eta: Record<string, number>;
}

export function buildNewMission(
  missionId: string,
  formula: string,
  tasks: TaskDraft[],
  id = nextRequestId(),
): RequestEnvelope {
  if (!missionId) throw new DraftError("mission id is required");
  return {
    v: PROTOCOL_VERSION,
    id,
    kind: "newMission",
    payload: {
      mission: { id: missionId, formula: validateFormulaText(formula) },
      tasks,
    },
  };
}

export function buildCancel(
  missionIds: string[],
  id = nextRequestId(),
): RequestEnvelope {
  if (missionIds.length === 0) {
    throw new DraftError("select at least one mission");
  }
  return {
    v: PROTOCOL_VERSION,
    id,
    kind: "cancel",
    payload: { missions: missionIds },
  };
}

export function buildReprioritize(
  changes: { mission: string; weight?: number; deadline?: number }[],
  id = nextRequestId(),
): RequestEnvelope {
  if (changes.length === 0) throw new DraftError("no changes drafted");
  for (const c of changes) {
    if (!c.mission) throw new DraftError("change without a mission id");
    if (c.weight === undefined && c.deadline === undefined) {
      throw new DraftError(`change for ${c.mission} alters nothing`);
    }
    if (c.weight !== undefined && c.weight <= 0) {
      throw new DraftError("weight must be positive");
    }
    if (c.deadline !== undefined && c.deadline <= 0) {
      throw new DraftError("deadline must be positive");
    }
  }
  return {
    v: PROTOCOL_VERSION,
    id,
    kind: "reprioritize",
    payload: { changes },
  };
}

export function buildReassign(
  assignments: { mission: string; robots: string[] }[],
  id = nextRequestId(),
): RequestEnvelope {
  if (assignments.length === 0) throw new DraftError("no assignments drafted");
  for (const a of assignments) {
    if (!a.mission) throw new DraftError("assignment without a mission id");
    if (a.robots.length === 0) {
      throw new DraftError(`no robots selected for ${a.mission}`);
    }
    if (new Set(a.robots).size !== a.robots.length) {
      throw new DraftError("duplicate robot in selection");
    }
  }
  return {
    v: PROTOCOL_VERSION,
    id,
    kind: "reassign",
    payload: { assignments },
  };
}
