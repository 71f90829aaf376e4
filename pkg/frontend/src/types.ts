/** Wire types mirrored from the simulation service's JSON responses. */

export const PROTOCOL_VERSION = 1;

export type RequestKind =
  | "newMission"
  | "cancel"
  | "reprioritize"
  | "reassign";

export interface RequestEnvelope {
  v: number;
  id: string;
  kind: RequestKind;
  payload: Record<string, unknown>;
}

export interface RequestOutcome {
  requestId: string;
  status: "accepted" | "rejected" | "conflict";
  detail?: string;
}

export interface RobotView {
  id: string;
  type: string;
  position: [number, number];
  capabilities: string[];
  status: string;
}

export interface SubtaskView {
  id: string;
  n: number;
  action: string;
  loc: [number, number];
  state: string;
}

export interface TaskView {
  id: string;
  class: string;
  status: string;
  region: [number, number][];
  subtasks: SubtaskView[];
}

export interface MissionView {
  id: string;
  formula: string;
  status: "active" | "satisfied" | "cancelled";
  weight: number;
  deadline: number | null;
  release: number;
  /** size of the automaton's current reachable state set */
  reachStates: number;
  /** whether the reachable set already contains an accepting state */
  accepted: boolean;
}

export interface TeamView {
  id: string;
  members: string[];
  executing: string | null;
  queue: string[];
}

export interface GanttRow {
  team: string;
  task: string;
  start: number;
  end: number | null;
}

export interface EventRecord {
  seq: number;
  t: number;
  kind: string;
  payload: Record<string, unknown>;
}

export interface Snapshot {
  v: number;
  clock: number;
  seq: number;
  robots: RobotView[];
  tasks: TaskView[];
  missions: MissionView[];
  teams: TeamView[];
  gantt: GanttRow[];
  recentEvents: EventRecord[];
  pendingConflicts: string[];
  outcomes: RequestOutcome[];
}

export interface EventBatch {
  v: number;
  events: EventRecord[];
  seq: number;
  clock: number;
}
