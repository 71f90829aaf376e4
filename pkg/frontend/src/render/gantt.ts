/** Execution timeline: one row per team (and a per-robot variant built from
 * team membership), bars from the server's reconstructed task intervals.
 */

import type { GanttRow, Snapshot } from "../types.js";

export interface GanttBar {
  row: string;
  task: string;
  start: number;
  /** open bars extend to the current clock */
  end: number;
  open: boolean;
}

export interface GanttLayout {
  rows: string[];
  bars: GanttBar[];
  clock: number;
}

export function layoutByTeam(snap: Snapshot): GanttLayout {
  const rows = [...new Set(snap.gantt.map((g) => g.team))].sort();
  return {
    rows,
    bars: snap.gantt.map((g) => toBar(g, g.team, snap.clock)),
    clock: snap.clock,
  };
}

/** Expand team bars onto every member robot's row. Membership is current
 * membership — enough for supervision, not a historical reconstruction. */
export function layoutByRobot(snap: Snapshot): GanttLayout {
  const members = new Map(snap.teams.map((t) => [t.id, t.members]));
  const bars: GanttBar[] = [];
  for (const g of snap.gantt) {
    for (const rid of members.get(g.team) ?? []) {
      bars.push(toBar(g, rid, snap.clock));
    }
  }
  return {
    rows: [...new Set(bars.map((b) => b.row))].sort(),
    bars,
    clock: snap.clock,
  };
}

function toBar(g: GanttRow, row: string, clock: number): GanttBar {
  return {
    row,
    task: g.task,
    start: g.start,
    end: g.end ?? clock,
    open: g.end === null,
  };
}

const ROW_HEIGHT = 18;
const LABEL_WIDTH = 56;

export function renderGantt(layout: GanttLayout, width = 640): string {
  const span = Math.max(layout.clock, 1e-9);
  const sx = (t: number) =>
    LABEL_WIDTH + (t / span) * (width - LABEL_WIDTH - 8);
  const height = (layout.rows.length + 1) * ROW_HEIGHT + 8;
  const rowIndex = new Map(layout.rows.map((r, i) => [r, i]));
  const parts = [
    `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" ` +
      `height="${height}" viewBox="0 0 ${width} ${height}">`,
  ];
  for (const [row, i] of rowIndex) {
    const y = (i + 1) * ROW_HEIGHT;
    parts.push(
      `<text x="4" y="${y + 12}" font-size="10" class="gantt-row">` +
        `${row}</text>`,
    );
  }
  for (const bar of layout.bars) {
    const i = rowIndex.get(bar.row) ?? 0;
    const y = (i + 1) * ROW_HEIGHT + 3;
    const x0 = sx(bar.start);
    const w = Math.max(sx(bar.end) - x0, 1);
    parts.push(
      `<rect class="bar${bar.open ? " bar-open" : ""}" ` +
        `x="${x0.toFixed(1)}" y="${y}" width="${w.toFixed(1)}" ` +
        `height="${ROW_HEIGHT - 6}" ` +
        `fill="${bar.open ? "#86efac" : "#60a5fa"}">` +
        `<title>${bar.task}: ${bar.start}-` +
        `${bar.open ? "now" : bar.end}</title></rect>`,
    );
  }
  // clock cursor
  parts.push(
    `<line x1="${sx(layout.clock).toFixed(1)}" y1="${ROW_HEIGHT}" ` +
      `x2="${sx(layout.clock).toFixed(1)}" y2="${height - 4}" ` +
      `stroke="#ef4444" stroke-dasharray="3 2"/>`,
  );
  parts.push("</svg>");
  return parts.join("\n");
}
