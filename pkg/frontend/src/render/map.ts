/** Scene map: task regions, subtask markers, robots, and motion trails
 * rendered to an SVG string. Pure function of the view state, so it can be
 * snapshot-tested without a DOM.
 */

import type { Snapshot } from "../types.js";

const STATUS_COLORS: Record<string, string> = {
  idle: "#8a8f98",
  navigating: "#3b82f6",
  waiting: "#eab308",
  executing: "#22c55e",
  failed: "#ef4444",
};

const TASK_FILL: Record<string, string> = {
  pending: "#f1f5f9",
  assigned: "#dbeafe",
  executing: "#dcfce7",
  done: "#e2e8f0",
  cancelled: "#fee2e2",
};

function esc(s: string): string {
  return s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

export interface MapOptions {
  width?: number;
  height?: number;
  padding?: number;
}

export function renderMap(
  snap: Snapshot,
  trails: Map<string, [number, number][]>,
  opts: MapOptions = {},
): string {
  const width = opts.width ?? 640;
  const height = opts.height ?? 640;
  const pad = opts.padding ?? 20;

  // world bounds over everything drawable
  let lo = Infinity;
  let hi = -Infinity;
  const consider = (p: readonly [number, number]) => {
    lo = Math.min(lo, p[0], p[1]);
    hi = Math.max(hi, p[0], p[1]);
  };
  for (const r of snap.robots) consider(r.position);
  for (const t of snap.tasks) for (const p of t.region) consider(p);
  if (!Number.isFinite(lo)) {
    lo = 0;
    hi = 1;
  }
  const span = Math.max(hi - lo, 1e-9);
  const sx = (x: number) => pad + ((x - lo) / span) * (width - 2 * pad);
  const sy = (y: number) => height - pad - ((y - lo) / span) * (height - 2 * pad);

  const parts: string[] = [
    `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" ` +
      `height="${height}" viewBox="0 0 ${width} ${height}">`,
  ];

  for (const task of snap.tasks) {
    const points = task.region
      .map((p) => `${sx(p[0]).toFixed(1)},${sy(p[1]).toFixed(1)}`)
      .join(" ");
    const fill = TASK_FILL[task.status] ?? TASK_FILL["pending"];
    parts.push(
      `<polygon class="task task-${esc(task.status)}" points="${points}" ` +
        `fill="${fill}" stroke="#94a3b8"/>`,
    );
    const cx = task.region.reduce((s, p) => s + p[0], 0) / task.region.length;
    const cy = task.region.reduce((s, p) => s + p[1], 0) / task.region.length;
    parts.push(
      `<text class="task-label" x="${sx(cx).toFixed(1)}" ` +
        `y="${sy(cy).toFixed(1)}" font-size="10" ` +
        `text-anchor="middle">${esc(task.id)}</text>`,
    );
    for (const s of task.subtasks) {
      parts.push(
        `<circle class="subtask subtask-${esc(s.state)}" ` +
          `cx="${sx(s.loc[0]).toFixed(1)}" cy="${sy(s.loc[1]).toFixed(1)}" ` +
          `r="2.5" fill="${s.state === "done" ? "#94a3b8" : "#0f172a"}"/>`,
      );
    }
  }

  for (const robot of snap.robots) {
    const trail = trails.get(robot.id) ?? [];
    if (trail.length > 1) {
      const pts = trail
        .map((p) => `${sx(p[0]).toFixed(1)},${sy(p[1]).toFixed(1)}`)
        .join(" ");
      parts.push(
        `<polyline class="trail" points="${pts}" fill="none" ` +
          `stroke="#bfdbfe" stroke-width="1"/>`,
      );
    }
    const color = STATUS_COLORS[robot.status] ?? STATUS_COLORS["idle"];
    const [x, y] = robot.position;
    parts.push(
      `<g class="robot robot-${esc(robot.status)}">` +
        `<circle cx="${sx(x).toFixed(1)}" cy="${sy(y).toFixed(1)}" r="5" ` +
        `fill="${color}"/>` +
        `<text x="${sx(x).toFixed(1)}" y="${(sy(y) - 7).toFixed(1)}" ` +
        `font-size="8" text-anchor="middle">${esc(robot.id)}</text></g>`,
    );
  }

  parts.push(renderLegend(width, height, pad));
  parts.push("</svg>");
  return parts.join("\n");
}

function renderLegend(width: number, height: number, pad: number): string {
  const entries = Object.entries(STATUS_COLORS);
  const items = entries
    .map(
      ([status, color], i) =>
        `<circle cx="${pad + 8}" cy="${height - pad - 14 * (entries.length - i)}" ` +
        `r="4" fill="${color}"/>` +
        `<text x="${pad + 16}" ` +
        `y="${height - pad - 14 * (entries.length - i) + 3}" ` +
        `font-size="9">${status}</text>`,
    )
    .join("");
  return `<g class="legend">${items}</g>`;
}
