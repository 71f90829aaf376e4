/** Mission progress panel: formula text, status chip, and automaton
 * progress, plus a metrics strip derived from the latest snapshot.
 */

import type { Snapshot } from "../types.js";

function esc(s: string): string {
  return s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

export function renderMissions(snap: Snapshot): string {
  const rows = snap.missions
    .map((m) => {
      const progress = m.accepted
        ? "accepting"
        : `${m.reachStates} reachable state${m.reachStates === 1 ? "" : "s"}`;
      const deadline = m.deadline === null ? "—" : `${m.deadline}s`;
      return (
        `<tr class="mission mission-${esc(m.status)}">` +
        `<td>${esc(m.id)}</td>` +
        `<td><code>${esc(m.formula)}</code></td>` +
        `<td>${esc(m.status)}</td>` +
        `<td>${m.weight}</td>` +
        `<td>${deadline}</td>` +
        `<td>${esc(progress)}</td></tr>`
      );
    })
    .join("");
  return (
    `<table class="missions"><thead><tr>` +
    `<th>mission</th><th>formula</th><th>status</th>` +
    `<th>weight</th><th>deadline</th><th>progress</th>` +
    `</tr></thead><tbody>${rows}</tbody></table>`
  );
}

export function renderMetrics(snap: Snapshot): string {
  const byStatus = new Map<string, number>();
  for (const r of snap.robots) {
    byStatus.set(r.status, (byStatus.get(r.status) ?? 0) + 1);
  }
  const satisfied = snap.missions.filter(
    (m) => m.status === "satisfied",
  ).length;
  const active = snap.missions.filter((m) => m.status === "active").length;
  const chips = [
    `t=${snap.clock.toFixed(1)}s`,
    `missions ${satisfied}/${snap.missions.length} satisfied` +
      (active ? ` (${active} active)` : ""),
    ...[...byStatus.entries()]
      .sort()
      .map(([status, n]) => `${n} ${status}`),
  ];
  return (
    `<div class="metrics">` +
    chips.map((c) => `<span class="chip">${esc(c)}</span>`).join("") +
    `</div>`
  );
}

export function renderConflictModal(
  requests: string[],
  constraint: string,
): string {
  const buttons = requests
    .map(
      (r) =>
        `<button class="resolve" data-request="${esc(r)}">` +
        `keep ${esc(r)}</button>`,
    )
    .join("");
  return (
    `<div class="modal conflict-modal" role="dialog">` +
    `<h2>Conflicting requests</h2>` +
    `<p class="constraint">${esc(constraint)}</p>` +
    `<p>Choose which request to keep; the others stay parked.</p>` +
    `<div class="actions">${buttons}` +
    `<button class="dismiss">dismiss</button></div></div>`
  );
}
