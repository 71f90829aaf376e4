/** Console entry point: polls the service, feeds the store, and repaints
 * the panels. All planning stays server-side; this file is wiring only.
 */

import { ApiClient } from "./api.js";
import { ConsoleStore, type ViewState } from "./store.js";
import { renderGantt, layoutByTeam } from "./render/gantt.js";
import { renderMap } from "./render/map.js";
import {
  renderConflictModal,
  renderMetrics,
  renderMissions,
} from "./render/missions.js";

const POLL_MS = 250;
/** full snapshot every N polls; event deltas in between */
const SNAPSHOT_EVERY = 8;

export function startConsole(
  base: string,
  doc: Document,
  api = new ApiClient(base),
  store = new ConsoleStore(),
): { stop: () => void; store: ConsoleStore } {
  const mapEl = doc.getElementById("map");
  const ganttEl = doc.getElementById("gantt");
  const missionsEl = doc.getElementById("missions");
  const metricsEl = doc.getElementById("metrics");
  const modalEl = doc.getElementById("modal");
  const bannerEl = doc.getElementById("banner");

  const paint = (state: ViewState) => {
    if (bannerEl) {
      bannerEl.textContent = state.stale
        ? "connection lost — showing stale data"
        : "";
      bannerEl.className = state.stale ? "banner stale" : "banner";
    }
    if (!state.snapshot) return;
    if (mapEl) mapEl.innerHTML = renderMap(state.snapshot, state.trails);
    if (ganttEl) ganttEl.innerHTML = renderGantt(layoutByTeam(state.snapshot));
    if (missionsEl) missionsEl.innerHTML = renderMissions(state.snapshot);
    if (metricsEl) metricsEl.innerHTML = renderMetrics(state.snapshot);
    if (modalEl) {
      const conflict = state.conflicts[0];
      modalEl.innerHTML = conflict
        ? renderConflictModal(conflict.requests, conflict.constraint)
        : "";
      if (conflict) {
        for (const btn of modalEl.querySelectorAll("button")) {
          btn.addEventListener("click", () => {
            for (const r of conflict.requests) store.resolveConflict(r);
          });
        }
      }
    }
  };
  const unsubscribe = store.subscribe(paint);

  let polls = 0;
  let stopped = false;
  const tick = async () => {
    if (stopped) return;
    try {
      if (polls % SNAPSHOT_EVERY === 0) {
        store.applySnapshot(await api.snapshot());
      } else {
        const batch = await api.eventsSince(store.getState().seq);
        store.applyEvents(batch.events);
      }
    } catch {
      store.markStale();
    }
    polls += 1;
    if (!stopped) setTimeout(tick, POLL_MS);
  };
  void tick();

  return {
    stop: () => {
      stopped = true;
      unsubscribe();
    },
    store,
  };
}
