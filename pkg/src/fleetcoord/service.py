"""HTTP face of the running simulation.

Exposes the operator protocol over JSON: POST /requests to submit a
kappa-style intervention, GET /snapshot for a consistent world view, and
GET /events?since=seq for incremental event reads.  Live submissions are
serialized into a queue the executor drains at tick boundaries, so wire
traffic never perturbs a running planning cycle.
"""

from __future__ import annotations

import threading
import time

from fastapi import FastAPI
from fastapi.responses import JSONResponse

from .executor import Executor
from .model import OperatorRequest

PROTOCOL_VERSION = 1
RECENT_EVENTS = 200


class Session:
    """One simulation run plus the lock serializing access to it."""

    def __init__(self, executor: Executor, until: float = 3600.0):
        self.ex = executor
        self.until = until
        self.lock = threading.RLock()
        self._seen_ids: set = {r["id"] for r in executor.trace}
        self._stop = threading.Event()
        self._thread = None

    # -- stepping ----------------------------------------------------------

    def step(self, ticks: int = 1):
        with self.lock:
            for _ in range(ticks):
                if self.ex.clock >= self.until:
                    break
                self.ex.tick()
                self.ex.metrics_row()

    def run_to_completion(self):
        with self.lock:
            while self.ex.clock < self.until and not self.ex.all_done():
                self.ex.tick()
                self.ex.metrics_row()

    def play(self, realtime: bool = True):
        """Advance in a background thread, paced to wall clock."""
        def loop():
            while not self._stop.is_set():
                with self.lock:
                    if self.ex.clock >= self.until or self.ex.all_done():
                        break
                    self.ex.tick()
                    self.ex.metrics_row()
                if realtime:
                    time.sleep(self.ex.dt)
        self._thread = threading.Thread(target=loop, daemon=True)
        self._thread.start()

    def stop(self):
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=5.0)

    # -- protocol operations -------------------------------------------

    def submit(self, env: dict) -> tuple[int, dict]:
        err = self._validate(env)
        if err is not None:
            return 400, err
        with self.lock:
            self._seen_ids.add(env["id"])
            self.ex.enqueue({"id": env["id"], "kind": env["kind"],
                             "payload": env.get("payload", {})})
            # outcomes materialize at the next tick boundary
            self.ex.tick()
            self.ex.metrics_row()
            out = dict(self.ex.outcomes[env["id"]])
        out["v"] = PROTOCOL_VERSION
        return 200, out

    def _validate(self, env) -> dict | None:
        if not isinstance(env, dict):
            return {"error": "MalformedEnvelope", "detail": "not an object"}
        if env.get("v", PROTOCOL_VERSION) != PROTOCOL_VERSION:
            return {"error": "UnsupportedVersion",
                    "detail": f"expected v={PROTOCOL_VERSION}"}
        if not env.get("id") or not isinstance(env["id"], str):
            return {"error": "MalformedEnvelope", "detail": "missing id"}
        if env["id"] in self._seen_ids:
            return {"error": "DuplicateRequest", "detail": env["id"]}
        if env.get("kind") not in OperatorRequest.KINDS:
            return {"error": "MalformedEnvelope",
                    "detail": f"unknown kind {env.get('kind')!r}"}
        if not isinstance(env.get("payload", {}), dict):
            return {"error": "MalformedEnvelope",
                    "detail": "payload must be an object"}
        return None

    def snapshot(self) -> dict:
        with self.lock:
            ex = self.ex
            robots = [{
                "id": r.id, "type": r.robot.type,
                "position": [round(r.position[0], 6),
                             round(r.position[1], 6)],
                "capabilities": sorted(r.robot.capabilities),
                "status": r.status,
            } for r in (ex.robots[k] for k in sorted(ex.robots))]
            tasks = [{
                "id": t.id, "class": t.cls, "status": t.status,
                "region": [list(p) for p in t.region],
                "subtasks": [{
                    "id": s.id, "n": s.n, "action": s.action,
                    "loc": [round(x, 6) for x in s.loc_at(ex.clock)],
                    "state": s.state,
                } for s in t.subtasks if s.state != "undiscovered"],
            } for t in (ex.tasks[k] for k in sorted(ex.tasks))]
            missions = [{
                "id": m.id, "formula": m.formula_text, "status": m.status,
                "weight": m.weight,
                "deadline": None if m.deadline == float("inf")
                else m.deadline,
                "release": m.release,
                "reachStates": len(ex.reach.get(m.id, ())),
                "accepted": bool(ex.reach.get(m.id, frozenset())
                                 & m.automaton.accepting),
            } for m in ex.missions]
            teams = [{
                "id": tm.id,
                "members": sorted(tm.members),
                "executing": tm.run.task.id if tm.run else None,
                "queue": list(tm.queue),
            } for tm in (ex.teams[k] for k in sorted(ex.teams))]
            gantt = _gantt_rows(ex.events)
            return {
                "v": PROTOCOL_VERSION,
                "clock": ex.clock,
                "seq": ex.seq,
                "robots": robots,
                "tasks": tasks,
                "missions": missions,
                "teams": teams,
                "gantt": gantt,
                "recentEvents": ex.events[-RECENT_EVENTS:],
                "pendingConflicts": list(ex.parked),
                "outcomes": list(ex.outcomes.values()),
            }

    def events_since(self, since: int) -> dict:
        with self.lock:
            evs = [e for e in self.ex.events if e["seq"] > since]
            return {"v": PROTOCOL_VERSION, "events": evs,
                    "seq": self.ex.seq, "clock": self.ex.clock}


def _gantt_rows(events) -> list:
    """(team, task, start, end) bars reconstructed from the event log."""
    open_bars = {}
    rows = []
    for e in events:
        if e["kind"] == "taskStart":
            open_bars[e["payload"]["task"]] = (e["payload"]["team"], e["t"])
        elif e["kind"] == "taskDone":
            team, t0 = open_bars.pop(e["payload"]["task"],
                                     (e["payload"]["team"], e["t"]))
            rows.append({"team": team, "task": e["payload"]["task"],
                         "start": t0, "end": e["t"]})
    for task, (team, t0) in sorted(open_bars.items()):
        rows.append({"team": team, "task": task, "start": t0, "end": None})
    return rows


def create_app(session: Session) -> FastAPI:
    app = FastAPI(title="fleetcoord", version=str(PROTOCOL_VERSION))
    app.state.session = session

    @app.post("/requests")
    async def submit(env: dict):
        code, body = session.submit(env)
        return JSONResponse(body, status_code=code)

    @app.get("/snapshot")
    async def snapshot():
        return session.snapshot()

    @app.get("/events")
    async def events(since: int = 0):
        return session.events_since(since)

    @app.post("/step")
    async def step(ticks: int = 1):
        session.step(max(1, min(ticks, 10000)))
        return {"clock": session.ex.clock, "seq": session.ex.seq}

    return app
