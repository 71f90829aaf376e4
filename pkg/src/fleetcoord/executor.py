"""Deterministic discrete-time fleet simulation and the on-line loop.

One `Executor` owns the single mutable world: robots, tasks, missions,
team runtimes, the event log, and the seeded RNG.  Each tick drains the
operator-request queue, fires replanning triggers, advances motion and
execution, and appends events.  Identical scenario + trace + seed yields
a byte-identical event log.
"""

from __future__ import annotations

import json
import math
import random
import time
from dataclasses import dataclass
from typing import Optional

from . import assignment, coordination, formation
from .logic import FormulaSyntaxError, NotCoSafeError, advance, parse_formula
from .model import (Mission, RobotState, Scenario, ScenarioError, Task,
                    duration_estimate, load_scenario, response_metrics)

ARRIVE_EPS = 1e-6
CAPTURE_RADIUS = 0.5


def _r6(x: float) -> float:
    return round(x, 6)


@dataclass
class Trigger:
    kind: str  # ProgressMajority | MissionChange | Infeasibility
    fired_at: float
    detail: str = ""


class TraceInvalid(Exception):
    pass


# ---------------------------------------------------------------------------
# per-task execution state machines


class TaskRun:
    """Base class: drives one team through one task, tick by tick."""

    def __init__(self, ex: "Executor", task: Task, members: list[str]):
        self.ex = ex
        self.task = task
        self.members = sorted(members)
        self.done = False
        self.aborted = False

    def robots(self):
        return [self.ex.robots[r] for r in self.members]

    def capable(self, action: str):
        return [r for r in self.robots()
                if action in r.robot.capabilities and r.status != "failed"]

    def expected_end(self) -> float:
        return self.ex.clock + self.ex.ctx_exec_est(self.task)

    def drop_failed(self):
        self.members = [m for m in self.members
                        if self.ex.robots[m].status != "failed"]

    def tick(self, dt: float):
        raise NotImplementedError


class StaticKnownRun(TaskRun):
    """Visit the known subtasks in id order; each needs its n robots."""

    def __init__(self, ex, task, members):
        super().__init__(ex, task, members)
        self.queue = sorted(task.known_subtasks(), key=lambda s: s.id)
        self.exec_end: Optional[float] = None
        self.crew: list = []

    def tick(self, dt):
        self.drop_failed()
        self.queue = [s for s in self.queue if s.state != "done"]
        if not self.queue:
            self.done = True
            return
        sub = self.queue[0]
        crew = self.capable(sub.action)[:sub.n]
        if len(crew) < sub.n:
            self.aborted = True
            return
        if self.exec_end is not None:
            for r in crew:
                r.status = "executing"
            if self.ex.clock + dt >= self.exec_end - ARRIVE_EPS:
                sub.state = "done"
                self.ex.emit("subtaskDone", self.exec_end,
                             {"task": self.task.id, "subtask": sub.id})
                self.exec_end = None
            return
        arrived = True
        for r in crew:
            if not self.ex.move_toward(r, sub.loc, dt):
                arrived = False
        for r in self.robots():
            if r not in crew and r.status != "failed":
                r.status = "waiting"
        if arrived:
            sub.state = "inProgress"
            self.exec_end = self.ex.clock + duration_estimate(
                self.task, sub.n, sub.action, [r.robot for r in crew])
            for r in crew:
                r.status = "executing"


class CoverageRun(TaskRun):
    """Sweep the region, reveal hidden subtasks, serve them on the way."""

    def __init__(self, ex, task, members):
        super().__init__(ex, task, members)
        team = [ex.robots[m].robot for m in self.members]
        paths = coordination.coverage_partition(
            team, task.region,
            sensor_width={r.id: 2 * r.perception_radius for r in team})
        self.waypoints = {m: list(paths.get(m, [])) for m in self.members}
        self.serving: dict = {}   # robot id -> (subtask, exec_end)
        self.extra: Optional[StaticKnownRun] = None

    def _reveal(self):
        for sub in self.task.subtasks:
            if sub.state != "undiscovered":
                continue
            for r in self.robots():
                if math.dist(r.position, sub.loc) <= \
                        r.robot.perception_radius:
                    sub.state = "open"
                    if sub.n == 1:
                        robots = {m: self.ex.robots[m].robot
                                  for m in self.members}
                        positions = {m: self.ex.robots[m].position
                                     for m in self.members}
                        try:
                            rid, slot, _, updated = \
                                coordination.insert_min_disruption(
                                    self.waypoints, positions, robots, sub)
                            self.waypoints = updated
                        except coordination.CapabilityGap:
                            pass
                    break

    def tick(self, dt):
        self.drop_failed()
        if not self.members:
            self.aborted = True
            return
        self._reveal()
        if self.extra is not None:
            self.extra.members = self.members
            self.extra.tick(dt)
            self.done = self.extra.done
            self.aborted = self.extra.aborted
            return
        sweeping = False
        for m in self.members:
            r = self.ex.robots[m]
            if m in self.serving:
                sub, end = self.serving[m]
                r.status = "executing"
                if self.ex.clock + dt >= end - ARRIVE_EPS:
                    sub.state = "done"
                    self.ex.emit("subtaskDone", end,
                                 {"task": self.task.id, "subtask": sub.id})
                    del self.serving[m]
                sweeping = True
                continue
            wps = self.waypoints.get(m, [])
            if not wps:
                r.status = "waiting"
                continue
            sweeping = True
            if self.ex.move_toward(r, wps[0], dt):
                # reached: is it a discovered subtask needing service?
                hit = next(
                    (s for s in self.task.subtasks
                     if s.state == "open" and s.n == 1
                     and math.dist(s.loc, wps[0]) < 1e-9
                     and s.action in r.robot.capabilities), None)
                wps.pop(0)
                if hit is not None:
                    hit.state = "inProgress"
                    end = self.ex.clock + duration_estimate(
                        self.task, 1, hit.action, [r.robot])
                    self.serving[m] = (hit, end)
        if not sweeping and not self.serving:
            leftovers = [s for s in self.task.subtasks
                         if s.state in ("open", "inProgress")]
            if leftovers:
                self.extra = StaticKnownRun(self.ex, self.task, self.members)
                self.extra.queue = sorted(leftovers, key=lambda s: s.id)
            else:
                self.done = True


class PursuitRun(TaskRun):
    """Chase moving subtasks with coalitions negotiated up front."""

    def __init__(self, ex, task, members):
        super().__init__(ex, task, members)
        self.t0 = ex.clock
        self.exec_end: dict = {}  # subtask id -> end time
        agents = [coordination.DCFAgent(id=m,
                                        position=ex.robots[m].position,
                                        speed=ex.robots[m].robot.max_speed)
                  for m in self.members]
        targets = [coordination.DCFTarget(
            id=s.id, loc=s.loc_at(ex.clock), vel=s.vel or (0.0, 0.0),
            n=s.n, base=task.eta.get(s.action, 0.0), sat_cap=task.sat_cap)
            for s in task.known_subtasks()
            if s.state != "done"]
        if not targets:
            self.done = True
            self.scheme = {}
            return
        init = {t.id: set() for t in targets}
        for i, a in enumerate(sorted(m.id for m in agents)):
            init[targets[i % len(targets)].id].add(a)
        self.scheme, _ = coordination.dcf_run(
            agents, targets, init, seed=ex.seed,
            delay_rounds=ex.dcf_delay_rounds)
        self._repair_scheme({t.id: t for t in targets},
                            {s.id: s for s in task.known_subtasks()})

    def _repair_scheme(self, targets, subs):
        """DCF balances cost only; move surplus members so every live
        coalition meets its subtask's capable-robot minimum."""
        def capable_count(tid):
            sub = subs[tid]
            return sum(1 for m in self.scheme[tid]
                       if sub.action in self.ex.robots[m].robot.capabilities)

        for tid in sorted(self.scheme):
            need = targets[tid].n
            while capable_count(tid) < need:
                donor = None
                for other in sorted(self.scheme):
                    if other == tid:
                        continue
                    spare = capable_count(other) - targets[other].n \
                        if self.scheme[other] else 0
                    if spare <= 0:
                        continue
                    sub = subs[tid]
                    cand = sorted(
                        m for m in self.scheme[other]
                        if sub.action in
                        self.ex.robots[m].robot.capabilities)
                    if cand:
                        donor = (other, cand[0])
                        break
                if donor is None:
                    break
                self.scheme[donor[0]].discard(donor[1])
                self.scheme[tid].add(donor[1])

    def _rebalance(self, subs):
        """Move robots off captured targets onto pending understaffed ones."""
        freed = set()
        for sid in sorted(self.scheme):
            sub = subs.get(sid)
            if sub is None or sub.state == "done":
                freed |= self.scheme[sid]
                self.scheme[sid] = set()
        for sid in sorted(self.scheme):
            sub = subs.get(sid)
            if sub is None or sub.state == "done":
                continue
            while len(self.scheme[sid]) < sub.n and freed:
                pick = sorted(
                    m for m in freed
                    if sub.action in self.ex.robots[m].robot.capabilities)
                if not pick:
                    break
                freed.discard(pick[0])
                self.scheme[sid].add(pick[0])

    def tick(self, dt):
        self.drop_failed()
        subs = {s.id: s for s in self.task.known_subtasks()}
        open_subs = [s for s in subs.values() if s.state != "done"]
        if not open_subs:
            self.done = True
            return
        self._rebalance(subs)
        for sid in sorted(self.scheme):
            sub = subs.get(sid)
            if sub is None or sub.state == "done":
                continue
            crew = [self.ex.robots[m] for m in sorted(self.scheme[sid])
                    if self.ex.robots[m].status != "failed"
                    and sub.action in self.ex.robots[m].robot.capabilities]
            if len(crew) < sub.n:
                # understaffed: wait for a capture to free robots unless
                # the whole team can never field enough capable members
                capable = [m for m in self.members
                           if sub.action in
                           self.ex.robots[m].robot.capabilities]
                if len(capable) < sub.n:
                    self.aborted = True
                    return
                for m in sorted(self.scheme[sid]):
                    if self.ex.robots[m].status not in ("failed",
                                                        "executing"):
                        self.ex.robots[m].status = "waiting"
                continue
            if sid in self.exec_end:
                for r in crew:
                    r.status = "executing"
                if self.ex.clock + dt >= self.exec_end[sid] - ARRIVE_EPS:
                    sub.state = "done"
                    sub.vel = (0.0, 0.0)
                    self.ex.emit("subtaskDone", self.exec_end[sid],
                                 {"task": self.task.id, "subtask": sid})
                continue
            goal = sub.loc_at(self.ex.clock - 0.0) if sub.vel else sub.loc
            here = [r for r in crew
                    if math.dist(r.position, goal) <= CAPTURE_RADIUS]
            if len(here) >= sub.n:
                sub.loc = goal
                sub.vel = (0.0, 0.0)
                sub.state = "inProgress"
                self.exec_end[sid] = self.ex.clock + duration_estimate(
                    self.task, sub.n, sub.action, [r.robot for r in crew])
                for r in crew:
                    r.status = "executing"
            else:
                for r in crew:
                    self.ex.move_toward(r, goal, dt)


RUN_CLASSES = {"staticKnown": StaticKnownRun,
               "staticUnknown": CoverageRun,
               "dynamicKnown": PursuitRun}


@dataclass
class TeamRuntime:
    id: str
    members: list  # robot ids
    queue: list    # task ids still to start
    run: Optional[TaskRun] = None
    frozen: bool = False  # continuation of a pre-replan task


# ---------------------------------------------------------------------------
# the executor


class Executor:
    def __init__(self, scenario: Scenario, trace=None, seed=None, dt=None):
        self.scenario = scenario
        p = scenario.params
        self.dt = float(dt if dt is not None else p["dt"])
        self.seed = int(seed if seed is not None else p["seed"])
        self.rng = random.Random(self.seed)
        self.clock = 0.0
        self.tick_no = 0
        self.robots = {r.id: RobotState(robot=r, position=r.start,
                                        available_pos=r.start)
                       for r in scenario.robots}
        self.tasks = {t.id: t for t in scenario.tasks}
        self.missions = list(scenario.missions)
        self.reach = {m.id: m.automaton.initial for m in self.missions}
        self.completions: list = []  # (t, task id)
        self.events: list = []
        self.seq = 0
        self.teams: dict = {}
        self.team_counter = 0
        self.plan_word: tuple = ()
        self.committed = 0
        self.done_since_cycle = 0
        self.progress_fired = False
        self.mission_changed = True  # plan at t=0
        self.infeasible_flag = False
        self._released = {m.id for m in self.missions if m.release <= 0.0}
        self._plan_fail_warned = False
        self.locks: dict = {}        # robot id -> mission id (kappa-4)
        self.parked: list = []
        self.outcomes: dict = {}
        self.cycle_log: list = []
        self.metrics_rows: list = []
        self.failure_rho = float(p.get("failureRho") or 0.0)
        delay = p.get("commDelayMs")
        self.dcf_delay_rounds = (0, 0) if not delay else (
            max(0, int(delay[0] // 10)), max(1, int(delay[1] // 10)))
        self.trace = self._load_trace(trace) if trace is not None else []
        self._trace_idx = 0
        self.live_queue: list = []  # requests from the wire, arrival order

    def enqueue(self, req: dict):
        """Queue a live request; it is applied at the next tick boundary."""
        self.live_queue.append(req)

    # -- plumbing ----------------------------------------------------------

    @staticmethod
    def _load_trace(trace) -> list:
        if isinstance(trace, list):
            rows = trace
        else:
            rows = []
            with open(trace) as fh:
                for line in fh:
                    line = line.strip()
                    if line:
                        rows.append(json.loads(line))
        last = -math.inf
        ids = set()
        for r in rows:
            if r.get("issuedAt", 0) < last:
                raise TraceInvalid("trace timestamps out of order")
            if r["id"] in ids:
                raise TraceInvalid(f"duplicate request id {r['id']}")
            ids.add(r["id"])
            last = r.get("issuedAt", 0)
        return rows

    def emit(self, kind: str, t: float, payload: dict):
        self.seq += 1
        self.events.append({"seq": self.seq, "t": _r6(t), "kind": kind,
                            "payload": payload})

    def ctx_exec_est(self, task: Task) -> float:
        return assignment.exec_estimate(
            task, self.scenario.params.get("coverageRate", 1.0))

    def move_toward(self, r: RobotState, goal, dt: float) -> bool:
        """Advance one robot straight at its max speed; True when arrived."""
        d = math.dist(r.position, goal)
        step = r.robot.max_speed * dt
        if d <= step + ARRIVE_EPS:
            r.position = (goal[0], goal[1])
            r.status = "waiting"
            return True
        f = step / d
        r.position = (r.position[0] + (goal[0] - r.position[0]) * f,
                      r.position[1] + (goal[1] - r.position[1]) * f)
        r.status = "navigating"
        return False

    def active_missions(self) -> list[Mission]:
        return [m for m in self.missions
                if m.status == "active" and m.release <= self.clock]

    # -- operator requests -------------------------------------------------

    def apply_request(self, req: dict) -> dict:
        """Validate and apply one request; returns its outcome record."""
        rid = req.get("id", f"req{self.seq}")
        kind = req.get("kind")
        payload = req.get("payload", {})
        try:
            detail = self._apply(kind, payload, rid)
        except (KeyError, ScenarioError) as e:
            return self._outcome(rid, "rejected", f"UnknownEntity: {e}")
        except (FormulaSyntaxError, NotCoSafeError) as e:
            return self._outcome(rid, "rejected", f"MalformedFormula: {e}")
        except _Conflict as c:
            self.emit("conflictWarning", self.clock,
                      {"requests": c.requests, "constraint": c.constraint})
            self.parked.append(rid)
            return self._outcome(rid, "conflict", c.constraint)
        self.emit("requestApplied", self.clock,
                  {"request": rid, "kind": kind})
        self.mission_changed = True
        return self._outcome(rid, "accepted", detail)

    def _outcome(self, rid, status, detail):
        out = {"requestId": rid, "status": status, "detail": detail}
        self.outcomes[rid] = out
        return out

    def _apply(self, kind, payload, rid) -> str:
        if kind == "newMission":
            spec = payload["mission"]
            if any(m.id == spec["id"] for m in self.missions):
                raise KeyError(f"mission {spec['id']} already exists")
            for t in payload.get("tasks", []):
                if t["id"] in self.tasks:
                    raise KeyError(f"task {t['id']} already exists")
            tmp = load_scenario({"robots": [],
                                 "tasks": payload.get("tasks", []),
                                 "missions": [], "params": {}})
            for t in tmp.tasks:
                self.tasks[t.id] = t
            formula = parse_formula(spec["formula"])
            m = Mission(id=spec["id"], formula=formula,
                        formula_text=spec["formula"], release=self.clock,
                        deadline=float(spec.get("deadline", math.inf)),
                        weight=float(spec.get("weight", 1.0)))
            missing = set(m.alphabet) - set(self.tasks)
            if missing:
                raise KeyError(f"unknown tasks {sorted(missing)}")
            self.missions.append(m)
            self.reach[m.id] = m.automaton.initial
            # replay already-completed symbols through the new automaton
            for _, tid in sorted(self.completions):
                if tid in m.alphabet:
                    self.reach[m.id] = advance(m.automaton,
                                               self.reach[m.id], tid)
            return f"mission {m.id} added"
        if kind == "cancel":
            changed = []
            for mid in payload["missions"]:
                m = self._mission(mid)
                if m.status != "active":
                    raise KeyError(f"mission {mid} is not active")
                m.status = "cancelled"
                changed.append(mid)
                keep = {w for mm in self.missions if mm.status == "active"
                        for w in mm.alphabet}
                for w in m.alphabet:
                    t = self.tasks.get(w)
                    if t and w not in keep and t.status in ("unassigned",
                                                            "assigned"):
                        t.status = "cancelled"
            return f"cancelled {changed}"
        if kind == "reprioritize":
            for ch in payload["changes"]:
                m = self._mission(ch["mission"])
                if "deadline" in ch:
                    m.deadline = float(ch["deadline"])
                if "weight" in ch:
                    m.weight = float(ch["weight"])
            self._check_conflict(rid)
            return "updated"
        if kind == "reassign":
            trial = dict(self.locks)
            for a in payload["assignments"]:
                self._mission(a["mission"])
                for r in a["robots"]:
                    if r not in self.robots:
                        raise KeyError(f"unknown robot {r}")
                    trial[r] = a["mission"]
            old = self.locks
            self.locks = trial
            try:
                self._check_conflict(rid)
            except _Conflict:
                self.locks = old
                raise
            return "locks installed"
        raise KeyError(f"unknown request kind {kind}")

    def _mission(self, mid) -> Mission:
        for m in self.missions:
            if m.id == mid:
                return m
        raise KeyError(f"unknown mission {mid}")

    def _check_conflict(self, rid):
        """Hard-capacity check under the current kappa-4 locks."""
        for m in self.active_missions():
            for w in sorted(m.alphabet):
                t = self.tasks.get(w)
                if t is None or t.status in ("done", "cancelled"):
                    continue
                for a, n in t.max_demand().items():
                    free = sum(
                        1 for r in self.robots.values()
                        if r.status != "failed"
                        and a in r.robot.capabilities
                        and self.locks.get(r.id, m.id) == m.id)
                    if free < n:
                        implicated = sorted(
                            {rid} | {pid for pid in self.outcomes
                                     if self.outcomes[pid]["status"] ==
                                     "accepted" and pid in self._lock_reqs})
                        raise _Conflict(
                            requests=implicated,
                            constraint=(f"capacity: task {w} needs {n} "
                                        f"robots with {a!r} for mission "
                                        f"{m.id}, {free} available under "
                                        f"current locks"))

    @property
    def _lock_reqs(self):
        return {pid for pid, out in self.outcomes.items()
                if "locks" in str(out.get("detail", ""))}

    # -- triggers & replanning ---------------------------------------------

    def check_triggers(self) -> list[Trigger]:
        out = []
        if self.mission_changed:
            out.append(Trigger("MissionChange", self.clock))
        if self.infeasible_flag:
            out.append(Trigger("Infeasibility", self.clock))
        if (not self.progress_fired and self.committed > 0
                and (self.done_since_cycle > math.ceil(self.committed / 2)
                     or self.done_since_cycle >= self.committed)):
            out.append(Trigger("ProgressMajority", self.clock))
        return out

    def _build_ctx(self):
        active = self.active_missions()
        # executing tasks will finish (non-preemption), so plan from the
        # reach sets projected past them; they must not be re-assigned
        executing = [tm.run.task.id for tm in self.teams.values()
                     if tm.run is not None and not tm.run.done]
        executing.sort(key=lambda t: (self.plan_word.index(t)
                                      if t in self.plan_word else len(
                                          self.plan_word), t))
        reach = dict(self.reach)
        for m in active:
            for tid in executing:
                if tid in m.alphabet:
                    nxt = advance(m.automaton, reach[m.id], tid)
                    if nxt:
                        reach[m.id] = nxt
        pending = [m for m in active
                   if not (reach[m.id] & m.automaton.accepting)]
        if not pending:
            return None, tuple(executing)
        fleet = [r.robot for r in self.robots.values()
                 if r.status != "failed"]
        p = self.scenario.params
        ctx = assignment.SearchContext(
            missions=pending, tasks=self.tasks, fleet=fleet,
            eta1=float(p.get("eta1", 0.1)), eta2=float(p.get("eta2", 1.0)),
            deadline_penalty=float(p.get("deadlinePenalty", 10.0)),
            coverage_rate=float(p.get("coverageRate", 1.0)),
            initial_reach={m.id: reach[m.id] for m in pending})
        return ctx, tuple(executing)

    def replan(self, trigger_kinds):
        start = time.perf_counter()
        self.mission_changed = False
        self.infeasible_flag = False
        self.progress_fired = False
        ctx, executing = self._build_ctx()
        p = self.scenario.params
        frozen = [tm for tm in self.teams.values()
                  if tm.run is not None and not tm.run.done]
        if ctx is None:
            # nothing left to plan; keep only continuations
            self.teams = {tm.id: tm for tm in frozen}
            for tm in self.teams.values():
                tm.queue = []
                tm.frozen = True
            self.plan_word = executing
            self.committed = sum(1 for tm in frozen)
            self.done_since_cycle = 0
            self.cycle_log.append((time.perf_counter() - start) * 1000.0)
            self.emit("replan", self.clock,
                      {"cycle": len(self.cycle_log), "K": 0,
                       "triggers": sorted(trigger_kinds), "plans": []})
            return
        horizon = p.get("H", 6)
        horizon = math.inf if horizon in (None, 0, "inf") else float(horizon)
        try:
            cap = p.get("maxExpansions")
            res = assignment.plan_horizon(
                ctx, horizon=horizon, batch=int(p.get("P", 4)),
                max_expansions=int(cap) if cap else None)
        except assignment.Infeasible as e:
            if not self._plan_fail_warned:
                self.emit("conflictWarning", self.clock,
                          {"requests": [],
                           "constraint": f"PlanningFailed: {e}"})
                self._plan_fail_warned = True
            self.cycle_log.append((time.perf_counter() - start) * 1000.0)
            return

        busy = {m for tm in frozen for m in tm.run.members}
        specs = []
        plans_for = {}
        for idx, plan in enumerate(res.plans):
            if not plan.tasks:
                continue
            tid = f"k{self.team_counter + idx}"
            first = ctx.centroid[plan.tasks[0][0]]
            specs.append(formation.TeamSpec(
                id=tid, capacity=plan.capacity(ctx), first_region=first,
                exec_total=sum(ctx.exec_est[w] for w, _, _ in plan.tasks)))
            plans_for[tid] = [w for w, _, _ in plan.tasks]
        cands = []
        for r in self.robots.values():
            if r.status == "failed":
                continue
            if r.id in busy:
                tm = next(t for t in frozen if r.id in t.run.members)
                avail_at = tm.run.expected_end()
                avail_pos = tm.run.task.centroid()
            else:
                avail_at, avail_pos = self.clock, r.position
            cands.append(formation.CandidateRobot(
                id=r.id, capabilities=r.robot.capabilities,
                available_at=avail_at, available_pos=avail_pos,
                speed=r.robot.max_speed))
        margins = {a: float(v)
                   for a, v in (p.get("alpha") or {}).items()}
        forbids = set()
        for rid, mid in self.locks.items():
            allowed = {s.id for s in specs
                       if any(w in self._mission(mid).alphabet
                              for w in plans_for[s.id])}
            for s in specs:
                if s.id not in allowed:
                    forbids.add((rid, s.id))
        problem = formation.FormationProblem(
            teams=specs, robots=cands, margins=margins, forbids=forbids)
        node_cap = p.get("formationNodeCap")
        try:
            form = formation.solve_formation(
                problem, time_limit=60.0,
                max_nodes=int(node_cap) if node_cap else None)
        except formation.Infeasible:
            try:
                form = formation.greedy_fallback(problem)
            except formation.Infeasible as e:
                if not self._plan_fail_warned:
                    self.emit("conflictWarning", self.clock,
                              {"requests": [],
                               "constraint": f"FormationFailed: {e}"})
                    self._plan_fail_warned = True
                self.cycle_log.append(
                    (time.perf_counter() - start) * 1000.0)
                return

        # install: continuations keep running, everything else is replaced
        new_teams = {tm.id: tm for tm in frozen}
        for tm in new_teams.values():
            tm.queue = []
            tm.frozen = True
        for spec in specs:
            members = list(form.assign.get(spec.id, ()))
            new_teams[spec.id] = TeamRuntime(
                id=spec.id, members=members, queue=list(plans_for[spec.id]))
            for w in plans_for[spec.id]:
                if self.tasks[w].status == "unassigned":
                    self.tasks[w].status = "assigned"
        self.teams = new_teams
        self.team_counter += len(res.plans)
        self._plan_fail_warned = False
        self.plan_word = executing + res.word
        self.committed = sum(len(tm.queue) for tm in new_teams.values()) \
            + len(frozen)
        self.done_since_cycle = 0
        self.cycle_log.append((time.perf_counter() - start) * 1000.0)
        self.emit("replan", self.clock, {
            "cycle": len(self.cycle_log),
            "K": len(specs), "triggers": sorted(trigger_kinds),
            "expanded": res.expanded, "pruned": res.pruned,
            "predictedMakespan": _r6(res.makespan),
            "plans": [{"team": s.id, "tasks": plans_for[s.id],
                       "robots": list(form.assign.get(s.id, ()))}
                      for s in specs]})

    # -- execution ---------------------------------------------------------

    def _gate_open(self, tid: str) -> bool:
        """May task `tid` start now without breaking any mission word?"""
        for m in self.active_missions():
            if tid not in m.alphabet:
                continue
            if not advance(m.automaton, self.reach[m.id], tid):
                return False
        if tid in self.plan_word:
            i = self.plan_word.index(tid)
            done = {t for t in self.plan_word[:i]
                    if self.tasks[t].status in ("done", "cancelled")}
            for prev in self.plan_word[:i]:
                if prev in done:
                    continue
                if any(prev in m.alphabet and tid in m.alphabet
                       for m in self.active_missions()):
                    return False
        return True

    def _start_task(self, tm: TeamRuntime, tid: str):
        task = self.tasks[tid]
        # failure injection happens at task start, lowest id first
        participants = sorted(tm.members)
        for rid in participants:
            if self.failure_rho > 0 and \
                    self.rng.random() < self.failure_rho:
                r = self.robots[rid]
                if r.status != "failed":
                    r.status = "failed"
                    self.emit("failure", self.clock,
                              {"robot": rid, "task": tid})
        alive = [m for m in tm.members
                 if self.robots[m].status != "failed"]
        tm.members = alive
        for a, n in task.max_demand().items():
            if sum(1 for m in alive
                   if a in self.robots[m].robot.capabilities) < n:
                self.infeasible_flag = True
                tm.queue.insert(0, tid)
                return
        task.status = "executing"
        self.emit("taskStart", self.clock,
                  {"task": tid, "team": tm.id, "robots": alive})
        tm.run = RUN_CLASSES[task.cls](self, task, alive)

    def _finish_task(self, tm: TeamRuntime, end_t: float):
        task = tm.run.task
        task.status = "done"
        self.emit("taskDone", end_t, {"task": task.id, "team": tm.id})
        self.completions.append((end_t, task.id))
        self.done_since_cycle += 1
        for m in self.missions:
            if m.status != "active" or task.id not in m.alphabet:
                continue
            self.reach[m.id] = advance(m.automaton, self.reach[m.id],
                                       task.id)
            if self.reach[m.id] & m.automaton.accepting:
                m.status = "satisfied"
                m.finish_time = end_t
                self.emit("missionSatisfied", end_t,
                          {"mission": m.id,
                           "response": _r6(end_t - m.release)})
            elif not self.reach[m.id]:
                self.emit("conflictWarning", end_t,
                          {"requests": [],
                           "constraint": f"mission {m.id} word dead"})
                m.status = "cancelled"
        for rid in tm.run.members:
            r = self.robots[rid]
            if r.status != "failed":
                r.status = "idle"
                r.available_at = end_t
                r.available_pos = r.position
        tm.run = None

    def step(self):
        dt = self.dt
        for tid in sorted(self.teams):
            tm = self.teams[tid]
            if tm.run is not None:
                tm.run.tick(dt)
                if tm.run.done:
                    self._finish_task(tm, self.clock + dt)
                elif tm.run.aborted:
                    task = tm.run.task
                    task.status = "assigned"
                    for s in task.subtasks:
                        if s.state == "inProgress":
                            s.state = "open"
                    tm.run = None
                    tm.queue = []
                    self.infeasible_flag = True
                continue
            if tm.frozen or not tm.queue:
                continue
            # members may still be finishing frozen work elsewhere
            busy = {m for other in self.teams.values()
                    if other.run is not None for m in other.run.members}
            if any(m in busy for m in tm.members):
                continue
            nxt = tm.queue[0]
            if self.tasks[nxt].status in ("done", "cancelled"):
                tm.queue.pop(0)
                continue
            if self._gate_open(nxt):
                tm.queue.pop(0)
                self._start_task(tm, nxt)
            else:
                for m in tm.members:
                    if self.robots[m].status not in ("failed", "executing"):
                        self.robots[m].status = "waiting"

    def metrics_row(self):
        counts = {"navigating": 0, "waiting": 0, "executing": 0}
        for r in self.robots.values():
            if r.status in counts:
                counts[r.status] += 1
        assigned = sum(1 for t in self.tasks.values()
                       if t.status in ("assigned", "executing"))
        unassigned = sum(1 for t in self.tasks.values()
                         if t.status == "unassigned")
        self.metrics_rows.append(
            (self.clock, counts["navigating"], counts["waiting"],
             counts["executing"], assigned, unassigned))

    def tick(self):
        # 1. drain due operator requests (live queue first, arrival order)
        for req in self.live_queue:
            self.apply_request(req)
        self.live_queue.clear()
        while self._trace_idx < len(self.trace) and \
                self.trace[self._trace_idx].get("issuedAt", 0) <= \
                self.clock + ARRIVE_EPS:
            self.apply_request(self.trace[self._trace_idx])
            self._trace_idx += 1
        for m in self.missions:
            if m.id not in self._released and m.release <= self.clock:
                self._released.add(m.id)
                self.mission_changed = True
        # 2. triggers -> replan
        trig = self.check_triggers()
        if trig:
            self.replan([t.kind for t in trig])
        # 3. advance the world
        self.step()
        self.tick_no += 1
        self.clock = _r6(self.tick_no * self.dt)

    def all_done(self) -> bool:
        if any(m.status == "active" for m in self.missions):
            return False
        if any(tm.run is not None for tm in self.teams.values()):
            return False
        return self._trace_idx >= len(self.trace) and not self.live_queue

    def run(self, until: float) -> dict:
        while self.clock < until and not self.all_done():
            self.tick()
            self.metrics_row()
        resp = response_metrics(self.missions, self.clock)
        total = [m for m in self.missions if m.status != "cancelled"]
        sat = [m for m in total if m.status == "satisfied"]
        summary = {
            "meanResponse": _r6(resp["mean"]),
            "maxResponse": _r6(resp["max"]),
            "perMission": [{"mission": p["mission"],
                            "response": _r6(p["response"]),
                            "status": p["status"]}
                           for p in resp["perMission"]],
            "planCycleMs": [_r6(c) for c in self.cycle_log],
            "meanPlanCycleMs": _r6(sum(self.cycle_log)
                                   / len(self.cycle_log))
            if self.cycle_log else 0.0,
            "successRate": _r6(len(sat) / len(total)) if total else 1.0,
            "clock": _r6(self.clock),
        }
        return {"events": self.events, "summary": summary,
                "metrics": self.metrics_rows}

    # -- artifacts -----------------------------------------------------

    def write_outputs(self, out_dir):
        import os
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "events.jsonl"), "w") as fh:
            for e in self.events:
                fh.write(json.dumps(e, sort_keys=True,
                                    separators=(",", ":")) + "\n")
        with open(os.path.join(out_dir, "metrics.csv"), "w") as fh:
            fh.write("t,navCount,waitCount,execCount,"
                     "assignedTasks,unassignedTasks\n")
            for row in self.metrics_rows:
                fh.write(",".join(str(x) for x in row) + "\n")
        resp = response_metrics(self.missions, self.clock)
        with open(os.path.join(out_dir, "summary.json"), "w") as fh:
            total = [m for m in self.missions if m.status != "cancelled"]
            sat = [m for m in total if m.status == "satisfied"]
            json.dump({
                "meanResponse": _r6(resp["mean"]),
                "maxResponse": _r6(resp["max"]),
                "planCycleMs": [_r6(c) for c in self.cycle_log],
                "successRate": _r6(len(sat) / len(total)) if total else 1.0,
            }, fh, indent=2, sort_keys=True)


@dataclass
class _Conflict(Exception):
    requests: list
    constraint: str


def run_scenario(scenario, trace=None, seed=None, dt=None,
                 until: float = 600.0, out_dir=None) -> dict:
    """Headless harness: load, simulate, optionally write artifacts."""
    sc = scenario if isinstance(scenario, Scenario) else \
        load_scenario(scenario)
    ex = Executor(sc, trace=trace, seed=seed, dt=dt)
    result = ex.run(until)
    if out_dir:
        ex.write_outputs(out_dir)
    return result
