"""Core domain model for the fleet coordinator.

Robots, tasks, subtasks, missions, operator requests, and the shared
time/cost estimators every planner layer leans on.  Everything here is
plain data plus pure functions; the executor owns the single mutable
copy of the world and hands immutable snapshots to everyone else.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence

from .logic import Formula, TaskAutomaton, build_automaton, parse_formula

Point = tuple[float, float]


class NoCapableRobot(Exception):
    """No robot in the team can perform the requested action."""


class ScenarioError(Exception):
    """The scenario file is malformed or internally inconsistent."""


# ---------------------------------------------------------------------------
# entities


@dataclass(frozen=True)
class Robot:
    id: str
    type: str
    capabilities: frozenset[str]
    max_speed: float
    start: Point
    curvature: Optional[float] = None  # max curvature (1/m); None = holonomic
    perception_radius: float = 2.0

    def __post_init__(self):
        if self.max_speed <= 0:
            raise ScenarioError(f"robot {self.id}: maxSpeed must be > 0")
        if self.curvature is not None and self.curvature <= 0:
            raise ScenarioError(f"robot {self.id}: curvature must be > 0")
        if not self.capabilities:
            raise ScenarioError(f"robot {self.id}: capabilities empty")


@dataclass
class RobotState:
    """Mutable execution-time view of a robot (owned by the executor)."""

    robot: Robot
    position: Point
    available_at: float = 0.0
    available_pos: Point = (0.0, 0.0)
    status: str = "idle"  # idle | navigating | waiting | executing | failed

    @property
    def id(self) -> str:
        return self.robot.id


SUBTASK_STATES = ("undiscovered", "open", "inProgress", "done")


@dataclass
class Subtask:
    id: str
    n: int
    action: str
    loc: Point
    vel: Optional[Point] = None
    state: str = "open"

    def __post_init__(self):
        if self.n < 1:
            raise ScenarioError(f"subtask {self.id}: n must be >= 1")
        if self.state not in SUBTASK_STATES:
            raise ScenarioError(f"subtask {self.id}: bad state {self.state!r}")

    def loc_at(self, t: float) -> Point:
        """Position at time t (moving subtasks drift at constant velocity)."""
        if self.vel is None:
            return self.loc
        return (self.loc[0] + self.vel[0] * t, self.loc[1] + self.vel[1] * t)


TASK_CLASSES = ("staticKnown", "staticUnknown", "dynamicKnown")


@dataclass
class Task:
    id: str
    cls: str
    region: tuple[Point, ...]  # convex polygon vertices, ccw
    subtasks: list[Subtask]
    eta: dict[str, float]  # action -> base seconds
    sat_cap: int = 1
    status: str = "unassigned"  # unassigned|assigned|executing|done|cancelled

    def __post_init__(self):
        if self.cls not in TASK_CLASSES:
            raise ScenarioError(f"task {self.id}: unknown class {self.cls!r}")
        if self.cls == "dynamicKnown":
            for st in self.subtasks:
                if st.vel is None:
                    raise ScenarioError(
                        f"task {self.id}: dynamic subtask {st.id} lacks vel")
        if self.sat_cap < 1:
            raise ScenarioError(f"task {self.id}: satCap must be >= 1")

    def known_subtasks(self) -> list[Subtask]:
        return [s for s in self.subtasks if s.state != "undiscovered"]

    def actions(self) -> set[str]:
        return {s.action for s in self.subtasks}

    def max_demand(self) -> dict[str, int]:
        """Per-action max robot demand over known subtasks (the capacity seed).

        Unknown-class tasks demand at least one robot per declared action
        so a sweep team can be staffed before anything is discovered.
        """
        out: dict[str, int] = {}
        for s in self.known_subtasks():
            out[s.action] = max(out.get(s.action, 0), s.n)
        if self.cls == "staticUnknown":
            for a in self.eta:
                out.setdefault(a, 1)
        return out

    def centroid(self) -> Point:
        xs = [p[0] for p in self.region]
        ys = [p[1] for p in self.region]
        return (sum(xs) / len(xs), sum(ys) / len(ys))

    def area(self) -> float:
        acc = 0.0
        pts = self.region
        for i in range(len(pts)):
            x1, y1 = pts[i]
            x2, y2 = pts[(i + 1) % len(pts)]
            acc += x1 * y2 - x2 * y1
        return abs(acc) / 2.0


@dataclass
class Mission:
    id: str
    formula: Formula
    formula_text: str
    release: float
    deadline: float = math.inf
    weight: float = 1.0
    status: str = "active"  # active | satisfied | cancelled
    finish_time: Optional[float] = None
    automaton: TaskAutomaton = field(repr=False, default=None)  # type: ignore

    def __post_init__(self):
        if self.weight <= 0:
            raise ScenarioError(f"mission {self.id}: weight must be > 0")
        if self.automaton is None:
            self.automaton = build_automaton(self.formula)

    @property
    def alphabet(self) -> frozenset[str]:
        return self.automaton.alphabet


@dataclass(frozen=True)
class OperatorRequest:
    """One operator intervention: new mission, cancel, reprioritize, reassign."""

    id: str
    kind: str  # newMission | cancel | reprioritize | reassign
    payload: dict
    issued_at: float = 0.0

    KINDS = ("newMission", "cancel", "reprioritize", "reassign")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ScenarioError(f"request {self.id}: unknown kind {self.kind!r}")


@dataclass
class LocalPlan:
    """Timed action sequence (t, point, action) for one robot."""

    steps: list[tuple[float, Point, str]] = field(default_factory=list)

    def append(self, t: float, p: Point, a: str):
        if self.steps and t <= self.steps[-1][0]:
            raise ValueError("plan times must be strictly increasing")
        self.steps.append((t, p, a))

    def end_time(self) -> float:
        return self.steps[-1][0] if self.steps else 0.0


# ---------------------------------------------------------------------------
# estimators


def duration_estimate(task: Task, n: int, action: str,
                      team: Sequence[Robot]) -> float:
    """Execution-time estimate for one subtask handled by `team`.

    base(action) * n / min(#capable, n * satCap): linear speed-up in the
    number of capable robots, clamped once staffing saturates.
    """
    if not team:
        raise NoCapableRobot(f"empty team for action {action!r}")
    capable = sum(1 for r in team if action in r.capabilities)
    if capable == 0:
        raise NoCapableRobot(f"no robot in team can do {action!r}")
    base = task.eta.get(action)
    if base is None:
        raise ScenarioError(f"task {task.id}: no eta for action {action!r}")
    return base * n / min(capable, n * task.sat_cap)


def nav_time(p: Point, q: Point, robot: Robot,
             heading_p: float = 0.0, heading_q: float = 0.0) -> float:
    """Travel time from p to q; Dubins length when curvature-limited."""
    if robot.curvature is None:
        return math.dist(p, q) / robot.max_speed
    from .coordination import dubins_length
    radius = 1.0 / robot.curvature
    return dubins_length(p, heading_p, q, heading_q, radius) / robot.max_speed


def response_metrics(missions: Iterable[Mission], now: float) -> dict:
    """Per-mission response times plus their mean and max.

    Satisfied missions count finish - release; still-active ones count
    now - release toward the max only.  Cancelled missions are excluded.
    """
    per = []
    satisfied = []
    for m in missions:
        if m.status == "cancelled":
            continue
        if m.status == "satisfied" and m.finish_time is not None:
            rt = m.finish_time - m.release
            satisfied.append(rt)
        else:
            rt = now - m.release
        per.append({"mission": m.id, "response": rt, "status": m.status})
    mean = sum(satisfied) / len(satisfied) if satisfied else 0.0
    mx = max((p["response"] for p in per), default=0.0)
    return {"mean": mean, "max": mx, "perMission": per}


# ---------------------------------------------------------------------------
# geometry helpers


def point_in_polygon(p: Point, poly: Sequence[Point]) -> bool:
    """Ray-casting test, boundary counts as inside."""
    x, y = p
    inside = False
    n = len(poly)
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        # boundary check via cross product
        cross = (x2 - x1) * (y - y1) - (y2 - y1) * (x - x1)
        if abs(cross) < 1e-12 and min(x1, x2) - 1e-12 <= x <= max(x1, x2) + 1e-12 \
                and min(y1, y2) - 1e-12 <= y <= max(y1, y2) + 1e-12:
            return True
        if (y1 > y) != (y2 > y):
            xi = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            if x < xi:
                inside = not inside
    return inside


# ---------------------------------------------------------------------------
# scenario loading


@dataclass
class Scenario:
    robots: list[Robot]
    tasks: list[Task]
    missions: list[Mission]
    params: dict

    def task_by_id(self, tid: str) -> Task:
        for t in self.tasks:
            if t.id == tid:
                return t
        raise KeyError(tid)


_DEFAULT_PARAMS = {
    "H": 6, "eta1": 0.1, "eta2": 1.0, "P": 4, "seed": 0, "dt": 0.1,
    "alpha": {}, "failureRho": 0.0, "commDelayMs": None,
    "deadlinePenalty": 10.0, "coverageRate": 1.0, "perceptionRadius": 2.0,
    "maxExpansions": None, "formationNodeCap": None,
}


def load_scenario(source) -> Scenario:
    """Build a Scenario from a JSON file path, file object, or dict."""
    if isinstance(source, dict):
        data = source
    elif hasattr(source, "read"):
        data = json.load(source)
    else:
        with open(source) as fh:
            data = json.load(fh)

    params = dict(_DEFAULT_PARAMS)
    params.update(data.get("params", {}))

    robots = []
    for r in data.get("robots", []):
        robots.append(Robot(
            id=r["id"], type=r.get("type", "generic"),
            capabilities=frozenset(r["capabilities"]),
            max_speed=float(r["maxSpeed"]),
            start=tuple(r["start"]),
            curvature=r.get("curvature"),
            perception_radius=float(r.get("perceptionRadius",
                                          params["perceptionRadius"])),
        ))
    if len({r.id for r in robots}) != len(robots):
        raise ScenarioError("duplicate robot ids")

    tasks = []
    for t in data.get("tasks", []):
        subtasks = []
        for i, s in enumerate(t.get("subtasks", [])):
            subtasks.append(Subtask(
                id=s.get("id", f"{t['id']}.{i}"),
                n=int(s["n"]), action=s["action"],
                loc=tuple(s["loc"]),
                vel=tuple(s["vel"]) if s.get("vel") else None,
                state="undiscovered" if s.get("hidden") else "open",
            ))
        region = tuple(tuple(p) for p in t["region"])
        if len(region) < 3:
            raise ScenarioError(f"task {t['id']}: region needs >= 3 vertices")
        task = Task(id=t["id"], cls=t["class"], region=region,
                    subtasks=subtasks, eta=dict(t.get("eta", {})),
                    sat_cap=int(t.get("satCap", 1)))
        for st in subtasks:
            if st.state != "undiscovered" and not point_in_polygon(st.loc, region):
                raise ScenarioError(
                    f"task {task.id}: subtask {st.id} outside region")
        tasks.append(task)
    if len({t.id for t in tasks}) != len(tasks):
        raise ScenarioError("duplicate task ids")

    task_ids = {t.id for t in tasks}
    missions = []
    for m in data.get("missions", []):
        formula = parse_formula(m["formula"])
        mission = Mission(
            id=m["id"], formula=formula, formula_text=m["formula"],
            release=float(m.get("release", 0.0)),
            deadline=float(m["deadline"]) if m.get("deadline") is not None
            else math.inf,
            weight=float(m.get("weight", 1.0)),
        )
        missing = set(mission.alphabet) - task_ids
        if missing:
            raise ScenarioError(
                f"mission {mission.id} references unknown tasks {sorted(missing)}")
        missions.append(mission)
    if len({m.id for m in missions}) != len(missions):
        raise ScenarioError("duplicate mission ids")

    return Scenario(robots=robots, tasks=tasks, missions=missions,
                    params=params)


def mission_word(mission: Mission,
                 completions: Sequence[tuple[float, str]]) -> list[str]:
    """Project a global completion log onto one mission's alphabet.

    `completions` is (time, task id) pairs; the word is ordered by time,
    ties broken by task id, restricted to symbols the mission mentions.
    """
    ordered = sorted(completions, key=lambda c: (c[0], c[1]))
    return [tid for _, tid in ordered if tid in mission.alphabet]
