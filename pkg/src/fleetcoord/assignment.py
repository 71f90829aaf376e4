"""Simultaneous task decomposition and team assignment.

Best-first tree search over partial fleet plans.  Each node carries the
per-team task sequences plus, for every mission, the set of automaton
states its projected completion word can reach; children append one task
to one team (or open a new team).  Batch selection, fleet-capacity
bounding, and a conservative Pareto dominance rule keep the tree small;
a receding horizon caps the depth for on-line use.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

from .logic import accepting_distance, advance
from .model import Mission, Robot, Task

NEW_TEAM = -1


class Infeasible(Exception):
    """No feasible assignment exists (capacity or automaton dead end)."""


class InvalidCandidate(Exception):
    pass


class TooLarge(Exception):
    """Instance exceeds the brute-force enumeration limit."""


# ---------------------------------------------------------------------------
# shared planning context


@dataclass
class SearchContext:
    """Immutable per-cycle inputs plus precomputed tables."""

    missions: list[Mission]
    tasks: dict  # task id -> Task
    fleet: list[Robot]
    eta1: float = 0.1
    eta2: float = 1.0
    deadline_penalty: float = 10.0
    coverage_rate: float = 1.0
    initial_reach: Optional[dict] = None  # mission id -> current state set
    # derived
    psi: list = field(default_factory=list)  # per mission: state -> dist
    fleet_capacity: dict = field(default_factory=dict)
    ref_speed: float = 1.0
    origin: tuple = (0.0, 0.0)
    exec_est: dict = field(default_factory=dict)
    centroid: dict = field(default_factory=dict)

    def __post_init__(self):
        self.psi = [accepting_distance(m.automaton) for m in self.missions]
        caps: dict = {}
        for r in self.fleet:
            for a in r.capabilities:
                caps[a] = caps.get(a, 0) + 1
        self.fleet_capacity = caps
        if self.fleet:
            self.ref_speed = sum(r.max_speed for r in self.fleet) \
                / len(self.fleet)
            self.origin = (
                sum(r.start[0] for r in self.fleet) / len(self.fleet),
                sum(r.start[1] for r in self.fleet) / len(self.fleet))
        for tid, t in self.tasks.items():
            self.exec_est[tid] = exec_estimate(t, self.coverage_rate)
            self.centroid[tid] = t.centroid()

    def nav_est(self, p, q) -> float:
        return math.dist(p, q) / self.ref_speed


def exec_estimate(task: Task, coverage_rate: float = 1.0) -> float:
    """Pre-formation execution-time estimate for a whole task.

    Known subtasks: each priced at exact staffing (beta robots, the
    task-wide maximum demand), then divided by how many can run at once.
    Unknown-class tasks add a sweep term: region area over coverage rate.
    """
    known = task.known_subtasks()
    total = 0.0
    if known:
        beta = max(s.n for s in known)
        per = [task.eta.get(s.action, 0.0) * s.n
               / min(beta, s.n * task.sat_cap) for s in known]
        total = sum(per) / min(beta * task.sat_cap, len(known))
    if task.cls == "staticUnknown":
        total += task.area() / coverage_rate
    return total


# ---------------------------------------------------------------------------
# search node structures


@dataclass(frozen=True)
class TeamPlan:
    tasks: tuple = ()  # (task id, start, end) triples
    end_time: float = 0.0
    cost_estimate: float = 0.0

    def task_ids(self) -> tuple:
        return tuple(t for t, _, _ in self.tasks)

    def capacity(self, ctx: SearchContext) -> dict:
        """Per-action demand: the max subtask requirement over the plan."""
        out: dict = {}
        for tid, _, _ in self.tasks:
            for a, n in ctx.tasks[tid].max_demand().items():
                out[a] = max(out.get(a, 0), n)
        return out


@dataclass
class SearchNode:
    id: int
    plans: tuple  # of TeamPlan
    reach: tuple  # per mission: frozenset of automaton states
    enable: dict  # symbol -> time it became assignable
    finish: tuple  # per mission: acceptance time or None
    depth: int
    parent: Optional[int] = None
    feasible: bool = True
    # per mission: completion time of its latest assigned symbol; later
    # symbols of the same mission must finish after it so the executed
    # completion order matches the order the automaton consumed
    last: tuple = ()
    word: tuple = ()  # global assignment order along the path

    def assigned(self) -> set:
        return {t for p in self.plans for t in p.task_ids()}

    def makespan(self) -> float:
        return max((p.end_time for p in self.plans), default=0.0)


@dataclass
class AssignmentResult:
    plans: tuple
    value: float
    makespan: float
    complete: bool
    node_id: int
    word: tuple = ()
    expanded: int = 0
    pruned: int = 0

    @property
    def team_count(self) -> int:
        return len(self.plans)


# ---------------------------------------------------------------------------
# node operations


def node_value(node: SearchNode, ctx: SearchContext) -> float:
    """Search objective: makespan + weighted cost + weighted mission lag."""
    cached = getattr(node, "_value", None)
    if cached is not None:
        return cached
    makespan = node.makespan()
    value = makespan + ctx.eta1 * sum(p.cost_estimate for p in node.plans)
    for i, m in enumerate(ctx.missions):
        dmin = min((ctx.psi[i].get(q, math.inf) for q in node.reach[i]),
                   default=math.inf)
        value += ctx.eta2 * m.weight * dmin
        if m.deadline != math.inf:
            fin = node.finish[i] if node.finish[i] is not None else makespan
            value += ctx.deadline_penalty * m.weight \
                * max(0.0, fin - m.deadline)
    node._value = value
    return value


def capacity_feasible(node: SearchNode, ctx: SearchContext) -> bool:
    """Summed per-team demands must fit inside the fleet's capabilities."""
    totals: dict = {}
    for p in node.plans:
        for a, n in p.capacity(ctx).items():
            totals[a] = totals.get(a, 0) + n
    return all(n <= ctx.fleet_capacity.get(a, 0) for a, n in totals.items())


def candidate_tasks(node: SearchNode, ctx: SearchContext) -> list[str]:
    """Symbols that advance at least one mission along a marked transition
    and leave every mission's reachable set alive."""
    cached = getattr(node, "_cands", None)
    if cached is not None:
        return cached
    assigned = node.assigned()
    out = []
    seen = set()
    for i, m in enumerate(ctx.missions):
        for q in node.reach[i]:
            for guard, _to in m.automaton._out.get(q, ()):
                w = guard.require
                if w is None or w in seen or w in assigned:
                    continue
                t = ctx.tasks.get(w)
                if t is None or t.status in ("done", "cancelled"):
                    continue
                if all(advance(ctx.missions[j].automaton, node.reach[j], w)
                       for j in range(len(ctx.missions))
                       if w in ctx.missions[j].alphabet):
                    seen.add(w)
                    out.append(w)
    out = sorted(out)
    node._cands = out
    return out


def make_root(ctx: SearchContext, node_id: int = 0) -> SearchNode:
    reach = tuple(
        frozenset(ctx.initial_reach[m.id]) if ctx.initial_reach else
        m.automaton.initial for m in ctx.missions)
    node = SearchNode(id=node_id, plans=(), reach=reach, enable={},
                      finish=tuple(None for _ in ctx.missions), depth=0,
                      last=tuple(0.0 for _ in ctx.missions))
    for w in candidate_tasks(node, ctx):
        node.enable[w] = 0.0
    return node


def expand(node: SearchNode, omega: str, k: int, ctx: SearchContext,
           node_id: int) -> SearchNode:
    """Child node appending task `omega` to team k (or a fresh team)."""
    if omega not in candidate_tasks(node, ctx):
        raise InvalidCandidate(omega)
    loc = ctx.centroid[omega]
    if k == NEW_TEAM:
        prev_end, prev_pos, prev_cost = 0.0, ctx.origin, 0.0
        plan = TeamPlan()
        k = len(node.plans)
        plans = node.plans + (plan,)
    else:
        plan = node.plans[k]
        plans = node.plans
        prev_end = plan.end_time
        prev_pos = ctx.centroid[plan.tasks[-1][0]] if plan.tasks \
            else ctx.origin
        prev_cost = plan.cost_estimate
    nav = ctx.nav_est(prev_pos, loc)
    t_ready = max([prev_end, node.enable.get(omega, 0.0)] +
                  [node.last[i] for i, m in enumerate(ctx.missions)
                   if omega in m.alphabet])
    t_end = t_ready + nav + ctx.exec_est[omega]
    new_plan = TeamPlan(tasks=plan.tasks + ((omega, t_ready, t_end),),
                        end_time=t_end,
                        cost_estimate=prev_cost + nav + ctx.exec_est[omega])
    plans = plans[:k] + (new_plan,) + plans[k + 1:]

    reach = []
    finish = list(node.finish)
    last = list(node.last)
    feasible = True
    for i, m in enumerate(ctx.missions):
        if omega in m.alphabet:
            r = advance(m.automaton, node.reach[i], omega)
            if not r:
                feasible = False
            last[i] = max(last[i], t_end)
            if finish[i] is None and r & m.automaton.accepting:
                finish[i] = last[i]
        else:
            r = node.reach[i]
        reach.append(r)
    child = SearchNode(id=node_id, plans=plans, reach=tuple(reach),
                       enable=dict(node.enable), finish=tuple(finish),
                       depth=node.depth + 1, parent=node.id,
                       feasible=feasible, last=tuple(last),
                       word=node.word + (omega,))
    if feasible:
        child.feasible = capacity_feasible(child, ctx)
    if child.feasible:
        for w in candidate_tasks(child, ctx):
            if w not in child.enable:
                child.enable[w] = t_end
    return child


def is_complete(node: SearchNode, ctx: SearchContext) -> bool:
    return all(node.reach[i] & m.automaton.accepting
               for i, m in enumerate(ctx.missions))


# ---------------------------------------------------------------------------
# dominance


def profile(node: SearchNode, ctx: SearchContext) -> tuple:
    """Per-team end times and costs plus per-mission automaton distance."""
    dists = tuple(
        min((ctx.psi[i].get(q, math.inf) for q in node.reach[i]),
            default=math.inf)
        for i in range(len(ctx.missions)))
    return (tuple(p.end_time for p in node.plans)
            + tuple(p.cost_estimate for p in node.plans) + dists)


def dominates(z1: tuple, z2: tuple) -> bool:
    if len(z1) != len(z2):
        raise ValueError("profiles of different dimension are incomparable")
    return all(a <= b for a, b in zip(z1, z2)) and z1 != z2


def _dominance_key(node: SearchNode) -> tuple:
    """Nodes are dominance-compared only when the sets of work per team and
    each team's last stop coincide; everything else is apples to oranges."""
    return (len(node.plans),
            tuple(frozenset(p.task_ids()) for p in node.plans),
            tuple(p.tasks[-1][0] if p.tasks else None for p in node.plans))


def _safely_dominates(a: SearchNode, b: SearchNode, ctx: SearchContext) -> bool:
    """Strict Pareto dominance restricted to provably-exchangeable nodes:
    a must be at least as advanced in every mission automaton, have every
    symbol of b enabled no later, and weakly beat b's whole profile."""
    for i in range(len(ctx.missions)):
        if not a.reach[i] >= b.reach[i]:
            return False
    for w, tb in b.enable.items():
        ta = a.enable.get(w)
        if ta is None or ta > tb + 1e-12:
            return False
    if any(x > y + 1e-12 for x, y in zip(a.last, b.last)):
        return False
    pa, pb = profile(a, ctx), profile(b, ctx)
    return all(x <= y + 1e-12 for x, y in zip(pa, pb)) and \
        (any(x < y - 1e-12 for x, y in zip(pa, pb)) or a.id < b.id)


def prune_dominated(nodes: list, ctx: SearchContext) -> tuple[list, int]:
    groups: dict = {}
    for n in nodes:
        groups.setdefault(_dominance_key(n), []).append(n)
    survivors = []
    for grp in groups.values():
        keep = []
        for n in sorted(grp, key=lambda n: n.id):
            if any(_safely_dominates(m, n, ctx) for m in keep):
                continue
            keep = [m for m in keep if not _safely_dominates(n, m, ctx)]
            keep.append(n)
        survivors.extend(keep)
    return survivors, len(nodes) - len(survivors)


# ---------------------------------------------------------------------------
# the planner


def plan_horizon(ctx: SearchContext, horizon: float = math.inf,
                 batch: int = 4, budget: Optional[float] = None,
                 prune: bool = True,
                 max_expansions: Optional[int] = None) -> AssignmentResult:
    """Best-first assignment search with batch expansion and a task horizon.

    Expands the `batch` cheapest open nodes per round until either every
    open node has `horizon` tasks assigned or nothing is left to expand;
    returns the cheapest node whose missions can all accept, falling back
    to the deepest frontier when the horizon cut fires first.

    `budget` (wall-clock seconds) only stops the search once a complete
    node exists, so results stay exact when time allows.  `max_expansions`
    is a hard deterministic cap for large online instances: the best
    frontier node found within the cap is returned.  Leave it unset when
    optimality matters.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    t0 = time.monotonic()
    counter = itertools.count(1)
    root = make_root(ctx)
    frontier = [root]
    complete: list = []
    expanded = 0
    pruned_total = 0

    def key(n: SearchNode):
        return (node_value(n, ctx), -n.depth, n.id)

    if is_complete(root, ctx):
        complete.append(root)

    while True:
        open_nodes = [n for n in frontier
                      if n.depth < horizon and not is_complete(n, ctx)
                      and candidate_tasks(n, ctx)]
        if not open_nodes:
            break
        if budget is not None and time.monotonic() - t0 > budget and complete:
            break
        if max_expansions is not None and expanded >= max_expansions:
            break
        batch_nodes = sorted(open_nodes, key=key)[:batch]
        chosen = {n.id for n in batch_nodes}
        frontier = [n for n in frontier if n.id not in chosen]
        children = []
        for node in batch_nodes:
            for w in candidate_tasks(node, ctx):
                for k in list(range(len(node.plans))) + [NEW_TEAM]:
                    child = expand(node, w, k, ctx, next(counter))
                    expanded += 1
                    if not child.feasible:
                        continue
                    if is_complete(child, ctx):
                        complete.append(child)
                    else:
                        children.append(child)
        frontier.extend(children)
        if prune:
            frontier, pruned = prune_dominated(frontier, ctx)
            pruned_total += pruned

    def result_from(node: SearchNode) -> AssignmentResult:
        return AssignmentResult(plans=node.plans,
                                value=node_value(node, ctx),
                                makespan=node.makespan(),
                                complete=is_complete(node, ctx),
                                node_id=node.id, word=node.word,
                                expanded=expanded, pruned=pruned_total)

    if complete:
        best = min(complete, key=key)
        return result_from(best)
    cutoff = min(horizon, max((m.depth for m in frontier), default=0))
    deep = [n for n in frontier if n.depth >= cutoff]
    if not deep:
        raise Infeasible("search exhausted without a feasible plan")
    return result_from(min(deep, key=key))


def brute_force_assign(ctx: SearchContext,
                       max_tasks: int = 6) -> AssignmentResult:
    """Exhaustive oracle: every automaton-consistent assignment sequence
    into every team split, no pruning, no batching, no horizon."""
    universe = {t for m in ctx.missions for t in m.alphabet}
    if len(universe) > max_tasks:
        raise TooLarge(f"{len(universe)} tasks exceeds limit {max_tasks}")
    counter = itertools.count(1)
    root = make_root(ctx)
    best: list = [None]

    def better(node):
        if best[0] is None:
            return True
        return (node_value(node, ctx), node.makespan(), node.id) < \
            (node_value(best[0], ctx), best[0].makespan(), best[0].id)

    def rec(node):
        if is_complete(node, ctx):
            if better(node):
                best[0] = node
            return
        for w in candidate_tasks(node, ctx):
            for k in list(range(len(node.plans))) + [NEW_TEAM]:
                child = expand(node, w, k, ctx, next(counter))
                if child.feasible:
                    rec(child)

    rec(root)
    if best[0] is None:
        raise Infeasible("no feasible assignment")
    node = best[0]
    return AssignmentResult(plans=node.plans, value=node_value(node, ctx),
                            makespan=node.makespan(), complete=True,
                            node_id=node.id, word=node.word)
