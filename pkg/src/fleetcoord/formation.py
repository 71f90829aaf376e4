"""Capacity-based team formation.

Turns abstract per-team capacity demands into concrete disjoint robot
sets.  An in-house integer branch-and-bound minimizes the worst team's
response time (latest member arrival plus the team's execution load);
a greedy capacity-filler serves as fallback when the solver is cut off.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence


class Infeasible(Exception):
    """Capacity bounds cannot be met under the lock/forbid constraints."""


@dataclass(frozen=True)
class TeamSpec:
    """One team to be staffed: demanded capacities and its first stop."""

    id: str
    capacity: dict  # action -> minimum robot count beta
    first_region: tuple[float, float]
    exec_total: float = 0.0  # summed execution estimate along the team plan


@dataclass(frozen=True)
class CandidateRobot:
    id: str
    capabilities: frozenset[str]
    available_at: float
    available_pos: tuple[float, float]
    speed: float


@dataclass
class FormationProblem:
    teams: list[TeamSpec]
    robots: list[CandidateRobot]
    margins: dict = field(default_factory=dict)  # action -> alpha >= 1
    locks: set = field(default_factory=set)  # (robot id, team id)
    forbids: set = field(default_factory=set)

    def __post_init__(self):
        overlap = self.locks & self.forbids
        if overlap:
            raise ValueError(f"lock/forbid overlap: {sorted(overlap)}")

    def alpha(self, action: str) -> float:
        return self.margins.get(action, 1.0)


@dataclass
class FormationResult:
    assign: dict  # team id -> tuple of robot ids (sorted)
    objective: float
    status: str  # optimal | incumbent | fallback


def _arrival(robot: CandidateRobot, team: TeamSpec) -> float:
    return robot.available_at + math.dist(robot.available_pos,
                                          team.first_region) / robot.speed


def _team_counts(members, team: TeamSpec) -> dict:
    counts = {a: 0 for a in team.capacity}
    for r in members:
        for a in team.capacity:
            if a in r.capabilities:
                counts[a] += 1
    return counts


def _team_ok(members, team: TeamSpec, problem: FormationProblem,
             final: bool) -> bool:
    counts = _team_counts(members, team)
    for a, beta in team.capacity.items():
        hi = math.floor(beta * problem.alpha(a))
        if counts[a] > hi:
            return False
        if final and counts[a] < beta:
            return False
    return True


def _objective(assign: dict, problem: FormationProblem) -> float:
    worst = 0.0
    by_id = {t.id: t for t in problem.teams}
    for tid, members in assign.items():
        team = by_id[tid]
        if not members:
            continue
        worst = max(worst, max(_arrival(r, team) for r in members)
                    + team.exec_total)
    return worst


def solve_formation(problem: FormationProblem, time_limit: float = 5.0,
                    max_nodes: Optional[int] = None) -> FormationResult:
    """Assign robots to teams minimizing the slowest team's response.

    Depth-first branch-and-bound over robots in id order; each robot
    joins one of the teams or stays idle.  The bound combines committed
    arrivals with the cheapest possible arrival for still-unmet demand.
    First strict improvement wins, so ties resolve to the assignment
    that idles low-id robots / uses high-index teams first — a fixed,
    reproducible rule.

    `max_nodes` caps the search deterministically for large online
    problems; the incumbent found so far is returned (status
    "incumbent").  Leave it unset when optimality matters.
    """
    teams = problem.teams
    if not teams:
        return FormationResult(assign={}, objective=0.0, status="optimal")
    robots = sorted(problem.robots, key=lambda r: r.id)
    by_team = {t.id: t for t in teams}
    locked_team = {}
    for rid, tid in problem.locks:
        if rid in locked_team:
            raise Infeasible(f"robot {rid} locked to two teams")
        if tid not in by_team:
            raise Infeasible(f"lock references unknown team {tid}")
        locked_team[rid] = tid

    deadline = time.monotonic() + time_limit
    best: list = [math.inf, None]
    timed_out = [False]

    # a greedy incumbent makes the bound bite from the first branch on;
    # the DFS only replaces it on strict improvement
    try:
        seed = greedy_fallback(problem)
        best[0] = seed.objective
        best[1] = dict(seed.assign)
    except Infeasible:
        pass

    # quick global feasibility: enough capable robots per team/action
    for t in teams:
        for a, beta in t.capacity.items():
            avail = sum(1 for r in robots if a in r.capabilities
                        and (r.id, t.id) not in problem.forbids)
            if avail < beta:
                raise Infeasible(
                    f"team {t.id}: action {a!r} needs {beta}, "
                    f"only {avail} eligible robots")

    arrivals = {(r.id, t.id): _arrival(r, t) for r in robots for t in teams}
    pos = {r.id: i for i, r in enumerate(robots)}

    # per (team, action): eligible robots' (arrival, index), arrival order —
    # the bound scans these instead of re-sorting the remaining robots
    pools: dict = {}
    for t in teams:
        for a in t.capacity:
            pools[(t.id, a)] = sorted(
                (arrivals[(r.id, t.id)], pos[r.id]) for r in robots
                if a in r.capabilities
                and (r.id, t.id) not in problem.forbids
                and locked_team.get(r.id, t.id) == t.id)

    def bound(assign, idx) -> float:
        """Optimistic objective for a partial assignment."""
        lb = 0.0
        for t in teams:
            members = assign[t.id]
            cur = max((arrivals[(r.id, t.id)] for r in members),
                      default=0.0)
            counts = _team_counts(members, t)
            for a, beta in t.capacity.items():
                need = beta - counts[a]
                if need <= 0:
                    continue
                for arr, i in pools[(t.id, a)]:
                    if i < idx:
                        continue
                    need -= 1
                    if need == 0:
                        cur = max(cur, arr)
                        break
                if need > 0:
                    return math.inf
            if members or t.capacity:
                lb = max(lb, cur + t.exec_total)
        return lb

    order = [None] + [t.id for t in reversed(teams)]  # idle first, see doc

    nodes = [0]

    def dfs(idx, assign):
        nodes[0] += 1
        if max_nodes is not None and nodes[0] > max_nodes:
            timed_out[0] = True
            return
        if time.monotonic() > deadline:
            timed_out[0] = True
            return
        b = bound(assign, idx)
        if b >= best[0]:
            return
        if idx == len(robots):
            if all(_team_ok(assign[t.id], t, problem, final=True)
                   for t in teams):
                obj = _objective(assign, problem)
                if obj < best[0]:
                    best[0] = obj
                    best[1] = {tid: tuple(sorted(r.id for r in mem))
                               for tid, mem in assign.items()}
            return
        r = robots[idx]
        forced = locked_team.get(r.id)
        for tid in order:
            if forced is not None and tid != forced:
                continue
            if tid is None:
                dfs(idx + 1, assign)
                continue
            if (r.id, tid) in problem.forbids:
                continue
            team = by_team[tid]
            if forced is None and \
                    not any(a in r.capabilities for a in team.capacity):
                continue  # useless member; upper bound would allow 0 anyway
            assign[tid].append(r)
            if _team_ok(assign[tid], team, problem, final=False):
                dfs(idx + 1, assign)
            assign[tid].pop()

    dfs(0, {t.id: [] for t in teams})
    if best[1] is None:
        if timed_out[0]:
            return greedy_fallback(problem)
        raise Infeasible("no assignment satisfies the capacity bounds")
    status = "incumbent" if timed_out[0] else "optimal"
    return FormationResult(assign=best[1], objective=best[0], status=status)


def greedy_fallback(problem: FormationProblem) -> FormationResult:
    """Fill teams in descending demand order with the earliest arrivals."""
    if not problem.teams:
        return FormationResult(assign={}, objective=0.0, status="fallback")
    locked_team = {rid: tid for rid, tid in problem.locks}
    assign = {t.id: [] for t in problem.teams}
    taken = set()
    by_id = {r.id: r for r in problem.robots}

    # honor locks up front
    for rid, tid in sorted(problem.locks):
        if tid in assign and rid in by_id:
            assign[tid].append(by_id[rid])
            taken.add(rid)

    teams = sorted(problem.teams,
                   key=lambda t: (-sum(t.capacity.values()), t.id))
    for team in teams:
        counts = _team_counts(assign[team.id], team)
        for action in sorted(team.capacity):
            beta = team.capacity[action]
            pool = sorted(
                (r for r in problem.robots
                 if r.id not in taken and action in r.capabilities
                 and (r.id, team.id) not in problem.forbids
                 and locked_team.get(r.id, team.id) == team.id),
                key=lambda r: (_arrival(r, team), r.id))
            for r in pool:
                if counts[action] >= beta:
                    break
                trial = assign[team.id] + [r]
                if not _team_ok(trial, team, problem, final=False):
                    continue
                assign[team.id].append(r)
                taken.add(r.id)
                counts = _team_counts(assign[team.id], team)
        if any(counts[a] < b for a, b in team.capacity.items()):
            raise Infeasible(
                f"greedy fill failed for team {team.id}")
    result = {tid: tuple(sorted(r.id for r in mem))
              for tid, mem in assign.items()}
    return FormationResult(assign=result,
                           objective=_objective(assign, problem),
                           status="fallback")


def robot_plans(result: FormationResult, plans: dict) -> dict:
    """Expand a formation into per-robot timed task sequences.

    `plans` maps team id -> ordered (region, task id) pairs; every member
    of a team receives the whole team sequence.
    """
    out = {}
    for tid, members in result.assign.items():
        seq = plans.get(tid, [])
        for rid in members:
            out[rid] = list(seq)
    return out
