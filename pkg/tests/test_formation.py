"""Tests for team formation: branch-and-bound solver, greedy fallback,
and expansion of team plans to per-robot sequences."""

import itertools
import math
import random

import pytest

from fleetcoord.formation import (
    CandidateRobot, FormationProblem, FormationResult, Infeasible, TeamSpec,
    greedy_fallback, robot_plans, solve_formation,
)


def robot(rid, pos, caps=("grasp",), speed=1.0, at=0.0):
    return CandidateRobot(id=rid, capabilities=frozenset(caps), speed=speed,
                          available_at=at, available_pos=pos)


def team(tid, capacity, region=(0.0, 0.0), exec_total=0.0):
    return TeamSpec(id=tid, capacity=capacity, first_region=region,
                    exec_total=exec_total)


def oracle_formation(problem):
    """Exhaustive enumeration over every robot->team/idle assignment."""
    from fleetcoord.formation import _objective, _team_ok
    teams = problem.teams
    robots = problem.robots
    locked = dict(problem.locks and {r: t for r, t in problem.locks} or {})
    options = [None] + [t.id for t in teams]
    best = math.inf
    for combo in itertools.product(options, repeat=len(robots)):
        assign = {t.id: [] for t in teams}
        ok = True
        for r, tid in zip(robots, combo):
            if tid is None:
                if r.id in locked:
                    ok = False
                    break
                continue
            if (r.id, tid) in problem.forbids or \
                    locked.get(r.id, tid) != tid:
                ok = False
                break
            assign[tid].append(r)
        if not ok:
            continue
        if all(_team_ok(assign[t.id], t, problem, final=True)
               for t in teams):
            best = min(best, _objective(assign, problem))
    return best


class TestSolve:
    def test_cross_assignment(self):
        """Two teams, two robots; each robot is fast for the other's base."""
        teams = [team("t1", {"grasp": 1}, region=(0.0, 0.0), exec_total=1.0),
                 team("t2", {"grasp": 1}, region=(8.0, 0.0), exec_total=1.0)]
        robots = [robot("r1", (8.0, 0.0)),   # near t2
                  robot("r2", (0.0, 0.0))]   # near t1
        res = solve_formation(FormationProblem(teams=teams, robots=robots))
        assert res.assign == {"t1": ("r2",), "t2": ("r1",)}
        assert res.objective == pytest.approx(1.0)
        assert res.status == "optimal"

    def test_lock_forces_assignment(self):
        teams = [team("t1", {"grasp": 1})]
        robots = [robot("r1", (5.0, 0.0)), robot("r2", (1.0, 0.0))]
        res = solve_formation(FormationProblem(
            teams=teams, robots=robots, locks={("r1", "t1")}))
        assert res.assign["t1"] == ("r1",)
        assert res.status == "optimal"

    def test_redundancy_margin_bounds(self):
        teams = [team("t1", {"grasp": 2})]
        robots = [robot(f"r{i}", (float(i), 0.0)) for i in range(4)]
        res = solve_formation(FormationProblem(
            teams=teams, robots=robots, margins={"grasp": 1.5}))
        assert 2 <= len(res.assign["t1"]) <= 3  # beta .. floor(beta*alpha)

    def test_infeasible_capacity(self):
        teams = [team("t1", {"grasp": 3})]
        robots = [robot("r1", (0, 0)), robot("r2", (0, 0))]
        with pytest.raises(Infeasible):
            solve_formation(FormationProblem(teams=teams, robots=robots))

    def test_forbid_tightening_never_improves(self):
        rng = random.Random(0)
        for seed in range(20):
            rng = random.Random(seed)
            teams = [team(f"t{k}", {"grasp": 1},
                          region=(rng.uniform(0, 10), rng.uniform(0, 10)))
                     for k in range(2)]
            robots = [robot(f"r{i}", (rng.uniform(0, 10), rng.uniform(0, 10)))
                      for i in range(4)]
            base = solve_formation(FormationProblem(teams=teams,
                                                    robots=robots))
            tightened = FormationProblem(
                teams=teams, robots=robots,
                forbids={(robots[0].id, teams[0].id)})
            try:
                res = solve_formation(tightened)
                assert res.objective >= base.objective - 1e-9
            except Infeasible:
                pass

    def test_matches_enumeration_oracle(self):
        actions = ["grasp", "scan", "haul"]
        for seed in range(60):
            rng = random.Random(seed)
            n_teams = rng.randint(1, 3)
            teams = [team(f"t{k}",
                          {rng.choice(actions): rng.randint(1, 2)},
                          region=(rng.uniform(0, 10), rng.uniform(0, 10)),
                          exec_total=rng.uniform(0, 5))
                     for k in range(n_teams)]
            robots = [robot(f"r{i}",
                            (rng.uniform(0, 10), rng.uniform(0, 10)),
                            caps=tuple(rng.sample(actions,
                                                  rng.randint(1, 2))),
                            speed=rng.choice([1.0, 2.0]))
                      for i in range(rng.randint(2, 6))]
            margins = {a: rng.choice([1.0, 1.5]) for a in actions}
            problem = FormationProblem(teams=teams, robots=robots,
                                       margins=margins)
            expected = oracle_formation(problem)
            if expected == math.inf:
                with pytest.raises(Infeasible):
                    solve_formation(problem)
            else:
                res = solve_formation(problem)
                assert res.objective == pytest.approx(expected, abs=1e-9)
                # disjointness
                used = [r for mem in res.assign.values() for r in mem]
                assert len(used) == len(set(used))


class TestGreedy:
    def test_never_beats_solver(self):
        for seed in range(30):
            rng = random.Random(100 + seed)
            teams = [team(f"t{k}", {"grasp": rng.randint(1, 2)},
                          region=(rng.uniform(0, 10), rng.uniform(0, 10)))
                     for k in range(rng.randint(1, 2))]
            robots = [robot(f"r{i}",
                            (rng.uniform(0, 10), rng.uniform(0, 10)))
                      for i in range(5)]
            problem = FormationProblem(teams=teams, robots=robots)
            opt = solve_formation(problem)
            fb = greedy_fallback(problem)
            assert fb.status == "fallback"
            assert opt.objective <= fb.objective + 1e-9

    def test_empty_teams(self):
        res = greedy_fallback(FormationProblem(teams=[], robots=[]))
        assert res.assign == {}

    def test_disjointness_infeasible(self):
        teams = [team("t1", {"grasp": 1}), team("t2", {"grasp": 1})]
        robots = [robot("r1", (0.0, 0.0))]
        with pytest.raises(Infeasible):
            greedy_fallback(FormationProblem(teams=teams, robots=robots))


class TestRobotPlans:
    def test_members_share_team_sequence(self):
        res = FormationResult(assign={"t1": ("r1", "r2")}, objective=0.0,
                              status="optimal")
        plans = robot_plans(res, {"t1": [((0, 0), "w2"), ((5, 5), "w3")]})
        assert plans["r1"] == plans["r2"]
        assert [t for _, t in plans["r1"]] == ["w2", "w3"]

    def test_unassigned_robot_absent(self):
        res = FormationResult(assign={"t1": ("r1",)}, objective=0.0,
                              status="optimal")
        plans = robot_plans(res, {"t1": []})
        assert "r9" not in plans
