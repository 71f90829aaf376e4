"""Tests for the assignment search: value function, candidate generation,
expansion bookkeeping, dominance pruning, and oracle-checked optimality."""

import math
import random

import pytest

from fleetcoord.assignment import (
    Infeasible, NEW_TEAM, SearchContext, SearchNode, TeamPlan, TooLarge,
    brute_force_assign, candidate_tasks, capacity_feasible, dominates,
    exec_estimate, expand, is_complete, make_root, node_value, plan_horizon,
    prune_dominated,
)
from fleetcoord.logic import parse_formula, semantic_eval
from fleetcoord.model import Mission, Robot, Subtask, Task


def robot(rid, pos=(0.0, 0.0), caps=("act",), speed=1.0):
    return Robot(id=rid, type="ugv", capabilities=frozenset(caps),
                 max_speed=speed, start=pos)


def task(tid, center=(0.0, 0.0), n=1, action="act", base=10.0, sat_cap=1,
         cls="staticKnown"):
    cx, cy = center
    region = ((cx - 1, cy - 1), (cx + 1, cy - 1), (cx + 1, cy + 1),
              (cx - 1, cy + 1))
    return Task(id=tid, cls=cls, region=region,
                subtasks=[Subtask(id=f"{tid}.0", n=n, action=action,
                                  loc=center)],
                eta={action: base}, sat_cap=sat_cap)


def mission(mid, text, weight=1.0, deadline=math.inf):
    return Mission(id=mid, formula=parse_formula(text), formula_text=text,
                   release=0.0, weight=weight, deadline=deadline)


def make_ctx(missions, tasks, fleet, **kw):
    return SearchContext(missions=missions, tasks={t.id: t for t in tasks},
                         fleet=fleet, **kw)


class TestNodeValue:
    def test_formula_evaluation(self):
        m = mission("m", "F(a & F b)")  # initial distance 2
        ctx = make_ctx([m], [task("a"), task("b")], [robot("r1")],
                       eta1=0.1, eta2=0.5)
        plans = (TeamPlan(tasks=(("a", 0, 10),), end_time=10.0,
                          cost_estimate=5.0),
                 TeamPlan(tasks=(("b", 0, 8),), end_time=8.0,
                          cost_estimate=3.0))
        node = SearchNode(id=1, plans=plans,
                          reach=(m.automaton.initial,),
                          enable={}, finish=(None,), depth=2)
        assert node_value(node, ctx) == pytest.approx(10 + 0.8 + 1.0)

    def test_empty_root(self):
        m1 = mission("m1", "F(a & F b)", weight=2.0)  # distance 2
        m2 = mission("m2", "F c", weight=1.0)         # distance 1
        ctx = make_ctx([m1, m2], [task("a"), task("b"), task("c")],
                       [robot("r1")], eta2=0.5)
        root = make_root(ctx)
        assert node_value(root, ctx) == pytest.approx(0.5 * (2 * 2 + 1 * 1))

    def test_makespan_monotone(self):
        m = mission("m", "F a")
        ctx = make_ctx([m], [task("a")], [robot("r1")])
        lo = SearchNode(id=1, plans=(TeamPlan(end_time=5.0),),
                        reach=(m.automaton.initial,),
                        enable={}, finish=(None,), depth=0)
        hi = SearchNode(id=2, plans=(TeamPlan(end_time=9.0),),
                        reach=(m.automaton.initial,),
                        enable={}, finish=(None,), depth=0)
        assert node_value(hi, ctx) > node_value(lo, ctx)


class TestCandidates:
    def test_nested_eventually_orders_tasks(self):
        m = mission("m", "F(w1 & F w2)")
        ctx = make_ctx([m], [task("w1"), task("w2")], [robot("r1")])
        root = make_root(ctx)
        assert candidate_tasks(root, ctx) == ["w1"]
        child = expand(root, "w1", NEW_TEAM, ctx, 1)
        assert candidate_tasks(child, ctx) == ["w2"]

    def test_accepting_yields_nothing(self):
        m = mission("m", "F w1")
        ctx = make_ctx([m], [task("w1")], [robot("r1")])
        root = make_root(ctx)
        done = expand(root, "w1", NEW_TEAM, ctx, 1)
        assert is_complete(done, ctx)
        assert candidate_tasks(done, ctx) == []

    def test_until_blocks_forbidden_symbol(self):
        m = mission("m", "(!w2 U w1) & F w2")
        ctx = make_ctx([m], [task("w1"), task("w2")], [robot("r1")])
        root = make_root(ctx)
        assert candidate_tasks(root, ctx) == ["w1"]


class TestExpand:
    def test_new_team_first_task(self):
        m = mission("m", "F a")
        fleet = [robot("r1", (0.0, 0.0), speed=2.5)]
        ctx = make_ctx([m], [task("a", center=(5.0, 0.0), base=10.0)], fleet)
        root = make_root(ctx)
        child = expand(root, "a", NEW_TEAM, ctx, 1)
        assert child.plans[0].tasks == (("a", 0.0, 12.0),)
        assert child.plans[0].end_time == pytest.approx(12.0)

    def test_same_region_second_task(self):
        m = mission("m", "F a & F b")
        fleet = [robot("r1", (0.0, 0.0), speed=2.5)]
        ctx = make_ctx([m], [task("a", center=(5.0, 0.0)),
                             task("b", center=(5.0, 0.0))], fleet)
        root = make_root(ctx)
        c1 = expand(root, "a", NEW_TEAM, ctx, 1)
        c2 = expand(c1, "b", 0, ctx, 2)
        assert c2.plans[0].end_time == pytest.approx(12.0 + 10.0)

    def test_fleet_capacity_violation_marks_infeasible(self):
        m = mission("m", "F a")
        fleet = [robot(f"r{i}") for i in range(4)]
        ctx = make_ctx([m], [task("a", n=6)], fleet)
        root = make_root(ctx)
        child = expand(root, "a", NEW_TEAM, ctx, 1)
        assert not child.feasible

    def test_enable_time_gates_successor(self):
        """A symbol unlocked by another task cannot start before it ends."""
        m = mission("m", "F(a & F b)")
        fleet = [robot("r1"), robot("r2")]
        ctx = make_ctx([m], [task("a", base=10.0), task("b", base=10.0)],
                       fleet)
        root = make_root(ctx)
        c1 = expand(root, "a", NEW_TEAM, ctx, 1)
        assert c1.enable["b"] == pytest.approx(c1.plans[0].end_time)
        c2 = expand(c1, "b", NEW_TEAM, ctx, 2)
        assert c2.plans[1].tasks[0][1] >= c1.plans[0].end_time


class TestCapacity:
    def test_boundary_equality(self):
        m = mission("m", "F a & F b")
        fleet = [robot(f"r{i}", caps=("grasp",)) for i in range(5)]
        ctx = make_ctx([m], [task("a", n=3, action="grasp"),
                             task("b", n=2, action="grasp")], fleet)
        plans = (TeamPlan(tasks=(("a", 0, 1),)),
                 TeamPlan(tasks=(("b", 0, 1),)))
        node = SearchNode(id=1, plans=plans,
                          reach=(m.automaton.initial,),
                          enable={}, finish=(None,), depth=2)
        assert capacity_feasible(node, ctx)

    def test_no_teams(self):
        m = mission("m", "F a")
        ctx = make_ctx([m], [task("a")], [robot("r1")])
        assert capacity_feasible(make_root(ctx), ctx)


class TestDominates:
    def test_elementwise(self):
        assert dominates((3, 2, 1), (4, 2, 1))

    def test_identical_is_not_strict(self):
        assert not dominates((3, 2, 1), (3, 2, 1))

    def test_incomparable(self):
        assert not dominates((3, 5), (4, 2))

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            dominates((1, 2), (1, 2, 3))


def random_instance(seed):
    rng = random.Random(seed)
    n_tasks = rng.randint(2, 5)
    tasks = [task(f"w{i}",
                  center=(rng.uniform(0, 20), rng.uniform(0, 20)),
                  n=rng.randint(1, 2), base=rng.choice([4.0, 8.0]))
             for i in range(1, n_tasks + 1)]
    fleet = [robot(f"r{i}", (rng.uniform(0, 20), rng.uniform(0, 20)),
                   speed=rng.choice([1.0, 2.0]))
             for i in range(rng.randint(2, 4))]
    ids = [t.id for t in tasks]
    rng.shuffle(ids)
    templates = []
    if len(ids) >= 2:
        a, b = ids[0], ids[1]
        templates += [f"F({a} & F {b})", f"F {a} & F {b}",
                      f"(!{b} U {a}) & F {b}"]
    templates.append(f"F {ids[-1]}")
    n_missions = rng.randint(1, 2)
    missions = []
    for j in range(n_missions):
        missions.append(mission(f"m{j}", rng.choice(templates),
                                weight=rng.choice([1.0, 2.0])))
    return make_ctx(missions, tasks, fleet, eta1=0.1, eta2=1.0)


class TestPlanner:
    def test_single_mission_one_team(self):
        m = mission("m", "F(w1 & F w2)")
        fleet = [robot("r1"), robot("r2")]
        ctx = make_ctx([m], [task("w1", center=(2.0, 0.0), base=3.0),
                             task("w2", center=(4.0, 0.0), base=3.0)], fleet)
        res = plan_horizon(ctx)
        assert res.complete
        oracle = brute_force_assign(ctx)
        assert res.makespan == pytest.approx(oracle.makespan)

    def test_horizon_one_is_greedy(self):
        m = mission("m", "F w1 & F w2")
        ctx = make_ctx([m], [task("w1"), task("w2")],
                       [robot("r1"), robot("r2")])
        res = plan_horizon(ctx, horizon=1)
        assert not res.complete
        assert sum(len(p.tasks) for p in res.plans) == 1

    def test_matches_oracle_on_random_instances(self):
        for seed in range(40):
            ctx = random_instance(seed)
            try:
                oracle = brute_force_assign(ctx)
            except Infeasible:
                with pytest.raises(Infeasible):
                    plan_horizon(ctx)
                continue
            res = plan_horizon(ctx)
            assert res.complete
            assert res.makespan == pytest.approx(oracle.makespan, rel=1e-9), \
                f"seed {seed}"
            assert res.value == pytest.approx(oracle.value, rel=1e-9)

    def test_temporal_soundness(self):
        """Completion-ordered words of returned plans satisfy every mission."""
        for seed in range(40):
            ctx = random_instance(seed)
            try:
                res = plan_horizon(ctx)
            except Infeasible:
                continue
            completions = sorted(
                (te, tid) for p in res.plans for tid, _, te in p.tasks)
            for m in ctx.missions:
                word = [tid for _, tid in completions if tid in m.alphabet]
                assert semantic_eval(m.formula, word), \
                    f"seed {seed} mission {m.id} word {word}"

    def test_pruning_preserves_optimum(self):
        for seed in range(20):
            ctx = random_instance(seed)
            try:
                full = plan_horizon(ctx, prune=False)
            except Infeasible:
                continue
            pruned = plan_horizon(ctx, prune=True)
            assert pruned.value == pytest.approx(full.value, rel=1e-9)

    def test_monotone_mission_distance(self):
        """Expanding never moves a mission further from acceptance."""
        ctx = random_instance(3)
        root = make_root(ctx)

        def psi_sum(node):
            return sum(
                min((ctx.psi[i].get(q, math.inf) for q in node.reach[i]),
                    default=math.inf)
                for i in range(len(ctx.missions)))

        stack = [root]
        seen = 0
        while stack and seen < 200:
            node = stack.pop()
            for w in candidate_tasks(node, ctx):
                child = expand(node, w, NEW_TEAM, ctx, seen + 1)
                seen += 1
                if child.feasible:
                    assert psi_sum(child) <= psi_sum(node)
                    stack.append(child)

    def test_frontier_never_mutually_dominated(self):
        ctx = random_instance(7)
        root = make_root(ctx)
        kids = [expand(root, w, NEW_TEAM, ctx, i + 1)
                for i, w in enumerate(candidate_tasks(root, ctx))]
        survivors, _ = prune_dominated(kids, ctx)
        from fleetcoord.assignment import _safely_dominates
        for a in survivors:
            for b in survivors:
                if a is not b:
                    assert not _safely_dominates(a, b, ctx)


class TestBruteForce:
    def test_single_task(self):
        m = mission("m", "F w1")
        ctx = make_ctx([m], [task("w1")], [robot("r1")])
        res = brute_force_assign(ctx)
        assert res.team_count == 1
        assert res.plans[0].task_ids() == ("w1",)

    def test_too_large(self):
        names = [f"w{i}" for i in range(7)]
        m = mission("m", " & ".join(f"F {n}" for n in names))
        ctx = make_ctx([m], [task(n) for n in names], [robot("r1")])
        with pytest.raises(TooLarge):
            brute_force_assign(ctx, max_tasks=6)

    def test_infeasible_matches_planner(self):
        m = mission("m", "F w1")
        ctx = make_ctx([m], [task("w1", n=3)], [robot("r1")])
        with pytest.raises(Infeasible):
            brute_force_assign(ctx)
        with pytest.raises(Infeasible):
            plan_horizon(ctx)


class TestExecEstimate:
    def test_known_subtasks(self):
        t = task("w", base=10.0)  # one subtask, n=1 -> plain base
        assert exec_estimate(t) == pytest.approx(10.0)

    def test_unknown_class_uses_area(self):
        t = Task(id="w", cls="staticUnknown",
                 region=((0, 0), (4, 0), (4, 4), (0, 4)),
                 subtasks=[Subtask(id="w.0", n=1, action="act", loc=(1, 1),
                                   state="undiscovered")],
                 eta={"act": 5.0})
        assert exec_estimate(t, coverage_rate=2.0) == pytest.approx(8.0)
