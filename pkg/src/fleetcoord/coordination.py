"""Intra-team coordination.

Three regimes, one per task class:

* static, fully known  -> joint routing with motion primitives
* static, partly known -> coverage sweep + minimum-disruption insertion
* dynamic, known       -> distributed coalition formation over moving targets

All planning calls are pure; the coalition game is simulated in a
deterministic round-robin with seeded message delays so runs replay.
"""

from __future__ import annotations

import itertools
import math
import random
from dataclasses import dataclass, field
from typing import Optional, Sequence

TWO_PI = 2.0 * math.pi
UNREACHABLE = 1e9  # cost of an empty coalition / impossible interception


class CapabilityGap(Exception):
    """A subtask's action matches no robot in the team."""


class EmptyTeam(Exception):
    pass


# ---------------------------------------------------------------------------
# Dubins motion primitives


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    theta: float

    def __post_init__(self):
        object.__setattr__(self, "theta", self.theta % TWO_PI)


@dataclass(frozen=True)
class MotionPrimitive:
    word: str  # LSL, RSR, LSR, RSL, LRL, RLR
    segments: tuple[float, float, float]  # lengths in metres
    total_length: float
    radius: float


def _dubins_words(alpha: float, beta: float, d: float):
    """Candidate (word, t, p, q) tuples in normalized (radius=1) units."""
    sa, ca = math.sin(alpha), math.cos(alpha)
    sb, cb = math.sin(beta), math.cos(beta)
    c_ab = math.cos(alpha - beta)
    out = []

    # LSL
    tmp = d + sa - sb
    psq = 2 + d * d - 2 * c_ab + 2 * d * (sa - sb)
    if psq >= 0:
        p = math.sqrt(psq)
        t = (math.atan2(cb - ca, tmp) - alpha) % TWO_PI
        q = (beta - math.atan2(cb - ca, tmp)) % TWO_PI
        out.append(("LSL", t, p, q))
    # RSR
    tmp = d - sa + sb
    psq = 2 + d * d - 2 * c_ab + 2 * d * (sb - sa)
    if psq >= 0:
        p = math.sqrt(psq)
        t = (alpha - math.atan2(ca - cb, tmp)) % TWO_PI
        q = (-beta % TWO_PI + math.atan2(ca - cb, tmp)) % TWO_PI
        out.append(("RSR", t, p, q))
    # LSR
    psq = -2 + d * d + 2 * c_ab + 2 * d * (sa + sb)
    if psq >= 0:
        p = math.sqrt(psq)
        th = math.atan2(-ca - cb, d + sa + sb) - math.atan2(-2.0, p)
        t = (th - alpha) % TWO_PI
        q = (th - beta) % TWO_PI
        out.append(("LSR", t, p, q))
    # RSL
    psq = -2 + d * d + 2 * c_ab - 2 * d * (sa + sb)
    if psq >= 0:
        p = math.sqrt(psq)
        th = math.atan2(ca + cb, d - sa - sb) - math.atan2(2.0, p)
        t = (alpha - th) % TWO_PI
        q = (beta - th) % TWO_PI
        out.append(("RSL", t, p, q))
    # RLR
    tmp = (6.0 - d * d + 2 * c_ab + 2 * d * (sa - sb)) / 8.0
    if abs(tmp) <= 1.0:
        p = (TWO_PI - math.acos(tmp)) % TWO_PI
        t = (alpha - math.atan2(ca - cb, d - sa + sb) + p / 2.0) % TWO_PI
        q = (alpha - beta - t + p) % TWO_PI
        out.append(("RLR", t, p, q))
    # LRL
    tmp = (6.0 - d * d + 2 * c_ab - 2 * d * (sa - sb)) / 8.0
    if abs(tmp) <= 1.0:
        p = (TWO_PI - math.acos(tmp)) % TWO_PI
        t = (-alpha + math.atan2(-ca + cb, d + sa - sb) + p / 2.0) % TWO_PI
        q = (beta - alpha - t + p) % TWO_PI
        out.append(("LRL", t, p, q))
    return out


def dubins_path(a: Pose, b: Pose, radius: float) -> MotionPrimitive:
    """Shortest curvature-bounded path between two poses."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    dx, dy = b.x - a.x, b.y - a.y
    big_d = math.hypot(dx, dy)
    d = big_d / radius
    phi = math.atan2(dy, dx)
    alpha = (a.theta - phi) % TWO_PI
    beta = (b.theta - phi) % TWO_PI

    best = None
    for word, t, p, q in _dubins_words(alpha, beta, d):
        length = (t + p + q) * radius
        if best is None or length < best[1] - 1e-12:
            segs = (t * radius, p * radius, q * radius)
            best = (word, length, segs)
    word, length, segs = best
    return MotionPrimitive(word=word, segments=segs, total_length=length,
                           radius=radius)


def dubins_length(p, hp, q, hq, radius) -> float:
    return dubins_path(Pose(*p, hp), Pose(*q, hq), radius).total_length


# ---------------------------------------------------------------------------
# static-known: joint routing


@dataclass
class RouteLeg:
    subtask: str
    arrival: float
    start: float  # synchronized start (>= arrival when waiting on teammates)
    end: float
    loc: tuple[float, float]


@dataclass
class Route:
    legs: dict  # robot id -> list of RouteLeg
    makespan: float
    assignment: dict  # subtask id -> tuple of robot ids


_HEADINGS = 8


def _leg_time(p, q, robot, hp=None, hq=None) -> float:
    if robot.curvature is None:
        return math.dist(p, q) / robot.max_speed
    r = 1.0 / robot.curvature
    return dubins_length(p, hp or 0.0, q, hq or 0.0, r) / robot.max_speed


def route_time(robot, start: tuple, waypoints: Sequence[tuple]) -> list[float]:
    """Cumulative travel time at each waypoint along a fixed visit order.

    Curvature-limited robots get a per-waypoint heading chosen from a
    uniform 8-direction set by dynamic programming over the whole route.
    """
    if not waypoints:
        return []
    if robot.curvature is None:
        out, t, cur = [], 0.0, start
        for w in waypoints:
            t += math.dist(cur, w) / robot.max_speed
            out.append(t)
            cur = w
        return out
    r = 1.0 / robot.curvature
    hs = [i * TWO_PI / _HEADINGS for i in range(_HEADINGS)]
    # state: (waypoint index, heading) -> earliest arrival
    first = waypoints[0]
    h0 = math.atan2(first[1] - start[1], first[0] - start[0])
    best = {h: dubins_length(start, h0, first, h, r) / robot.max_speed
            for h in hs}
    arrivals = [min(best.values())]
    for i in range(1, len(waypoints)):
        p, q = waypoints[i - 1], waypoints[i]
        nxt = {}
        for h in hs:
            nxt[h] = min(best[g] + dubins_length(p, g, q, h, r)
                         / robot.max_speed for g in hs)
        best = nxt
        arrivals.append(min(best.values()))
    return arrivals


def _exec_time(sub, eta: dict, sat_cap: int, members: int) -> float:
    base = eta.get(sub.action)
    if base is None:
        raise CapabilityGap(f"no duration model for action {sub.action!r}")
    return base * sub.n / min(members, sub.n * sat_cap)


def _simulate_routes(team, order_per_robot, subtasks_by_id, eta, sat_cap):
    """Makespan of fixed per-robot visit orders with synchronized starts.

    Returns (makespan, legs) or (inf, None) if the shared-subtask orders
    deadlock.  Travel times come from route_time so curvature limits and
    heading choices are already folded in.
    """
    robots = {r.id: r for r in team}
    ptr = {rid: 0 for rid in order_per_robot}
    clock = {rid: 0.0 for rid in order_per_robot}
    pos = {rid: robots[rid].start for rid in order_per_robot}
    # precompute per-robot cumulative arrivals along its own path
    cum = {rid: route_time(robots[rid], robots[rid].start,
                           [subtasks_by_id[s].loc for s in seq])
           for rid, seq in order_per_robot.items()}
    # waiting shifts everything downstream; rebuild arrivals incrementally
    legs = {rid: [] for rid in order_per_robot}
    done = set()
    total = sum(len(s) for s in order_per_robot.values())
    members_of = {}
    for rid, seq in order_per_robot.items():
        for s in seq:
            members_of.setdefault(s, set()).add(rid)

    completed = 0
    while completed < total:
        progressed = False
        ready = []
        for rid, seq in order_per_robot.items():
            i = ptr[rid]
            if i >= len(seq):
                continue
            sid = seq[i]
            if all(ptr[m] < len(order_per_robot[m])
                   and order_per_robot[m][ptr[m]] == sid
                   for m in members_of[sid]):
                ready.append(sid)
        for sid in sorted(set(ready)):
            sub = subtasks_by_id[sid]
            members = sorted(members_of[sid])
            arrivals = {}
            for m in members:
                i = ptr[m]
                travel = cum[m][i] - (cum[m][i - 1] if i else 0.0)
                arrivals[m] = clock[m] + travel
            start = max(arrivals.values())
            end = start + _exec_time(sub, eta, sat_cap, len(members))
            for m in members:
                legs[m].append(RouteLeg(subtask=sid, arrival=arrivals[m],
                                        start=start, end=end, loc=sub.loc))
                clock[m] = end
                pos[m] = sub.loc
                ptr[m] += 1
                completed += 1
            done.add(sid)
            progressed = True
        if not progressed:
            return math.inf, None
    makespan = max(clock.values(), default=0.0)
    return makespan, legs


def _capable(team, action):
    return [r for r in team if action in r.capabilities]


EXACT_LIMIT = (8, 3)  # exact search up to 8 subtasks on 3 robots


def route_static_known(team, subtasks, eta: dict, sat_cap: int = 1) -> Route:
    """Minimum-makespan joint routes over a set of known static subtasks.

    Exact branch-and-bound over robot assignments and visit orders on
    small instances, regret-based insertion above the size threshold.
    """
    for sub in subtasks:
        cap = _capable(team, sub.action)
        if len(cap) < sub.n:
            raise CapabilityGap(
                f"subtask {sub.id}: need {sub.n} robots with {sub.action!r}, "
                f"have {len(cap)}")
    if not subtasks:
        return Route(legs={r.id: [] for r in team}, makespan=0.0,
                     assignment={})
    subtasks_by_id = {s.id: s for s in subtasks}

    if len(subtasks) <= EXACT_LIMIT[0] and len(team) <= EXACT_LIMIT[1]:
        return _route_exact(team, subtasks, subtasks_by_id, eta, sat_cap)
    return _route_regret(team, subtasks, subtasks_by_id, eta, sat_cap)


def _route_exact(team, subtasks, subtasks_by_id, eta, sat_cap):
    # choose a member set per subtask, then interleave visit orders
    choice_sets = []
    for sub in subtasks:
        caps = sorted(_capable(team, sub.action), key=lambda r: r.id)
        choice_sets.append([tuple(sorted(r.id for r in c))
                            for c in itertools.combinations(caps, sub.n)])
    best = (math.inf, None, None)
    ids = [s.id for s in subtasks]
    for combo in itertools.product(*choice_sets):
        per_robot = {r.id: [] for r in team}
        for sid, members in zip(ids, combo):
            for m in members:
                per_robot[m].append(sid)
        # enumerate visit orders per robot
        order_opts = [list(itertools.permutations(v)) if v else [()]
                      for v in per_robot.values()]
        rids = list(per_robot.keys())
        for orders in itertools.product(*order_opts):
            plan = {rid: list(o) for rid, o in zip(rids, orders)}
            ms, legs = _simulate_routes(team, plan, subtasks_by_id, eta,
                                        sat_cap)
            key = (ms, tuple(sorted((k, tuple(v)) for k, v in plan.items())))
            if legs is not None and (best[1] is None or key < best[:2]):
                best = (ms, key[1], (legs, dict(zip(ids, combo))))
    if best[2] is None:
        raise CapabilityGap("no feasible joint route")
    legs, assignment = best[2]
    return Route(legs=legs, makespan=best[0], assignment=assignment)


def _route_regret(team, subtasks, subtasks_by_id, eta, sat_cap):
    """Regret-2 insertion: place the subtask whose second-best slot hurts most."""
    plan = {r.id: [] for r in team}

    def evaluate(p):
        return _simulate_routes(team, p, subtasks_by_id, eta, sat_cap)

    remaining = sorted(subtasks, key=lambda s: s.id)
    while remaining:
        scored = []
        for sub in remaining:
            opts = []
            caps = sorted(_capable(team, sub.action), key=lambda r: r.id)
            for members in itertools.combinations(caps, sub.n):
                mids = [r.id for r in members]
                positions = itertools.product(
                    *[range(len(plan[m]) + 1) for m in mids])
                for pos in positions:
                    trial = {k: list(v) for k, v in plan.items()}
                    for m, i in zip(mids, pos):
                        trial[m].insert(i, sub.id)
                    ms, _ = evaluate(trial)
                    if ms < math.inf:
                        opts.append((ms, trial))
            opts.sort(key=lambda o: o[0])
            if not opts:
                raise CapabilityGap(f"cannot insert subtask {sub.id}")
            regret = (opts[1][0] - opts[0][0]) if len(opts) > 1 else math.inf
            scored.append((regret, sub, opts[0]))
        _, sub, (ms, trial) = max(scored, key=lambda s: (s[0], s[1].id))
        plan = trial
        remaining.remove(sub)
    ms, legs = evaluate(plan)
    assignment = {}
    for rid, seq in plan.items():
        for sid in seq:
            assignment.setdefault(sid, []).append(rid)
    assignment = {k: tuple(sorted(v)) for k, v in assignment.items()}
    return Route(legs=legs, makespan=ms, assignment=assignment)


# ---------------------------------------------------------------------------
# static-unknown: coverage + minimum-disruption insertion


def _poly_y_extent(poly, x_lo, x_hi):
    """Min/max y of a convex polygon over the vertical strip [x_lo, x_hi]."""
    ys = []
    n = len(poly)
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        if x_lo - 1e-12 <= x1 <= x_hi + 1e-12:
            ys.append(y1)
        for xb in (x_lo, x_hi):
            if (x1 - xb) * (x2 - xb) <= 0 and x1 != x2:
                t = (xb - x1) / (x2 - x1)
                if 0.0 <= t <= 1.0:
                    ys.append(y1 + t * (y2 - y1))
    if not ys:
        return None
    return min(ys), max(ys)


def coverage_partition(team, region, sensor_width=None) -> dict:
    """Split a convex region into per-robot sweep paths.

    Vertical slabs sized proportionally to speed x sensor width, then a
    boustrophedon lane pattern inside each slab.  Returns robot id ->
    waypoint list.
    """
    if not team:
        raise EmptyTeam("coverage needs at least one robot")
    widths = {}
    for r in team:
        w = sensor_width[r.id] if isinstance(sensor_width, dict) else \
            (sensor_width or 2.0 * getattr(r, "perception_radius", 1.0))
        widths[r.id] = w
    xs = [p[0] for p in region]
    x_lo, x_hi = min(xs), max(xs)
    span = x_hi - x_lo
    robots = sorted(team, key=lambda r: r.id)
    weights = [r.max_speed * widths[r.id] for r in robots]
    total_w = sum(weights)

    paths = {}
    x = x_lo
    for r, wt in zip(robots, weights):
        slab_w = span * wt / total_w
        slab_hi = x + slab_w
        w = widths[r.id]
        n_lanes = max(1, math.ceil(slab_w / w))
        lane_step = slab_w / n_lanes
        pts = []
        up = True
        for i in range(n_lanes):
            lx = x + (i + 0.5) * lane_step
            ext = _poly_y_extent(region, lx - lane_step / 2, lx + lane_step / 2)
            if ext is None:
                continue
            y0, y1 = ext
            if up:
                pts += [(lx, y0), (lx, y1)]
            else:
                pts += [(lx, y1), (lx, y0)]
            up = not up
        paths[r.id] = pts
        x = slab_hi
    return paths


def insert_min_disruption(plans: dict, positions: dict, robots: dict,
                          discovered) -> tuple[str, int, float, dict]:
    """Insert a discovered subtask where it disturbs the fleet least.

    `plans` maps robot id -> remaining waypoint list; `positions` gives
    each robot's current location.  Every insertion slot of every capable
    robot is priced; the cheapest time increase wins.  Returns
    (robot id, slot, time delta, updated plans).
    """
    best = None
    for rid in sorted(plans):
        robot = robots[rid]
        if discovered.action not in robot.capabilities:
            continue
        pts = [positions[rid]] + list(plans[rid])
        speed = robot.max_speed

        def pathlen(seq):
            return sum(math.dist(seq[i], seq[i + 1])
                       for i in range(len(seq) - 1))

        base = pathlen(pts)
        for i in range(1, len(pts) + 1):
            trial = pts[:i] + [discovered.loc] + pts[i:]
            delta = (pathlen(trial) - base) / speed
            if best is None or delta < best[2] - 1e-12:
                best = (rid, i - 1, delta)
    if best is None:
        raise CapabilityGap(
            f"no capable robot for discovered action {discovered.action!r}")
    rid, slot, delta = best
    updated = {k: list(v) for k, v in plans.items()}
    updated[rid].insert(slot, discovered.loc)
    return rid, slot, delta, updated


# ---------------------------------------------------------------------------
# dynamic-known: distributed coalition formation


def interception_time(pos, speed, target_pos, target_vel, now=0.0) -> float:
    """Earliest time a pursuer at `pos` can meet a constant-velocity target."""
    px = target_pos[0] + target_vel[0] * now - pos[0]
    py = target_pos[1] + target_vel[1] * now - pos[1]
    vx, vy = target_vel
    a = vx * vx + vy * vy - speed * speed
    b = 2.0 * (px * vx + py * vy)
    c = px * px + py * py
    if abs(a) < 1e-12:
        if abs(b) < 1e-12:
            return 0.0 if c < 1e-12 else UNREACHABLE
        t = -c / b
        return t if t >= 0 else UNREACHABLE
    disc = b * b - 4 * a * c
    if disc < 0:
        return UNREACHABLE
    sq = math.sqrt(disc)
    roots = sorted(((-b - sq) / (2 * a), (-b + sq) / (2 * a)))
    for t in roots:
        if t >= -1e-12:
            return max(t, 0.0)
    return UNREACHABLE


def coalition_chi(members, target, now=0.0) -> float:
    """Cost of one coalition: interception time plus execution at staffing."""
    if not members:
        return UNREACHABLE
    t_int = max(interception_time(r.position, r.speed, target.loc,
                                  target.vel or (0.0, 0.0), now)
                for r in members)
    exec_t = target.base * target.n / min(len(members),
                                          target.n * target.sat_cap)
    return t_int + exec_t


def coalition_cost(costs_or_scheme) -> float:
    """Balanced-workload objective: max cost plus mean cost."""
    costs = list(costs_or_scheme.values()) \
        if isinstance(costs_or_scheme, dict) else list(costs_or_scheme)
    if not costs:
        return 0.0
    return max(costs) + sum(costs) / len(costs)


@dataclass
class DCFAgent:
    id: str
    position: tuple[float, float]
    speed: float


@dataclass
class DCFTarget:
    id: str
    loc: tuple[float, float]
    vel: Optional[tuple[float, float]]
    n: int
    base: float
    sat_cap: int = 1


@dataclass
class _Intent:
    robot: str
    src: str
    dst: str
    deliver_round: int


def _scheme_chi(scheme, agents, targets) -> dict:
    return {tid: coalition_chi([agents[r] for r in sorted(members)],
                               targets[tid])
            for tid, members in scheme.items()}


def dcf_run(agents: Sequence[DCFAgent], targets: Sequence[DCFTarget],
            initial: dict, seed: int = 0,
            delay_rounds: tuple[int, int] = (0, 0),
            max_rounds: int = 10_000) -> tuple[dict, list]:
    """Run switch rounds until no robot wants to move.

    `initial` maps target id -> set of robot ids (disjoint, exhaustive).
    A robot announces a switch to the cheapest other coalition whenever
    the worse of the two touched coalitions strictly improves; intents
    arrive after a seeded delay and are re-validated on delivery, with
    ties going to the lowest robot id.  Returns the final scheme and the
    accepted-switch log.
    """
    agents_by = {a.id: a for a in agents}
    targets_by = {t.id: t for t in targets}
    scheme = {tid: set(m) for tid, m in initial.items()}
    assigned = set().union(*scheme.values()) if scheme else set()
    if assigned != set(agents_by):
        raise ValueError("initial scheme must cover every robot exactly once")

    rng = random.Random(seed)
    pending: list[_Intent] = []
    in_flight: set[str] = set()
    log = []
    round_no = 0
    idle_rounds = 0
    while round_no < max_rounds:
        # deliver due intents in robot-id order (lowest id wins conflicts)
        due = sorted((m for m in pending if m.deliver_round <= round_no),
                     key=lambda m: m.robot)
        pending = [m for m in pending if m.deliver_round > round_no]
        for m in due:
            in_flight.discard(m.robot)
            if m.robot not in scheme.get(m.src, ()):  # stale
                continue
            chi = _scheme_chi(scheme, agents_by, targets_by)
            new_src = scheme[m.src] - {m.robot}
            new_dst = scheme[m.dst] | {m.robot}
            chi_src = coalition_chi([agents_by[r] for r in sorted(new_src)],
                                    targets_by[m.src])
            chi_dst = coalition_chi([agents_by[r] for r in sorted(new_dst)],
                                    targets_by[m.dst])
            if max(chi_src, chi_dst) < max(chi[m.src], chi[m.dst]) - 1e-12:
                before = sorted(chi.values(), reverse=True)
                scheme[m.src] = new_src
                scheme[m.dst] = new_dst
                after = sorted(_scheme_chi(scheme, agents_by,
                                           targets_by).values(), reverse=True)
                assert after < before, "coalition switch must descend"
                log.append({"robot": m.robot, "from": m.src, "to": m.dst,
                            "round": round_no})

        # announcement phase: deterministic robot order
        chi = _scheme_chi(scheme, agents_by, targets_by)
        announced = False
        for rid in sorted(agents_by):
            if rid in in_flight:
                continue
            src = next(t for t, mem in scheme.items() if rid in mem)
            new_src = coalition_chi(
                [agents_by[r] for r in sorted(scheme[src] - {rid})],
                targets_by[src])
            # pick the destination whose post-switch worse half is lowest
            choice = None
            for dst in sorted(t for t in scheme if t != src):
                new_dst = coalition_chi(
                    [agents_by[r] for r in sorted(scheme[dst] | {rid})],
                    targets_by[dst])
                if max(new_src, new_dst) < max(chi[src], chi[dst]) - 1e-12:
                    cand = (max(new_src, new_dst), dst)
                    if choice is None or cand < choice:
                        choice = cand
            if choice is not None:
                delay = rng.randint(*delay_rounds) if delay_rounds[1] else 0
                pending.append(_Intent(robot=rid, src=src, dst=choice[1],
                                       deliver_round=round_no + 1 + delay))
                in_flight.add(rid)
                announced = True

        round_no += 1
        if not announced and not pending:
            idle_rounds += 1
            if idle_rounds >= 1:
                break
        else:
            idle_rounds = 0
    return scheme, log
