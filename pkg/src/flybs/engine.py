"""Alternating positioning / association per time step and the simulation loop.

Each time step repeats: build the radial objective at the current iterate,
move every access FlyBS inside its feasibility region, move the relay,
re-associate users. It stops when the association no longer changes or
after ``max_inner_iters`` rounds. Speed balls and backhaul bounds always
refer to the positions at the start of the step, so the net per-step move
obeys the speed limit.
"""
from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.cluster.vq import kmeans2

from .association import AssociationProblem, assign_channels, build_utilities, solve_association
from .capacity import (
    ChannelPlan,
    NetworkState,
    access_backhaul_rate,
    bs_loads,
    channel_activity,
    gbs_backhaul_rate,
    gbs_relay_capacity,
    relay_flybs_capacity,
    unassociated_state,
    user_capacities,
    utility_matrix,
)
from .channel import pairwise_distances
from .config import Scenario
from .feasibility import (
    Ball,
    DistanceBounds,
    EmptyRegion,
    FeasibilityRegion,
    InfeasibleBackhaul,
    Slab,
    backhaul_lhs_bound_access,
    bisect_backhaul_radius,
    extremal_point,
    relay_bound_lhs,
)
from .mobility import generate_trajectory
from .radial import RadialObjective, build_radial, linearize_capacity

log = logging.getLogger(__name__)

BACKHAUL_LIMITED = "backhaul_limited"
MAX_ITERS_HIT = "max_iters_hit"
REGION_EMPTY = "region_empty"
LOAD_SHED = "load_shed"


@dataclass(frozen=True, eq=False)
class StepContext:
    """Everything ``run_time_step`` needs besides the state."""

    plan: ChannelPlan
    vmax: np.ndarray  # (M+1,) per BS, 0 for the GBS
    delta: float
    slab: Slab
    bisect_tol: float = 0.01
    max_inner_iters: int = 10
    approx_mode: str = "gradient"
    d_floor: float = 1.0
    relay_pinned: bool = False
    static: bool = False
    sequential_updates: bool = False
    shed_load: bool = True

    @classmethod
    def from_scenario(cls, s: Scenario) -> "StepContext":
        m = s.internal_flybss
        vmax = np.full(m + 1, float(s.flight.vmax))
        vmax[m] = 0.0
        pinned = s.scheme == "two_hop"
        if pinned:
            vmax[m - 1] = 0.0
        if s.scheme == "static":
            vmax[:] = 0.0
        v = s.solver
        return cls(
            plan=s.channel_plan(),
            vmax=vmax,
            delta=s.delta,
            slab=Slab(s.flight.h_min, s.flight.h_max),
            bisect_tol=v.bisect_tol,
            max_inner_iters=v.max_inner_iters,
            approx_mode=v.approx_mode,
            d_floor=v.d_min_floor,
            relay_pinned=pinned,
            static=s.scheme == "static",
            sequential_updates=v.sequential_updates,
            shed_load=v.shed_load,
        )


@dataclass(eq=False)
class StepReport:
    time_step: int
    sum_capacity: float
    mean_user_capacity: float
    associated_users: int
    per_bs_load: np.ndarray  # users per BS
    backhaul_margins: np.ndarray  # relay->FlyBS capacity minus FlyBS load, per access FlyBS
    gbs_margin: float  # GBS->relay capacity minus summed relay->FlyBS capacities
    flow_margin: float  # GBS->relay capacity minus summed access loads
    flags: frozenset
    inner_iterations: int
    max_displacement: float
    altitude_range: tuple
    shed_users: int = 0


@dataclass(eq=False)
class SimulationResult:
    reports: list
    final_state: NetworkState
    trajectory_checksum: str = ""
    states: list = field(default_factory=list)


# -- positioning ---------------------------------------------------------------


def _pair_lo(anchor: NetworkState, ctx: StepContext) -> np.ndarray:
    d = pairwise_distances(anchor.bs_positions, anchor.bs_positions)
    reach = (ctx.vmax[:, None] + ctx.vmax[None, :]) * ctx.delta
    return np.maximum(ctx.d_floor, d - reach)


def access_backhaul_radius(anchor: NetworkState, plan: ChannelPlan, m: int, ctx: StepContext,
                           d_lo: np.ndarray | None = None) -> float:
    """Largest relay distance of FlyBS ``m`` keeping the surrogate backhaul constraint."""
    d_lo = _pair_lo(anchor, ctx) if d_lo is None else d_lo
    act = channel_activity(anchor, plan, mode="full")
    r = anchor.relay
    lhs = backhaul_lhs_bound_access(anchor, plan, m, ctx.vmax, ctx.delta, ctx.d_floor)
    d_now = float(np.linalg.norm(anchor.bs_positions[m] - anchor.bs_positions[r]))
    reach = (ctx.vmax[m] + ctx.vmax[r]) * ctx.delta
    bracket = DistanceBounds(max(ctx.d_floor, d_now - reach), d_now + reach)
    return bisect_backhaul_radius(
        lhs, lambda d: access_backhaul_rate(plan, anchor.radio, m, d, d_lo[m], act), bracket, ctx.bisect_tol
    )


def relay_backhaul_radius(anchor: NetworkState, plan: ChannelPlan, ctx: StepContext,
                          d_lo: np.ndarray | None = None) -> float:
    """Largest GBS distance of the relay keeping the surrogate GBS-relay constraint."""
    d_lo = _pair_lo(anchor, ctx) if d_lo is None else d_lo
    act = channel_activity(anchor, plan, mode="full")
    r, g = anchor.relay, anchor.gbs
    lhs = relay_bound_lhs(anchor, plan, ctx.vmax, ctx.delta, ctx.d_floor)
    d_now = float(np.linalg.norm(anchor.bs_positions[r] - anchor.bs_positions[g]))
    reach = ctx.vmax[r] * ctx.delta
    bracket = DistanceBounds(max(ctx.d_floor, d_now - reach), d_now + reach)
    return bisect_backhaul_radius(
        lhs, lambda d: gbs_backhaul_rate(plan, anchor.radio, d, d_lo[r], act), bracket, ctx.bisect_tol
    )


def _place(region: FeasibilityRegion, radial: RadialObjective, j: int, hold) -> np.ndarray:
    if radial.degenerate[j] or radial.rho[j] == 0:
        return extremal_point(region, hold, "closest")
    sense = "closest" if radial.rho[j] > 0 else "furthest"
    return extremal_point(region, radial.attractors[j], sense)


def _retreat(slab: Slab, speed: Ball, toward, hold):
    """Fallback move toward the upstream node; holds position if even that region is empty."""
    try:
        return extremal_point(FeasibilityRegion(slab, (speed,)), toward, "closest"), set()
    except EmptyRegion:
        return np.array(hold, dtype=float), {REGION_EMPTY}


def position_access_flybss(state: NetworkState, plan: ChannelPlan, radial: RadialObjective, ctx: StepContext,
                           anchor: NetworkState | None = None):
    """New positions of the access FlyBSs and the flags raised while placing them.

    ``state`` is the current inner iterate (its association sets the load to
    carry); ``anchor`` is the start-of-step snapshot defining speed balls and
    distance bounds. Returns ``(positions (M+1, 3), flags)``.
    """
    anchor = state if anchor is None else anchor
    loaded = anchor.replace(serving=state.serving, user_channels=state.user_channels)
    pos = state.bs_positions.copy()
    flags = set()
    r = anchor.relay
    d_lo = _pair_lo(anchor, ctx)
    for m in range(anchor.m_flybss - 1):
        if ctx.sequential_updates and m > 0:
            cur = state.replace(bs_positions=pos)
            radial = build_radial(linearize_capacity(cur, plan, ctx.approx_mode), cur)
        speed = Ball.speed_ball(anchor.bs_positions[m], ctx.vmax[m], ctx.delta)
        try:
            radius = access_backhaul_radius(loaded, plan, m, ctx, d_lo) - ctx.vmax[r] * ctx.delta
            if radius < 0:
                raise InfeasibleBackhaul("relay can outrun the backhaul radius")
            region = FeasibilityRegion(ctx.slab, (speed, Ball(anchor.bs_positions[r], radius)))
            pos[m] = _place(region, radial, m, state.bs_positions[m])
        except InfeasibleBackhaul:
            flags.add(BACKHAUL_LIMITED)
            pos[m], f = _retreat(ctx.slab, speed, anchor.bs_positions[r], state.bs_positions[m])
            flags |= f
        except EmptyRegion:
            flags.add(REGION_EMPTY)
            pos[m] = state.bs_positions[m]
    return pos, flags


def position_relay(state: NetworkState, plan: ChannelPlan, radial: RadialObjective, ctx: StepContext,
                   anchor: NetworkState | None = None):
    """New relay position (``(3,)``) and flags; access FlyBSs already moved."""
    anchor = state if anchor is None else anchor
    r, g = anchor.relay, anchor.gbs
    if ctx.relay_pinned:
        return state.bs_positions[r].copy(), set()
    speed = Ball.speed_ball(anchor.bs_positions[r], ctx.vmax[r], ctx.delta)
    try:
        radius = relay_backhaul_radius(anchor, plan, ctx)
        region = FeasibilityRegion(ctx.slab, (speed, Ball(anchor.bs_positions[g], radius)))
        return _place(region, radial, r, state.bs_positions[r]), set()
    except InfeasibleBackhaul:
        pos, f = _retreat(ctx.slab, speed, anchor.bs_positions[g], state.bs_positions[r])
        return pos, f | {BACKHAUL_LIMITED}
    except EmptyRegion:
        return state.bs_positions[r].copy(), {REGION_EMPTY}


# -- association ---------------------------------------------------------------


def _user_load_bounds(state: NetworkState, plan: ChannelPlan, ctx: StepContext) -> np.ndarray:
    """Per-user capacity upper bound over the next step (serving BS closer, others farther)."""
    served = np.flatnonzero(state.serving >= 0)
    out = np.zeros(state.n_users)
    if served.size == 0:
        return out
    radio = state.radio
    d = pairwise_distances(state.user_positions[served], state.bs_positions)
    reach = ctx.vmax[None, :] * ctx.delta
    pw_hi = radio.q[None, :] * np.maximum(ctx.d_floor, d - reach) ** (-radio.alpha_user)
    pw_lo = radio.q[None, :] * (d + reach) ** (-radio.alpha_user)
    rows = np.arange(served.size)
    s = state.serving[served]
    interf = pw_lo.sum(axis=1) - pw_lo[rows, s]
    g = state.user_channels[served]
    bw = np.where(g >= 0, plan.bandwidths[np.maximum(g, 0)], plan.bandwidths.mean())
    out[served] = bw * np.log2(1.0 + pw_hi[rows, s] / (radio.noise + interf))
    return out


def backhaul_budgets(state: NetworkState, plan: ChannelPlan, ctx: StepContext) -> np.ndarray:
    """Load each access FlyBS may carry so its relay link still holds next step.

    The relay link is bounded from below with the relay one full step farther
    away and every interferer one step closer. With a relay hop the budgets
    are scaled so their sum also fits the GBS-relay lower bound.
    """
    M = state.m_flybss
    r, g = M - 1, M
    d = pairwise_distances(state.bs_positions, state.bs_positions)
    d_lo = np.maximum(ctx.d_floor, d - (ctx.vmax[:, None] + ctx.vmax[None, :]) * ctx.delta)
    act = channel_activity(state, plan, mode="full")
    away = ctx.vmax[r] * ctx.delta
    budget = np.array([
        access_backhaul_rate(plan, state.radio, m, d[m, r] + away, d_lo[m], act) for m in range(M - 1)
    ])
    if plan.relay_hop and not ctx.relay_pinned and budget.sum() > 0:
        c_gbs = gbs_backhaul_rate(plan, state.radio, d[r, g] + away, d_lo[r], act)
        budget = budget * min(1.0, c_gbs / budget.sum())
    return budget


def shed_for_backhaul(state: NetworkState, plan: ChannelPlan, ctx: StepContext):
    """Drop access users until every FlyBS's load bound fits its backhaul budget.

    Users are kept greedily by decreasing capacity. Dropped users are offered
    the free direct slots of the relay and GBS. Returns ``(serving, n_dropped)``
    where ``n_dropped`` counts users left without any BS.
    """
    M = state.m_flybss
    bounds = _user_load_bounds(state, plan, ctx)
    budget = backhaul_budgets(state, plan, ctx)
    serving = state.serving.copy()
    shed = []
    for m in range(M - 1):
        users = np.flatnonzero(serving == m)
        if bounds[users].sum() <= budget[m]:
            continue
        order = users[np.lexsort((users, -bounds[users]))]
        total = 0.0
        for n in order:
            if total + bounds[n] <= budget[m]:
                total += bounds[n]
            else:
                serving[n] = -1
                shed.append(n)
    if not shed:
        return serving, 0
    shed = np.array(sorted(shed))
    limits = plan.limits()
    used = np.bincount(serving[serving >= 0], minlength=M + 1)
    direct = [M - 1, M]
    util = utility_matrix(state, plan)[np.ix_(shed, direct)]
    sub = solve_association(AssociationProblem(util, np.maximum(limits[direct] - used[direct], 0)))
    ok = sub >= 0
    serving[shed[ok]] = np.array(direct)[sub[ok]]
    return serving, int((~ok).sum())


def reassociate(state: NetworkState, plan: ChannelPlan, ctx: StepContext):
    serving = solve_association(build_utilities(state, plan))
    cur = state.replace(serving=serving, user_channels=assign_channels(serving, plan))
    n_shed = 0
    if ctx.shed_load:
        serving, n_shed = shed_for_backhaul(cur, plan, ctx)
        cur = cur.replace(serving=serving, user_channels=assign_channels(serving, plan))
    return cur, n_shed


# -- time steps ----------------------------------------------------------------


def run_time_step(state: NetworkState, ctx: StepContext, user_positions: np.ndarray | None = None):
    """Advance one time step; returns ``(new_state, StepReport)``."""
    plan = ctx.plan
    anchor = state.replace(time_step=state.time_step + 1)
    if user_positions is not None:
        anchor = anchor.replace(user_positions=np.asarray(user_positions, dtype=float))
    cur = anchor
    flags: set = set()
    iters = 0
    n_shed = 0
    for iters in range(1, ctx.max_inner_iters + 1):
        if not ctx.static:
            radial = build_radial(linearize_capacity(cur, plan, ctx.approx_mode), cur)
            pos, f1 = position_access_flybss(cur, plan, radial, ctx, anchor)
            moved = cur.replace(bs_positions=pos)
            pos[cur.relay], f2 = position_relay(moved, plan, radial, ctx, anchor)
            flags |= f1 | f2
            cur = cur.replace(bs_positions=pos)
        nxt, n_shed = reassociate(cur, plan, ctx)
        changed = not np.array_equal(nxt.serving, cur.serving)
        cur = nxt
        if not changed:
            break
    else:
        flags.add(MAX_ITERS_HIT)
    if n_shed:
        flags.add(LOAD_SHED)
    cur = cur.replace(flags=frozenset(flags))
    return cur, make_report(anchor, cur, ctx, iters, n_shed)


def make_report(anchor: NetworkState, state: NetworkState, ctx: StepContext, iters: int, n_shed: int = 0) -> StepReport:
    plan = ctx.plan
    M = state.m_flybss
    caps = user_capacities(state, plan)
    loads = bs_loads(state, plan, caps)
    c_access = np.array([relay_flybs_capacity(state, plan, m) for m in range(M - 1)])
    if plan.relay_hop and not ctx.relay_pinned:
        c_gbs = gbs_relay_capacity(state, plan)
        gbs_margin = c_gbs - c_access.sum()
        flow_margin = c_gbs - loads[: M - 1].sum()
    else:
        gbs_margin = flow_margin = float("nan")
    flying = np.arange(M) if not ctx.relay_pinned else np.arange(M - 1)
    disp = np.linalg.norm(state.bs_positions[flying] - anchor.bs_positions[flying], axis=1)
    z = state.bs_positions[flying, 2]
    total = float(caps.sum())
    return StepReport(
        time_step=state.time_step,
        sum_capacity=total,
        mean_user_capacity=total / max(state.n_users, 1),
        associated_users=int((state.serving >= 0).sum()),
        per_bs_load=np.bincount(state.serving[state.serving >= 0], minlength=M + 1),
        backhaul_margins=c_access - loads[: M - 1],
        gbs_margin=float(gbs_margin),
        flow_margin=float(flow_margin),
        flags=state.flags,
        inner_iterations=iters,
        max_displacement=float(disp.max()) if disp.size else 0.0,
        altitude_range=(float(z.min()), float(z.max())),
        shed_users=n_shed,
    )


# -- setup and driver -------------------------------------------------------------


def initial_positions(s: Scenario, users: np.ndarray) -> np.ndarray:
    """Access FlyBSs over k-means user groups, relay between the GBS and the far area."""
    m = s.internal_flybss
    gbs = np.asarray(s.gbs_position, dtype=float)
    alt = s.flight.initial_altitude
    pos = np.empty((m + 1, 3))
    n_access = m - 1
    if n_access:
        xy = users[:, :2]
        k = min(n_access, len(xy))
        centroids, _ = kmeans2(xy, k, minit="++", seed=np.random.default_rng([s.seed, 7]))
        order = np.lexsort((centroids[:, 1], centroids[:, 0]))
        centroids = centroids[order]
        for i in range(n_access):
            c = centroids[i % k] + (i // k) * np.array([5.0, 0.0])
            pos[i] = [c[0], c[1], alt]
    far = max(s.mobility.areas, key=lambda a: np.hypot(a.center[0] - gbs[0], a.center[1] - gbs[1]))
    if s.scheme == "two_hop":
        pos[m - 1] = gbs
    else:
        pos[m - 1] = [(gbs[0] + far.center[0]) / 2, (gbs[1] + far.center[1]) / 2, alt]
    pos[m] = gbs
    return pos


def initial_state(s: Scenario, users: np.ndarray, ctx: StepContext | None = None) -> NetworkState:
    ctx = StepContext.from_scenario(s) if ctx is None else ctx
    st = unassociated_state(initial_positions(s, users), users, s.make_radio())
    st, _ = reassociate(st, ctx.plan, ctx)
    return st


def trajectory_checksum(traj: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(traj, dtype=np.float64).tobytes()).hexdigest()


def simulate(s: Scenario, trajectory: np.ndarray | None = None, keep_states: bool = False) -> SimulationResult:
    """Run the scenario over its horizon; ``trajectory`` replays given user motion."""
    if trajectory is None:
        trajectory = generate_trajectory(s.mobility_spec(), s.n_users, s.horizon, s.seed)
    trajectory = np.asarray(trajectory, dtype=float)
    if trajectory.shape[0] < s.horizon + 1 or trajectory.shape[1] != s.n_users:
        raise ValueError("trajectory does not cover the scenario horizon and users")
    ctx = StepContext.from_scenario(s)
    state = initial_state(s, trajectory[0], ctx)
    reports, states = [], []
    for k in range(1, s.horizon + 1):
        state, rep = run_time_step(state, ctx, trajectory[k])
        reports.append(rep)
        if keep_states:
            states.append(state)
    return SimulationResult(reports, state, trajectory_checksum(trajectory[: s.horizon + 1]), states)


def run_simulation(s: Scenario) -> list:
    return simulate(s).reports


INFEASIBLE_FLAGS = frozenset({BACKHAUL_LIMITED, REGION_EMPTY})


def audit(reports, s: Scenario, tol: float = 1e-6) -> dict:
    """Count per-step constraint violations in a run.

    Altitude, speed and association limits must hold on every step. The true
    backhaul constraints are only checked on steps that carry no infeasibility
    flag, since those are the steps where the surrogates were satisfiable.
    """
    limits = s.channel_plan().limits()
    h_min, h_max = s.flight.h_min, s.flight.h_max
    step_max = s.flight.vmax * s.delta + tol
    out = {"altitude": 0, "speed": 0, "association": 0, "access_backhaul": 0, "gbs_backhaul": 0,
           "checked_backhaul_steps": 0}
    for r in reports:
        lo, hi = r.altitude_range
        out["altitude"] += int(lo < h_min - tol or hi > h_max + tol)
        out["speed"] += int(r.max_displacement > step_max)
        out["association"] += int(np.any(r.per_bs_load > limits))
        if r.flags & INFEASIBLE_FLAGS:
            continue
        out["checked_backhaul_steps"] += 1
        # 1 bit/s slack against float round-off in O(1e8) bit/s sums
        out["access_backhaul"] += int(np.any(r.backhaul_margins < -1.0))
        out["gbs_backhaul"] += int(np.isfinite(r.gbs_margin) and r.gbs_margin < -1.0)
    return out
