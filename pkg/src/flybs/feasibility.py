"""Per-step feasibility regions of a FlyBS and extremal-point queries.

A region is an altitude slab intersected with one or more balls (the speed
ball and a backhaul ball). Closest and furthest points to a query point are
found by enumerating every candidate active set: sphere faces, plane faces,
circles where two boundaries meet and the vertices where three meet.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .capacity import (
    ChannelPlan,
    NetworkState,
    access_backhaul_rate,
    channel_activity,
    gbs_backhaul_rate,
)
from .channel import pairwise_distances

D_MIN_FLOOR = 1.0
CONTAIN_TOL = 1e-7


class EmptyRegion(ValueError):
    """The feasibility region has no points."""


class InfeasibleBackhaul(ValueError):
    """Even the closest reachable distance cannot carry the backhaul load."""


@dataclass(frozen=True)
class Slab:
    z_min: float
    z_max: float

    def __post_init__(self):
        if self.z_min > self.z_max:
            raise ValueError("z_min must not exceed z_max")

    def contains(self, p, tol: float = CONTAIN_TOL) -> bool:
        return self.z_min - tol <= p[2] <= self.z_max + tol


@dataclass(frozen=True, eq=False)
class Ball:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        if self.radius < 0:
            raise ValueError("ball radius must be nonnegative")
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))

    @classmethod
    def speed_ball(cls, prev_position, vmax: float, delta: float) -> "Ball":
        return cls(prev_position, vmax * delta)

    def contains(self, p, tol: float = CONTAIN_TOL) -> bool:
        return np.linalg.norm(p - self.center) <= self.radius + tol


@dataclass(frozen=True, eq=False)
class FeasibilityRegion:
    slab: Slab
    balls: tuple

    def contains(self, p, tol: float = CONTAIN_TOL) -> bool:
        return self.slab.contains(p, tol) and all(b.contains(p, tol) for b in self.balls)

    def is_empty(self) -> bool:
        try:
            extremal_point(self, self.balls[0].center, "closest")
        except EmptyRegion:
            return True
        return False


@dataclass(frozen=True)
class DistanceBounds:
    d_min: float
    d_max: float


def distance_bounds_user(prev_bs, user, vmax: float, delta: float, floor: float = D_MIN_FLOOR) -> DistanceBounds:
    d = float(np.linalg.norm(np.asarray(prev_bs, float) - np.asarray(user, float)))
    return DistanceBounds(max(floor, d - vmax * delta), d + vmax * delta)


def distance_bounds_bs_pair(prev_a, prev_b, vmax_a: float, vmax_b: float, delta: float,
                            floor: float = D_MIN_FLOOR) -> DistanceBounds:
    d = float(np.linalg.norm(np.asarray(prev_a, float) - np.asarray(prev_b, float)))
    reach = (vmax_a + vmax_b) * delta
    return DistanceBounds(max(floor, d - reach), d + reach)


# -- surrogate backhaul bounds ------------------------------------------------
#
# All bounds take the snapshot at the start of the time step (BS positions at
# k-1, user positions at k) together with per-BS maximum speeds.


def _bs_pair_bounds(state: NetworkState, vmax: np.ndarray, delta: float, floor: float):
    d = pairwise_distances(state.bs_positions, state.bs_positions)
    reach = (vmax[:, None] + vmax[None, :]) * delta
    return np.maximum(floor, d - reach), d + reach


def backhaul_lhs_bound_access(state: NetworkState, plan: ChannelPlan, m: int, vmax: np.ndarray,
                              delta: float, floor: float = D_MIN_FLOOR) -> float:
    """Upper bound of the load served by access FlyBS ``m`` over the step."""
    users = np.flatnonzero(state.serving == m)
    if users.size == 0:
        return 0.0
    radio = state.radio
    d = pairwise_distances(state.user_positions[users], state.bs_positions)
    reach = vmax[None, :] * delta
    d_lo = np.maximum(floor, d - reach)
    d_hi = d + reach
    q = radio.q
    a = radio.alpha_user
    sig = q[m] * d_lo[:, m] ** (-a)
    others = np.ones(state.m_flybss + 1, dtype=bool)
    others[m] = False
    interf = (q[others][None, :] * d_hi[:, others] ** (-a)).sum(axis=1)
    g = state.user_channels[users]
    bw = np.where(g >= 0, plan.bandwidths[np.maximum(g, 0)], plan.bandwidths.mean())
    return float(np.sum(bw * np.log2(1.0 + sig / (radio.noise + interf))))


def backhaul_rhs_bound_access(state: NetworkState, plan: ChannelPlan, m: int, d: float, vmax: np.ndarray,
                              delta: float, floor: float = D_MIN_FLOOR) -> float:
    """Lower bound of the relay-to-``m`` capacity when their distance is ``d``."""
    d_lo, _ = _bs_pair_bounds(state, vmax, delta, floor)
    act = channel_activity(state, plan, mode="full")
    return access_backhaul_rate(plan, state.radio, m, d, d_lo[m], act)


def relay_bound_lhs(state: NetworkState, plan: ChannelPlan, vmax: np.ndarray, delta: float,
                    floor: float = D_MIN_FLOOR) -> float:
    """Upper bound of the summed relay-to-access capacities over the step."""
    d_lo, d_hi = _bs_pair_bounds(state, vmax, delta, floor)
    act = channel_activity(state, plan, mode="full")
    r = state.relay
    return float(sum(
        access_backhaul_rate(plan, state.radio, m, d_lo[m, r], d_hi[m], act)
        for m in range(state.m_flybss - 1)
    ))


def relay_bound_rhs(state: NetworkState, plan: ChannelPlan, d: float, vmax: np.ndarray, delta: float,
                    floor: float = D_MIN_FLOOR) -> float:
    """Lower bound of the GBS-to-relay capacity when their distance is ``d``."""
    d_lo, _ = _bs_pair_bounds(state, vmax, delta, floor)
    act = channel_activity(state, plan, mode="full")
    return gbs_backhaul_rate(plan, state.radio, d, d_lo[state.relay], act)


def bisect_backhaul_radius(lhs: float, rhs_fn, bracket: DistanceBounds, tol: float = 0.01) -> float:
    """Largest distance in ``bracket`` with ``rhs_fn(d) >= lhs``; ``rhs_fn`` decreasing."""
    lo, hi = bracket.d_min, bracket.d_max
    if rhs_fn(hi) >= lhs:
        return hi
    if rhs_fn(lo) < lhs:
        raise InfeasibleBackhaul(f"backhaul bound {rhs_fn(lo):.6g} below load {lhs:.6g}")
    # invariant: rhs_fn(lo) >= lhs > rhs_fn(hi)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if rhs_fn(mid) >= lhs:
            lo = mid
        else:
            hi = mid
    return lo


# -- extremal points -----------------------------------------------------------


def _unit(v):
    n = np.linalg.norm(v)
    return v / n if n > 0 else None


def _perp_basis(n):
    a = np.array([1.0, 0.0, 0.0]) if abs(n[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    u = np.cross(n, a)
    u /= np.linalg.norm(u)
    return u, np.cross(n, u)


def _sphere_sphere_circle(b1: Ball, b2: Ball):
    c1, c2, r1, r2 = b1.center, b2.center, b1.radius, b2.radius
    d = np.linalg.norm(c2 - c1)
    if d == 0 or d > r1 + r2 or d < abs(r1 - r2):
        return None
    n = (c2 - c1) / d
    a = (d * d + r1 * r1 - r2 * r2) / (2 * d)
    h2 = r1 * r1 - a * a
    return c1 + a * n, np.sqrt(max(h2, 0.0)), n


def _sphere_plane_circle(b: Ball, z: float):
    dz = z - b.center[2]
    if abs(dz) > b.radius:
        return None
    c = np.array([b.center[0], b.center[1], z])
    return c, np.sqrt(max(b.radius**2 - dz * dz, 0.0)), np.array([0.0, 0.0, 1.0])


def _circle_extremes(circle, q0):
    """Closest and furthest points of a circle to ``q0``."""
    c, r, n = circle
    w = q0 - c
    w = w - (w @ n) * n
    u = _unit(w)
    if u is None:
        u, _ = _perp_basis(n)
    return c + r * u, c - r * u


def _circle_plane_points(circle, normal, offset):
    """Points of the circle lying on the plane ``normal . x = offset``."""
    c, r, n = circle
    u, w = _perp_basis(n)
    a, b = r * (normal @ u), r * (normal @ w)
    rhs = offset - normal @ c
    amp = np.hypot(a, b)
    if amp < 1e-12 or abs(rhs) > amp:
        return []
    phi = np.arctan2(b, a)
    delta = np.arccos(np.clip(rhs / amp, -1.0, 1.0))
    return [c + r * (np.cos(t) * u + np.sin(t) * w) for t in (phi + delta, phi - delta)]


def _radical_plane(b1: Ball, b2: Ball):
    # |x-c1|^2 - r1^2 = |x-c2|^2 - r2^2  =>  2(c2-c1).x = |c2|^2-|c1|^2 - r2^2 + r1^2
    normal = 2.0 * (b2.center - b1.center)
    offset = b2.center @ b2.center - b1.center @ b1.center - b2.radius**2 + b1.radius**2
    return normal, offset


def _candidates(region: FeasibilityRegion, q0: np.ndarray, sense: str):
    slab, balls = region.slab, region.balls
    planes = [slab.z_min] if slab.z_min == slab.z_max else [slab.z_min, slab.z_max]
    ez = np.array([0.0, 0.0, 1.0])
    cands = []
    if sense == "closest":
        cands.append(q0)
        cands.extend(np.array([q0[0], q0[1], z]) for z in planes)
    for b in balls:
        u = _unit(q0 - b.center)
        if u is None:
            u = ez
        cands.append(b.center + (b.radius if sense == "closest" else -b.radius) * u)
    circles = []
    for (i, bi), (j, bj) in itertools.combinations(enumerate(balls), 2):
        circ = _sphere_sphere_circle(bi, bj)
        if circ is not None:
            circles.append((circ, i))
    for i, b in enumerate(balls):
        for z in planes:
            circ = _sphere_plane_circle(b, z)
            if circ is not None:
                circles.append((circ, i))
    for circ, _ in circles:
        near, far = _circle_extremes(circ, q0)
        cands.append(near if sense == "closest" else far)
    # vertices: a circle cut by a further plane or sphere
    for circ, i in circles:
        for z in planes:
            cands.extend(_circle_plane_points(circ, ez, z))
        for k, bk in enumerate(balls):
            if k != i:
                normal, offset = _radical_plane(balls[i], bk)
                cands.extend(_circle_plane_points(circ, normal, offset))
    return cands


def extremal_point(region: FeasibilityRegion, q0, sense: str = "closest") -> np.ndarray:
    """Point of ``region`` closest to (or furthest from) ``q0``.

    Raises ``EmptyRegion`` if no candidate is feasible.
    """
    if sense not in ("closest", "furthest"):
        raise ValueError(f"unknown sense {sense!r}")
    q0 = np.asarray(q0, dtype=float)
    scale = max(1.0, max(b.radius for b in region.balls))
    tol = CONTAIN_TOL * scale
    feasible = [c for c in _candidates(region, q0, "closest") if region.contains(c, tol)]
    if not feasible:
        raise EmptyRegion("feasibility region is empty")
    if sense == "furthest":
        feasible = [c for c in _candidates(region, q0, "furthest") if region.contains(c, tol)] or feasible
        best = max(feasible, key=lambda c: np.linalg.norm(c - q0))
    else:
        best = min(feasible, key=lambda c: np.linalg.norm(c - q0))
    return _snap(region, best)


def _snap(region: FeasibilityRegion, p: np.ndarray) -> np.ndarray:
    """Remove round-off outside the region (moves the point by at most ~tol)."""
    p = np.array(p, dtype=float)
    p[2] = min(max(p[2], region.slab.z_min), region.slab.z_max)
    for _ in range(3):
        for b in region.balls:
            d = np.linalg.norm(p - b.center)
            if d > b.radius:
                p = b.center + (p - b.center) * (b.radius / d)
        p[2] = min(max(p[2], region.slab.z_min), region.slab.z_max)
    return p
