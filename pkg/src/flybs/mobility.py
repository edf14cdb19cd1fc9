"""Ground-user mobility: random walkers and moving crowd clusters in circular areas.

Users stay on the ground (constant ``z``) and are reflected back into their
area when a step would leave it.
"""
from __future__ import annotations

import csv
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class Area:
    center: tuple = (0.0, 0.0, 0.0)
    radius: float = 400.0
    user_fraction: float = 1.0


@dataclass(frozen=True)
class ClusterSpec:
    center_speed: float
    member_speed_range: tuple
    count: int


def _reference_areas():
    return (Area((0.0, 0.0, 0.0), 400.0, 0.25), Area((1600.0, 0.0, 0.0), 400.0, 0.75))


def _reference_clusters():
    return (ClusterSpec(1.0, (0.6, 1.4), 3), ClusterSpec(1.6, (1.2, 2.0), 3))


@dataclass(frozen=True)
class MobilitySpec:
    areas: tuple = field(default_factory=_reference_areas)
    walker_fraction: float = 0.5
    walker_speed: float = 1.0
    clusters: tuple = field(default_factory=_reference_clusters)
    cluster_spread: float = 50.0
    step_delta: float = 1.0
    seed: int | None = None

    def __post_init__(self):
        if not self.areas:
            raise ValueError("at least one area is required")
        fr = [a.user_fraction for a in self.areas]
        if any(f < 0 or f > 1 for f in fr) or abs(sum(fr) - 1.0) > 1e-9:
            raise ValueError("area user fractions must lie in [0, 1] and sum to 1")
        if not 0 <= self.walker_fraction <= 1:
            raise ValueError("walker_fraction must lie in [0, 1]")
        for c in self.clusters:
            lo, hi = c.member_speed_range
            if c.center_speed < 0 or lo < 0 or hi < lo or c.count < 0:
                raise ValueError("cluster speeds must be nonnegative and ordered")
        if self.walker_fraction < 1 and sum(c.count for c in self.clusters) == 0:
            raise ValueError("non-walker users need at least one cluster")

    def max_step(self) -> float:
        """Largest possible per-step displacement of any user."""
        speeds = [self.walker_speed] + [c.center_speed + c.member_speed_range[1] for c in self.clusters]
        return max(speeds) * self.step_delta


@dataclass(eq=False)
class UserStates:
    positions: np.ndarray  # (N, 3)
    area: np.ndarray  # (N,)
    cluster: np.ndarray  # (N,) -1 for walkers
    centers: np.ndarray  # (K, 3) cluster centers
    headings: np.ndarray  # (K,) radians
    cluster_area: np.ndarray  # (K,)
    cluster_kind: np.ndarray  # (K,) index into spec.clusters

    def copy(self) -> "UserStates":
        return dataclasses.replace(self, **{f.name: getattr(self, f.name).copy() for f in dataclasses.fields(self)})


def _split_counts(total: int, fractions) -> np.ndarray:
    raw = np.asarray(fractions, dtype=float) * total
    counts = np.floor(raw).astype(int)
    rest = total - counts.sum()
    order = np.argsort(-(raw - counts), kind="stable")
    counts[order[:rest]] += 1
    return counts


def _uniform_disc(rng, n, center, radius):
    r = radius * np.sqrt(rng.random(n))
    t = rng.uniform(0.0, 2 * np.pi, n)
    out = np.repeat(np.asarray(center, dtype=float)[None, :], n, axis=0)
    out[:, 0] += r * np.cos(t)
    out[:, 1] += r * np.sin(t)
    return out


def _reflect(points: np.ndarray, centers: np.ndarray, radii: np.ndarray) -> np.ndarray:
    """Radially mirror points that left their disc back inside it."""
    rel = points[:, :2] - centers[:, :2]
    r = np.hypot(rel[:, 0], rel[:, 1])
    out = points.copy()
    outside = r > radii
    if np.any(outside):
        new_r = np.clip(2 * radii[outside] - r[outside], 0.0, radii[outside])
        out[outside, :2] = centers[outside, :2] + rel[outside] * (new_r / r[outside])[:, None]
    return out


def initialize_users(spec: MobilitySpec, n: int, rng: np.random.Generator) -> UserStates:
    """Place ``n`` users: area shares by fraction, walkers and cluster members within each."""
    if n <= 0:
        raise ValueError("need at least one user")
    per_area = _split_counts(n, [a.user_fraction for a in spec.areas])
    kinds = np.repeat(np.arange(len(spec.clusters)), [c.count for c in spec.clusters])
    pos, area, cluster = [], [], []
    centers, headings, c_area, c_kind = [], [], [], []
    for ai, (a, count) in enumerate(zip(spec.areas, per_area)):
        n_walk = int(round(spec.walker_fraction * count))
        n_clu = count - n_walk
        pos.append(_uniform_disc(rng, n_walk, a.center, a.radius))
        area.append(np.full(n_walk, ai))
        cluster.append(np.full(n_walk, -1))
        if n_clu == 0:
            continue
        base = len(centers)
        k = len(kinds)
        cc = _uniform_disc(rng, k, a.center, max(a.radius - spec.cluster_spread, 0.0))
        centers.extend(cc)
        headings.extend(rng.uniform(0.0, 2 * np.pi, k))
        c_area.extend([ai] * k)
        c_kind.extend(kinds)
        member = rng.integers(0, k, n_clu)
        pts = np.vstack([_uniform_disc(rng, 1, cc[j], spec.cluster_spread) for j in member])
        pts = _reflect(pts, np.repeat(np.asarray(a.center, float)[None], n_clu, 0), np.full(n_clu, a.radius))
        pos.append(pts)
        area.append(np.full(n_clu, ai))
        cluster.append(base + member)
    return UserStates(
        positions=np.vstack(pos),
        area=np.concatenate(area).astype(int),
        cluster=np.concatenate(cluster).astype(int),
        centers=np.asarray(centers, dtype=float).reshape(-1, 3),
        headings=np.asarray(headings, dtype=float),
        cluster_area=np.asarray(c_area, dtype=int),
        cluster_kind=np.asarray(c_kind, dtype=int),
    )


def step_users(states: UserStates, spec: MobilitySpec, rng: np.random.Generator) -> UserStates:
    """Advance every user by one time step."""
    out = states.copy()
    dt = spec.step_delta
    area_c = np.array([a.center for a in spec.areas], dtype=float)
    area_r = np.array([a.radius for a in spec.areas], dtype=float)

    # cluster centers move along their headings
    k = len(states.centers)
    center_disp = np.zeros((k, 3))
    if k:
        speed = np.array([spec.clusters[i].center_speed for i in states.cluster_kind])
        step = np.zeros((k, 3))
        step[:, 0] = speed * dt * np.cos(states.headings)
        step[:, 1] = speed * dt * np.sin(states.headings)
        moved = states.centers + step
        lim = np.maximum(area_r[states.cluster_area] - spec.cluster_spread, 0.0)
        rel = moved[:, :2] - area_c[states.cluster_area, :2]
        bounced = np.hypot(rel[:, 0], rel[:, 1]) > lim
        moved = _reflect(moved, area_c[states.cluster_area], lim)
        out.headings = np.where(bounced, rng.uniform(0.0, 2 * np.pi, k), states.headings)
        center_disp = moved - states.centers
        out.centers = moved

    n = len(states.positions)
    walkers = states.cluster < 0
    length = np.empty(n)
    length[walkers] = spec.walker_speed * dt
    members = ~walkers
    if np.any(members):
        kind = states.cluster_kind[states.cluster[members]]
        lo = np.array([spec.clusters[i].member_speed_range[0] for i in kind])
        hi = np.array([spec.clusters[i].member_speed_range[1] for i in kind])
        length[members] = rng.uniform(lo, hi) * dt
    theta = rng.uniform(0.0, 2 * np.pi, n)
    disp = np.zeros((n, 3))
    disp[:, 0] = length * np.cos(theta)
    disp[:, 1] = length * np.sin(theta)
    if np.any(members):
        disp[members] += center_disp[states.cluster[members]]
    out.positions = _reflect(states.positions + disp, area_c[states.area], area_r[states.area])
    return out


def generate_trajectory(spec: MobilitySpec, n: int, horizon: int, seed: int) -> np.ndarray:
    """User positions for steps ``0..horizon``, shape ``(horizon+1, n, 3)``."""
    rng = np.random.default_rng(seed if spec.seed is None else spec.seed)
    st = initialize_users(spec, n, rng)
    traj = np.empty((horizon + 1, n, 3))
    traj[0] = st.positions
    for k in range(1, horizon + 1):
        st = step_users(st, spec, rng)
        traj[k] = st.positions
    return traj


def write_trajectory_csv(path, traj: np.ndarray) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["step", "user_id", "x", "y", "z"])
        for k, frame in enumerate(traj):
            for i, (x, y, z) in enumerate(frame):
                w.writerow([k, i, repr(float(x)), repr(float(y)), repr(float(z))])


def read_trajectory_csv(path) -> np.ndarray:
    data = np.loadtxt(Path(path), delimiter=",", skiprows=1, ndmin=2)
    steps = data[:, 0].astype(int)
    users = data[:, 1].astype(int)
    traj = np.empty((steps.max() + 1, users.max() + 1, 3))
    traj[steps, users] = data[:, 2:5]
    return traj
