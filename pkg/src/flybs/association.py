"""Optimal user-to-BS association under per-BS channel limits.

Each user picks at most one BS and each BS serves at most ``limits[m]``
users. The LP relaxation of this transportation problem is integral, so it
is solved exactly as a rectangular assignment between users and BS slots.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .capacity import ChannelPlan, NetworkState, utility_matrix


@dataclass(frozen=True, eq=False)
class AssociationProblem:
    utility: np.ndarray  # (N, M+1) bits/s
    limits: np.ndarray  # (M+1,) users per BS

    def __post_init__(self):
        u = np.asarray(self.utility, dtype=float)
        if u.ndim != 2 or np.any(~np.isfinite(u)) or np.any(u < 0):
            raise ValueError("utilities must be a finite nonnegative matrix")
        if np.any(np.asarray(self.limits) < 0) or len(self.limits) != u.shape[1]:
            raise ValueError("limits must be nonnegative, one per BS")
        object.__setattr__(self, "utility", u)
        object.__setattr__(self, "limits", np.asarray(self.limits, dtype=int))


def build_utilities(state: NetworkState, plan: ChannelPlan) -> AssociationProblem:
    return AssociationProblem(utility_matrix(state, plan), plan.limits())


def solve_association(p: AssociationProblem) -> np.ndarray:
    """Serving BS per user (``-1`` for unassociated) maximising total utility."""
    u, limits = p.utility, p.limits
    n_users, n_bs = u.shape
    serving = np.full(n_users, -1)
    slots = np.minimum(limits, n_users)
    if n_users == 0 or slots.sum() == 0:
        return serving
    slot_bs = np.repeat(np.arange(n_bs), slots)
    cost = -u[:, slot_bs]
    rows, cols = linear_sum_assignment(cost)
    keep = u[rows, slot_bs[cols]] > 0
    serving[rows[keep]] = slot_bs[cols[keep]]
    return serving


def association_objective(p: AssociationProblem, serving: np.ndarray) -> float:
    idx = np.flatnonzero(serving >= 0)
    return float(p.utility[idx, serving[idx]].sum())


def is_feasible(serving: np.ndarray, limits: np.ndarray) -> bool:
    served = serving[serving >= 0]
    if np.any(served >= len(limits)):
        return False
    return bool(np.all(np.bincount(served, minlength=len(limits)) <= limits))


def assign_channels(serving: np.ndarray, plan: ChannelPlan) -> np.ndarray:
    """Hand each BS's channels to its users in ascending index order."""
    channels = np.full(len(serving), -1)
    for m in range(plan.m_flybss + 1):
        users = np.flatnonzero(serving == m)
        ch = plan.serving_channels(m)
        if len(users) > len(ch):
            raise ValueError(f"BS {m} has {len(users)} users but {len(ch)} channels")
        channels[users] = ch[: len(users)]
    return channels
