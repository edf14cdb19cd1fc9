"""Radial (quadratic) surrogate of the sum capacity.

The sum capacity is linearised in the squared user-BS distances,
``S ~ offset + sum_{n,j} beta[n, j] * d2[n, j]``, and the per-BS weighted
sums of squares are completed into ``zeta - sum_j rho_j |q_j - q0_j|^2``.
A FlyBS improves the objective by approaching its attractor ``q0_j`` when
``rho_j > 0`` and by moving away from it when ``rho_j < 0``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .capacity import ChannelPlan, NetworkState, mean_serving_bandwidth, user_capacities, user_powers
from .channel import pairwise_sq_distances

APPROX_MODES = ("gradient", "paper_literal")
LN2 = np.log(2.0)


@dataclass(frozen=True, eq=False)
class CapacityLinearization:
    beta: np.ndarray  # (N, M+1) coefficient of each squared distance
    offset: float  # constant term of the linear model
    mode: str = "gradient"


@dataclass(frozen=True, eq=False)
class RadialObjective:
    zeta: float
    rho: np.ndarray  # (M,)
    attractors: np.ndarray  # (M, 3)
    degenerate: np.ndarray  # (M,) bool, sum of weights was exactly zero


def _served_bandwidth(state: NetworkState, plan: ChannelPlan, served: np.ndarray) -> np.ndarray:
    g = state.user_channels[served]
    fallback = mean_serving_bandwidth(plan)[state.serving[served]]
    return np.where(g >= 0, plan.bandwidths[np.maximum(g, 0)], fallback)


def linearize_capacity(state: NetworkState, plan: ChannelPlan, mode: str = "gradient") -> CapacityLinearization:
    """First-order model of the sum capacity in squared user-BS distances.

    ``gradient`` uses the exact derivative of every served user's capacity
    with respect to each squared distance, so serving links get negative and
    interfering links positive weights. ``paper_literal`` first replaces
    ``log2(1+x)`` by ``x/ln 2`` (which cancels interference) and then
    expands ``(d^2)^(-alpha/2)`` around the current squared distance.
    """
    if mode not in APPROX_MODES:
        raise ValueError(f"unknown approximation mode {mode!r}")
    d2 = pairwise_sq_distances(state.user_positions, state.bs_positions)
    if np.any(d2 <= 0):
        raise ValueError("zero user-BS distance")
    p = user_powers(state)
    radio = state.radio
    alpha = radio.alpha_user
    beta = np.zeros_like(d2)
    served = np.flatnonzero(state.serving >= 0)
    if served.size == 0:
        return CapacityLinearization(beta, 0.0, mode)
    s = state.serving[served]
    bw = _served_bandwidth(state, plan, served)
    rows = np.arange(served.size)
    if mode == "gradient":
        ps = p[served]
        total = radio.noise + ps.sum(axis=1)
        interf = total - ps[rows, s]
        dp = -(alpha / 2.0) * ps / d2[served]
        w = np.broadcast_to((1.0 / total)[:, None], ps.shape).copy()
        w -= 1.0 / interf[:, None]
        w[rows, s] = 1.0 / total
        beta[served] = (bw / LN2)[:, None] * w * dp
        value = user_capacities(state, plan, powers=p).sum()
    else:
        psi2 = d2[served, s]
        q = radio.q[s]
        beta[served, s] = -(bw / LN2) * (q / radio.noise) * (alpha / 2.0) * psi2 ** (-alpha / 2.0 - 1.0)
        # value of the linear model at the expansion point
        value = float(np.sum((bw / LN2) * (q / radio.noise) * psi2 ** (-alpha / 2.0)))
    offset = float(value - np.sum(beta * d2))
    return CapacityLinearization(beta, offset, mode)


def build_radial(lin: CapacityLinearization, state: NetworkState) -> RadialObjective:
    """Complete the squares of the linear model for every FlyBS (GBS excluded)."""
    beta = lin.beta
    M = state.m_flybss
    v = state.user_positions
    zeta = lin.offset
    rho = np.zeros(M)
    q0 = np.array(state.bs_positions[:M], dtype=float)
    degenerate = np.zeros(M, dtype=bool)
    for j in range(M + 1):
        b = beta[:, j]
        sb = b.sum()
        bv = b @ v
        bvv = float(b @ np.einsum("ij,ij->i", v, v))
        if j == M:
            # GBS is fixed: its whole term is a constant
            zeta += float(b @ pairwise_sq_distances(v, state.bs_positions[M : M + 1])[:, 0])
            continue
        if sb == 0.0:
            degenerate[j] = True
            # linear remainder frozen at the current position
            qj = state.bs_positions[j]
            zeta += float(b @ pairwise_sq_distances(v, qj[None, :])[:, 0])
            continue
        rho[j] = -sb
        q0[j] = bv / sb
        zeta += bvv - float(bv @ bv) / sb
    return RadialObjective(zeta=float(zeta), rho=rho, attractors=q0, degenerate=degenerate)


def radial_value(r: RadialObjective, positions: np.ndarray) -> float:
    """``zeta - sum_j rho_j |q_j - q0_j|^2`` for FlyBS positions ``(M, 3)``."""
    positions = np.asarray(positions, dtype=float)
    if positions.shape != r.attractors.shape:
        raise ValueError(f"expected positions of shape {r.attractors.shape}")
    diff = positions - r.attractors
    return float(r.zeta - np.sum(r.rho * np.einsum("ij,ij->i", diff, diff)))


def radial_gradient(r: RadialObjective, positions: np.ndarray) -> np.ndarray:
    return -2.0 * r.rho[:, None] * (np.asarray(positions, dtype=float) - r.attractors)
