"""Geometry and received power for user and base-station links.

Positions are plain ``numpy`` arrays of shape ``(3,)`` (``x, y, z`` in
meters); collections of positions are ``(n, 3)`` arrays.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np


class NodeKind(enum.Enum):
    USER = "user"
    ACCESS = "access"
    RELAY = "relay"
    GBS = "gbs"


@dataclass(frozen=True)
class NodeId:
    """Identifies a node; BS indices are 0-based with relay ``M-1`` and GBS ``M``."""

    kind: NodeKind
    index: int

    @staticmethod
    def for_bs(index: int, m_flybss: int) -> "NodeId":
        if not 0 <= index <= m_flybss:
            raise IndexError(f"BS index {index} outside [0, {m_flybss}]")
        if index == m_flybss:
            return NodeId(NodeKind.GBS, index)
        if index == m_flybss - 1:
            return NodeId(NodeKind.RELAY, index)
        return NodeId(NodeKind.ACCESS, index)


def position(x: float, y: float, z: float = 0.0) -> np.ndarray:
    p = np.array([x, y, z], dtype=float)
    if not np.all(np.isfinite(p)):
        raise ValueError(f"non-finite position {p}")
    return p


def distance(a, b) -> float:
    """Euclidean distance between two points."""
    return float(np.linalg.norm(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)))


def pairwise_sq_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Squared distances between every row of ``a`` and every row of ``b``."""
    diff = np.asarray(a, dtype=float)[:, None, :] - np.asarray(b, dtype=float)[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def pairwise_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.sqrt(pairwise_sq_distances(a, b))


@dataclass(frozen=True)
class LinkParams:
    """Large-scale and fading parameters of one link class.

    ``gamma_coeff`` bundles transmit power, antenna gains and the carrier
    dependent constant. ``rician_k`` weights the LoS against the NLoS
    component.
    """

    gamma_coeff: float
    rician_k: float = 0.0
    pathloss_exp: float = 2.8
    nlos_mode: str = "expected"

    def __post_init__(self):
        if not self.gamma_coeff > 0:
            raise ValueError("gamma_coeff must be positive")
        if self.rician_k < 0:
            raise ValueError("rician_k must be nonnegative")
        if self.pathloss_exp < 1:
            raise ValueError("pathloss_exp must be >= 1")
        if self.nlos_mode not in ("expected", "sampled"):
            raise ValueError(f"unknown nlos_mode {self.nlos_mode!r}")


def channel_gain_coeff(p: LinkParams, rng: np.random.Generator | None = None, size=None):
    """Power coefficient ``Q`` multiplying ``d**-alpha``.

    In ``expected`` mode this is ``gamma_coeff`` exactly. In ``sampled`` mode a
    unit-variance circularly-symmetric NLoS term is drawn and the squared
    magnitude of the LoS/NLoS mixture is normalised so its mean is
    ``gamma_coeff``.
    """
    if p.nlos_mode == "expected":
        if size is None:
            return float(p.gamma_coeff)
        return np.full(size, float(p.gamma_coeff))
    if rng is None:
        raise ValueError("sampled mode needs a random generator")
    w_los = p.rician_k / (p.rician_k + 1.0)
    w_nlos = 1.0 / (p.rician_k + 1.0)
    h_nlos = (rng.standard_normal(size) + 1j * rng.standard_normal(size)) / np.sqrt(2.0)
    mix = np.abs(w_los + w_nlos * h_nlos) ** 2
    g = p.gamma_coeff * mix / (w_los**2 + w_nlos**2)
    return float(g) if size is None else g


def received_power(q_coeff, d, alpha):
    """``q_coeff * d**-alpha``; raises ``ValueError`` for collocated nodes."""
    d_arr = np.asarray(d, dtype=float)
    if np.any(d_arr <= 0):
        raise ValueError("received power undefined at zero distance")
    out = np.asarray(q_coeff, dtype=float) * d_arr ** (-np.asarray(alpha, dtype=float))
    return float(out) if out.ndim == 0 else out


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)
