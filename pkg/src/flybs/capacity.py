"""SINR capacities of access and backhaul links and the network sum capacity.

Base stations are indexed ``0..M``: access FlyBSs ``0..M-2``, the relay
``M-1`` and the GBS ``M``. Channel indices are 0-based.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .channel import pairwise_distances, pairwise_sq_distances

INTERFERENCE_MODES = ("full", "same_channel")


@dataclass(frozen=True, eq=False)
class ChannelPlan:
    """Channel sets for direct service and the two backhaul hops.

    ``backhaul_sets[m]`` are the relay channels towards access FlyBS ``m``;
    ``gbs_relay_set`` are the GBS channels towards the relay and is empty
    when there is no relay hop (two-hop operation).
    """

    bandwidths: np.ndarray
    direct_relay: np.ndarray
    direct_gbs: np.ndarray
    backhaul_sets: tuple
    gbs_relay_set: np.ndarray
    relay_hop: bool = True

    def __post_init__(self):
        c = len(self.bandwidths)
        if c == 0 or np.any(np.asarray(self.bandwidths) <= 0):
            raise ValueError("bandwidths must be positive and nonempty")
        sets = [self.direct_relay, self.direct_gbs, self.gbs_relay_set, *self.backhaul_sets]
        for s in sets:
            if len(s) and (np.min(s) < 0 or np.max(s) >= c):
                raise ValueError("channel index out of range")
        used = np.concatenate([np.asarray(s, dtype=int) for s in self.backhaul_sets] or [np.empty(0, int)])
        if len(np.unique(used)) != len(used):
            raise ValueError("backhaul sets must be pairwise disjoint")
        if np.intersect1d(used, self.direct_relay).size:
            raise ValueError("relay direct channels overlap its backhaul channels")

    @property
    def num_channels(self) -> int:
        return len(self.bandwidths)

    @property
    def m_flybss(self) -> int:
        return len(self.backhaul_sets) + 1

    def serving_channels(self, m: int) -> np.ndarray:
        """Channels BS ``m`` may hand out to its users."""
        M = self.m_flybss
        if m == M:
            return np.asarray(self.direct_gbs, dtype=int)
        if m == M - 1:
            return np.asarray(self.direct_relay, dtype=int)
        return np.arange(self.num_channels)

    def limits(self) -> np.ndarray:
        """Maximum number of users per BS."""
        return np.array([len(self.serving_channels(m)) for m in range(self.m_flybss + 1)])


def equal_split_plan(
    num_channels: int,
    total_bandwidth: float,
    m_flybss: int,
    direct_fraction: float,
    relay_hop: bool = True,
) -> ChannelPlan:
    """Equal-bandwidth plan with ``direct_fraction`` of channels for direct service.

    Relay and GBS share the same direct set; the remaining channels are the
    backhaul band, split equally among access FlyBSs with the remainder going
    to the lowest indices.
    """
    n_direct = int(round(direct_fraction * num_channels))
    direct = np.arange(n_direct)
    backhaul = np.arange(n_direct, num_channels)
    n_access = m_flybss - 1
    sets = tuple(np.asarray(s, dtype=int) for s in np.array_split(backhaul, n_access)) if n_access else ()
    bw = np.full(num_channels, total_bandwidth / num_channels)
    return ChannelPlan(
        bandwidths=bw,
        direct_relay=direct,
        direct_gbs=direct.copy(),
        backhaul_sets=sets,
        gbs_relay_set=backhaul.copy() if relay_hop else np.empty(0, dtype=int),
        relay_hop=relay_hop,
    )


@dataclass(frozen=True, eq=False)
class Radio:
    """Per-BS transmit powers (watts), noise and pathloss exponents."""

    tx_power: np.ndarray
    noise: float
    alpha_user: float = 2.8
    alpha_bs: float = 2.1
    ref_gain: float = 1.0
    noise_backhaul: float | None = None
    interference: str = "full"

    def __post_init__(self):
        if self.interference not in INTERFERENCE_MODES:
            raise ValueError(f"unknown interference mode {self.interference!r}")

    @property
    def q(self) -> np.ndarray:
        return self.ref_gain * np.asarray(self.tx_power, dtype=float)

    @property
    def sigma2_bs(self) -> float:
        return self.noise if self.noise_backhaul is None else self.noise_backhaul


@dataclass(frozen=True, eq=False)
class NetworkState:
    """Snapshot of positions, association and channels at one time step."""

    bs_positions: np.ndarray
    user_positions: np.ndarray
    serving: np.ndarray
    user_channels: np.ndarray
    radio: Radio
    time_step: int = 0
    flags: frozenset = field(default_factory=frozenset)

    @property
    def m_flybss(self) -> int:
        return len(self.bs_positions) - 1

    @property
    def n_users(self) -> int:
        return len(self.user_positions)

    @property
    def relay(self) -> int:
        return self.m_flybss - 1

    @property
    def gbs(self) -> int:
        return self.m_flybss

    def association_matrix(self) -> np.ndarray:
        a = np.zeros((self.n_users, self.m_flybss + 1), dtype=int)
        idx = np.flatnonzero(self.serving >= 0)
        a[idx, self.serving[idx]] = 1
        return a

    def replace(self, **changes) -> "NetworkState":
        return dataclasses.replace(self, **changes)


def unassociated_state(bs_positions, user_positions, radio, time_step=0) -> NetworkState:
    n = len(user_positions)
    return NetworkState(
        bs_positions=np.asarray(bs_positions, dtype=float),
        user_positions=np.asarray(user_positions, dtype=float),
        serving=np.full(n, -1),
        user_channels=np.full(n, -1),
        radio=radio,
        time_step=time_step,
    )


def user_powers(state: NetworkState) -> np.ndarray:
    """Received power of every BS at every user, shape ``(N, M+1)``."""
    d2 = pairwise_sq_distances(state.user_positions, state.bs_positions)
    if np.any(d2 <= 0):
        raise ValueError("user collocated with a BS")
    return state.radio.q[None, :] * d2 ** (-state.radio.alpha_user / 2.0)


def channel_activity(state: NetworkState, plan: ChannelPlan, mode: str | None = None) -> np.ndarray:
    """Boolean ``(M+1, C)`` map of which BS transmits on which channel.

    ``full`` assumes every BS transmits on every channel it owns (access
    FlyBSs and the relay own all channels; the GBS owns its direct set and
    the GBS-relay set). ``same_channel`` keeps only channels actually used
    for a served user or a backhaul hop.
    """
    mode = mode or state.radio.interference
    M, C = state.m_flybss, plan.num_channels
    act = np.zeros((M + 1, C), dtype=bool)
    if mode == "full":
        act[:M, :] = True
        act[M, plan.direct_gbs] = True
        act[M, plan.gbs_relay_set] = True
        return act
    served = state.serving >= 0
    act[state.serving[served], state.user_channels[served]] = True
    for s in plan.backhaul_sets:
        act[M - 1, s] = True
    act[M, plan.gbs_relay_set] = True
    return act


def _log2_1p(x):
    return np.log1p(x) / np.log(2.0)


def mean_serving_bandwidth(plan: ChannelPlan) -> np.ndarray:
    """Average bandwidth of each BS's serving channels, ``(M+1,)``."""
    out = np.zeros(plan.m_flybss + 1)
    for m in range(plan.m_flybss + 1):
        ch = plan.serving_channels(m)
        out[m] = plan.bandwidths[ch].mean() if len(ch) else 0.0
    return out


def utility_matrix(state: NetworkState, plan: ChannelPlan, powers: np.ndarray | None = None) -> np.ndarray:
    """Capacity user ``n`` would get from BS ``m``, interference from all other BSs."""
    p = user_powers(state) if powers is None else powers
    total = state.radio.noise + p.sum(axis=1, keepdims=True)
    sinr = p / (total - p)
    return mean_serving_bandwidth(plan)[None, :] * _log2_1p(sinr)


def _user_bandwidth(state: NetworkState, plan: ChannelPlan, n: int, m: int) -> float:
    g = state.user_channels[n]
    if g >= 0:
        return float(plan.bandwidths[g])
    return float(mean_serving_bandwidth(plan)[m])


def user_capacity(state: NetworkState, plan: ChannelPlan, n: int, m: int) -> float:
    """Downlink capacity of user ``n`` when served by BS ``m``."""
    if not (0 <= n < state.n_users and 0 <= m <= state.m_flybss):
        raise IndexError(f"invalid user/BS pair ({n}, {m})")
    p = user_powers(state)[n]
    others = np.ones(state.m_flybss + 1, dtype=bool)
    others[m] = False
    g = state.user_channels[n]
    if state.radio.interference == "same_channel" and g >= 0:
        others &= channel_activity(state, plan)[:, g]
    sinr = p[m] / (state.radio.noise + p[others].sum())
    return _user_bandwidth(state, plan, n, m) * float(_log2_1p(sinr))


def user_capacities(state: NetworkState, plan: ChannelPlan, powers: np.ndarray | None = None) -> np.ndarray:
    """Capacity of every user under the current association (0 if unserved)."""
    out = np.zeros(state.n_users)
    served = np.flatnonzero(state.serving >= 0)
    if served.size == 0:
        return out
    p = user_powers(state) if powers is None else powers
    s = state.serving[served]
    sig = p[served, s]
    if state.radio.interference == "same_channel":
        act = channel_activity(state, plan)
        g = state.user_channels[served]
        mask = act[:, g].T.copy()
        mask[np.arange(served.size), s] = False
        interf = (p[served] * mask).sum(axis=1)
    else:
        interf = p[served].sum(axis=1) - sig
    g = state.user_channels[served]
    bw = np.where(g >= 0, plan.bandwidths[np.maximum(g, 0)], mean_serving_bandwidth(plan)[s])
    out[served] = bw * _log2_1p(sig / (state.radio.noise + interf))
    return out


def bs_loads(state: NetworkState, plan: ChannelPlan, caps: np.ndarray | None = None) -> np.ndarray:
    """Sum capacity carried by each BS, ``(M+1,)``."""
    caps = user_capacities(state, plan) if caps is None else caps
    served = state.serving >= 0
    return np.bincount(state.serving[served], weights=caps[served], minlength=state.m_flybss + 1)


def access_backhaul_rate(
    plan: ChannelPlan,
    radio: Radio,
    m: int,
    d_signal: float,
    d_interf: np.ndarray,
    activity: np.ndarray,
) -> float:
    """Relay-to-FlyBS ``m`` rate for given signal and interferer distances.

    ``d_interf[j]`` is the distance from FlyBS ``m`` to BS ``j``; entries for
    ``m`` itself and for the relay are ignored.
    """
    M = plan.m_flybss
    ch = np.asarray(plan.backhaul_sets[m], dtype=int)
    if ch.size == 0:
        return 0.0
    q = radio.q
    sig = q[M - 1] * d_signal ** (-radio.alpha_bs)
    mask = np.ones(M + 1, dtype=bool)
    mask[[m, M - 1]] = False
    idx = np.flatnonzero(mask)
    pw = q[idx] * np.asarray(d_interf, dtype=float)[idx] ** (-radio.alpha_bs)
    interf = pw @ activity[np.ix_(idx, ch)] if idx.size else np.zeros(ch.size)
    return float(np.sum(plan.bandwidths[ch] * _log2_1p(sig / (radio.sigma2_bs + interf))))


def gbs_backhaul_rate(
    plan: ChannelPlan,
    radio: Radio,
    d_signal: float,
    d_interf: np.ndarray,
    activity: np.ndarray,
) -> float:
    """GBS-to-relay rate; ``d_interf[j]`` is the relay's distance to access FlyBS ``j``."""
    M = plan.m_flybss
    ch = np.asarray(plan.gbs_relay_set, dtype=int)
    if ch.size == 0:
        return 0.0
    q = radio.q
    sig = q[M] * d_signal ** (-radio.alpha_bs)
    idx = np.arange(M - 1)
    pw = q[idx] * np.asarray(d_interf, dtype=float)[idx] ** (-radio.alpha_bs)
    interf = pw @ activity[np.ix_(idx, ch)] if idx.size else np.zeros(ch.size)
    return float(np.sum(plan.bandwidths[ch] * _log2_1p(sig / (radio.sigma2_bs + interf))))


def relay_flybs_capacity(state: NetworkState, plan: ChannelPlan, m: int) -> float:
    """Backhaul capacity between the relay and access FlyBS ``m``."""
    if not 0 <= m < state.m_flybss - 1:
        raise IndexError(f"{m} is not an access FlyBS")
    d = pairwise_distances(state.bs_positions[m : m + 1], state.bs_positions)[0]
    act = channel_activity(state, plan)
    return access_backhaul_rate(plan, state.radio, m, d[state.relay], d, act)


def gbs_relay_capacity(state: NetworkState, plan: ChannelPlan) -> float:
    """Backhaul capacity between the GBS and the relay."""
    r = state.relay
    d = pairwise_distances(state.bs_positions[r : r + 1], state.bs_positions)[0]
    return gbs_backhaul_rate(plan, state.radio, d[state.gbs], d, channel_activity(state, plan))


def sum_capacity(state: NetworkState, plan: ChannelPlan) -> float:
    """Total downlink capacity over all associated users."""
    return float(user_capacities(state, plan).sum())
