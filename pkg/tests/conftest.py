"""Shared fixtures and independent scalar oracles (pure ``math``, no numpy)."""
import math

import numpy as np
import pytest

from flybs.capacity import ChannelPlan, NetworkState, Radio, equal_split_plan


def make_state(bs, users, serving=None, channels=None, tx=None, noise=1e-12, alpha_user=2.8,
               alpha_bs=2.1, interference="full", ref_gain=1.0):
    bs = np.asarray(bs, dtype=float)
    users = np.asarray(users, dtype=float).reshape(-1, 3)
    n = len(users)
    tx = np.ones(len(bs)) if tx is None else np.asarray(tx, dtype=float)
    radio = Radio(tx_power=tx, noise=noise, alpha_user=alpha_user, alpha_bs=alpha_bs, ref_gain=ref_gain,
                  interference=interference)
    return NetworkState(
        bs_positions=bs,
        user_positions=users,
        serving=np.full(n, -1) if serving is None else np.asarray(serving, dtype=int),
        user_channels=np.full(n, -1) if channels is None else np.asarray(channels, dtype=int),
        radio=radio,
    )


def single_channel_plan(m_flybss=1, bandwidth=1e6):
    return ChannelPlan(
        bandwidths=np.array([bandwidth]),
        direct_relay=np.array([0]),
        direct_gbs=np.array([0]),
        backhaul_sets=tuple(np.empty(0, int) for _ in range(m_flybss - 1)),
        gbs_relay_set=np.empty(0, int),
    )


def oracle_user_capacity(bw, q, bs, user, m, alpha, noise, interferers=None):
    """Access-link capacity of one user, every listed BS interfering."""
    sig = q[m] * math.dist(bs[m], user) ** (-alpha)
    others = [j for j in range(len(bs)) if j != m] if interferers is None else interferers
    interf = sum(q[j] * math.dist(bs[j], user) ** (-alpha) for j in others)
    return bw * math.log2(1 + sig / (noise + interf))


def oracle_relay_flybs(bws, channels, q, bs, m, alpha, noise):
    """Relay to access FlyBS ``m``: all BSs except ``m`` and the relay interfere."""
    M = len(bs) - 1
    total = 0.0
    for k in channels:
        sig = q[M - 1] * math.dist(bs[M - 1], bs[m]) ** (-alpha)
        interf = sum(q[j] * math.dist(bs[j], bs[m]) ** (-alpha) for j in range(M + 1) if j not in (m, M - 1))
        total += bws[k] * math.log2(1 + sig / (noise + interf))
    return total


def oracle_gbs_relay(bws, channels, q, bs, alpha, noise):
    """GBS to relay: access FlyBSs interfere at the relay."""
    M = len(bs) - 1
    total = 0.0
    for k in channels:
        sig = q[M] * math.dist(bs[M], bs[M - 1]) ** (-alpha)
        interf = sum(q[j] * math.dist(bs[j], bs[M - 1]) ** (-alpha) for j in range(M - 1))
        total += bws[k] * math.log2(1 + sig / (noise + interf))
    return total


@pytest.fixture
def reference_plan3():
    return equal_split_plan(120, 100e6, 3, 0.2)


# -- acceptance reporting ---------------------------------------------------------------------

_CRITERIA = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or rep.when not in ("setup", "call"):
        return
    if rep.when == "setup" and rep.passed:
        return
    label, title = marker.args
    detail = dict(item.user_properties).get("detail", "")
    _CRITERIA[label] = ("PASS" if rep.passed else "SKIP" if rep.skipped else "FAIL", title, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(_CRITERIA):
        status, title, detail = _CRITERIA[label]
        line = f"criterion {label}: {status}  {title}"
        terminalreporter.write_line(line + (f"  [{detail}]" if detail else ""))
