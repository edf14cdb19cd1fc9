"""End-to-end acceptance checks, one test per criterion.

A summary section at the end of the pytest run prints one PASS/FAIL line per
criterion. The trend criterion (7) simulates 100 runs; its horizon defaults
to ``TREND_HORIZON`` steps and can be raised with ``FLYBS_TREND_HORIZON``.
"""
import os
import time

import numpy as np
import pytest
from oracles import (
    bisection_cases,
    brute_force_association,
    fd_gradient,
    grid_extremal,
    grid_scan_radius,
    position_gap,
    random_instance,
    region_fixture,
    region_grid,
)

from flybs.association import AssociationProblem, association_objective, is_feasible, solve_association
from flybs.channel import pairwise_sq_distances
from flybs.cli import steps_csv
from flybs.config import load_scenario
from flybs.engine import audit, simulate
from flybs.feasibility import bisect_backhaul_radius, extremal_point
from flybs.radial import build_radial, linearize_capacity, radial_gradient, radial_value

TREND_SEEDS = range(10)
TREND_HORIZON = int(os.environ.get("FLYBS_TREND_HORIZON", "300"))


def criterion(label, title):
    return pytest.mark.criterion(label, title)


# -- 1 ---------------------------------------------------------------------------------------


@criterion("1", "association solver matches brute force on 200 instances in < 5 s")
def test_association_optimality(record_property):
    rng = np.random.default_rng(2024)
    problems = []
    for i in range(200):
        n, b = int(rng.integers(1, 9)), int(rng.integers(1, 4))
        # integer utilities make sums exact, so the comparison is exact too
        u = rng.integers(0, 1000, (n, b)).astype(float) if i % 2 else rng.uniform(0, 1e7, (n, b))
        problems.append(AssociationProblem(u, rng.integers(0, 5, b)))
    t0 = time.perf_counter()
    solutions = [solve_association(p) for p in problems]
    elapsed = time.perf_counter() - t0
    mismatches = 0
    for i, (p, sol) in enumerate(zip(problems, solutions)):
        assert is_feasible(sol, p.limits)
        got, best = association_objective(p, sol), brute_force_association(p.utility, p.limits)
        exact = got == best if i % 2 else abs(got - best) <= 1e-9 * max(best, 1.0)
        mismatches += not exact
    record_property("detail", f"{mismatches} mismatches, solver time {elapsed * 1e3:.0f} ms")
    assert mismatches == 0
    assert elapsed < 5.0


# -- 2 and 3 ---------------------------------------------------------------------------------


@criterion("2", "radial gradient matches finite differences of sum capacity (rel 1e-4, 50 states)")
def test_gradient_consistency(record_property):
    worst = 0.0
    for seed in range(50):
        state, plan = random_instance(seed)
        r = build_radial(linearize_capacity(state, plan, "gradient"), state)
        g = radial_gradient(r, state.bs_positions[: state.m_flybss])
        fd = fd_gradient(state, plan)
        worst = max(worst, float(np.linalg.norm(g - fd) / np.linalg.norm(fd)))
    record_property("detail", f"worst relative error {worst:.2e}")
    assert worst <= 1e-4


@criterion("3", "radial quadratic equals the linear model to 1e-9 relative (5 points per state)")
def test_radial_identity(record_property):
    worst = 0.0
    for seed in range(50):
        state, plan = random_instance(seed)
        for mode in ("gradient", "paper_literal"):
            lin = linearize_capacity(state, plan, mode)
            r = build_radial(lin, state)
            rng = np.random.default_rng(seed)
            M = state.m_flybss
            for _ in range(5):
                pos = state.bs_positions.copy()
                pos[:M] += rng.normal(scale=50.0, size=(M, 3))
                terms = lin.beta * pairwise_sq_distances(state.user_positions, pos)
                linear = lin.offset + float(terms.sum())
                scale = max(abs(linear), float(np.abs(terms).sum()))
                worst = max(worst, abs(radial_value(r, pos[:M]) - linear) / scale)
    record_property("detail", f"worst relative error {worst:.2e}")
    assert worst <= 1e-9


# -- 4 ---------------------------------------------------------------------------------------


@criterion("4", "backhaul bisection brackets the root and agrees with a grid scan within 0.01 m")
def test_bisection(record_property):
    tol = 0.01
    worst = 0.0
    for which in ("access", "relay"):
        for lhs, rhs, vec, bracket in bisection_cases(20, which):
            d = bisect_backhaul_radius(lhs, rhs, bracket, tol)
            assert rhs(d) >= lhs > rhs(d + tol)
            gap = abs(d - grid_scan_radius(vec, lhs, bracket, tol / 10))
            worst = max(worst, gap)
            assert gap <= tol
    record_property("detail", f"40 fixtures, worst grid gap {worst * 100:.2f} cm")


# -- 5 ---------------------------------------------------------------------------------------


@criterion("5", "closest/furthest points match a 0.25 m grid oracle on 100 regions")
def test_extremal_geometry(record_property):
    rng = np.random.default_rng(5)
    done, worst_pos, worst_rel = 0, 0.0, 0.0
    while done < 100:
        region, q0 = region_fixture(rng)
        pts = region_grid(region)
        if len(pts) < 20:
            continue  # too thin to grid at 0.25 m
        for sense in ("closest", "furthest"):
            p = extremal_point(region, q0, sense)
            assert region.contains(p, 1e-6)
            tied, dg = grid_extremal(pts, q0, sense)
            worst_pos = max(worst_pos, position_gap(p, tied))
            worst_rel = max(worst_rel, abs(np.linalg.norm(p - q0) - dg) / dg)
        done += 1
    record_property("detail", f"worst position gap {worst_pos:.3f} m, worst distance error {worst_rel:.1e}")
    assert worst_pos <= 0.5
    assert worst_rel <= 1e-3


# -- 6 and 8: the reference run ----------------------------------------------------------------


@pytest.fixture(scope="module")
def reference_run():
    s = load_scenario({"n_users": 200, "m_flybss": 3, "horizon": 1200, "seed": 0}, env={})
    t0 = time.perf_counter()
    result = simulate(s)
    return s, result, time.perf_counter() - t0


@criterion("6", "1200-step reference run: zero hard-constraint and unflagged backhaul violations")
def test_constraint_audit(reference_run, record_property):
    s, result, _ = reference_run
    assert len(result.reports) == 1200
    counts = audit(result.reports, s)
    checked = counts.pop("checked_backhaul_steps")
    record_property("detail", f"{checked}/1200 steps unflagged, violations {counts}")
    assert all(v == 0 for v in counts.values())


@criterion("8", "byte-identical CSVs for a repeated run and 1200 steps in under 5 minutes")
def test_determinism_and_runtime(reference_run, record_property):
    s, first, runtime = reference_run
    second = simulate(s)
    identical = steps_csv(first.reports) == steps_csv(second.reports)
    record_property("detail", f"runtime {runtime:.1f} s, identical={identical}")
    assert identical
    assert runtime < 300.0


# -- 7: trends over seeds ----------------------------------------------------------------------


N_VALUES = (200, 300, 400, 600, 800)
M_VALUES = (2, 3, 4, 5)


def _mean_capacity(scheme, n, m, seed):
    s = load_scenario({"n_users": n, "m_flybss": m, "horizon": TREND_HORIZON, "seed": seed, "scheme": scheme},
                      env={})
    reports = simulate(s).reports
    return float(np.mean([r.sum_capacity for r in reports]))


@pytest.fixture(scope="module")
def trend_table():
    cells = {("three_hop", n, 2) for n in N_VALUES} | {("three_hop", 200, m) for m in M_VALUES}
    cells |= {("three_hop", 300, 3), ("two_hop", 300, 3)}
    return {cell: np.array([_mean_capacity(*cell, seed) for seed in TREND_SEEDS]) for cell in sorted(cells)}


def _mbps(values):
    return ", ".join(f"{v / 1e6:.1f}" for v in values)


@criterion("7a", "sum capacity non-decreasing in N over 200-400 and sublinear at 600-800 (M=2)")
def test_trend_users(trend_table, record_property):
    caps = [trend_table[("three_hop", n, 2)].mean() for n in N_VALUES]
    record_property("detail", f"horizon {TREND_HORIZON}, Mbps at N={N_VALUES}: {_mbps(caps)}")
    assert caps[0] <= caps[1] <= caps[2]
    per_user = [c / n for c, n in zip(caps[2:], N_VALUES[2:])]
    assert per_user[0] > per_user[1] > per_user[2]


@criterion("7b", "sum capacity non-decreasing in M over 2-5 (N=200)")
def test_trend_flybss(trend_table, record_property):
    caps = [trend_table[("three_hop", 200, m)].mean() for m in M_VALUES]
    record_property("detail", f"horizon {TREND_HORIZON}, Mbps at M={M_VALUES}: {_mbps(caps)}")
    assert all(a <= b for a, b in zip(caps, caps[1:]))


@criterion("7c", "three_hop beats two_hop by at least 5% (N=300, M=3)")
def test_trend_relay_gain(trend_table, record_property):
    three, two = trend_table[("three_hop", 300, 3)], trend_table[("two_hop", 300, 3)]
    gain = 100.0 * (three.mean() - two.mean()) / two.mean()
    record_property("detail", f"horizon {TREND_HORIZON}, gain {gain:+.1f}%")
    assert gain >= 5.0
