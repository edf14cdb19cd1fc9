import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import (
    bisection_cases,
    backhaul_fixture,
    grid_extremal,
    grid_scan_radius,
    position_gap,
    region_fixture,
    region_grid,
)

from flybs.feasibility import (
    Ball,
    DistanceBounds,
    EmptyRegion,
    FeasibilityRegion,
    InfeasibleBackhaul,
    Slab,
    backhaul_lhs_bound_access,
    backhaul_rhs_bound_access,
    bisect_backhaul_radius,
    distance_bounds_bs_pair,
    distance_bounds_user,
    extremal_point,
    relay_bound_lhs,
    relay_bound_rhs,
)

# -- distance bounds -----------------------------------------------------------------------


def test_user_bounds_static():
    b = distance_bounds_user((0, 0, 100), (0, 0, 0), 0.0, 1.0)
    assert b.d_min == b.d_max == 100.0


def test_user_bounds_reference_speed():
    assert distance_bounds_user((0, 0, 100), (0, 0, 0), 25.0, 1.0) == DistanceBounds(75.0, 125.0)


def test_user_bounds_clamped():
    assert distance_bounds_user((0, 0, 10), (0, 0, 0), 25.0, 1.0) == DistanceBounds(1.0, 35.0)


def test_pair_bounds():
    a, b = (0, 0, 200), (500, 0, 200)
    assert distance_bounds_bs_pair(a, b, 0, 0, 1.0) == DistanceBounds(500.0, 500.0)
    assert distance_bounds_bs_pair(a, b, 25, 25, 1.0) == DistanceBounds(450.0, 550.0)
    assert distance_bounds_bs_pair(a, b, 25, 0, 1.0) == DistanceBounds(475.0, 525.0)


# -- surrogate bounds bracket the true capacities ---------------------------------------------


def _moved(state, vmax, rng):
    """Random positions reachable within one step (GBS fixed)."""
    pos = state.bs_positions.copy()
    for j in range(len(pos)):
        v = rng.normal(size=3)
        pos[j] += v / np.linalg.norm(v) * vmax[j] * rng.uniform(0, 1)
    return state.replace(bs_positions=pos)


@pytest.mark.parametrize("seed", range(8))
def test_surrogates_bound_true_capacities(seed):
    from flybs.capacity import bs_loads, gbs_relay_capacity, relay_flybs_capacity

    state, plan, vmax = backhaul_fixture(seed)
    rng = np.random.default_rng(seed)
    M = state.m_flybss
    lhs_access = [backhaul_lhs_bound_access(state, plan, m, vmax, 1.0) for m in range(M - 1)]
    lhs_relay = relay_bound_lhs(state, plan, vmax, 1.0)
    for _ in range(5):
        nxt = _moved(state, vmax, rng)
        loads = bs_loads(nxt, plan)
        for m in range(M - 1):
            assert loads[m] <= lhs_access[m] * (1 + 1e-12)
            d = np.linalg.norm(nxt.bs_positions[m] - nxt.bs_positions[M - 1])
            assert relay_flybs_capacity(nxt, plan, m) >= backhaul_rhs_bound_access(state, plan, m, d, vmax, 1.0) * (1 - 1e-12)
        assert sum(relay_flybs_capacity(nxt, plan, m) for m in range(M - 1)) <= lhs_relay * (1 + 1e-12)
        d = np.linalg.norm(nxt.bs_positions[M - 1] - nxt.bs_positions[M])
        assert gbs_relay_capacity(nxt, plan) >= relay_bound_rhs(state, plan, d, vmax, 1.0) * (1 - 1e-12)


@pytest.mark.parametrize("seed", range(4))
def test_rhs_bounds_strictly_decreasing(seed):
    state, plan, vmax = backhaul_fixture(seed)
    d = np.linspace(1, 5000, 200)
    a = [backhaul_rhs_bound_access(state, plan, 0, x, vmax, 1.0) for x in d]
    r = [relay_bound_rhs(state, plan, x, vmax, 1.0) for x in d]
    assert np.all(np.diff(a) < 0) and np.all(np.diff(r) < 0)


# -- bisection ------------------------------------------------------------------------------


def test_bisect_analytic_root():
    assert bisect_backhaul_radius(0.5, lambda d: 1 / d, DistanceBounds(0.1, 10), tol=1e-6) == pytest.approx(2.0, abs=1e-6)


def test_bisect_inactive_constraint():
    assert bisect_backhaul_radius(0.0, lambda d: 1 / d, DistanceBounds(0.1, 10)) == 10


def test_bisect_infeasible():
    with pytest.raises(InfeasibleBackhaul):
        bisect_backhaul_radius(20.0, lambda d: 1 / d, DistanceBounds(0.1, 10))


@pytest.mark.parametrize("which", ["access", "relay"])
def test_bisect_against_grid_scan(which):
    tol = 0.01
    for lhs, rhs, vec, bracket in bisection_cases(5, which):
        d = bisect_backhaul_radius(lhs, rhs, bracket, tol)
        assert rhs(d) >= lhs > rhs(d + tol)
        for x in (bracket.d_min, d, bracket.d_max):
            assert vec(np.array([x]))[0] == pytest.approx(rhs(x), rel=1e-12)
        assert abs(d - grid_scan_radius(vec, lhs, bracket, tol / 10)) <= tol


# -- extremal points ---------------------------------------------------------------------------

UNIT = FeasibilityRegion(Slab(-2, 2), (Ball(np.zeros(3), 1.0),))


def test_closest_interior_is_query():
    assert np.allclose(extremal_point(UNIT, (0.2, 0, 0)), (0.2, 0, 0))


def test_sphere_projection_and_antipode():
    assert np.allclose(extremal_point(UNIT, (3, 0, 0), "closest"), (1, 0, 0))
    assert np.allclose(extremal_point(UNIT, (3, 0, 0), "furthest"), (-1, 0, 0))


def test_slab_face_projection():
    region = FeasibilityRegion(Slab(0, 0.5), (Ball(np.zeros(3), 1.0),))
    assert np.allclose(extremal_point(region, (0.1, 0.2, 3)), (0.1, 0.2, 0.5))


def test_empty_region():
    far_apart = FeasibilityRegion(Slab(-5, 5), (Ball(np.zeros(3), 1.0), Ball(np.array([5.0, 0, 0]), 1.0)))
    with pytest.raises(EmptyRegion):
        extremal_point(far_apart, (0, 0, 0))
    assert far_apart.is_empty()
    above = FeasibilityRegion(Slab(2, 3), (Ball(np.zeros(3), 1.0),))
    with pytest.raises(EmptyRegion):
        extremal_point(above, (0, 0, 0), "furthest")


def test_unknown_sense():
    with pytest.raises(ValueError):
        extremal_point(UNIT, (0, 0, 0), "nearest")


def test_flat_slab():
    region = FeasibilityRegion(Slab(0.5, 0.5), (Ball(np.zeros(3), 1.0),))
    p = extremal_point(region, (5, 0, 0.5), "closest")
    assert np.allclose(p, (np.sqrt(0.75), 0, 0.5), atol=1e-9)


@pytest.mark.parametrize("seed", range(10))
def test_extremal_matches_grid_oracle(seed):
    rng = np.random.default_rng(seed)
    pts = []
    while len(pts) < 20:  # redraw regions too thin to grid
        region, q0 = region_fixture(rng)
        pts = region_grid(region)
    for sense in ("closest", "furthest"):
        p = extremal_point(region, q0, sense)
        tied, dg = grid_extremal(pts, q0, sense)
        d = np.linalg.norm(p - q0)
        assert position_gap(p, tied) <= 0.5
        assert abs(d - dg) <= 1e-3 * dg
        # never worse than any grid point
        assert (d <= dg + 1e-9) if sense == "closest" else (d >= dg - 1e-9)


ball_strategy = st.tuples(
    st.floats(-20, 20), st.floats(-20, 20), st.floats(80, 320), st.floats(0.5, 40),
)


@settings(max_examples=200, deadline=None)
@given(ball_strategy, ball_strategy, st.floats(100, 300), st.floats(0, 200),
       st.tuples(st.floats(-500, 500), st.floats(-500, 500), st.floats(-100, 600)),
       st.sampled_from(["closest", "furthest"]))
def test_extremal_point_is_feasible(b1, b2, zlo, width, q0, sense):
    region = FeasibilityRegion(Slab(zlo, zlo + width),
                               (Ball(np.array(b1[:3]), b1[3]), Ball(np.array(b2[:3]), b2[3])))
    try:
        p = extremal_point(region, np.array(q0), sense)
    except EmptyRegion:
        return
    assert region.slab.z_min - 1e-6 <= p[2] <= region.slab.z_max + 1e-6
    for b in region.balls:
        assert np.linalg.norm(p - b.center) <= b.radius + 1e-6
