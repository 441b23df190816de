from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bprk.adaptation import (
    AdaptationRequest,
    AdaptationStatus,
    convex_adapt,
    default_candidates,
    free_adapt,
)
from bprk.order_conditions import assemble
from bprk.problems import linear2x2
from bprk.stepper import compute_stages
from bprk.tableaux import builtin

F_EX = np.array([[-5.0, 5.0, -5.0], [5.0, -5.0, 5.0]])
U0 = np.array([1.0, 0.0])
DT = 1.0 / 3.0


def _exact_example():
    """L1-closest order-2 SSP33 weights keeping the first step nonnegative,
    by exact arithmetic along the single free direction d = (1/2, 1/2, -1)."""
    F = [[Fraction(v) for v in row] for row in F_EX.tolist()]
    b = [Fraction(1, 6), Fraction(1, 6), Fraction(2, 3)]
    d = [Fraction(1, 2), Fraction(1, 2), Fraction(-1)]
    dt = Fraction(1, 3)
    base = [1 + dt * sum(f * w for f, w in zip(F[0], b)), dt * sum(f * w for f, w in zip(F[1], b))]
    slope = [dt * sum(f * w for f, w in zip(F[i], d)) for i in range(2)]
    # base_i + alpha slope_i >= 0
    lo = max(-base[i] / slope[i] for i in range(2) if slope[i] > 0)
    hi = min(-base[i] / slope[i] for i in range(2) if slope[i] < 0)
    alpha = lo if abs(lo) <= abs(hi) else hi
    bt = [bi + alpha * di for bi, di in zip(b, d)]
    return {
        "interval": (lo, hi),
        "b_tilde": bt,
        "objective": sum(abs(x - y) for x, y in zip(bt, b)),
        "update": [base[i] + alpha * slope[i] for i in range(2)],
        "unadapted": base,
    }


def _example_request():
    tab = builtin("ssp33")
    return AdaptationRequest(F_EX, U0, DT, tab.b, lower=np.zeros(2), order_system=assemble(tab, 2))


def test_example_stage_derivatives():
    st_ = compute_stages(linear2x2(), builtin("ssp33"), 0.0, U0, DT)
    np.testing.assert_allclose(st_.F, F_EX, atol=1e-14)


def test_example_free_adaptation_matches_exact_optimum():
    ex = _exact_example()
    assert ex["unadapted"] == [Fraction(-1, 9), Fraction(10, 9)]
    assert ex["interval"] == (Fraction(1, 15), Fraction(2, 3))
    res = free_adapt(_example_request())
    assert res.status is AdaptationStatus.ADAPTED
    assert res.order == 2
    np.testing.assert_allclose(res.weights, [float(x) for x in ex["b_tilde"]], atol=1e-12)
    assert res.objective == pytest.approx(float(ex["objective"]), abs=1e-12)
    np.testing.assert_allclose(U0 + DT * F_EX @ res.weights, [float(x) for x in ex["update"]], atol=1e-12)
    np.testing.assert_allclose([float(x) for x in ex["update"]], [0.0, 1.0])


def test_example_order_certificate():
    res = free_adapt(_example_request())
    assert assemble(builtin("ssp33"), 2).satisfied_by(res.weights, 1e-12)


def test_no_violation_leaves_weights_untouched():
    req = _example_request()
    req.dt = 0.05
    res = free_adapt(req)
    assert res.status is AdaptationStatus.UNMODIFIED
    np.testing.assert_array_equal(res.weights, req.b)
    assert res.delta == 0.0


def test_third_order_has_no_freedom_and_is_infeasible():
    tab = builtin("ssp33")
    req = AdaptationRequest(F_EX, U0, DT, tab.b, lower=np.zeros(2), order_system=assemble(tab, 3))
    assert free_adapt(req).status is AdaptationStatus.INFEASIBLE


def test_convex_unit_column_feasible():
    # forward-Euler-like column (1, 0, 0) gives u + dt F e1 = (-2/3, 5/3): infeasible;
    # the mixture of b and (1/2, 1/2, 0) reaches the boundary instead
    tab = builtin("ssp33")
    B = np.column_stack([tab.b, [0.5, 0.5, 0.0]])
    res = convex_adapt(_example_request(), B, orders=[3, 2])
    assert res.status is AdaptationStatus.ADAPTED
    assert res.mixture.sum() == pytest.approx(1.0)
    assert np.all(res.mixture >= -1e-12)
    u = U0 + DT * F_EX @ res.weights
    assert u.min() >= -1e-12
    assert res.order == 2


def test_convex_infeasible_when_no_column_helps():
    tab = builtin("ssp33")
    B = np.column_stack([tab.b, [1.0, 0.0, 0.0]])
    res = convex_adapt(_example_request(), B, orders=[3, 1])
    assert res.status is AdaptationStatus.INFEASIBLE


def test_default_candidates_columns():
    tab = builtin("extrapolation-be3")
    B, orders = default_candidates(tab)
    assert B.shape == (6, 2)
    assert orders == [3, 1]
    np.testing.assert_array_equal(B[:, 0], tab.b)


def test_inconsistent_shapes_rejected():
    with pytest.raises(ValueError):
        AdaptationRequest(F_EX, np.zeros(3), DT, np.ones(3) / 3)
    with pytest.raises(ValueError):
        AdaptationRequest(F_EX, U0, DT, np.ones(3) / 3, lower=np.ones(2), upper=np.zeros(2))


def _random_request(seed):
    rng = np.random.default_rng(seed)
    tab = builtin(["rk4", "cashkarp", "dormandprince", "ssprk104"][seed % 4])
    m = int(rng.integers(3, 30))
    u = rng.uniform(0.0, 1.0, m)
    F = rng.normal(size=(m, tab.s))
    dt = rng.uniform(0.05, 0.6)
    p = int(rng.integers(1, tab.p))
    return tab, AdaptationRequest(F, u, dt, tab.b, lower=np.zeros(m), order_system=assemble(tab, p))


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_active_set_matches_full_lp(seed):
    tab, req = _random_request(seed)
    full = free_adapt(req, active_set=False)
    reduced = free_adapt(req)
    assert full.status == reduced.status
    if reduced.status is AdaptationStatus.ADAPTED:
        assert reduced.objective == pytest.approx(full.objective, rel=1e-7, abs=1e-10)
        assert req.update(reduced.weights).min() >= -1e-9 * max(1.0, np.abs(req.u).max())
        assert req.order_system.satisfied_by(reduced.weights, 1e-9)
        assert reduced.active_lower.size <= req.u.size


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_upper_bounds_respected(seed):
    tab, req = _random_request(seed)
    req.upper = np.ones(req.u.size)
    res = free_adapt(req)
    if res.status is AdaptationStatus.ADAPTED:
        u = req.update(res.weights)
        assert u.max() <= 1.0 + 1e-9 and u.min() >= -1e-9
