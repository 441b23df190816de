import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bprk import linprog
from bprk.checks import lp_oracle_suite, random_lp, vertex_enumeration
from bprk.linprog import LinearProgram, LpStatus, SolverStalled


def test_single_lower_bound():
    sol = linprog.solve(LinearProgram(c=[1.0], A_ub=[[-1.0]], b_ub=[-3.0]))
    assert sol.status is LpStatus.OPTIMAL
    assert sol.x[0] == pytest.approx(3.0)


def test_contradictory_bounds_infeasible():
    sol = linprog.solve(LinearProgram(c=[1.0], A_ub=[[-1.0], [1.0]], b_ub=[-1.0, 0.0]))
    assert sol.status is LpStatus.INFEASIBLE


def test_degenerate_optimum_is_a_vertex():
    lp = LinearProgram(c=[-1.0, -1.0], A_ub=[[1.0, 1.0]], b_ub=[1.0])
    sol = linprog.solve(lp)
    assert sol.objective_value == pytest.approx(-1.0)
    assert sol.x.sum() == pytest.approx(1.0)
    assert np.count_nonzero(np.abs(sol.x) > 1e-12) == 1
    status, obj, _ = vertex_enumeration(lp)
    assert status is LpStatus.OPTIMAL and obj == pytest.approx(-1.0)


def test_unbounded():
    sol = linprog.solve(LinearProgram(c=[-1.0, 0.0], A_ub=[[0.0, 1.0]], b_ub=[1.0]))
    assert sol.status is LpStatus.UNBOUNDED


def test_free_variables():
    # minimize x subject to x >= -2 given as a row, x free
    lp = LinearProgram(c=[1.0], A_ub=[[-1.0]], b_ub=[2.0], lb=[-np.inf])
    sol = linprog.solve(lp)
    assert sol.x[0] == pytest.approx(-2.0)


def test_equalities():
    lp = LinearProgram(c=[1.0, 2.0, 0.0], A_eq=[[1.0, 1.0, 1.0]], b_eq=[1.0])
    sol = linprog.solve(lp)
    assert sol.objective_value == pytest.approx(0.0)
    np.testing.assert_allclose(sol.x, [0.0, 0.0, 1.0], atol=1e-12)


def test_pivot_cap_raises_stalled():
    lp = LinearProgram(c=[-1.0, -2.0, -3.0], A_ub=np.eye(3), b_ub=[1.0, 1.0, 1.0])
    with pytest.raises(SolverStalled):
        linprog.solve(lp, max_pivots=1)


def test_rejects_non_finite_data():
    with pytest.raises(ValueError):
        LinearProgram(c=[np.nan])


def test_oracle_suite_small():
    res = lp_oracle_suite(np.random.default_rng(7), draws=100)
    assert res.ok, res.failures[:3]


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_matches_vertex_enumeration(seed):
    lp = random_lp(np.random.default_rng(seed))
    sol = linprog.solve(lp)
    status, obj, _ = vertex_enumeration(lp)
    assert sol.status is status
    if status is LpStatus.OPTIMAL:
        assert sol.objective_value == pytest.approx(obj, rel=1e-8, abs=1e-8)
        assert lp.violation(sol.x) <= 1e-9


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_solution_feasible_and_bounded_random_boxes(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 7))
    m = int(rng.integers(1, 11 - n if n < 10 else 2))
    A = rng.normal(size=(m, n))
    x0 = rng.uniform(0, 1, n)
    lp = LinearProgram(c=rng.normal(size=n), A_ub=np.vstack([A, np.eye(n)]),
                       b_ub=np.concatenate([A @ x0 + rng.uniform(0, 1, m), np.full(n, 2.0)]))
    sol = linprog.solve(lp)
    assert sol.status is LpStatus.OPTIMAL
    assert lp.violation(sol.x) <= 1e-9
    status, obj, _ = vertex_enumeration(lp)
    assert status is LpStatus.OPTIMAL
    assert sol.objective_value == pytest.approx(obj, rel=1e-8, abs=1e-8)
