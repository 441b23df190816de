import numpy as np
import pytest

from bprk.integrator import (
    ConfigurationError,
    IntegrationFailure,
    IntegratorConfig,
    StepStatus,
    estimate_error,
    integrate,
    pi_step_control,
)
from bprk.problems import get_problem, linear2x2, reaction4
from bprk.tableaux import builtin


def test_pi_controller_formula():
    assert pi_step_control(1.0, None, 1.0, 5, first=True) == pytest.approx(0.9)
    assert pi_step_control(1e-20, 1.0, 1.0, 5) == pytest.approx(5.0)
    assert pi_step_control(1e20, 1.0, 1.0, 5) == pytest.approx(0.2)
    expect = 0.9 * 0.5 ** (-0.7 / 4) * 0.8 ** (0.4 / 4)
    assert pi_step_control(0.5, 0.8, 2.0, 4) == pytest.approx(2.0 * expect)


def test_error_estimate_parts():
    F = np.array([[1.0, 2.0], [0.0, -1.0]])
    norm = lambda v: float(np.abs(v).max())
    err_T, delta, err = estimate_error(F, 0.5, np.array([0.5, 0.5]), np.array([1.0, 0.0]),
                                       np.array([0.25, 0.75]), norm)
    assert err_T == pytest.approx(0.25)
    assert delta == pytest.approx(0.125)
    assert err == pytest.approx(0.375)


@pytest.mark.parametrize("kw", [
    {"mode": "sometimes"}, {"adaptation": "maybe"}, {"p_min": 0}, {"tol_delta": 0.0},
    {"dt": -1.0}, {"dt_min": 1.0, "dt_max": 0.5},
])
def test_bad_configuration(kw):
    with pytest.raises(ConfigurationError):
        IntegratorConfig(**kw)


def test_adaptive_mode_needs_embedded_weights():
    with pytest.raises(ConfigurationError):
        integrate(linear2x2(), builtin("rk4"), IntegratorConfig(mode="adaptive"))


def test_fully_implicit_rejected():
    with pytest.raises(ConfigurationError):
        integrate(linear2x2(), builtin("radauiia3"), IntegratorConfig())


def test_fixed_step_hits_final_time_and_outputs():
    tr = integrate(linear2x2(), builtin("rk4"),
                   IntegratorConfig(dt=0.03, t_end=0.5, output_times=(0.1, 0.25)))
    assert tr.completed
    assert tr.final_time == 0.5
    assert sorted(tr.snapshots) == [0.1, 0.25]
    assert all(r.accepted for r in tr.records)


def test_example_problem_adapts_first_step():
    tr = integrate(linear2x2(), builtin("ssp33"),
                   IntegratorConfig(dt=1 / 3, t_end=1 / 3, adaptation="free", p_start=2, tol_delta=1.0))
    first = tr.records[0]
    assert first.accepted and first.adapted and first.order == 2
    assert first.min_before == pytest.approx(-1 / 9)
    np.testing.assert_allclose(tr.final_state, [0.0, 1.0], atol=1e-12)
    np.testing.assert_allclose(tr.weights[0], [0.2, 0.2, 0.6], atol=1e-12)


def test_perturbation_rejection_halves_step():
    tr = integrate(linear2x2(), builtin("ssp33"),
                   IntegratorConfig(dt=1 / 3, t_end=1 / 3, adaptation="free", p_start=2, tol_delta=1e-3))
    assert tr.records[0].status is StepStatus.REJECTED_PERTURBATION
    assert tr.records[1].dt == pytest.approx(tr.records[0].dt / 2)
    assert tr.completed


def test_unadapted_run_goes_negative_adapted_does_not():
    off = integrate(reaction4(), builtin("cashkarp"), IntegratorConfig(dt=0.005, t_end=2.5))
    free = integrate(reaction4(), builtin("cashkarp"),
                     IntegratorConfig(dt=0.005, t_end=2.5, adaptation="free", p_start=4))
    assert off.summary()["min_accepted_state"] < 0
    s = free.summary()
    assert s["min_accepted_state"] >= -1e-12
    assert s["steps_adapted"] > 0
    assert s["max_invariant_drift"]["mass"] < 1e-12


def test_dt_min_failure_keeps_partial_trace():
    with pytest.raises(IntegrationFailure) as info:
        integrate(linear2x2(), builtin("ssp33"),
                  IntegratorConfig(dt=1 / 3, adaptation="free", p_start=3, p_min=3, dt_min=0.2))
    tr = info.value.trace
    assert not tr.completed
    assert tr.records and all(r.status is StepStatus.REJECTED_INFEASIBLE for r in tr.records)


def test_step_limit():
    with pytest.raises(IntegrationFailure):
        integrate(linear2x2(), builtin("rk4"), IntegratorConfig(dt=1e-3, max_steps=5))


def test_adaptive_run_respects_tolerance():
    prob = reaction4(t_end=1.0)
    tr = integrate(prob, builtin("dormandprince"), IntegratorConfig(mode="adaptive", tol=1e-6, dt=0.01))
    assert tr.completed
    assert all(r.err <= 1.0 for r in tr.accepted)
    fine = integrate(prob, builtin("dormandprince"), IntegratorConfig(dt=1e-3))
    assert np.abs(tr.final_state - fine.final_state).max() < 1e-4


def test_convex_mode_uses_candidates():
    prob = get_problem("diffusion", t_end=1e-3)
    tr = integrate(prob, builtin("extrapolation-be3"), IntegratorConfig(dt=1e-3, adaptation="convex"))
    rec = tr.records[0]
    assert rec.accepted and rec.adapted and rec.order == 1
    assert rec.min_before < 0 <= rec.min_after + 1e-15


def test_summary_counts_are_consistent():
    tr = integrate(linear2x2(), builtin("ssp33"),
                   IntegratorConfig(dt=1 / 3, t_end=1.0, adaptation="free", p_start=2))
    s = tr.summary()
    assert s["steps_total"] == s["steps_accepted"] + s["steps_rejected"]
    assert sum(s["rejections"].values()) == s["steps_rejected"]
