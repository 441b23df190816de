"""Time integration with bound-preserving weight adaptation.

Each step computes the stage derivatives once, forms the standard update and,
if it leaves the bounds, searches for modified weights from the starting order
downwards. Steps are shrunk when no admissible weights exist and, in adaptive
mode, when the error estimate (truncation estimate plus weight perturbation)
exceeds the tolerance.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np

from .adaptation import (
    TRIGGER_RTOL,
    ActiveSetError,
    AdaptationRequest,
    AdaptationStatus,
    bound_tolerance,
    convex_adapt,
    default_candidates,
    free_adapt,
)
from .order_conditions import MAX_ORDER, assemble
from .problems import OdeProblem
from .stepper import StageSolveFailure, combine, compute_stages
from .tableaux import ButcherTableau

log = logging.getLogger(__name__)

SAFETY = 0.9
FAC_MIN = 0.2
FAC_MAX = 5.0
PI_ALPHA = 0.7
PI_BETA = 0.4


class ConfigurationError(ValueError):
    pass


class StepStatus(enum.Enum):
    ACCEPTED = "accepted"
    REJECTED_ERROR = "rejected-error"
    REJECTED_PERTURBATION = "rejected-perturbation"
    REJECTED_INFEASIBLE = "rejected-infeasible"
    REJECTED_STAGE_SOLVE = "rejected-stage-solve"


@dataclass
class IntegratorConfig:
    """Integration settings.

    ``mode`` is ``"fixed"`` or ``"adaptive"``; ``adaptation`` is ``"off"``,
    ``"free"`` or ``"convex"``. In adaptive mode error norms are weighted RMS
    norms with weights ``atol + rtol*|u|`` (both default to ``tol``) and a step
    is accepted when the combined error is at most 1; ``tol_delta`` is then
    measured in the same scaled units. In fixed mode the perturbation is the
    max-norm in solution units and defaults to ``1e-2 * |u|_inf``.
    """

    mode: str = "fixed"
    dt: float = 1e-2
    tol: float = 1e-2
    atol: float | None = None
    rtol: float | None = None
    dt_min: float = 1e-14
    dt_max: float = np.inf
    adaptation: str = "off"
    p_start: int | None = None
    p_min: int = 1
    tol_delta: float | None = None
    candidates: list[str] | None = None
    active_set: bool = True
    t_end: float | None = None
    output_times: tuple[float, ...] = ()
    keep_states: bool = False
    max_steps: int = 1_000_000

    def __post_init__(self):
        if self.mode not in ("fixed", "adaptive"):
            raise ConfigurationError(f"unknown mode {self.mode!r}")
        if self.adaptation not in ("off", "free", "convex"):
            raise ConfigurationError(f"unknown adaptation {self.adaptation!r}")
        if self.p_min < 1:
            raise ConfigurationError("p_min must be >= 1")
        if self.tol_delta is not None and self.tol_delta <= 0:
            raise ConfigurationError("tol_delta must be positive")
        if not self.dt_min < self.dt_max:
            raise ConfigurationError("dt_min must be smaller than dt_max")
        if self.dt <= 0:
            raise ConfigurationError("dt must be positive")


@dataclass
class StepRecord:
    t: float
    dt: float
    status: StepStatus
    adapted: bool = False
    order: int | None = None
    delta: float = 0.0
    err_T: float = np.nan
    err: float = np.nan
    weight_change: float = 0.0
    min_before: float = np.nan
    min_after: float = np.nan
    active_iterations: int = 0
    invariant_drift: dict = field(default_factory=dict)

    @property
    def accepted(self) -> bool:
        return self.status is StepStatus.ACCEPTED


@dataclass
class IntegrationTrace:
    problem: str
    method: str
    t0: float
    u0: np.ndarray
    records: list[StepRecord] = field(default_factory=list)
    snapshots: dict = field(default_factory=dict)
    states: list = field(default_factory=list)
    final_time: float = np.nan
    final_state: np.ndarray | None = None
    completed: bool = False
    weights: list = field(default_factory=list)

    @property
    def accepted(self) -> list[StepRecord]:
        return [r for r in self.records if r.accepted]

    @property
    def adapted(self) -> list[StepRecord]:
        return [r for r in self.records if r.accepted and r.adapted]

    @property
    def rejected(self) -> list[StepRecord]:
        return [r for r in self.records if not r.accepted]

    def summary(self) -> dict:
        acc = self.accepted
        ad = self.adapted
        drift = {}
        for r in acc:
            for k, v in r.invariant_drift.items():
                drift[k] = max(drift.get(k, 0.0), v)
        return {
            "problem": self.problem,
            "method": self.method,
            "completed": self.completed,
            "final_time": self.final_time,
            "steps_total": len(self.records),
            "steps_accepted": len(acc),
            "steps_rejected": len(self.records) - len(acc),
            "steps_adapted": len(ad),
            "min_before_adaptation": min((r.min_before for r in ad), default=None),
            "min_after_adaptation": min((r.min_after for r in ad), default=None),
            "min_accepted_state": min((r.min_after for r in acc), default=None),
            "max_invariant_drift": drift,
            "max_active_iterations": max((r.active_iterations for r in acc), default=0),
            "min_adapted_order": min((r.order for r in ad), default=None),
            "rejections": {st.value: sum(r.status is st for r in self.records)
                           for st in StepStatus if st is not StepStatus.ACCEPTED},
            "max_delta": max((r.delta for r in ad), default=0.0),
            "max_delta_over_err_T": max((r.delta / r.err_T for r in ad if r.err_T > 0), default=None),
        }


class IntegrationFailure(RuntimeError):
    def __init__(self, message, trace):
        super().__init__(message)
        self.trace = trace


def pi_step_control(err, err_prev, dt, order, first=False):
    """Next step size from the current and previous scaled errors (1 = tolerance).

    Uses the PI formula 0.9 e_n^(-0.7/k) e_{n-1}^(0.4/k) clamped to [0.2, 5];
    the first step (or ``err_prev is None``) uses the I-controller e_n^(-1/k).
    """
    e = max(err, 1e-10)
    if first or err_prev is None:
        fac = SAFETY * e ** (-1.0 / order)
    else:
        fac = SAFETY * e ** (-PI_ALPHA / order) * max(err_prev, 1e-10) ** (PI_BETA / order)
    return dt * min(FAC_MAX, max(FAC_MIN, fac))


def estimate_error(F, dt, b, b_hat, b_tilde, norm):
    """Truncation estimate ``|dt F (b - b_hat)|``, perturbation
    ``|dt F (b_tilde - b)|`` and their sum."""
    err_T = norm(dt * (F @ (b - b_hat))) if b_hat is not None else np.nan
    delta = norm(dt * (F @ (b_tilde - b)))
    return err_T, delta, err_T + delta


class _Bounds:
    def __init__(self, problem):
        self.lower = problem.lower
        self.upper = problem.upper

    def violated(self, state, eps):
        if self.lower is not None and np.any(state < self.lower - eps):
            return True
        if self.upper is not None and np.any(state > self.upper + eps):
            return True
        return False


def integrate(problem: OdeProblem, tableau: ButcherTableau, config: IntegratorConfig) -> IntegrationTrace:
    if not tableau.is_runnable:
        raise ConfigurationError(f"{tableau.name} is fully implicit and cannot be integrated")
    adaptive = config.mode == "adaptive"
    b = tableau.b
    emb = tableau.embedded[0] if tableau.embedded else None
    if adaptive and emb is None:
        raise ConfigurationError(f"adaptive mode needs embedded weights; {tableau.name} has none")
    b_hat = emb.weights if emb is not None else None

    p_start = min(config.p_start or tableau.p, tableau.p, MAX_ORDER)
    p_min = min(config.p_min, p_start)
    systems = {p: assemble(tableau, p) for p in range(p_min, p_start + 1)}
    if config.adaptation == "convex":
        B, orders = default_candidates(tableau)
        if config.candidates is not None:
            keep = [0] + [k + 1 for k, e in enumerate(tableau.embedded) if e.label in config.candidates]
            B, orders = B[:, keep], [orders[k] for k in keep]

    atol = config.tol if config.atol is None else config.atol
    rtol = config.tol if config.rtol is None else config.rtol

    t0 = problem.t_span[0]
    t_end = problem.t_span[1] if config.t_end is None else config.t_end
    u = problem.u0.copy()
    inv0 = {lab: float(m @ u) for lab, m in problem.invariants}
    bounds = _Bounds(problem)
    trace = IntegrationTrace(problem.name, tableau.name, t0, u.copy())
    outputs = sorted(x for x in config.output_times if t0 < x <= t_end)
    if config.keep_states:
        trace.states.append((t0, u.copy()))

    t = t0
    dt = min(config.dt, config.dt_max)
    err_prev = None
    first = True
    after_reject = False
    nominal = config.dt
    span = abs(t_end - t0)

    while t < t_end - 1e-12 * span:
        if len(trace.records) >= config.max_steps:
            raise IntegrationFailure(f"step limit {config.max_steps} reached at t={t:g}", trace)
        if dt < config.dt_min:
            trace.final_time, trace.final_state = t, u.copy()
            raise IntegrationFailure(f"step size {dt:.3e} fell below dt_min at t={t:g}", trace)
        h = min(dt, t_end - t)
        if outputs and t + h > outputs[0] + 1e-12 * span:
            h = outputs[0] - t
        if adaptive:
            def norm(v, _u=u):
                return float(np.sqrt(np.mean((v / (atol + rtol * np.abs(_u))) ** 2)))
            tol_delta = 1.0 if config.tol_delta is None else config.tol_delta
        else:
            def norm(v):
                return float(np.max(np.abs(v), initial=0.0))
            tol_delta = config.tol_delta

        rec = StepRecord(t=t, dt=h, status=StepStatus.ACCEPTED)
        try:
            stages = compute_stages(problem, tableau, t, u, h)
        except StageSolveFailure as exc:
            log.debug("stage solve failed: %s", exc)
            rec.status = StepStatus.REJECTED_STAGE_SOLVE
            trace.records.append(rec)
            dt = 0.5 * h
            after_reject = True
            continue
        F = stages.F
        u_new = combine(u, h, F, b)
        rec.min_before = rec.min_after = float(np.min(u_new))
        w = b
        order_used = tableau.p
        eps = bound_tolerance(u, u_new, rtol=TRIGGER_RTOL)
        if tol_delta is None:
            tol_delta = 1e-2 * max(np.max(np.abs(u)), np.max(np.abs(u_new)), np.finfo(float).tiny)

        if config.adaptation != "off" and bounds.violated(u_new, eps):
            found = None
            perturbation_reject = False
            for pt in range(p_start, p_min - 1, -1):
                req = AdaptationRequest(F, u, h, b, problem.lower, problem.upper, systems[pt])
                try:
                    if config.adaptation == "free":
                        res = free_adapt(req, active_set=config.active_set)
                    else:
                        res = convex_adapt(req, B, orders, active_set=config.active_set)
                except ActiveSetError as exc:
                    log.debug("order %d: %s", pt, exc)
                    res = None
                if res is None or res.status is AdaptationStatus.INFEASIBLE:
                    if config.adaptation == "convex":
                        break
                    continue
                delta = norm(h * (F @ (res.weights - b)))
                if delta < tol_delta:
                    found = res
                    break
                perturbation_reject = True
                if config.adaptation == "convex":
                    break
            if found is None:
                rec.adapted = True
                rec.status = (StepStatus.REJECTED_PERTURBATION if perturbation_reject
                              else StepStatus.REJECTED_INFEASIBLE)
                trace.records.append(rec)
                dt = 0.5 * h
                after_reject = True
                continue
            w = found.weights
            order_used = found.order
            u_new = combine(u, h, F, w)
            rec.adapted = True
            rec.order = found.order
            rec.active_iterations = found.active_iterations
            rec.weight_change = float(np.sum(np.abs(w - b)))
            rec.min_after = float(np.min(u_new))

        err_T, delta, err = estimate_error(F, h, b, b_hat, w, norm)
        rec.err_T, rec.delta, rec.err = err_T, delta, err

        if adaptive:
            k = min(order_used, emb.order) + 1
            if err > 1.0:
                rec.status = StepStatus.REJECTED_ERROR
                trace.records.append(rec)
                dt = min(pi_step_control(err, None, h, k, first=True), SAFETY * h)
                after_reject = True
                continue
            dt_next = pi_step_control(err, err_prev, h, k, first=first)
            if after_reject:
                dt_next = min(dt_next, h)
            dt = min(dt_next, config.dt_max)
            err_prev = max(err, 1e-10)
            first = False
        else:
            dt = nominal

        after_reject = False
        rec.invariant_drift = {
            lab: abs(float(m @ u_new) - inv0[lab]) / max(abs(inv0[lab]), np.finfo(float).tiny)
            for lab, m in problem.invariants
        }
        trace.records.append(rec)
        trace.weights.append(w.copy() if rec.adapted else None)
        t = t_end if abs(t_end - (t + h)) <= 1e-12 * span else t + h
        if outputs and abs(t - outputs[0]) <= 1e-12 * span:
            t = outputs.pop(0)
            trace.snapshots[t] = u_new.copy()
        u = u_new
        if config.keep_states:
            trace.states.append((t, u.copy()))

    trace.final_time = t
    trace.final_state = u
    trace.completed = True
    return trace
