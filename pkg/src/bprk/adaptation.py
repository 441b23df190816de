"""Choice of modified weights by linear programming.

Given the stage derivatives ``F`` of a step, the update ``u + dt F w`` is
affine in the weights ``w``. Bound constraints on the update and the order
conditions ``Q w = r`` are therefore linear, and the weights closest to the
original ``b`` in the 1-norm solve an LP. Two variants are provided:

* free adaptation: any ``w`` satisfying the order conditions of a target order;
* convex adaptation: ``w`` restricted to convex combinations of given columns.

Only a subset of the bound rows (the *active set*) enters the LP; it is grown
until the full update respects every bound.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import linprog
from .order_conditions import OrderConditionSystem

BOUND_RTOL = 1e-9
TRIGGER_RTOL = 1e-14
ORDER_TOL = 1e-9
MAX_ACTIVE_ITERATIONS = 10
WEIGHT_ACTIVE_TOL = 1e-12


class AdaptationStatus(enum.Enum):
    UNMODIFIED = "unmodified"
    ADAPTED = "adapted"
    INFEASIBLE = "infeasible"


class ActiveSetError(RuntimeError):
    pass


def bound_tolerance(*states, rtol: float = BOUND_RTOL) -> float:
    """Slack allowed on bound constraints: ``rtol`` times the largest state entry.

    LP results are accepted within ``BOUND_RTOL``; the unadapted update counts
    as violating once it is outside the bounds by more than roundoff
    (``TRIGGER_RTOL``).
    """
    return rtol * max(float(np.max(np.abs(s), initial=0.0)) for s in states)


@dataclass
class AdaptationRequest:
    F: np.ndarray
    u: np.ndarray
    dt: float
    b: np.ndarray
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    order_system: OrderConditionSystem | None = None

    def __post_init__(self):
        self.F = np.asarray(self.F, dtype=float)
        self.u = np.asarray(self.u, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        m, s = self.F.shape
        if self.u.shape != (m,) or self.b.shape != (s,):
            raise ValueError("F, u and b have inconsistent shapes")
        if self.lower is not None and self.upper is not None and np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")

    @property
    def s(self) -> int:
        return self.b.size

    def update(self, w) -> np.ndarray:
        return self.u + self.dt * (self.F @ w)

    def violations(self, state, eps):
        """Index arrays of components below ``lower - eps`` and above ``upper + eps``."""
        lo = np.flatnonzero(state < self.lower - eps) if self.lower is not None else np.zeros(0, int)
        hi = np.flatnonzero(state > self.upper + eps) if self.upper is not None else np.zeros(0, int)
        return lo, hi


@dataclass
class AdaptationResult:
    weights: np.ndarray
    order: int | None
    delta: float
    status: AdaptationStatus
    active_iterations: int = 0
    objective: float = 0.0
    mixture: np.ndarray | None = None
    active_lower: np.ndarray = field(default_factory=lambda: np.zeros(0, int))
    active_upper: np.ndarray = field(default_factory=lambda: np.zeros(0, int))

    @property
    def enlargements(self) -> int:
        return max(self.active_iterations - 1, 0)

    @property
    def feasible(self) -> bool:
        return self.status is not AdaptationStatus.INFEASIBLE


def _bound_rows(req, G, u_base, lo_idx, hi_idx):
    """Rows ``A x <= w`` for the bound constraints on ``u_base + dt F G x``."""
    A, w = [], []
    if lo_idx.size:
        A.append(-req.dt * req.F[lo_idx] @ G)
        w.append(u_base[lo_idx] - req.lower[lo_idx])
    if hi_idx.size:
        A.append(req.dt * req.F[hi_idx] @ G)
        w.append(req.upper[hi_idx] - u_base[hi_idx])
    if not A:
        return np.zeros((0, G.shape[1])), np.zeros(0)
    return np.vstack(A), np.concatenate(w)


def _solve_free(req, lo_idx, hi_idx):
    s = req.s
    Q, r = req.order_system.Q, req.order_system.r
    # x = [d+, d-], w = b + d+ - d-
    G = np.hstack([np.eye(s), -np.eye(s)])
    u_base = req.update(req.b)
    A_ub, b_ub = _bound_rows(req, G, u_base, lo_idx, hi_idx)
    lp = linprog.LinearProgram(
        c=np.ones(2 * s), A_eq=Q @ G, b_eq=r - Q @ req.b, A_ub=A_ub, b_ub=b_ub, lb=np.zeros(2 * s),
    )
    sol = linprog.solve(lp)
    if not sol.optimal:
        return None, None, None
    return req.b + G @ sol.x, sol.objective_value, None


def _solve_convex(req, B, lo_idx, hi_idx):
    s, K = B.shape
    # x = [g, t]: minimize sum t subject to |B g - b| <= t
    Gw = np.hstack([B, np.zeros((s, s))])
    A_ub = [np.hstack([np.eye(K), np.zeros((K, s))]),
            np.hstack([B, -np.eye(s)]),
            np.hstack([-B, -np.eye(s)])]
    b_ub = [np.ones(K), req.b, -req.b]
    rows, rhs = _bound_rows(req, Gw, req.u, lo_idx, hi_idx)
    lp = linprog.LinearProgram(
        c=np.concatenate([np.zeros(K), np.ones(s)]),
        A_eq=np.concatenate([np.ones(K), np.zeros(s)])[None, :], b_eq=[1.0],
        A_ub=np.vstack(A_ub + [rows]), b_ub=np.concatenate(b_ub + [rhs]),
        lb=np.zeros(K + s),
    )
    sol = linprog.solve(lp)
    if not sol.optimal:
        return None, None, None
    g = sol.x[:K]
    return B @ g, sol.objective_value, g


def reduce_active_set(req: AdaptationRequest, solver: str = "free", B=None, orders=None,
                      active_set: bool = True) -> AdaptationResult:
    """Adapt weights so the update respects the bounds, growing the set of
    bound rows passed to the LP until the full update is feasible.

    With ``active_set=False`` every bound row enters the LP from the start.
    """
    u_new = req.update(req.b)
    lo, hi = req.violations(u_new, bound_tolerance(req.u, u_new, rtol=TRIGGER_RTOL))
    if lo.size == 0 and hi.size == 0:
        mix = None
        if solver == "convex":
            mix = _unit_mixture(B, req.b)
        return AdaptationResult(req.b.copy(), None, 0.0, AdaptationStatus.UNMODIFIED, mixture=mix)

    if not active_set:
        m = req.u.size
        lo = np.arange(m) if req.lower is not None else np.zeros(0, int)
        hi = np.arange(m) if req.upper is not None else np.zeros(0, int)

    if solver == "free":
        if req.order_system is None:
            raise ValueError("free adaptation needs an order-condition system")
        solve = lambda lo_, hi_: _solve_free(req, lo_, hi_)
    elif solver == "convex":
        B = np.asarray(B, dtype=float)
        if B.ndim != 2 or B.shape[0] != req.s or B.shape[1] < 1:
            raise ValueError("candidate matrix must be s x K with K >= 1")
        solve = lambda lo_, hi_: _solve_convex(req, B, lo_, hi_)
    else:
        raise ValueError(f"unknown adaptation strategy {solver!r}")

    for it in range(1, MAX_ACTIVE_ITERATIONS + 1):
        w, obj, g = solve(lo, hi)
        if w is None:
            return AdaptationResult(req.b.copy(), None, np.nan, AdaptationStatus.INFEASIBLE,
                                    active_iterations=it, active_lower=lo, active_upper=hi)
        u_tilde = req.update(w)
        eps = bound_tolerance(req.u, u_tilde)
        new_lo, new_hi = req.violations(u_tilde, eps)
        if new_lo.size == 0 and new_hi.size == 0:
            break
        # both sets are enlarged together
        lo = np.union1d(lo, new_lo)
        hi = np.union1d(hi, new_hi)
    else:
        raise ActiveSetError(f"active set did not settle in {MAX_ACTIVE_ITERATIONS} iterations")

    if solver == "free":
        order = req.order_system.p
    else:
        used = g > WEIGHT_ACTIVE_TOL
        order = int(min(np.asarray(orders)[used])) if orders is not None else None
    delta = float(np.max(np.abs(req.dt * (req.F @ (w - req.b))), initial=0.0))
    return AdaptationResult(w, order, delta, AdaptationStatus.ADAPTED, active_iterations=it,
                            objective=float(obj), mixture=g, active_lower=lo, active_upper=hi)


def _unit_mixture(B, b):
    if B is None:
        return None
    B = np.asarray(B, dtype=float)
    g = np.zeros(B.shape[1])
    hits = [k for k in range(B.shape[1]) if np.array_equal(B[:, k], b)]
    if hits:
        g[hits[0]] = 1.0
    return g


def free_adapt(req: AdaptationRequest, active_set: bool = True) -> AdaptationResult:
    """Weights closest to ``b`` in the 1-norm that satisfy the order conditions
    of ``req.order_system`` and keep the update within bounds."""
    return reduce_active_set(req, "free", active_set=active_set)


def convex_adapt(req: AdaptationRequest, B, orders=None, active_set: bool = True) -> AdaptationResult:
    """Weights ``B g`` with ``g`` in the probability simplex, closest to ``b``.

    ``orders[k]`` is the order of column ``k``; the reported order is the
    minimum over columns carrying weight.
    """
    return reduce_active_set(req, "convex", B=B, orders=orders, active_set=active_set)


def default_candidates(tableau):
    """The method's own weights followed by every embedded vector it carries."""
    cols = [tableau.b] + [e.weights for e in tableau.embedded]
    orders = [tableau.p] + [e.order for e in tableau.embedded]
    return np.column_stack(cols), orders
