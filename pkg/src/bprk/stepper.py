"""Stage computation for explicit and diagonally implicit Runge-Kutta methods."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .problems import OdeProblem
from .tableaux import ButcherTableau, Structure

NEWTON_TOL = 1e-10
NEWTON_MAXITER = 25
JACOBIAN_REFRESHES = 4
SLOW_CONTRACTION = 0.5


class UnsupportedStructure(ValueError):
    pass


class StageSolveFailure(RuntimeError):
    pass


@dataclass
class StageData:
    F: np.ndarray             # m x s, column j is f(t + c_j dt, y_j)
    stage_values: np.ndarray  # m x s
    newton_iterations: list[int]


def weighted_rms(v, y):
    return float(np.sqrt(np.mean((v / (1.0 + np.abs(y))) ** 2)))


def fd_jacobian(f, t, u, f0=None):
    """Forward-difference Jacobian with increments sqrt(eps) * (1 + |u_i|)."""
    f0 = f(t, u) if f0 is None else f0
    J = np.empty((f0.size, u.size))
    h = np.sqrt(np.finfo(float).eps) * (1.0 + np.abs(u))
    for i in range(u.size):
        up = u.copy()
        up[i] += h[i]
        J[:, i] = (f(t, up) - f0) / h[i]
    return J


class _IterationMatrix:
    """Factorization of I - gamma J, dense or sparse."""

    def __init__(self, J, gamma):
        if sp.issparse(J):
            M = sp.identity(J.shape[0], format="csc") - gamma * sp.csc_matrix(J)
            self._lu = spla.splu(M.tocsc())
            self.solve = self._lu.solve
        else:
            M = np.eye(J.shape[0]) - gamma * np.asarray(J)
            lu = scipy.linalg.lu_factor(M, check_finite=False)
            self.solve = lambda r: scipy.linalg.lu_solve(lu, r, check_finite=False)


def _solve_implicit_stage(problem, t, known, gamma, predictor):
    """Simplified Newton for y - gamma f(t, y) = known.

    The iteration matrix is built at the predictor and reused. When an
    increment shrinks by less than ``SLOW_CONTRACTION``, or the observed rate
    cannot reach the tolerance within the iteration budget, it is rebuilt at
    the current iterate, at most ``JACOBIAN_REFRESHES`` times per stage.
    """
    y = predictor.copy()
    refreshes = 0
    M = _IterationMatrix(_jacobian(problem, t, y), gamma)
    prev = np.inf
    for it in range(1, NEWTON_MAXITER + 1):
        res = y - gamma * problem.rhs(t, y) - known
        dy = -M.solve(res)
        y_next = y + dy
        if not np.all(np.isfinite(y_next)):
            break
        size = weighted_rms(dy, y_next)
        if size < NEWTON_TOL:
            return y_next, it
        rate = size / prev
        hopeless = rate < 1.0 and size * rate ** (NEWTON_MAXITER - it) > NEWTON_TOL
        if (rate > SLOW_CONTRACTION or hopeless) and refreshes < JACOBIAN_REFRESHES:
            refreshes += 1
            M = _IterationMatrix(_jacobian(problem, t, y), gamma)
            prev = np.inf
            continue
        y, prev = y_next, size
    raise StageSolveFailure(f"simplified Newton did not converge in {NEWTON_MAXITER} iterations at t={t:g}")


def _jacobian(problem, t, y):
    return problem.jac(t, y) if problem.jac is not None else fd_jacobian(problem.rhs, t, y)


def compute_stages(problem: OdeProblem, tableau: ButcherTableau, t: float, u: np.ndarray, dt: float) -> StageData:
    structure = tableau.structure
    if structure is Structure.FULLY_IMPLICIT:
        raise UnsupportedStructure(f"{tableau.name} is fully implicit; only explicit and DIRK tableaux can be run")
    A, c = tableau.A, tableau.c
    s, m = tableau.s, u.size
    F = np.zeros((m, s))
    Y = np.zeros((m, s))
    iters = [0] * s
    for j in range(s):
        known = u + dt * (F[:, :j] @ A[j, :j]) if j else u.copy()
        tj = t + c[j] * dt
        if A[j, j] == 0.0:
            y = known
        else:
            predictor = Y[:, j - 1] if j else u
            y, iters[j] = _solve_implicit_stage(problem, tj, known, dt * A[j, j], predictor)
        Y[:, j] = y
        F[:, j] = problem.rhs(tj, y)
    return StageData(F, Y, iters)


def combine(u: np.ndarray, dt: float, F: np.ndarray, w: np.ndarray) -> np.ndarray:
    """The Runge-Kutta update u + dt F w."""
    return u + dt * (F @ w)
