"""Dense two-phase simplex for the small LPs arising in weight adaptation.

Problems are stated as::

    minimize    c @ x
    subject to  A_eq @ x == b_eq
                A_ub @ x <= b_ub
                x >= lb          (lb entries may be -inf for free variables)

and converted to standard form internally: shifted lower bounds, free
variables split into positive and negative parts, one slack per inequality,
rows scaled to unit max-norm.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)

PIVOT_TOL = 1e-10
FEAS_TOL = 1e-9
MAX_PIVOTS = 10_000
BLAND_AFTER = 50


class LpStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


class SolverStalled(RuntimeError):
    """Pivot limit reached before the simplex terminated."""


@dataclass
class LinearProgram:
    c: np.ndarray
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    A_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None
    lb: np.ndarray | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        n = self.c.size
        self.A_eq, self.b_eq = _rows(self.A_eq, self.b_eq, n, "eq")
        self.A_ub, self.b_ub = _rows(self.A_ub, self.b_ub, n, "ub")
        self.lb = np.zeros(n) if self.lb is None else np.asarray(self.lb, dtype=float).ravel()
        if self.lb.shape != (n,):
            raise ValueError("lb has wrong length")
        for arr in (self.c, self.A_eq, self.b_eq, self.A_ub, self.b_ub):
            if not np.all(np.isfinite(arr)):
                raise ValueError("LP data must be finite")
        if np.any(np.isnan(self.lb)) or np.any(self.lb == np.inf):
            raise ValueError("lower bounds must be finite or -inf")

    @property
    def n(self) -> int:
        return self.c.size

    def violation(self, x) -> float:
        """Largest constraint violation of ``x`` (rows scaled to unit max-norm)."""
        x = np.asarray(x, dtype=float)
        worst = float(np.max(self.lb - x, initial=0.0))
        for A, b, eq in ((self.A_eq, self.b_eq, True), (self.A_ub, self.b_ub, False)):
            if not b.size:
                continue
            scale = np.maximum(np.max(np.abs(A), axis=1), 1e-300)
            res = (A @ x - b) / scale
            res = np.abs(res) if eq else res
            worst = max(worst, float(np.max(res, initial=0.0)))
        return worst


def _rows(A, b, n, what):
    if A is None or (b is not None and np.size(b) == 0):
        return np.zeros((0, n)), np.zeros(0)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float).ravel()
    if A.shape != (b.size, n):
        raise ValueError(f"A_{what} has shape {A.shape}, expected ({b.size}, {n})")
    return A, b


@dataclass
class LpSolution:
    status: LpStatus
    x: np.ndarray | None
    objective_value: float
    pivots: int = 0

    @property
    def optimal(self) -> bool:
        return self.status is LpStatus.OPTIMAL


class _Tableau:
    """Simplex tableau ``T = [[A, b], [d, -z]]`` with an explicit basis list."""

    def __init__(self, A, b, basis, max_pivots):
        m, N = A.shape
        self.T = np.zeros((m + 1, N + 1))
        self.T[:m, :N] = A
        self.T[:m, N] = b
        self.basis = list(basis)
        self.rows = list(range(m))
        self.pivots = 0
        self.max_pivots = max_pivots

    @property
    def m(self):
        return self.T.shape[0] - 1

    def set_costs(self, cost):
        self.T[-1, :] = 0.0
        self.T[-1, : cost.size] = cost
        for i, j in enumerate(self.basis):
            if self.T[-1, j] != 0.0:
                self.T[-1] -= self.T[-1, j] * self.T[i]

    def pivot(self, row, col):
        T = self.T
        T[row] /= T[row, col]
        colv = T[:, col].copy()
        colv[row] = 0.0
        T -= np.outer(colv, T[row])
        T[:, col] = 0.0
        T[row, col] = 1.0
        self.basis[row] = col
        self.pivots += 1
        if self.pivots > self.max_pivots:
            raise SolverStalled(f"simplex exceeded {self.max_pivots} pivots")

    def run(self, allowed):
        """Iterate to optimality over columns flagged in ``allowed``.

        Returns False when the objective is unbounded below.
        """
        T = self.T
        degenerate = 0
        bland = False
        while True:
            d = T[-1, :-1]
            cand = np.flatnonzero(allowed & (d < -PIVOT_TOL))
            if cand.size == 0:
                return True
            if bland:
                col = int(cand[0])
            else:
                # argmin returns the lowest index among ties
                col = int(cand[np.argmin(d[cand])])
            colv = T[:-1, col]
            rows = np.flatnonzero(colv > PIVOT_TOL)
            if rows.size == 0:
                return False
            ratios = T[rows, -1] / colv[rows]
            rmin = ratios.min()
            ties = rows[ratios <= rmin + PIVOT_TOL * max(1.0, abs(rmin))]
            row = int(min(ties, key=lambda r: self.basis[r]))
            if T[row, -1] <= PIVOT_TOL:
                degenerate += 1
                if degenerate >= BLAND_AFTER and not bland:
                    log.debug("switching to Bland's rule after %d degenerate pivots", degenerate)
                    bland = True
            else:
                degenerate = 0
            self.pivot(row, col)


def solve(lp: LinearProgram, max_pivots: int = MAX_PIVOTS) -> LpSolution:
    """Solve ``lp`` with a two-phase dense simplex."""
    n = lp.n
    free = np.isneginf(lp.lb)
    shift = np.where(free, 0.0, lp.lb)
    # standard-form columns: x' (n), x^- for free variables, slacks
    nfree = int(free.sum())
    Eq = np.hstack([lp.A_eq, -lp.A_eq[:, free]])
    Ub = np.hstack([lp.A_ub, -lp.A_ub[:, free]])
    heq = lp.b_eq - lp.A_eq @ shift
    hub = lp.b_ub - lp.A_ub @ shift
    nx = n + nfree
    mu = hub.size

    A = np.vstack([
        np.hstack([Eq, np.zeros((heq.size, mu))]),
        np.hstack([Ub, np.eye(mu)]),
    ])
    rhs = np.concatenate([heq, hub])
    is_ub = np.concatenate([np.zeros(heq.size, bool), np.ones(mu, bool)])

    scale = np.max(np.abs(A), axis=1) if A.size else np.zeros(0)
    keep = np.ones(rhs.size, bool)
    for i in np.flatnonzero(scale == 0.0):
        # all-zero coefficient rows: 0 == h or 0 <= w
        bad = rhs[i] < -FEAS_TOL if is_ub[i] else abs(rhs[i]) > FEAS_TOL
        if bad:
            return LpSolution(LpStatus.INFEASIBLE, None, np.nan)
        keep[i] = False
    A, rhs, scale, is_ub = A[keep], rhs[keep], scale[keep], is_ub[keep]
    keep_idx = np.flatnonzero(keep)
    A = A / scale[:, None]
    rhs = rhs / scale
    neg = rhs < 0
    A[neg] *= -1.0
    rhs[neg] *= -1.0

    m, N = A.shape
    cost = np.concatenate([lp.c, -lp.c[free], np.zeros(mu)])

    # initial basis: slacks with +1 coefficient, artificials elsewhere
    slack_col = {int(i): nx + int(keep_idx[i]) - heq.size for i in np.flatnonzero(is_ub)}
    basis = []
    art_rows = []
    for i in range(m):
        j = slack_col.get(i)
        if j is not None and A[i, j] > 0:
            basis.append(j)
        else:
            basis.append(None)
            art_rows.append(i)
    na = len(art_rows)
    Afull = np.hstack([A, np.zeros((m, na))])
    for k, i in enumerate(art_rows):
        Afull[i, N + k] = 1.0
        basis[i] = N + k
    tab = _Tableau(Afull, rhs, basis, max_pivots)

    if na:
        tab.set_costs(np.concatenate([np.zeros(N), np.ones(na)]))
        allowed = np.ones(N + na, bool)
        tab.run(allowed)
        if -tab.T[-1, -1] > FEAS_TOL:
            return LpSolution(LpStatus.INFEASIBLE, None, np.nan, tab.pivots)
        _drive_out_artificials(tab, N)
    tab.set_costs(np.concatenate([cost, np.zeros(tab.T.shape[1] - 1 - N)]))
    allowed = np.zeros(tab.T.shape[1] - 1, bool)
    allowed[:N] = True
    if not tab.run(allowed):
        return LpSolution(LpStatus.UNBOUNDED, None, -np.inf, tab.pivots)

    # recompute basic values from the scaled constraint matrix for accuracy
    basis = np.array(tab.basis)
    z = np.zeros(N)
    try:
        z[basis] = np.linalg.solve(A[np.ix_(tab.rows, basis)], rhs[tab.rows])
    except np.linalg.LinAlgError:
        z[basis] = tab.T[:-1, -1]
    x = z[:n].copy()
    if nfree:
        x[free] -= z[n:nx]
    x += shift
    return LpSolution(LpStatus.OPTIMAL, x, float(lp.c @ x), tab.pivots)


def _drive_out_artificials(tab: _Tableau, N: int):
    """Pivot zero-level artificials out of the basis; drop redundant rows."""
    i = 0
    while i < tab.m:
        if tab.basis[i] >= N:
            row = tab.T[i, :N]
            cols = np.flatnonzero(np.abs(row) > PIVOT_TOL)
            if cols.size:
                tab.pivot(i, int(cols[np.argmax(np.abs(row[cols]))]))
            else:
                tab.T = np.delete(tab.T, i, axis=0)
                del tab.basis[i]
                del tab.rows[i]
                continue
        i += 1
