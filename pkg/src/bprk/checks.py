"""Randomized property suites, shared by ``bprk selftest`` and the test-suite.

Each suite draws its cases from a ``numpy.random.Generator`` and returns a
``SuiteResult`` counting draws and failures, so callers decide how to report.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import linprog
from .stability import (
    REGION_TOL,
    _resolvent_e,
    perturbation_bound_check,
    stability_function,
    verify_convex_containment,
)
from .tableaux import METHODS, ButcherTableau, builtin


@dataclass
class SuiteResult:
    name: str
    draws: int = 0
    failures: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.draws > 0 and not self.failures

    def line(self) -> str:
        return f"{'PASS' if self.ok else 'FAIL'} {self.name}: {self.draws} draws, {len(self.failures)} failures"


# -- LP oracle ---------------------------------------------------------------

def vertex_enumeration(lp: linprog.LinearProgram, box: float = 1e3):
    """Brute-force LP solution for tiny problems with finite lower bounds.

    Every choice of active inequalities that pins down a unique point together
    with the equalities is solved, and the best feasible point kept. An
    artificial box ``x <= lb + box`` keeps the feasible set bounded; if the
    optimum touches it, the solve is repeated with a ten times larger box and
    an improvement means the LP is unbounded. Returns ``(status, objective, x)``.
    """
    if not np.all(np.isfinite(lp.lb)):
        raise ValueError("oracle needs finite lower bounds")
    n = lp.c.size
    E, f = lp.A_eq, lp.b_eq
    if E.shape[0]:
        # keep an independent subset of the equality rows; inconsistent systems are infeasible
        r = np.linalg.matrix_rank(E)
        keep = []
        for i in range(E.shape[0]):
            if np.linalg.matrix_rank(E[keep + [i]]) > len(keep):
                keep.append(i)
        if np.linalg.matrix_rank(np.column_stack([E, f])) > r:
            return linprog.LpStatus.INFEASIBLE, None, None
        E, f = E[keep], f[keep]
    tol = 1e-9

    def best_vertex(B):
        G = np.vstack([lp.A_ub, -np.eye(n), np.eye(n)])
        h = np.concatenate([lp.b_ub, -lp.lb, lp.lb + B])
        best = None
        for rows in itertools.combinations(range(G.shape[0]), n - E.shape[0]):
            M = np.vstack([E, G[list(rows)]])
            if abs(np.linalg.det(M)) < 1e-10:
                continue
            x = np.linalg.solve(M, np.concatenate([f, h[list(rows)]]))
            if np.any(G @ x > h + tol):
                continue
            val = float(lp.c @ x)
            if best is None or val < best[0] - 1e-12:
                best = (val, x)
        return best

    small = best_vertex(box)
    if small is None:
        return linprog.LpStatus.INFEASIBLE, None, None
    if np.any(small[1] >= lp.lb + box - 1e-6):
        large = best_vertex(10 * box)
        if large[0] < small[0] - 1e-7 * max(1.0, abs(small[0])):
            return linprog.LpStatus.UNBOUNDED, None, None
    return linprog.LpStatus.OPTIMAL, small[0], small[1]


def random_lp(rng: np.random.Generator) -> linprog.LinearProgram:
    n = int(rng.integers(2, 5))
    m_ub = int(rng.integers(1, 5))
    m_eq = int(rng.integers(0, 3))
    c = rng.integers(-5, 6, n).astype(float)
    A_ub = rng.integers(-4, 5, (m_ub, n)).astype(float)
    b_ub = rng.integers(-3, 10, m_ub).astype(float)
    A_eq = rng.integers(-3, 4, (m_eq, n)).astype(float)
    b_eq = rng.integers(-2, 6, m_eq).astype(float)
    lb = np.zeros(n) if rng.random() < 0.7 else rng.integers(-2, 2, n).astype(float)
    return linprog.LinearProgram(c=c, A_eq=A_eq, b_eq=b_eq, A_ub=A_ub, b_ub=b_ub, lb=lb)


def lp_oracle_suite(rng: np.random.Generator, draws: int = 500, tol: float = 1e-8) -> SuiteResult:
    res = SuiteResult("simplex vs vertex enumeration")
    for _ in range(draws):
        lp = random_lp(rng)
        sol = linprog.solve(lp)
        status, obj, _ = vertex_enumeration(lp)
        res.draws += 1
        if sol.status is not status:
            res.failures.append((lp, sol.status, status))
        elif status is linprog.LpStatus.OPTIMAL and abs(sol.objective_value - obj) > tol * max(1.0, abs(obj)):
            res.failures.append((lp, sol.objective_value, obj))
    return res


# -- stability ---------------------------------------------------------------

def random_dirk(rng: np.random.Generator, s: int | None = None, explicit: bool | None = None) -> ButcherTableau:
    s = int(rng.integers(1, 6)) if s is None else s
    explicit = bool(rng.random() < 0.5) if explicit is None else explicit
    A = np.tril(rng.uniform(-0.5, 1.0, (s, s)), -1)
    if not explicit:
        A[np.diag_indices(s)] = rng.uniform(0.1, 1.0, s)
    b = rng.dirichlet(np.ones(s))
    return ButcherTableau(f"random-{s}", A, b, A.sum(axis=1), 1)


def _random_z(rng, scale=4.0):
    return complex(rng.uniform(-2 * scale, 0.5 * scale), rng.uniform(-scale, scale))


def containment_suite(rng: np.random.Generator, draws: int = 10_000) -> SuiteResult:
    """Convex combinations keep |R| below the combined bound on the
    intersection of the ingredient regions."""
    res = SuiteResult("convex containment")
    for _ in range(draws):
        tab = random_dirk(rng)
        K = int(rng.integers(2, 4))
        B = np.column_stack([rng.dirichlet(np.ones(tab.s)) * rng.uniform(0.5, 1.5) for _ in range(K)])
        g = rng.dirichlet(np.ones(K))
        rep = verify_convex_containment(tab, B, g, [_random_z(rng)])
        res.draws += 1
        res.failures.extend(rep.violations)
    return res


def perturbation_suite(rng: np.random.Generator, draws: int = 10_000) -> SuiteResult:
    """|R_{b~}| <= |R_b| + |b~-b|_1 |z (I-zA)^{-1} e|_inf over catalog methods."""
    res = SuiteResult("perturbation bound")
    tabs = [builtin(m) for m in METHODS]
    for _ in range(draws):
        tab = tabs[int(rng.integers(len(tabs)))]
        z = _random_z(rng)
        if _resolvent_e(tab.A, z) is None:
            continue
        bt = tab.b + rng.normal(scale=rng.choice([1e-3, 1e-1, 1.0]), size=tab.s)
        res.draws += 1
        if not perturbation_bound_check(tab, tab.b, bt, z):
            res.failures.append((tab.name, z, bt))
    return res


def affinity_suite(rng: np.random.Generator, draws: int = 1000, tol: float = 1e-12) -> SuiteResult:
    res = SuiteResult("affinity in the weights")
    for _ in range(draws):
        tab = random_dirk(rng)
        w1, w2 = rng.normal(size=tab.s), rng.normal(size=tab.s)
        z = complex(rng.uniform(-3, 0.5), rng.uniform(-2, 2))
        if _resolvent_e(tab.A, z) is None:
            continue
        t = rng.uniform(-1, 2)
        r1, r2 = stability_function(tab, w1, z), stability_function(tab, w2, z)
        rt = stability_function(tab, w1 + t * (w2 - w1), z)
        scale = max(1.0, abs(r1), abs(r2))
        res.draws += 1
        if abs(rt - (r1 + t * (r2 - r1))) > tol * scale * (1 + abs(t)):
            res.failures.append((z, t))
    return res


def ssp33_interval() -> SuiteResult:
    res = SuiteResult("SSP33 |R| <= 1 on [-2.5, 0]")
    tab = builtin("ssp33")
    for x in np.linspace(-2.5, 0.0, 251):
        res.draws += 1
        if abs(stability_function(tab, tab.b, x)) > 1.0 + REGION_TOL:
            res.failures.append(x)
    return res


def run_all(seed: int = 0, draws: int = 10_000, lp_draws: int = 500) -> list[SuiteResult]:
    rng = np.random.default_rng(seed)
    return [
        lp_oracle_suite(rng, lp_draws),
        containment_suite(rng, draws),
        perturbation_suite(rng, draws),
        affinity_suite(rng, min(draws, 1000)),
        ssp33_interval(),
    ]
