"""Butcher tableaux and the built-in method catalog.

Coefficients are written as exact rationals where the literature gives
rationals and converted to double precision once, at construction time.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from fractions import Fraction
from math import prod, sqrt

import numpy as np


class CatalogError(KeyError):
    """Unknown method identifier."""


class Structure(enum.Enum):
    EXPLICIT = "explicit"
    DIAGONALLY_IMPLICIT = "diagonally-implicit"
    FULLY_IMPLICIT = "fully-implicit"


@dataclass(frozen=True)
class EmbeddedWeights:
    label: str
    weights: np.ndarray
    order: int


@dataclass(frozen=True)
class ButcherTableau:
    """Runge-Kutta coefficients (A, b, c) with design order ``p``.

    ``embedded`` holds alternative weight vectors sharing ``A`` and ``c``; the
    first entry is the one used for error estimation.
    """

    name: str
    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    p: int
    embedded: tuple[EmbeddedWeights, ...] = field(default=())

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        b = np.array(self.b, dtype=float)
        c = np.array(self.c, dtype=float)
        s = b.size
        if A.shape != (s, s) or c.shape != (s,):
            raise ValueError(f"inconsistent tableau shapes: A {A.shape}, b {b.shape}, c {c.shape}")
        for arr in (A, b, c):
            arr.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)
        emb = []
        for e in self.embedded:
            w = np.array(e.weights, dtype=float)
            if w.shape != (s,):
                raise ValueError(f"embedded weights {e.label!r} have shape {w.shape}")
            w.setflags(write=False)
            emb.append(EmbeddedWeights(e.label, w, int(e.order)))
        object.__setattr__(self, "embedded", tuple(emb))

    @property
    def s(self) -> int:
        return self.b.size

    @property
    def structure(self) -> Structure:
        if not np.any(np.triu(self.A)):
            return Structure.EXPLICIT
        if not np.any(np.triu(self.A, 1)):
            return Structure.DIAGONALLY_IMPLICIT
        return Structure.FULLY_IMPLICIT

    @property
    def is_runnable(self) -> bool:
        return self.structure is not Structure.FULLY_IMPLICIT

    def embedded_by_label(self, label: str) -> EmbeddedWeights:
        for e in self.embedded:
            if e.label == label:
                return e
        raise KeyError(label)

    def with_weights(self, b) -> "ButcherTableau":
        return ButcherTableau(self.name, self.A, b, self.c, self.p, self.embedded)


def _fr(rows):
    return [[Fraction(x) for x in row] for row in rows]


def _lower(rows, s):
    """Pad ragged lower-triangular rows to an s x s list of Fractions."""
    out = []
    for row in rows:
        r = [Fraction(x) for x in row]
        out.append(r + [Fraction(0)] * (s - len(r)))
    return out


def _tab(name, A, b, c, p, embedded=()):
    to_f = lambda v: np.array([float(x) for x in v])
    emb = tuple(EmbeddedWeights(lab, to_f(w), o) for lab, w, o in embedded)
    return ButcherTableau(name, np.array([[float(x) for x in r] for r in A]), to_f(b), to_f(c), p, emb)


def _row_sums(A):
    return [sum(row, Fraction(0)) for row in A]


# -- explicit methods -------------------------------------------------------


def _ssp33():
    # Shu & Osher (1988)
    A = _lower([[], [1], ["1/4", "1/4"]], 3)
    return _tab("ssp33", A, [Fraction(1, 6), Fraction(1, 6), Fraction(2, 3)], _row_sums(A), 3)


def _rk4():
    A = _lower([[], ["1/2"], [0, "1/2"], [0, 0, 1]], 4)
    b = [Fraction(1, 6), Fraction(1, 3), Fraction(1, 3), Fraction(1, 6)]
    return _tab("rk4", A, b, _row_sums(A), 4)


def _shu_osher_to_butcher(program, s):
    """Run a low-storage SSP program symbolically to recover (A, b).

    Registers hold coefficient vectors over (u, dt*f_1, ..., dt*f_s). ``program``
    is a callable receiving ``(new_stage, combine)`` helpers.
    """
    stages = []

    def new_stage(reg):
        stages.append(list(reg))
        k = len(stages)
        out = list(reg)
        return k, out

    def zero():
        return [Fraction(0)] * (s + 1)

    final = program(new_stage, zero)
    A = [[Fraction(0)] * s for _ in range(s)]
    for i, reg in enumerate(stages):
        if reg[0] != 1:
            raise AssertionError("stage is not a consistent combination")
        for j in range(s):
            A[i][j] = reg[j + 1]
    return A, final[1:]


def _ssprk104():
    # Ketcheson (2008), low-storage SSPRK(10,4)
    s = 10
    sixth = Fraction(1, 6)

    def program(new_stage, zero):
        q1 = zero()
        q1[0] = Fraction(1)
        q2 = list(q1)

        def euler(q):
            k, _ = new_stage(q)
            r = list(q)
            r[k] += sixth
            return r

        for _ in range(5):
            q1 = euler(q1)
        q2 = [Fraction(1, 25) * x + Fraction(9, 25) * y for x, y in zip(q2, q1)]
        q1 = [15 * x - 5 * y for x, y in zip(q2, q1)]
        for _ in range(4):
            q1 = euler(q1)
        k, _ = new_stage(q1)
        out = [x + Fraction(3, 5) * y for x, y in zip(q2, q1)]
        out[k] += Fraction(1, 10)
        return out

    A, b = _shu_osher_to_butcher(program, s)
    return _tab("ssprk104", A, b, _row_sums(A), 4)


def _cash_karp():
    # Cash & Karp (1990), RK5(4)6
    A = _lower(
        [
            [],
            ["1/5"],
            ["3/40", "9/40"],
            ["3/10", "-9/10", "6/5"],
            ["-11/54", "5/2", "-70/27", "35/27"],
            ["1631/55296", "175/512", "575/13824", "44275/110592", "253/4096"],
        ],
        6,
    )
    b = [Fraction(x) for x in ("37/378", "0", "250/621", "125/594", "0", "512/1771")]
    bhat = [Fraction(x) for x in ("2825/27648", "0", "18575/48384", "13525/55296", "277/14336", "1/4")]
    return _tab("cashkarp", A, b, _row_sums(A), 5, [("order4", bhat, 4)])


def _dormand_prince():
    # Dormand & Prince (1980), RK5(4)7M
    A = _lower(
        [
            [],
            ["1/5"],
            ["3/40", "9/40"],
            ["44/45", "-56/15", "32/9"],
            ["19372/6561", "-25360/2187", "64448/6561", "-212/729"],
            ["9017/3168", "-355/33", "46732/5247", "49/176", "-5103/18656"],
            ["35/384", "0", "500/1113", "125/192", "-2187/6784", "11/84"],
        ],
        7,
    )
    b = list(A[6])
    bhat = [Fraction(x) for x in ("5179/57600", "0", "7571/16695", "393/640", "-92097/339200", "187/2100", "1/40")]
    return _tab("dormandprince", A, b, _row_sums(A), 5, [("order4", bhat, 4)])


# -- implicit methods -------------------------------------------------------


def _backward_euler():
    return _tab("backwardeuler", [[Fraction(1)]], [Fraction(1)], [Fraction(1)], 1)


def _sdirk54():
    # Hairer & Wanner, Solving ODEs II, eq. (IV.6.18); gamma = 1/4
    A = _lower(
        [
            ["1/4"],
            ["1/2", "1/4"],
            ["17/50", "-1/25", "1/4"],
            ["371/1360", "-137/2720", "15/544", "1/4"],
            ["25/24", "-49/48", "125/16", "-85/12", "1/4"],
        ],
        5,
    )
    b = list(A[4])
    bhat = [Fraction(x) for x in ("59/48", "-17/96", "225/32", "-85/12", "0")]
    return _tab("sdirk54", A, b, _row_sums(A), 4, [("order3", bhat, 3)])


def _trbdf2():
    # Bank et al. (1985) in the ESDIRK form of Hosea & Shampine (1996)
    g = 2.0 - sqrt(2.0)
    d = g / 2.0
    w = sqrt(2.0) / 4.0
    A = [[0.0, 0.0, 0.0], [d, d, 0.0], [w, w, d]]
    b = [w, w, d]
    bhat = [(1.0 - w) / 3.0, (3.0 * w + 1.0) / 3.0, d / 3.0]
    return ButcherTableau(
        "trbdf2", A, b, [0.0, g, 1.0], 2, (EmbeddedWeights("order3", np.array(bhat), 3),)
    )


def _collocation(name, c, p, a_first_column=None):
    """Tableau from stage-order conditions sum_j a_ij c_j^(k-1) = c_i^k / k.

    With ``a_first_column`` the first column is fixed and one fewer condition is
    imposed per row (Lobatto IIIC).
    """
    c = np.asarray(c, dtype=float)
    s = c.size
    V = np.vander(c, s, increasing=True)
    k = np.arange(1, s + 1)
    b = np.linalg.solve(V.T, 1.0 / k)
    A = np.empty((s, s))
    if a_first_column is None:
        for i in range(s):
            A[i] = np.linalg.solve(V.T, c[i] ** k / k)
    else:
        W = V[1:, : s - 1].T
        for i in range(s):
            rhs = c[i] ** k[: s - 1] / k[: s - 1] - a_first_column * V[0, : s - 1]
            A[i, 0] = a_first_column
            A[i, 1:] = np.linalg.solve(W, rhs)
    return ButcherTableau(name, A, b, c, p)


def _radau_iia3():
    r6 = sqrt(6.0)
    return _collocation("radauiia3", [(4.0 - r6) / 10.0, (4.0 + r6) / 10.0, 1.0], 5)


def _lobatto_iiic4():
    r5 = sqrt(5.0)
    c = [0.0, (5.0 - r5) / 10.0, (5.0 + r5) / 10.0, 1.0]
    return _collocation("lobattoiiic4", c, 6, a_first_column=1.0 / 12.0)


# -- backward-Euler extrapolation ------------------------------------------


def _aitken_neville_weights(steps):
    """Coefficients of polynomial extrapolation to h = 0 from nodes ``steps``."""
    return [
        prod((hi / (hi - hj) for i, hi in enumerate(steps) if i != j), start=Fraction(1))
        for j, hj in enumerate(steps)
    ]


def extrapolation_be(k: int) -> ButcherTableau:
    """Backward-Euler extrapolation over the harmonic sequence 1, 2, ..., k.

    Chain ``j`` takes ``j`` backward-Euler substeps of size dt/j; the chains are
    uncoupled and combined with Aitken-Neville weights. The embedded vector is
    the plain last chain (order 1).
    """
    if k not in (2, 3, 4):
        raise ValueError(f"unsupported extrapolation depth {k}; expected 2, 3 or 4")
    s = k * (k + 1) // 2
    A = [[Fraction(0)] * s for _ in range(s)]
    c = [Fraction(0)] * s
    offsets = []
    pos = 0
    for j in range(1, k + 1):
        offsets.append(pos)
        for m in range(j):
            row = pos + m
            for col in range(pos, row + 1):
                A[row][col] = Fraction(1, j)
            c[row] = Fraction(m + 1, j)
        pos += j

    def spread(chains, lam):
        w = [Fraction(0)] * s
        for j, l in zip(chains, lam):
            for m in range(j):
                w[offsets[j - 1] + m] = l / j
        return w

    chains = list(range(1, k + 1))
    b = spread(chains, _aitken_neville_weights([Fraction(1, j) for j in chains]))
    chain = spread([k], [Fraction(1)])
    return _tab(f"extrapolation-be{k}", A, b, c, k, [("be-chain", chain, 1)])


_BUILDERS = {
    "ssp33": _ssp33,
    "rk4": _rk4,
    "ssprk104": _ssprk104,
    "cashkarp": _cash_karp,
    "dormandprince": _dormand_prince,
    "backwardeuler": _backward_euler,
    "sdirk54": _sdirk54,
    "trbdf2": _trbdf2,
    "lobattoiiic4": _lobatto_iiic4,
    "radauiia3": _radau_iia3,
    "extrapolation-be2": lambda: extrapolation_be(2),
    "extrapolation-be3": lambda: extrapolation_be(3),
    "extrapolation-be4": lambda: extrapolation_be(4),
}

_ALIASES = {
    "sspr33": "ssp33",
    "cash-karp": "cashkarp",
    "dormand-prince": "dormandprince",
    "dopri5": "dormandprince",
    "be": "backwardeuler",
    "backward-euler": "backwardeuler",
    "tr-bdf2": "trbdf2",
    "extrapolationbe2": "extrapolation-be2",
    "extrapolationbe3": "extrapolation-be3",
    "extrapolationbe4": "extrapolation-be4",
}

METHODS = tuple(_BUILDERS)


def builtin(name: str) -> ButcherTableau:
    """Look up a catalog method by identifier (case-insensitive)."""
    key = name.strip().lower().replace("_", "-")
    key = _ALIASES.get(key, key)
    try:
        builder = _BUILDERS[key]
    except KeyError:
        raise CatalogError(f"unknown method {name!r}; known: {', '.join(METHODS)}") from None
    return builder()
