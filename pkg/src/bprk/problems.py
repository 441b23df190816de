"""Test problems: ODEs and method-of-lines semidiscretizations with bounds,
linear invariants and (where available) analytic Jacobians."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg
import scipy.sparse as sp


class ReferenceKind(enum.Enum):
    MATRIX_EXPONENTIAL = "matrix-exponential"
    FINE_INTEGRATION = "fine-integration"
    NONE = "none"


class ReferenceUnavailable(RuntimeError):
    pass


@dataclass
class OdeProblem:
    """Initial value problem ``u' = f(t, u)`` on ``t_span`` with bound data.

    ``lower``/``upper`` are componentwise bounds (``None`` for unbounded).
    ``invariants`` are ``(label, m)`` pairs with ``m @ f(t, u) == 0``.
    For affine problems ``u' = M u + g`` the pair is stored in ``affine`` and
    the exact solution is available through the matrix exponential.
    """

    name: str
    rhs: Callable[[float, np.ndarray], np.ndarray]
    u0: np.ndarray
    t_span: tuple[float, float]
    jac: Callable[[float, np.ndarray], np.ndarray] | None = None
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    invariants: list[tuple[str, np.ndarray]] = field(default_factory=list)
    reference: ReferenceKind = ReferenceKind.NONE
    positive: bool = True
    affine: tuple[np.ndarray, np.ndarray] | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.u0 = np.asarray(self.u0, dtype=float)
        m = self.u0.size
        if self.lower is not None:
            self.lower = np.broadcast_to(np.asarray(self.lower, dtype=float), (m,)).copy()
        if self.upper is not None:
            self.upper = np.broadcast_to(np.asarray(self.upper, dtype=float), (m,)).copy()
        self.invariants = [(lab, np.asarray(v, dtype=float)) for lab, v in self.invariants]

    @property
    def m(self) -> int:
        return self.u0.size

    def f(self, t, u):
        return self.rhs(t, u)


def _affine(name, M, g, u0, t_span, invariants=(), params=None):
    Md = M.toarray() if sp.issparse(M) else np.asarray(M, dtype=float)
    g = np.asarray(g, dtype=float)

    def rhs(t, u):
        return Md @ u + g

    def jac(t, u):
        return Md

    return OdeProblem(
        name, rhs, u0, t_span, jac=jac, lower=np.zeros(len(u0)),
        invariants=list(invariants), reference=ReferenceKind.MATRIX_EXPONENTIAL,
        affine=(Md, g), params=dict(params or {}),
    )


def linear2x2(t_end: float = 1.0) -> OdeProblem:
    L = np.array([[-5.0, 1.0], [5.0, -1.0]])
    return _affine("linear2x2", L, np.zeros(2), [1.0, 0.0], (0.0, t_end), [("mass", np.ones(2))])


# -- reaction kinetics ------------------------------------------------------


# Below this value of u1 the saturating uptake u1/(0.01 + u1), which has a pole
# at u1 = -0.01, is continued linearly (value and slope matched).
_UPTAKE_KNEE = -0.005


def _uptake_factor(u1):
    """u1 / (0.01 + u1) with a C1 linear continuation below ``_UPTAKE_KNEE``.

    Returns the factor and its derivative.
    """
    x = np.maximum(u1, _UPTAKE_KNEE)
    den = 0.01 + x
    val = x / den
    slope = 0.01 / (den * den)
    below = u1 < _UPTAKE_KNEE
    return np.where(below, val + slope * (u1 - _UPTAKE_KNEE), val), slope


def _reaction_terms(u1, u2, u3, u4, conservative=True):
    """Right-hand side of the 4-species production-destruction system."""
    sat, _ = _uptake_factor(u1)
    uptake = sat * u2
    infect = 0.5 * (1.0 - np.exp(-1.21 * u2 * u2)) * u3
    f1 = 0.01 * u2 + 0.01 * u3 + 0.003 * u4 - uptake
    f2 = uptake - 0.01 * u2 - infect - 0.05 * u2
    f3 = infect - 0.01 * u3 - 0.02 * u3
    f4 = 0.05 * u2 + 0.02 * u3 + (-0.003 if conservative else 0.003) * u4
    return f1, f2, f3, f4


def _reaction_jacobian_blocks(u1, u2, u3, u4, conservative=True):
    """Per-point 4x4 Jacobian entries, each array-valued, indexed J[i][j]."""
    sat, dsat = _uptake_factor(u1)
    d_up_1 = dsat * u2
    d_up_2 = sat
    e = np.exp(-1.21 * u2 * u2)
    d_inf_2 = 1.21 * u2 * e * u3
    d_inf_3 = 0.5 * (1.0 - e)
    z = np.zeros_like(np.asarray(u1, dtype=float))
    k4 = -0.003 if conservative else 0.003
    return [
        [-d_up_1, 0.01 - d_up_2, z + 0.01, z + 0.003],
        [d_up_1, d_up_2 - 0.06 - d_inf_2, -d_inf_3, z],
        [z, d_inf_2, d_inf_3 - 0.03, z],
        [z, z + 0.05, z + 0.02, z + k4],
    ]


def reaction4(conservative: bool = True, t_end: float = 3.0) -> OdeProblem:
    """Four-species reaction system with u(0) = (8, 2, 1, 4).

    ``conservative=False`` uses ``+0.003 u4`` instead of ``-0.003 u4`` in the
    last equation, which breaks conservation of the total mass.
    """

    def rhs(t, u):
        return np.array(_reaction_terms(*u, conservative=conservative))

    def jac(t, u):
        return np.array(_reaction_jacobian_blocks(*u, conservative=conservative), dtype=float)

    inv = [("mass", np.ones(4))] if conservative else []
    return OdeProblem(
        "reaction4", rhs, [8.0, 2.0, 1.0, 4.0], (0.0, t_end), jac=jac, lower=np.zeros(4),
        invariants=inv, reference=ReferenceKind.FINE_INTEGRATION,
        params={"conservative": conservative, "reference_method": "dormandprince"},
    )


# -- method-of-lines problems ----------------------------------------------


def advection_decay(N: int = 100, a: float = 1.0, K: float = 1.0, t_end: float = 1.0) -> OdeProblem:
    """First-order upwind discretization of u_t = -a u_x - K u, u(t, 0) = 1,
    on N cells of width 1/N with zero initial data."""
    dx = 1.0 / N
    nu = a / dx
    M = np.diag(np.full(N, -(nu + K))) + np.diag(np.full(N - 1, nu), -1)
    g = np.zeros(N)
    g[0] = nu * 1.0
    return _affine(
        "advection-decay", M, g, np.zeros(N), (0.0, t_end),
        params={"N": N, "a": a, "K": K, "dx": dx, "x": dx * np.arange(1, N + 1)},
    )


def diffusion(N: int = 100, D: float = 1.0, t_end: float = 0.01) -> OdeProblem:
    """Three-point Laplacian on N interior nodes of [-0.5, 0.5] with homogeneous
    Dirichlet data; unit spike at index N // 2 (the exact centre when N is odd)."""
    dx = 1.0 / (N + 1)
    main = np.full(N, -2.0)
    off = np.ones(N - 1)
    M = D / dx**2 * (np.diag(main) + np.diag(off, 1) + np.diag(off, -1))
    u0 = np.zeros(N)
    u0[N // 2] = 1.0
    return _affine(
        "diffusion", M, np.zeros(N), u0, (0.0, t_end),
        params={"N": N, "D": D, "dx": dx, "x": -0.5 + dx * np.arange(1, N + 1)},
    )


# Initial data for the advection-diffusion-reaction run. These profiles are our
# own choice, not taken from any published setup: nutrients (u1) fill the band
# [0.15, 0.85] and plankton/detritus species the complement, joined by smooth
# tanh interfaces of width 0.02, on top of a floor of 1e-8. Reaction fronts then
# start at the two interfaces and eat into the nutrient band from both sides.
_BAND = "0.5*(tanh((x - 0.15)/0.02) - tanh((x - 0.85)/0.02))"
ADR_INITIAL = {
    "u1": f"1e-8 + 8*{_BAND}",
    "u2": f"1e-8 + 2*(1 - {_BAND})",
    "u3": f"1e-8 + 1*(1 - {_BAND})",
    "u4": "4 + 0*x",
}


def adr_initial(x: np.ndarray, spec: dict | None = None) -> np.ndarray:
    """Evaluate per-species expressions in ``x`` (names: pi, sin, cos, exp, tanh)."""
    spec = ADR_INITIAL if spec is None else spec
    env = {"x": x, "pi": np.pi, "sin": np.sin, "cos": np.cos, "exp": np.exp, "tanh": np.tanh}
    return np.concatenate(
        [np.broadcast_to(eval(spec[k], {"__builtins__": {}}, env), x.shape) for k in ("u1", "u2", "u3", "u4")]
    )


def _periodic_operator(N, a, d, dx):
    e = np.ones(N)
    D2 = sp.diags([e[:-1], -2 * e, e[:-1]], [-1, 0, 1], format="lil")
    D2[0, N - 1] = 1.0
    D2[N - 1, 0] = 1.0
    up = sp.diags([e[:-1], -e], [-1, 0], format="lil")
    up[0, N - 1] = 1.0
    return (a / dx) * up.tocsr() + (d / dx**2) * D2.tocsr()


def adr(N: int = 100, a: float = 1e-2, d: float = 1e-6, t_end: float = 50.0,
        initial: dict | None = None) -> OdeProblem:
    """Advection-diffusion-reaction system on the periodic unit interval.

    State layout is species-major: ``u[s*N + i]`` is species ``s`` at node ``i``.
    """
    dx = 1.0 / N
    x = dx * np.arange(N)
    L = _periodic_operator(N, a, d, dx)
    Lbig = sp.kron(sp.identity(4), L, format="csr")
    rows = np.arange(N)

    def rhs(t, u):
        U = u.reshape(4, N)
        return Lbig @ u + np.concatenate(_reaction_terms(*U))

    def jac(t, u):
        U = u.reshape(4, N)
        blocks = _reaction_jacobian_blocks(*U)
        R = sp.lil_matrix((4 * N, 4 * N))
        for i in range(4):
            for j in range(4):
                R[i * N + rows, j * N + rows] = blocks[i][j]
        return (Lbig + R.tocsr()).tocsc()

    return OdeProblem(
        "adr", rhs, adr_initial(x, initial), (0.0, t_end), jac=jac, lower=np.zeros(4 * N),
        invariants=[("mass", np.ones(4 * N))], reference=ReferenceKind.FINE_INTEGRATION,
        params={"N": N, "a": a, "d": d, "dx": dx, "x": x, "reference_method": "extrapolation-be4"},
    )


# -- stratospheric chemistry ------------------------------------------------

STRAT_SPECIES = ("O1D", "O", "O3", "O2", "NO", "NO2")
STRAT_U0 = np.array([9.906e1, 6.624e8, 5.326e11, 1.697e16, 4.000e6, 1.093e9])
STRAT_M = 8.120e16
_T_RISE, _T_SET = 4.5, 19.5

# reactants (species indices) of r1..r11; the third body M enters k6 r6 as a constant
_STRAT_REACTANTS = [
    (3,), (1, 3), (2,), (2, 1), (2,), (0,), (0, 2), (2, 4), (5, 1), (5,), (4, 1),
]
# stoichiometry: columns are reactions r1..r11, rows species
_STRAT_S = np.array([
    # r1 r2  r3  r4  r5  r6  r7  r8  r9 r10 r11
    [0, 0, 0, 0, 1, -1, -1, 0, 0, 0, 0],        # O1D
    [2, -1, 1, -1, 0, 1, 0, 0, -1, 1, -1],      # O
    [0, 1, -1, -1, -1, 0, -1, -1, 0, 0, 0],     # O3
    [-1, -1, 1, 2, 1, 0, 2, 1, 1, 0, 0],        # O2
    [0, 0, 0, 0, 0, 0, 0, -1, 1, 1, -1],        # NO
    [0, 0, 0, 0, 0, 0, 0, 1, -1, -1, 1],        # NO2
], dtype=float)


def solar_intensity(hours: float) -> float:
    """Daylight factor of the hour of day: a signed-square cosine ramp between
    sunrise (4.5 h) and sunset (19.5 h), zero at night."""
    T = hours % 24.0
    if not _T_RISE <= T <= _T_SET:
        return 0.0
    x = (2.0 * T - _T_RISE - _T_SET) / (_T_SET - _T_RISE)
    return 0.5 + 0.5 * np.cos(np.pi * abs(x) * x)


def stratospheric_rates(t: float) -> np.ndarray:
    sig = solar_intensity(t / 3600.0)
    return np.array([
        2.643e-10 * sig**3,
        8.018e-17,
        6.120e-4 * sig,
        1.567e-15,
        1.070e-3 * sig**2,
        7.110e-11 * STRAT_M,
        1.200e-10,
        6.062e-15,
        1.069e-11,
        1.289e-2 * sig,
        1.0e-8,
    ])


def stratospheric_physical_rhs(t, u):
    k = stratospheric_rates(t)
    r = k * np.array([np.prod(u[list(idx)]) for idx in _STRAT_REACTANTS])
    return _STRAT_S @ r


def stratospheric_physical_jac(t, u):
    k = stratospheric_rates(t)
    dr = np.zeros((11, 6))
    for q, idx in enumerate(_STRAT_REACTANTS):
        for pos, i in enumerate(idx):
            others = [j for p2, j in enumerate(idx) if p2 != pos]
            dr[q, i] += k[q] * (np.prod(u[others]) if others else 1.0)
    return _STRAT_S @ dr


def stratospheric(normalized: bool = True, t0_hours: float = 12.0, t_end_hours: float = 84.0) -> OdeProblem:
    """Six-species stratospheric ozone chemistry, time in seconds.

    With ``normalized`` the state is divided componentwise by the initial
    concentrations so every component starts at 1; invariant vectors are
    scaled accordingly so ``m @ v`` equals the physical invariant.
    """
    scale = STRAT_U0.copy() if normalized else np.ones(6)
    m_O = np.array([1, 1, 3, 2, 1, 2], dtype=float) * scale
    m_N = np.array([0, 0, 0, 0, 1, 1], dtype=float) * scale

    def rhs(t, v):
        return stratospheric_physical_rhs(t, v * scale) / scale

    def jac(t, v):
        return stratospheric_physical_jac(t, v * scale) * scale[None, :] / scale[:, None]

    return OdeProblem(
        "stratospheric", rhs, STRAT_U0 / scale, (t0_hours * 3600.0, t_end_hours * 3600.0), jac=jac,
        lower=np.zeros(6), invariants=[("oxygen", m_O), ("nitrogen", m_N)],
        reference=ReferenceKind.FINE_INTEGRATION,
        params={"scale": scale, "species": STRAT_SPECIES, "reference_method": "extrapolation-be4"},
    )


PROBLEMS = {
    "linear2x2": linear2x2,
    "reaction4": reaction4,
    "advection-decay": advection_decay,
    "diffusion": diffusion,
    "adr": adr,
    "stratospheric": stratospheric,
}


def get_problem(name: str, **params) -> OdeProblem:
    try:
        factory = PROBLEMS[name.lower()]
    except KeyError:
        raise KeyError(f"unknown problem {name!r}; known: {', '.join(PROBLEMS)}") from None
    return factory(**params)


def reference_solution(problem: OdeProblem, t: float, finest_dt: float | None = None):
    """Exact or high-accuracy solution at time ``t``.

    Affine problems use the matrix exponential of the augmented system
    ``[[M, g], [0, 0]]``. Otherwise a fixed-step unadapted run with step
    ``finest_dt / 100`` is returned after a Richardson check against the run
    with twice that step.
    """
    t0 = problem.t_span[0]
    if problem.reference is ReferenceKind.MATRIX_EXPONENTIAL:
        M, g = problem.affine
        m = problem.m
        aug = np.zeros((m + 1, m + 1))
        aug[:m, :m] = M
        aug[:m, m] = g
        w = scipy.linalg.expm(aug * (t - t0)) @ np.append(problem.u0, 1.0)
        return w[:m]
    if problem.reference is ReferenceKind.FINE_INTEGRATION:
        if finest_dt is None:
            raise ReferenceUnavailable("fine-integration reference needs finest_dt")
        from .integrator import IntegratorConfig, integrate
        from .tableaux import builtin

        tab = builtin(problem.params.get("reference_method", "dormandprince"))
        h = finest_dt / 100.0

        def run(step):
            cfg = IntegratorConfig(mode="fixed", dt=step, adaptation="off", t_end=t)
            return integrate(problem, tab, cfg).final_state

        fine = run(h)
        coarse = run(2 * h)
        est = np.max(np.abs(fine - coarse)) / (2**tab.p - 1)
        if not np.all(np.isfinite(fine)) or est > 1e-6 * max(1.0, np.max(np.abs(fine))):
            raise ReferenceUnavailable(f"fine-integration reference failed Richardson check (est {est:.3e})")
        return fine
    raise ReferenceUnavailable(f"problem {problem.name!r} has no reference solution")
