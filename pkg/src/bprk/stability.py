"""Linear stability of Runge-Kutta methods with arbitrary weights.

For fixed ``A`` the stability function ``R_w(z) = 1 + z w^T (I - zA)^{-1} e``
is affine in the weight vector ``w``, which makes convex combinations of
weight vectors easy to reason about: the stability region of the combination
contains the intersection of the regions of its ingredients.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tableaux import ButcherTableau

REGION_TOL = 1e-12
SINGULAR_TOL = 1e-14
DEFAULT_RESOLUTION = 400
_CHUNK = 20000


def _resolvent_e(A, z):
    """``(I - zA)^{-1} e`` or ``None`` if the matrix is numerically singular."""
    s = A.shape[0]
    M = np.eye(s) - z * A
    if abs(np.linalg.det(M)) <= SINGULAR_TOL:
        return None
    return np.linalg.solve(M.astype(complex), np.ones(s, dtype=complex))


def stability_function(tableau: ButcherTableau, w, z: complex) -> complex:
    """``R_w(z)``; returns ``inf`` at poles (singular ``I - zA``)."""
    v = _resolvent_e(tableau.A, z)
    if v is None:
        return complex(np.inf)
    return complex(1.0 + z * (np.asarray(w, dtype=float) @ v))


def stability_polynomial(tableau: ButcherTableau, w, z):
    """Explicit methods only: ``1 + sum_k (w^T A^{k-1} e) z^k``."""
    A = tableau.A
    if np.any(np.triu(A) != 0):
        raise ValueError("stability polynomial requires an explicit tableau")
    w = np.asarray(w, dtype=float)
    e = np.ones(tableau.s)
    total = np.ones_like(np.asarray(z, dtype=complex))
    v = e
    zk = np.ones_like(total)
    for _ in range(tableau.s):
        zk = zk * z
        total = total + (w @ v) * zk
        v = A @ v
    return total


def _grid(rectangle, resolution):
    re_min, re_max, im_min, im_max = rectangle
    if isinstance(resolution, int):
        resolution = (resolution, resolution)
    nx, ny = resolution
    if nx < 2 or ny < 2:
        raise ValueError("resolution must be at least 2 per axis")
    return np.linspace(re_min, re_max, nx), np.linspace(im_min, im_max, ny)


def abs_R_on(tableau: ButcherTableau, w, z) -> np.ndarray:
    """|R_w| at every point of the array ``z`` (inf at poles)."""
    z = np.asarray(z, dtype=complex)
    A = tableau.A
    s = A.shape[0]
    w = np.asarray(w, dtype=float)
    flat_z = z.reshape(-1)
    out = np.empty(flat_z.shape)
    for start in range(0, flat_z.size, _CHUNK):
        zc = flat_z[start:start + _CHUNK]
        M = np.eye(s)[None] - zc[:, None, None] * A[None]
        singular = np.abs(np.linalg.det(M)) <= SINGULAR_TOL
        M[singular] = np.eye(s)
        v = np.linalg.solve(M, np.ones((zc.size, s, 1), dtype=complex))[..., 0]
        vals = np.abs(1.0 + zc * (v @ w))
        vals[singular] = np.inf
        out[start:start + _CHUNK] = vals
    return out.reshape(z.shape)


@dataclass
class StabilitySample:
    """|R(z)| on a rectangular grid; ``values[j, i]`` belongs to ``re[i] + 1j*im[j]``."""

    rectangle: tuple[float, float, float, float]
    re: np.ndarray
    im: np.ndarray
    values: np.ndarray
    weights: np.ndarray

    @property
    def z(self) -> np.ndarray:
        return self.re[None, :] + 1j * self.im[:, None]

    @property
    def inside(self) -> np.ndarray:
        return self.values <= 1.0 + REGION_TOL

    def rows(self):
        """(Re z, Im z, |R|) triples in row-major grid order."""
        Z = self.z
        return np.column_stack([Z.real.ravel(), Z.imag.ravel(), self.values.ravel()])


def sample_region(tableau: ButcherTableau, w=None, rectangle=(-6.0, 2.0, -4.0, 4.0),
                  resolution=DEFAULT_RESOLUTION) -> StabilitySample:
    w = tableau.b if w is None else np.asarray(w, dtype=float)
    re, im = _grid(rectangle, resolution)
    Z = re[None, :] + 1j * im[:, None]
    return StabilitySample(tuple(rectangle), re, im, abs_R_on(tableau, w, Z), np.array(w, dtype=float))


@dataclass
class ContainmentReport:
    checked: int
    in_intersection: int
    violations: list

    @property
    def ok(self) -> bool:
        return not self.violations


def verify_convex_containment(tableau: ButcherTableau, B, g, zs) -> ContainmentReport:
    """Check |R_{Bg}(z)| <= sum_i g_i |R_{b^i}(z)| <= 1 wherever every column's
    region contains ``z``. Violations beyond ``REGION_TOL`` are listed."""
    B = np.asarray(B, dtype=float)
    g = np.asarray(g, dtype=float)
    if np.any(g < -REGION_TOL) or abs(g.sum() - 1.0) > 1e-12:
        raise ValueError("g must be a convex combination")
    zs = np.atleast_1d(np.asarray(zs, dtype=complex))
    violations = []
    n_in = 0
    for z in zs:
        v = _resolvent_e(tableau.A, z)
        if v is None:
            continue
        parts = np.abs(1.0 + z * (B.T @ v))
        if np.any(parts > 1.0 + REGION_TOL):
            continue
        n_in += 1
        mixed = abs(1.0 + z * ((B @ g) @ v))
        bound = float(g @ parts)
        if mixed > bound + REGION_TOL or bound > 1.0 + REGION_TOL:
            violations.append((complex(z), mixed, bound))
    return ContainmentReport(len(zs), n_in, violations)


def perturbation_bound_check(tableau: ButcherTableau, b, b_tilde, z) -> bool:
    """|R_{b~}(z)| <= |R_b(z)| + |b~ - b|_1 |z (I - zA)^{-1} e|_inf."""
    v = _resolvent_e(tableau.A, z)
    if v is None:
        raise ValueError("I - zA is singular")
    b = np.asarray(b, dtype=float)
    bt = np.asarray(b_tilde, dtype=float)
    lhs = abs(1.0 + z * (bt @ v))
    rhs = abs(1.0 + z * (b @ v)) + np.sum(np.abs(bt - b)) * np.max(np.abs(z * v))
    return bool(lhs <= rhs + REGION_TOL)
