"""Rooted trees and the order conditions written as linear systems in the weights.

For fixed ``A`` every order condition ``b . psi(tree) = 1/gamma(tree)`` is
linear in ``b``; stacking the rows for all trees with at most ``p`` nodes
gives ``Q_p b = r_p``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache
from itertools import combinations_with_replacement

import numpy as np

from .tableaux import ButcherTableau

MAX_ORDER = 5
RANK_RTOL = 1e-8


class UnsupportedOrder(ValueError):
    pass


@dataclass(frozen=True, order=True)
class RootedTree:
    """A rooted tree stored canonically as the sorted tuple of its subtrees.

    Two trees compare equal exactly when they are isomorphic.
    """

    children: tuple["RootedTree", ...] = ()

    @cached_property
    def order(self) -> int:
        return 1 + sum(t.order for t in self.children)

    @cached_property
    def density(self) -> int:
        g = self.order
        for t in self.children:
            g *= t.density
        return g

    def __repr__(self):
        if not self.children:
            return "o"
        return "[" + ",".join(repr(t) for t in self.children) + "]"

    def _key(self):
        return (self.order, tuple(t._key() for t in self.children))

    def elementary_weight(self, A: np.ndarray) -> np.ndarray:
        """Stage vector psi(tree): ones for the single node, else the
        componentwise product of ``A psi(child)`` over the children."""
        v = np.ones(A.shape[0])
        for t in self.children:
            v = v * (A @ t.elementary_weight(A))
        return v


def _make(children) -> RootedTree:
    return RootedTree(tuple(sorted(children, key=RootedTree._key)))


@lru_cache(maxsize=None)
def _trees_of_order(n: int) -> tuple[RootedTree, ...]:
    if n == 1:
        return (RootedTree(),)
    found = set()
    # distribute n - 1 nodes among child subtrees, as a multiset of subtree orders
    for parts in _partitions(n - 1):
        pools = [_trees_of_order(k) for k in parts]
        for choice in _multiset_product(parts, pools):
            found.add(_make(choice))
    return tuple(sorted(found, key=RootedTree._key))


def _partitions(n, largest=None):
    largest = n if largest is None else largest
    if n == 0:
        yield ()
        return
    for k in range(min(n, largest), 0, -1):
        for rest in _partitions(n - k, k):
            yield (k,) + rest


def _multiset_product(parts, pools):
    """Choices of one tree per part, treating equal-order parts as a multiset."""
    groups = {}
    for k, pool in zip(parts, pools):
        groups.setdefault(k, [0, pool])[0] += 1
    keys = sorted(groups)

    def rec(i):
        if i == len(keys):
            yield ()
            return
        count, pool = groups[keys[i]]
        for combo in combinations_with_replacement(pool, count):
            for rest in rec(i + 1):
                yield combo + rest

    yield from rec(0)


def enumerate_trees(p: int) -> list[RootedTree]:
    """All non-isomorphic rooted trees with at most ``p`` nodes, ordered by
    (order, canonical form)."""
    if not 1 <= p <= MAX_ORDER:
        raise UnsupportedOrder(f"order {p} not supported (1 <= p <= {MAX_ORDER})")
    out = []
    for n in range(1, p + 1):
        out.extend(_trees_of_order(n))
    return out


@dataclass(frozen=True)
class OrderConditionSystem:
    p: int
    Q: np.ndarray
    r: np.ndarray
    trees: tuple[RootedTree, ...]

    def residual(self, b) -> np.ndarray:
        return self.Q @ np.asarray(b, dtype=float) - self.r

    def satisfied_by(self, b, tol: float = 1e-9) -> bool:
        return bool(np.max(np.abs(self.residual(b)), initial=0.0) <= tol)


def assemble(tableau: ButcherTableau, p: int) -> OrderConditionSystem:
    trees = enumerate_trees(p)
    Q = np.array([t.elementary_weight(tableau.A) for t in trees])
    r = np.array([1.0 / t.density for t in trees])
    return OrderConditionSystem(p, Q, r, tuple(trees))


def numerical_rank(M: np.ndarray, rtol: float = RANK_RTOL) -> int:
    sv = np.linalg.svd(M, compute_uv=False)
    if sv.size == 0 or sv[0] == 0.0:
        return 0
    return int(np.sum(sv > rtol * sv[0]))


def degrees_of_freedom(tableau: ButcherTableau, p: int) -> int:
    """Free directions left in the weights once all conditions up to ``p`` hold."""
    return tableau.s - numerical_rank(assemble(tableau, p).Q)


def achieved_order(tableau: ButcherTableau, b=None, tol: float = 1e-10) -> int:
    """Largest p <= MAX_ORDER such that ``b`` satisfies every condition up to p."""
    b = tableau.b if b is None else np.asarray(b, dtype=float)
    best = 0
    for p in range(1, MAX_ORDER + 1):
        if not assemble(tableau, p).satisfied_by(b, tol):
            break
        best = p
    return best
