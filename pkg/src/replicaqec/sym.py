"""Symmetric-group enumeration and Weingarten calculus over replicas.

Permutations act on replica indices ``0..alpha-1`` and are stored in one-line
notation. The permutation state of a ``q``-dimensional site is the
vectorised permutation operator ``P_sigma`` and overlaps are
``<<pi|sigma>> = Tr(P_pi^dag P_sigma) = q ** cycles(pi^-1 sigma)``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

MAX_ALPHA = 6
PINV_RTOL = 1e-12


@dataclass(frozen=True)
class Permutation:
    images: tuple[int, ...]
    n_cycles: int = field(init=False, compare=False)
    n_fixed: int = field(init=False, compare=False)

    def __post_init__(self):
        images = tuple(int(i) for i in self.images)
        if sorted(images) != list(range(len(images))):
            raise ValueError(f"{images} is not a bijection on 0..{len(images) - 1}")
        object.__setattr__(self, "images", images)
        n_cycles, n_fixed = _cycle_census(images)
        object.__setattr__(self, "n_cycles", n_cycles)
        object.__setattr__(self, "n_fixed", n_fixed)

    @property
    def alpha(self) -> int:
        return len(self.images)

    @classmethod
    def identity(cls, alpha: int) -> "Permutation":
        return cls(tuple(range(alpha)))

    @classmethod
    def full_cycle(cls, alpha: int) -> "Permutation":
        """The cycle ``i -> i + 1 mod alpha``."""
        return cls(tuple((i + 1) % alpha for i in range(alpha)))

    def inverse(self) -> "Permutation":
        inv = [0] * self.alpha
        for i, j in enumerate(self.images):
            inv[j] = i
        return Permutation(tuple(inv))

    def __mul__(self, other: "Permutation") -> "Permutation":
        # (self * other)(i) = self(other(i))
        return Permutation(tuple(self.images[j] for j in other.images))

    def is_identity(self) -> bool:
        return self.n_fixed == self.alpha

    def __repr__(self):
        return f"Permutation({list(self.images)})"


def _cycle_census(images):
    seen = [False] * len(images)
    n_cycles = n_fixed = 0
    for start in range(len(images)):
        if seen[start]:
            continue
        n_cycles += 1
        length = 0
        i = start
        while not seen[i]:
            seen[i] = True
            i = images[i]
            length += 1
        if length == 1:
            n_fixed += 1
    return n_cycles, n_fixed


def cycles(p: Permutation) -> tuple[int, int]:
    """Return ``(cycle_count, fixed_points)``; 1-cycles count in both."""
    return p.n_cycles, p.n_fixed


def _check_alpha(alpha):
    if not isinstance(alpha, (int, np.integer)) or not 2 <= alpha <= MAX_ALPHA:
        raise ValueError(f"alpha must be an integer in [2, {MAX_ALPHA}], got {alpha!r}")


@lru_cache(maxsize=None)
def _group(alpha: int) -> tuple[Permutation, ...]:
    ident = Permutation.identity(alpha)
    cyc = Permutation.full_cycle(alpha)
    rest = [Permutation(p) for p in itertools.permutations(range(alpha))]
    rest = [p for p in rest if p != ident and p != cyc]
    return (ident, cyc, *rest)


def enumerate_group(alpha: int) -> list[Permutation]:
    """All ``alpha!`` permutations.

    Ordering is fixed: identity at index 0, the canonical full cycle at
    index 1 (see :func:`cycle_index`), then the rest in lexicographic order.
    """
    _check_alpha(alpha)
    return list(_group(alpha))


def identity_index(alpha: int) -> int:
    return 0


def cycle_index(alpha: int) -> int:
    """Index of the canonical full cycle within :func:`enumerate_group`."""
    return 1


@lru_cache(maxsize=None)
def cycle_count_table(alpha: int) -> np.ndarray:
    """``table[i, j] = #cycles(g_i^-1 g_j)`` over the enumerated group."""
    _check_alpha(alpha)
    group = _group(alpha)
    table = np.empty((len(group), len(group)), dtype=np.int64)
    for i, p in enumerate(group):
        pinv = p.inverse()
        for j, s in enumerate(group):
            table[i, j] = (pinv * s).n_cycles
    table.setflags(write=False)
    return table


@lru_cache(maxsize=None)
def fixed_point_counts(alpha: int) -> np.ndarray:
    counts = np.array([p.n_fixed for p in _group(alpha)], dtype=np.int64)
    counts.setflags(write=False)
    return counts


@dataclass(frozen=True, eq=False)
class OverlapMatrix:
    """Permutation overlaps ``entries[pi, sigma] = <<pi| X |sigma>>``.

    ``kind`` is ``"clean"``, ``"noisy-all-replicas"`` or
    ``"noisy-one-replica"`` (or ``"noisy-<n>-replicas"`` for partial sets).
    """

    entries: np.ndarray
    dim_q: int
    kind: str = "clean"

    @property
    def alpha(self) -> int:
        size = self.entries.shape[0]
        for a in range(2, MAX_ALPHA + 1):
            if len(_group(a)) == size:
                return a
        raise ValueError("entries shape does not match any supported group")


@dataclass(frozen=True, eq=False)
class WeingartenMatrix:
    entries: np.ndarray
    dim_q: int
    rank: int


def gram(q: int, alpha: int) -> OverlapMatrix:
    """Clean overlap matrix ``q ** #cycles(pi^-1 sigma)`` (exact integers)."""
    if q < 2:
        raise ValueError(f"q must be >= 2, got {q}")
    table = cycle_count_table(alpha)
    # python ints avoid overflow for large q before the float conversion
    exact = np.array([[int(q) ** int(c) for c in row] for row in table], dtype=object)
    return OverlapMatrix(exact.astype(float), int(q), "clean")


def gram_exact(q: int, alpha: int) -> np.ndarray:
    table = cycle_count_table(alpha)
    return np.array([[int(q) ** int(c) for c in row] for row in table], dtype=object)


def pinv_symmetric(mat: np.ndarray, rtol: float = PINV_RTOL) -> tuple[np.ndarray, int]:
    """Moore-Penrose pseudo-inverse of a symmetric matrix via ``eigh``."""
    vals, vecs = np.linalg.eigh(mat)
    cutoff = rtol * np.max(np.abs(vals)) if vals.size else 0.0
    keep = np.abs(vals) > cutoff
    rank = int(keep.sum())
    if rank == 0:
        raise FloatingPointError("pseudo-inverse has rank 0: all eigenvalues below cutoff")
    inv = (vecs[:, keep] / vals[keep]) @ vecs[:, keep].T
    return 0.5 * (inv + inv.T), rank


@lru_cache(maxsize=256)
def _weingarten_cached(q: int, alpha: int) -> WeingartenMatrix:
    g = gram(q, alpha).entries
    # scale by q^alpha so entries stay O(1) for large q
    scale = float(q) ** alpha
    inv, rank = pinv_symmetric(g / scale)
    entries = inv / scale
    entries.setflags(write=False)
    return WeingartenMatrix(entries, int(q), rank)


def weingarten(q: int, alpha: int) -> WeingartenMatrix:
    """Weingarten matrix, the pseudo-inverse of :func:`gram`.

    Full rank when ``q >= alpha``; for ``q < alpha`` the Gram matrix is
    singular and the pseudo-inverse acts on its row space.
    """
    _check_alpha(alpha)
    if q < 2:
        raise ValueError(f"q must be >= 2, got {q}")
    return _weingarten_cached(int(q), int(alpha))


def haar_moment(q: int, rows: tuple[int, ...], cols: tuple[int, ...]) -> float:
    """``E[prod_a U_{rows[a], cols[a]} * prod_a conj(U_{rows[a], cols[a]})]``.

    Uses ``E[U_{i1 j1}..U_{ia ja} U*_{i'1 j'1}..] = sum_{pi,sigma}
    delta(i, i' o pi) delta(j, j' o sigma) Wg_{pi,sigma}`` with the conjugate
    indices equal to the plain ones.
    """
    alpha = len(rows)
    group = enumerate_group(alpha)
    wg = weingarten(q, alpha).entries
    total = 0.0
    for a, pi in enumerate(group):
        if any(rows[i] != rows[pi.images[i]] for i in range(alpha)):
            continue
        for b, sigma in enumerate(group):
            if any(cols[i] != cols[sigma.images[i]] for i in range(alpha)):
                continue
            total += wg[a, b]
    return float(total)
