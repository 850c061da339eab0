"""Single-qudit channels, noisy permutation overlaps and Hashing bounds.

Channels are kept as Kraus sets and every overlap is obtained by explicit
contraction; closed forms only appear in the tests. Logs are base ``d``.
"""
from __future__ import annotations

import ast
import math
import re
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import sym

ATOL = 1e-12

_PAULIS = (
    np.eye(2, dtype=complex),
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)


@dataclass(frozen=True, eq=False)
class KrausChannel:
    dim_d: int
    kraus_ops: tuple[np.ndarray, ...]
    label: str = "custom"
    params: tuple = ()
    unital: bool = field(init=False)

    def __post_init__(self):
        ops = tuple(np.asarray(k, dtype=complex) for k in self.kraus_ops)
        d = self.dim_d
        if not ops or any(k.shape != (d, d) for k in ops):
            raise ValueError(f"Kraus operators must be a non-empty list of {d}x{d} matrices")
        tp = sum(k.conj().T @ k for k in ops)
        if np.max(np.abs(tp - np.eye(d))) > 1e-10:
            raise ValueError("Kraus operators are not trace preserving")
        un = sum(k @ k.conj().T for k in ops)
        for k in ops:
            k.setflags(write=False)
        object.__setattr__(self, "kraus_ops", ops)
        object.__setattr__(self, "unital", bool(np.max(np.abs(un - np.eye(d))) < ATOL))

    def __call__(self, rho: np.ndarray) -> np.ndarray:
        return sum(k @ rho @ k.conj().T for k in self.kraus_ops)

    def superoperator(self) -> np.ndarray:
        """Row-major vectorisation: ``vec(K rho K^dag) = (K (x) K*) vec(rho)``."""
        return sum(np.kron(k, k.conj()) for k in self.kraus_ops)

    @property
    def is_identity(self) -> bool:
        return np.allclose(self.superoperator(), np.eye(self.dim_d ** 2), atol=ATOL)

    def __repr__(self):
        return f"KrausChannel({self.label}, d={self.dim_d}, params={self.params})"


@dataclass(frozen=True)
class CostExponents:
    g_se: float
    g_ss: float
    g_es: float

    @property
    def h2(self) -> float:
        return self.g_ss - self.g_se


def _check_prob(name, gamma):
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {gamma}")


def identity_channel(d: int = 2) -> KrausChannel:
    return KrausChannel(d, (np.eye(d),), "identity", ())


def weyl_operators(d: int) -> list[np.ndarray]:
    """The ``d**2`` clock-and-shift operators ``X^a Z^b``."""
    omega = np.exp(2j * np.pi / d)
    shift = np.roll(np.eye(d), 1, axis=0)
    clock = np.diag(omega ** np.arange(d))
    return [np.linalg.matrix_power(shift, a) @ np.linalg.matrix_power(clock, b)
            for a in range(d) for b in range(d)]


def depolarizing(d: int, gamma: float) -> KrausChannel:
    """``rho -> (1 - gamma) rho + gamma Tr(rho) I / d`` in the Weyl basis."""
    _check_prob("gamma", gamma)
    if gamma == 0:
        return KrausChannel(d, (np.eye(d),), "depolarizing", (d, 0.0))
    ops = weyl_operators(d)
    w0 = 1.0 - gamma * (d * d - 1) / (d * d)
    w = gamma / (d * d)
    kraus = [math.sqrt(w0) * ops[0]] + [math.sqrt(w) * u for u in ops[1:]]
    return KrausChannel(d, tuple(kraus), "depolarizing", (d, float(gamma)))


def depolarizing_gamma(h2: float, d: int = 2) -> float:
    """Depolarizing strength whose Hashing bound equals ``h2`` (0 <= h2 <= 2)."""
    if not 0.0 <= h2 <= 2.0:
        raise ValueError(f"h2 must lie in [0, 2], got {h2}")
    return 1.0 - math.sqrt((d ** (2.0 - h2) - 1.0) / (d * d - 1.0))


def amplitude_damping(gamma: float) -> KrausChannel:
    _check_prob("gamma", gamma)
    k0 = np.array([[1, 0], [0, math.sqrt(1 - gamma)]], dtype=complex)
    k1 = np.array([[0, math.sqrt(gamma)], [0, 0]], dtype=complex)
    ops = (k0,) if gamma == 0 else (k0, k1)
    return KrausChannel(2, ops, "amplitude-damping", (float(gamma),))


def pauli_channel(p0: float, p1: float, p2: float, p3: float) -> KrausChannel:
    probs = np.array([p0, p1, p2, p3], dtype=float)
    if np.any(probs < 0) or abs(probs.sum() - 1) > ATOL:
        raise ValueError(f"invalid Pauli probability vector {probs.tolist()}")
    ops = tuple(math.sqrt(p) * s for p, s in zip(probs, _PAULIS) if p > 0)
    return KrausChannel(2, ops, "pauli", tuple(probs.tolist()))


def compose(*channels: KrausChannel) -> KrausChannel:
    """Channel applying ``channels[0]`` first, then ``channels[1]``, ..."""
    if not channels:
        raise ValueError("need at least one channel")
    d = channels[0].dim_d
    ops = [np.eye(d, dtype=complex)]
    for ch in channels:
        if ch.dim_d != d:
            raise ValueError("cannot compose channels of different dimension")
        ops = [k @ o for k in ch.kraus_ops for o in ops]
    ops = _prune_kraus(ops, d)
    label = channels[0].label if len({c.label for c in channels}) == 1 else "custom"
    return KrausChannel(d, tuple(ops), label, tuple(c.params for c in channels))


def power(ch: KrausChannel, n: int) -> KrausChannel:
    if n == 0:
        return identity_channel(ch.dim_d)
    if n == 1:
        return ch
    return compose(*([ch] * n))


def _prune_kraus(ops, d):
    # re-diagonalise the Choi matrix so repeated composition does not blow up the Kraus count
    if len(ops) <= d * d:
        return ops
    choi = sum(np.outer(k.reshape(-1), k.reshape(-1).conj()) for k in ops)
    vals, vecs = np.linalg.eigh(choi)
    out = [math.sqrt(v) * vecs[:, i].reshape(d, d) for i, v in enumerate(vals) if v > 1e-15]
    return out


# --------------------------------------------------------------------------
# Overlaps
# --------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _perm_operators(d: int, alpha: int) -> np.ndarray:
    """Stack of permutation operators ``P_sigma`` on ``(C^d)^{(x) alpha}``."""
    group = sym.enumerate_group(alpha)
    dim = d ** alpha
    out = np.zeros((len(group), dim, dim))
    basis = np.array(np.unravel_index(np.arange(dim), (d,) * alpha)).T
    for g, p in enumerate(group):
        # P_sigma |i_0 .. i_{a-1}> = |i_{sigma^-1(0)} ..>, i.e. slot sigma(r) gets i_r
        permuted = np.empty_like(basis)
        permuted[:, list(p.images)] = basis
        rows = np.ravel_multi_index(permuted.T, (d,) * alpha)
        out[g, rows, np.arange(dim)] = 1.0
    out.setflags(write=False)
    return out


def _apply_on_replica(ch: KrausChannel, ops: np.ndarray, replica: int, alpha: int) -> np.ndarray:
    d = ch.dim_d
    shape = (ops.shape[0],) + (d,) * (2 * alpha)
    x = ops.reshape(shape)
    out = np.zeros(shape, dtype=complex)
    row_ax = 1 + replica
    col_ax = 1 + alpha + replica
    for k in ch.kraus_ops:
        y = np.moveaxis(np.tensordot(k, x, axes=([1], [row_ax])), 0, row_ax)
        y = np.moveaxis(np.tensordot(k.conj(), y, axes=([1], [col_ax])), 0, col_ax)
        out += y
    return out.reshape(ops.shape)


def _overlap_kind(n_affected, alpha):
    if n_affected == 0:
        return "clean"
    if n_affected == alpha:
        return "noisy-all-replicas"
    if n_affected == 1:
        return "noisy-one-replica"
    return f"noisy-{n_affected}-replicas"


def noisy_overlap(ch: KrausChannel, alpha: int, replicas_affected=None) -> sym.OverlapMatrix:
    """``entries[pi, sigma] = <<pi| N on affected replicas |sigma>>``.

    ``replicas_affected`` holds 1-based replica labels; ``None`` means all.
    Rows index the bra (later in time), columns the ket.
    """
    if alpha > 4:
        raise ValueError("noisy_overlap supports alpha <= 4")
    if replicas_affected is None:
        affected = tuple(range(alpha))
    else:
        affected = tuple(sorted({int(r) - 1 for r in replicas_affected}))
        if any(not 0 <= r < alpha for r in affected):
            raise ValueError(f"replica labels must lie in 1..{alpha}")
    d = ch.dim_d
    perms = _perm_operators(d, alpha).astype(complex)
    evolved = perms
    for r in affected:
        evolved = _apply_on_replica(ch, evolved, r, alpha)
    # <<pi|X>> = Tr(P_pi^T X), permutation matrices are real
    entries = np.einsum("pij,sij->ps", perms, evolved)
    if np.max(np.abs(entries.imag)) > 1e-9:
        raise FloatingPointError("permutation overlaps acquired an imaginary part")
    return sym.OverlapMatrix(entries.real.copy(), d, _overlap_kind(len(affected), alpha))


def boundary_overlap(ch: KrausChannel | None, alpha: int, bra: int, replicas_affected=None) -> np.ndarray:
    """Row ``bra`` of the (noisy) overlap matrix, as a vector over kets."""
    d = 2 if ch is None else ch.dim_d
    if ch is None or ch.is_identity:
        return sym.gram(d, alpha).entries[bra].copy()
    return noisy_overlap(ch, alpha, replicas_affected).entries[bra].copy()


def cost_exponents(ch: KrausChannel) -> CostExponents:
    """``g_{pi,sigma} = log_d G - log_d G~`` at two replicas."""
    d = ch.dim_d
    clean = sym.gram(d, 2).entries
    noisy = noisy_overlap(ch, 2).entries
    e, s = sym.identity_index(2), sym.cycle_index(2)

    def g(a, b):
        if noisy[a, b] <= 0:
            raise FloatingPointError(f"noisy overlap entry [{a},{b}] = {noisy[a, b]} is not positive")
        return math.log(clean[a, b], d) - math.log(noisy[a, b], d)

    return CostExponents(g_se=g(s, e), g_ss=g(s, s), g_es=g(e, s))


def hashing_h2(ch: KrausChannel) -> float:
    """Two-replica Hashing bound ``H_2 = g_ss - g_se`` (base ``d``)."""
    return cost_exponents(ch).h2


def hashing_h_alpha(d: int, gamma: float, alpha: int, family: str = "depolarizing") -> float:
    """Closed-form ``alpha``-replica Hashing bound for depolarizing noise."""
    if family != "depolarizing":
        raise ValueError("hashing_h_alpha is only defined for the depolarizing family")
    if alpha < 2:
        raise ValueError("alpha must be >= 2")
    _check_prob("gamma", gamma)
    d2 = d * d
    inner = (1 - (d2 - 1) / d2 * gamma) ** alpha + (d2 - 1) * (gamma / d2) ** alpha
    return math.log(inner, d) / (1 - alpha)


# --------------------------------------------------------------------------
# Channel specification grammar
# --------------------------------------------------------------------------

_SPEC_RE = re.compile(r"^\s*([a-z_]+)\s*\((.*)\)\s*$", re.S)


def parse_channel(text: str, d: int = 2, base_dir: Path | None = None) -> KrausChannel:
    """Parse ``depolarizing(gamma=0.1)``, ``amplitude_damping(gamma=0.1)``,
    ``pauli(p=[...])`` or ``kraus(file=...)``."""
    m = _SPEC_RE.match(text)
    if not m:
        raise ValueError(f"cannot parse channel spec {text!r}")
    name, argtext = m.groups()
    try:
        call = ast.parse(f"f({argtext})", mode="eval").body
        kwargs = {kw.arg: ast.literal_eval(kw.value) for kw in call.keywords}
    except (SyntaxError, ValueError) as exc:
        raise ValueError(f"bad arguments in channel spec {text!r}: {exc}") from None
    if call.args:
        raise ValueError(f"channel spec {text!r} takes keyword arguments only")
    try:
        if name == "depolarizing":
            return depolarizing(int(kwargs.pop("d", d)), float(kwargs.pop("gamma")))
        if name == "amplitude_damping":
            return amplitude_damping(float(kwargs.pop("gamma")))
        if name == "pauli":
            return pauli_channel(*[float(p) for p in kwargs.pop("p")])
        if name == "identity":
            return identity_channel(int(kwargs.pop("d", d)))
        if name == "kraus":
            path = Path(kwargs.pop("file"))
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            return load_kraus_file(path)
    except KeyError as exc:
        raise ValueError(f"channel spec {text!r} is missing argument {exc}") from None
    raise ValueError(f"unknown channel family {name!r}")


def load_kraus_file(path) -> KrausChannel:
    """Read Kraus matrices from text: one row per line as ``re,im`` pairs
    separated by whitespace; blank lines separate matrices; ``#`` comments."""
    mats, rows = [], []
    for raw in Path(path).read_text().splitlines() + [""]:
        line = raw.split("#", 1)[0].strip()
        if not line:
            if rows:
                mats.append(np.array(rows, dtype=complex))
                rows = []
            continue
        entries = []
        for tok in line.split():
            re_s, im_s = tok.split(",")
            entries.append(complex(float(re_s), float(im_s)))
        rows.append(entries)
    if not mats:
        raise ValueError(f"no Kraus matrices found in {path}")
    d = mats[0].shape[0]
    return KrausChannel(d, tuple(mats), "custom", (str(path),))


def channel_spec_string(ch: KrausChannel) -> str:
    if ch.label == "depolarizing":
        return f"depolarizing(gamma={ch.params[1]!r})"
    if ch.label == "amplitude-damping":
        return f"amplitude_damping(gamma={ch.params[0]!r})"
    if ch.label == "pauli":
        return f"pauli(p={list(ch.params)!r})"
    if ch.label == "identity":
        return "identity()"
    return "custom"
