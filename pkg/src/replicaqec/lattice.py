"""Exact contraction of the replica permutation-spin model of brickwork circuits.

Every two-site Haar gate carries one permutation spin ``pi``. Its weight,
given the spins ``a``, ``b`` of the previous gates on its two sites, is

    T[pi, a, b] = sum_sigma Wg(d^2)[pi, sigma] * M_left[sigma, a] * M_right[sigma, b]

where ``M`` are the (possibly noisy) permutation overlaps along each site's
world line. Bottom and top boundary vectors close the network. Contraction is
exact variable elimination along a frontier, row by row (``time``) or column
by column (``space``), with a running log scale.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from . import noise, sym
from .noise import KrausChannel

TARGETS = ("purity_B", "purity_RB", "holevo_mixed", "holevo_zero", "fidelity", "frame")
DEFAULT_MAX_STATES = 2 ** 24


class ContractionTooLarge(MemoryError):
    def __init__(self, states, ceiling, direction):
        self.states = states
        self.ceiling = ceiling
        self.direction = direction
        super().__init__(
            f"{direction}-direction frontier needs {states:.3g} entries, ceiling is {ceiling:.3g}")


class BelowNoiseFloor(ArithmeticError):
    """Fidelity indistinguishable from a random state (``F <= d^-N``)."""

    def __init__(self, fidelity, floor):
        self.fidelity = fidelity
        self.floor = floor
        super().__init__(f"F = {fidelity:.6g} does not exceed the floor d^-N = {floor:.6g}")


@dataclass(frozen=True)
class LatticeSpec:
    n_sites: int
    k_logical: int
    depth: int
    channel: KrausChannel = field(default_factory=lambda: noise.identity_channel(2))
    alpha: int = 2
    setup: str = "I"
    placement: str = "contiguous"

    def __post_init__(self):
        n, k = self.n_sites, self.k_logical
        if n < 2 or n % 2:
            raise ValueError(f"n_sites must be even and >= 2, got {n}")
        if not 0 <= k <= n:
            raise ValueError(f"k_logical must lie in [0, {n}], got {k}")
        if self.depth < 1:
            raise ValueError(f"depth must be >= 1, got {self.depth}")
        if self.setup not in ("I", "II"):
            raise ValueError(f"setup must be 'I' or 'II', got {self.setup!r}")
        if self.placement not in ("contiguous", "uniform"):
            raise ValueError(f"unknown logical placement {self.placement!r}")
        if self.alpha not in (2, 3, 4):
            raise ValueError("lattice supports alpha in {2, 3, 4}")

    @property
    def local_dim(self) -> int:
        return self.channel.dim_d

    @property
    def rate(self) -> float:
        return self.k_logical / self.n_sites

    def logical_sites(self) -> tuple[int, ...]:
        n, k = self.n_sites, self.k_logical
        if self.placement == "contiguous":
            return tuple(range(k))
        return tuple(sorted({(i * n) // k for i in range(k)})) if k else ()


@dataclass(frozen=True)
class PurityResult:
    log_purity_B: float
    log_purity_RB: float
    spec: LatticeSpec


@dataclass(frozen=True, eq=False)
class GateTensor:
    weights: np.ndarray
    alpha: int


class FidelityResult(tuple):
    """``(F, f2)`` pair."""

    def __new__(cls, fidelity, f2):
        return super().__new__(cls, (fidelity, f2))

    @property
    def fidelity(self):
        return self[0]

    @property
    def f2(self):
        return self[1]


# --------------------------------------------------------------------------
# Geometry
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Geometry:
    n_sites: int
    depth: int
    gates: tuple[tuple[int, int], ...]           # (layer, left site), time ordered
    site_gates: tuple[tuple[int, ...], ...]      # gate ids touching each site, time ordered

    def lower(self, g: int, site: int):
        seq = self.site_gates[site]
        i = seq.index(g)
        return seq[i - 1] if i > 0 else None

    def upper(self, g: int, site: int):
        seq = self.site_gates[site]
        i = seq.index(g)
        return seq[i + 1] if i + 1 < len(seq) else None


@lru_cache(maxsize=64)
def brickwork(n_sites: int, depth: int) -> Geometry:
    """Open-chain brickwork; layer 0 couples (0,1),(2,3),..., layer 1 (1,2),(3,4),..."""
    gates = []
    site_gates = [[] for _ in range(n_sites)]
    for layer in range(depth):
        for x in range(layer % 2, n_sites - 1, 2):
            site_gates[x].append(len(gates))
            site_gates[x + 1].append(len(gates))
            gates.append((layer, x))
    return Geometry(n_sites, depth, tuple(gates), tuple(tuple(s) for s in site_gates))


# --------------------------------------------------------------------------
# Local weights
# --------------------------------------------------------------------------

def gate_tensor(d: int, alpha: int, link_overlap, right_overlap=None) -> GateTensor:
    """``T[pi, a, b] = sum_sigma Wg(d^2)[pi, sigma] M[sigma, a] M'[sigma, b]``.

    Either overlap may be a 1-D vector (a bottom boundary), which drops the
    corresponding axis.
    """
    left = _entries(link_overlap)
    right = left if right_overlap is None else _entries(right_overlap)
    wg = sym.weingarten(d * d, alpha).entries
    if left.ndim == 1 and right.ndim == 1:
        w = wg @ (left * right)
    elif left.ndim == 1:
        w = np.einsum("ps,s,sb->pb", wg, left, right)
    elif right.ndim == 1:
        w = np.einsum("ps,sa,s->pa", wg, left, right)
    else:
        w = np.einsum("ps,sa,sb->pab", wg, left, right)
    return GateTensor(w, alpha)


def _entries(m):
    return m.entries if isinstance(m, sym.OverlapMatrix) else np.asarray(m, dtype=float)


class _Links:
    """Overlap matrices along a world line, cached by number of noise events."""

    def __init__(self, channel, alpha, affected):
        self.channel = channel
        self.alpha = alpha
        self.affected = affected
        self.d = channel.dim_d
        self._cache = {}

    def matrix(self, n_noise: int) -> np.ndarray:
        if n_noise == 0 or self.channel.is_identity:
            return sym.gram(self.d, self.alpha).entries
        if n_noise not in self._cache:
            ch = noise.power(self.channel, n_noise)
            self._cache[n_noise] = noise.noisy_overlap(ch, self.alpha, self.affected).entries
        return self._cache[n_noise]


def _noise_between(setup, layer_lo, layer_hi):
    """Noise events on a world line between a gate at ``layer_lo`` and one at
    ``layer_hi`` (``None`` = the readout after the last layer ``depth``)."""
    if setup == "I":
        return 0
    return layer_hi - layer_lo


def _bottom_vectors(spec: LatticeSpec, target: str) -> list[np.ndarray]:
    d, alpha, n = spec.local_dim, spec.alpha, spec.n_sites
    g = sym.gram(d, alpha).entries
    e, s = sym.identity_index(alpha), sym.cycle_index(alpha)
    ones = np.ones(g.shape[0])
    norm = float(d) ** (-alpha)
    if target in ("holevo_zero", "fidelity", "frame"):
        return [ones] * n
    if target == "holevo_mixed":
        return [norm * g[:, e]] * n
    logical = set(spec.logical_sites())
    tau = e if target == "purity_B" else s
    return [norm * g[:, tau] if x in logical else ones for x in range(n)]


def _readout(spec: LatticeSpec, target: str, top: str):
    """Top boundary per site: function ``(n_noise) -> vector over last spin``."""
    alpha = spec.alpha
    affected = (1,) if target == "fidelity" else None
    links = _Links(spec.channel if target != "frame" else noise.identity_channel(spec.local_dim),
                   alpha, affected)
    if top == "free":
        n_states = len(sym.enumerate_group(alpha))
        return lambda n_noise: np.ones(n_states)
    row = sym.identity_index(alpha) if top == "identity" else sym.cycle_index(alpha)
    return lambda n_noise: links.matrix(n_noise)[row]


def _check_target(spec, target):
    if target not in TARGETS:
        raise ValueError(f"unknown target {target!r}; choose from {TARGETS}")
    if target == "fidelity" and (spec.setup != "II" or spec.alpha != 2):
        raise ValueError("fidelity needs setup II and alpha = 2")


def _build_factors(spec: LatticeSpec, target: str, geo: Geometry, top: str | None):
    """Per gate: (labels, tensor). ``top`` folds readout weights into the
    gates that are last on a site; ``None`` leaves them out."""
    d, alpha = spec.local_dim, spec.alpha
    affected = (1,) if target == "fidelity" else None
    channel = spec.channel if target != "frame" else noise.identity_channel(d)
    links = _Links(channel, alpha, affected)
    bottoms = _bottom_vectors(spec, target)
    readout = _readout(spec, target, top) if top else None
    setup = spec.setup if target != "frame" else "I"
    factors = []
    for g, (layer, x) in enumerate(geo.gates):
        ops, labels = [], [g]
        for site in (x, x + 1):
            lo = geo.lower(g, site)
            if lo is None:
                ops.append(bottoms[site])
            else:
                n_noise = _noise_between(setup, geo.gates[lo][0], layer)
                ops.append(links.matrix(n_noise))
                labels.append(lo)
        w = gate_tensor(d, alpha, ops[0], ops[1]).weights
        if readout is not None:
            for site in (x, x + 1):
                if geo.upper(g, site) is None:
                    n_top = 1 if setup == "I" and target != "frame" else 0
                    if setup == "II":
                        n_top = geo.depth - layer
                    w = w * readout(n_top).reshape((-1,) + (1,) * (w.ndim - 1))
        if len(labels) == 3 and labels[1] == labels[2]:
            # both sites come from the same lower gate (two-site chains)
            w = np.einsum("paa->pa", w)
            labels = labels[:2]
        factors.append((tuple(labels), w))
    return factors


# --------------------------------------------------------------------------
# Frontier elimination
# --------------------------------------------------------------------------

class _Frontier:
    def __init__(self, uses):
        self.uses = dict(uses)
        self.labels: list[int] = []
        self.psi = np.ones(())
        self.log_scale = 0.0

    def absorb(self, labels, tensor):
        for lab in set(labels):
            self.uses[lab] -= 1
        keep = [lab for lab in self.labels if self.uses[lab] > 0]
        keep += [lab for lab in labels if self.uses[lab] > 0 and lab not in keep]
        local = {lab: i for i, lab in enumerate(dict.fromkeys(self.labels + list(labels)))}
        self.psi = np.einsum(self.psi, [local[l] for l in self.labels],
                             tensor, [local[l] for l in labels],
                             [local[l] for l in keep], optimize=True)
        self.labels = keep
        self._renormalise()

    def _renormalise(self):
        m = float(np.max(np.abs(self.psi))) if self.psi.size else 0.0
        if m > 0 and math.isfinite(m):
            self.psi = self.psi / m
            self.log_scale += math.log(m)

    def close(self, vectors: dict) -> float:
        """Contract the remaining frontier with per-label vectors; natural log."""
        psi = self.psi
        for lab in reversed(self.labels):
            psi = psi @ vectors[lab]
        val = float(psi)
        if val <= 0:
            return -math.inf if val == 0 else math.nan
        return math.log(val) + self.log_scale


def _uses(geo: Geometry):
    uses = {}
    for g, (_, x) in enumerate(geo.gates):
        uppers = {geo.upper(g, x), geo.upper(g, x + 1)} - {None}
        uses[g] = 1 + len(uppers)
    return uses


def _order(geo: Geometry, direction: str):
    if direction == "time":
        return list(range(len(geo.gates)))
    return sorted(range(len(geo.gates)), key=lambda g: (geo.gates[g][1], geo.gates[g][0]))


def frontier_width(geo: Geometry, direction: str) -> int:
    """Largest number of live spins during the sweep."""
    uses = _uses(geo)
    live, width = set(), 0
    for g in _order(geo, direction):
        labels = {g} | {geo.lower(g, s) for s in (geo.gates[g][1], geo.gates[g][1] + 1)} - {None}
        for lab in labels:
            uses[lab] -= 1
        width = max(width, len(live | labels))
        live = {lab for lab in live | labels if uses[lab] > 0}
    return width


def choose_direction(spec: LatticeSpec, direction: str = "auto") -> str:
    if direction in ("time", "space"):
        return direction
    if direction != "auto":
        raise ValueError(f"direction must be time, space or auto, got {direction!r}")
    geo = brickwork(spec.n_sites, spec.depth)
    return min(("time", "space"), key=lambda dr: (frontier_width(geo, dr), dr != "time"))


def _check_size(geo, direction, alpha, max_states):
    n_states = len(sym.enumerate_group(alpha))
    width = frontier_width(geo, direction) + 1
    states = float(n_states) ** width
    if states > max_states:
        raise ContractionTooLarge(states, max_states, direction)


def contract(spec: LatticeSpec, target: str, *, top: str = "cycle",
             direction: str = "auto", max_states: int = DEFAULT_MAX_STATES) -> float:
    """Natural log of the replica-averaged quantity selected by ``target``.

    ``top`` picks the readout permutation on every site: ``"cycle"`` (the
    physical quantity), ``"identity"`` (the trace, exactly 1) or ``"free"``.
    """
    _check_target(spec, target)
    direction = choose_direction(spec, direction)
    geo = brickwork(spec.n_sites, spec.depth)
    _check_size(geo, direction, spec.alpha, max_states)
    factors = _build_factors(spec, target, geo, top)
    front = _Frontier(_uses(geo))
    for g in _order(geo, direction):
        front.absorb(*factors[g])
    return front.close({})


def contract_depths(spec: LatticeSpec, target: str, depths, *, top: str = "cycle",
                    max_states: int = DEFAULT_MAX_STATES) -> dict[int, float]:
    """Time-direction sweep returning ``contract`` at every depth in ``depths``
    from a single pass (``spec.depth`` is ignored)."""
    depths = sorted({int(t) for t in depths})
    if not depths or depths[0] < 1:
        raise ValueError("depths must be positive integers")
    deep = replace(spec, depth=depths[-1])
    _check_target(deep, target)
    geo = brickwork(deep.n_sites, deep.depth)
    _check_size(geo, "time", deep.alpha, max_states)
    factors = _build_factors(deep, target, geo, None)
    readout = _readout(deep, target, top)
    setup = deep.setup if target != "frame" else "I"
    uses = _uses(geo)
    for x in range(geo.n_sites):
        if geo.site_gates[x]:
            uses[geo.site_gates[x][-1]] += 1  # held for the final readout
    front = _Frontier(uses)
    out = {}
    wanted = set(depths)
    gate_iter = iter(range(len(geo.gates)))
    g = next(gate_iter, None)
    for layer in range(deep.depth):
        while g is not None and geo.gates[g][0] == layer:
            front.absorb(*factors[g])
            g = next(gate_iter, None)
        t = layer + 1
        if t not in wanted:
            continue
        vectors = {}
        for x in range(geo.n_sites):
            last = max((h for h in geo.site_gates[x] if geo.gates[h][0] < t), default=None)
            if setup == "I":
                n_top = 0 if target == "frame" else 1
            else:
                n_top = t - geo.gates[last][0]
            vec = readout(n_top)
            vectors[last] = vectors[last] * vec if last in vectors else vec
        out[t] = front.close(vectors)
    return out


# --------------------------------------------------------------------------
# Information measures
# --------------------------------------------------------------------------

def purities(spec: LatticeSpec, direction: str = "auto", **kw) -> PurityResult:
    return PurityResult(contract(spec, "purity_B", direction=direction, **kw),
                        contract(spec, "purity_RB", direction=direction, **kw), spec)


def renyi_difference(log_a: float, log_b: float, alpha: int, d: int) -> float:
    """``S_alpha(a) - S_alpha(b)`` in base ``d`` from natural-log moments."""
    return (log_a - log_b) / ((1 - alpha) * math.log(d))


def coherent_info(spec: LatticeSpec, direction: str = "auto", **kw) -> float:
    """Annealed Renyi-alpha coherent information ``S(B) - S(RB)``, base ``d``."""
    res = purities(spec, direction, **kw)
    return renyi_difference(res.log_purity_B, res.log_purity_RB, spec.alpha, spec.local_dim)


def holevo_info(spec: LatticeSpec, direction: str = "auto", ensemble: str = "logical",
                **kw) -> float:
    """Annealed Renyi-alpha Holevo information of a uniform basis ensemble.

    ``ensemble="logical"`` draws basis states on the k logical sites with the
    ancillas in |0>, so a noiseless deep circuit gives ``k``. ``"full"`` draws
    them on all N sites (noiseless value ``N``).
    """
    if ensemble == "logical":
        mixed = contract(spec, "purity_B", direction=direction, **kw)
    elif ensemble == "full":
        mixed = contract(spec, "holevo_mixed", direction=direction, **kw)
    else:
        raise ValueError(f"unknown ensemble {ensemble!r}")
    zero = contract(spec, "holevo_zero", direction=direction, **kw)
    return renyi_difference(mixed, zero, spec.alpha, spec.local_dim)


def fidelity_excess(log_f: float, n_sites: int, d: int) -> float:
    """``log(F - d^-N)``; raises :class:`BelowNoiseFloor` if not positive."""
    log_floor = -n_sites * math.log(d)
    if not log_f > log_floor:
        raise BelowNoiseFloor(math.exp(log_f), math.exp(log_floor))
    return log_f + math.log1p(-math.exp(log_floor - log_f))


def fidelity_f2(spec: LatticeSpec, direction: str = "auto", **kw) -> FidelityResult:
    if spec.setup != "II":
        raise ValueError("fidelity_f2 is defined for setup II")
    spec2 = replace(spec, alpha=2)
    log_f = contract(spec2, "fidelity", direction=direction, **kw)
    return FidelityResult(math.exp(log_f), f2_from_log_fidelity(log_f, spec.n_sites, spec.local_dim))


def f2_from_log_fidelity(log_f: float, n_sites: int, d: int) -> float:
    return -2.0 / n_sites * fidelity_excess(log_f, n_sites, d) / math.log(d)


def frame_potential_exact(n_sites: int, t: int, alpha: int, d: int = 2) -> float:
    """Exact ``E |<psi'|psi>|^(2 alpha)`` for independent depth-``t`` brickwork
    states ``U|0..0>``.

    ``U'^dag U`` is itself a Haar brickwork of depth ``2t - 1`` (the two middle
    layers multiply into one Haar layer), so the frame potential is a single
    replica lattice with all-zero states on both boundaries.
    """
    if t == 0:
        return 1.0
    spec = LatticeSpec(n_sites, 0, 2 * t - 1, noise.identity_channel(d), alpha=alpha)
    return math.exp(contract_depths(spec, "frame", [2 * t - 1], top="free")[2 * t - 1])


def frame_potential_curve(n_sites: int, ts, alpha: int, d: int = 2) -> dict[int, float]:
    """:func:`frame_potential_exact` at several depths from one sweep."""
    ts = sorted(set(ts))
    depths = [2 * t - 1 for t in ts if t > 0]
    out = {0: 1.0} if 0 in ts else {}
    if depths:
        spec = LatticeSpec(n_sites, 0, max(depths), noise.identity_channel(d), alpha=alpha)
        logs = contract_depths(spec, "frame", depths, top="free")
        out.update({(dep + 1) // 2: math.exp(v) for dep, v in logs.items()})
    return out


def gamma_for_f2(spec: LatticeSpec, make_channel, f2: float, gamma_max: float = 1.0,
                 xtol: float = 1e-12, **kw) -> float:
    """Noise strength at which a setup-II circuit reaches the given ``f2``.

    ``make_channel(gamma)`` builds the per-site channel; ``f2`` grows
    monotonically with ``gamma`` at fixed size and depth.
    """
    from scipy.optimize import brentq

    if spec.setup != "II":
        raise ValueError("gamma_for_f2 needs setup II")
    n, d = spec.n_sites, spec.local_dim
    cap = 10.0 * n    # stands in for f2 once F falls to the noise floor

    def excess(gamma):
        log_f = contract(replace(spec, channel=make_channel(gamma), alpha=2), "fidelity", **kw)
        try:
            return min(f2_from_log_fidelity(log_f, n, d), cap) - f2
        except BelowNoiseFloor:
            return cap - f2

    if not excess(gamma_max) > 0:
        raise ValueError(f"f2 = {f2} is not reached for gamma <= {gamma_max}")
    return float(brentq(excess, 0.0, gamma_max, xtol=xtol))
