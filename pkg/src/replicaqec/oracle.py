"""Brute-force Monte Carlo over sampled Haar brickwork circuits.

Each sample draws its gates (and any trajectory randomness) from its own
counter-based Philox stream keyed on ``(seed, sample index)``, so results do
not depend on batching or worker count. Two evolution methods:

``density``
    Exact density matrix per circuit; channels applied as superoperators.
``trajectory``
    Two independent Kraus trajectories per circuit. Overlaps between the
    two give unbiased per-circuit estimates of every purity, at the cost of
    extra variance. Needed when the reference system makes density
    matrices too large for the sample budget.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import lattice
from .lattice import LatticeSpec

ORACLE_TARGETS = ("purity_B", "purity_RB", "holevo_mixed", "holevo_zero", "fidelity")
MAX_DENSITY_SITES = 10
MAX_STATE_SITES = 20
MIN_SAMPLES = 100
CHUNK = 250


@dataclass(frozen=True)
class McEstimate:
    mean: float
    std_error: float
    n_samples: int

    @classmethod
    def from_samples(cls, values) -> "McEstimate":
        values = np.asarray(values, dtype=float)
        n = values.size
        err = float(values.std(ddof=1) / math.sqrt(n)) if n > 1 else math.inf
        return cls(float(values.mean()), err, n)

    def z_score(self, value: float) -> float:
        # floor at round-off so zero-variance ensembles compare sensibly
        err = max(self.std_error, 1e-12 * max(1.0, abs(self.mean)))
        return (value - self.mean) / err


@dataclass(frozen=True, eq=False)
class CircuitSample:
    seed: int
    index: int
    gates: tuple[np.ndarray, ...]     # one q x q unitary per brickwork gate, time ordered


class FramePotential(NamedTuple):
    estimate: McEstimate
    delta_f: float


def sample_stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=tuple(key))))


def haar_unitaries(q: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """``size`` Haar unitaries via QR of complex Ginibre matrices, phases fixed."""
    z = (rng.standard_normal((size, q, q)) + 1j * rng.standard_normal((size, q, q))) / math.sqrt(2)
    qm, r = np.linalg.qr(z)
    diag = np.diagonal(r, axis1=1, axis2=2)
    return qm * (diag / np.abs(diag))[:, None, :]


def sample_haar_gate(d: int, rng: np.random.Generator) -> np.ndarray:
    return haar_unitaries(d * d, 1, rng)[0]


def sample_circuit(n_sites: int, depth: int, d: int, seed: int, index: int) -> CircuitSample:
    geo = lattice.brickwork(n_sites, depth)
    rng = sample_stream(seed, index)
    gates = haar_unitaries(d * d, len(geo.gates), rng)
    return CircuitSample(seed, index, tuple(gates))


# --------------------------------------------------------------------------
# Batched state kernels; arrays carry a leading sample axis
# --------------------------------------------------------------------------

def _apply_two_site(psi, u, x, d):
    """``psi``: (B, d, ..., d); ``u``: (B, d^2, d^2) acting on sites x, x+1."""
    b = psi.shape[0]
    moved = np.moveaxis(psi, (1 + x, 2 + x), (1, 2))
    shape = moved.shape
    out = np.matmul(u, moved.reshape(b, d * d, -1)).reshape(shape)
    return np.moveaxis(out, (1, 2), (1 + x, 2 + x))


def _apply_one_site(psi, k, x):
    """Same operator ``k`` on site ``x`` of every sample."""
    return np.moveaxis(np.tensordot(k, psi, axes=([1], [1 + x])), 0, 1 + x)


def _apply_channel_dm(rho, superop, x, n, d):
    """Superoperator on site ``x`` of a batched density matrix with ``n`` sites."""
    moved = np.moveaxis(rho, (1 + x, 1 + n + x), (-2, -1))
    shape = moved.shape
    out = (moved.reshape(shape[:-2] + (d * d,)) @ superop.T).reshape(shape)
    return np.moveaxis(out, (-2, -1), (1 + x, 1 + n + x))


def _apply_gate_dm(rho, u, x, n, d):
    rho = _apply_two_site(rho, u, x, d)
    # columns: rho U^dag -> act with U* on the column indices
    b = rho.shape[0]
    moved = np.moveaxis(rho, (1 + n + x, 2 + n + x), (1, 2))
    shape = moved.shape
    out = np.matmul(u.conj(), moved.reshape(b, d * d, -1)).reshape(shape)
    return np.moveaxis(out, (1, 2), (1 + n + x, 2 + n + x))


def _trajectory_channel(psi, kraus, x, u):
    """Sample one Kraus branch per sample with uniforms ``u`` (shape (B,)).

    Branch weights come from the single-site reduced state, so only the
    chosen operator is ever applied.
    """
    b, d = psi.shape[0], psi.shape[1 + x]
    moved = np.moveaxis(psi, 1 + x, 1)
    shape = moved.shape
    flat = moved.reshape(b, d, -1)
    rho = flat @ flat.conj().transpose(0, 2, 1)
    ops = np.asarray(kraus)
    effects = np.einsum("aki,akj->aij", ops.conj(), ops)
    probs = np.einsum("aij,bji->ba", effects, rho).real
    cum = np.cumsum(probs, axis=1)
    choice = np.minimum((cum < (u * cum[:, -1])[:, None]).sum(axis=1), len(ops) - 1)
    picked = probs[np.arange(b), choice]
    out = (ops[choice] @ flat) / np.sqrt(picked)[:, None, None]
    return np.moveaxis(out.reshape(shape), 1, 1 + x)


# --------------------------------------------------------------------------
# Initial states
# --------------------------------------------------------------------------

def _initial_pure(spec: LatticeSpec, n_ref: int, logical) -> np.ndarray:
    """Bell pairs between ``logical`` sites and reference sites N.., |0> elsewhere."""
    d, n = spec.local_dim, spec.n_sites
    psi = np.zeros((d,) * (n + n_ref), dtype=complex)
    logical = list(logical)
    for vals in np.ndindex(*(d,) * len(logical)):
        idx = [0] * (n + n_ref)
        for j, (site, v) in enumerate(zip(logical, vals)):
            idx[site] = v
            idx[n + j] = v
        psi[tuple(idx)] = 1.0
    return psi / math.sqrt(psi.size and np.sum(np.abs(psi) ** 2))


def _initial_density(spec: LatticeSpec, target: str):
    """Returns (rho, n_sites_total) for the density method."""
    d, n = spec.local_dim, spec.n_sites
    if target == "purity_RB":
        logical = spec.logical_sites()
        psi = _initial_pure(spec, len(logical), logical).reshape(-1)
        n_tot = n + len(logical)
        return np.outer(psi, psi.conj()).reshape((d,) * (2 * n_tot)), n_tot
    if target == "purity_B":
        mixed = set(spec.logical_sites())
    elif target == "holevo_mixed":
        mixed = set(range(n))
    else:
        mixed = set()
    rho = np.array(1.0 + 0j)
    for x in range(n):
        single = np.eye(d) / d if x in mixed else np.diag([1.0] + [0.0] * (d - 1))
        rho = np.multiply.outer(rho, single)
    # interleaved (row, col) per site -> rows then cols
    perm = [2 * i for i in range(n)] + [2 * i + 1 for i in range(n)]
    return np.transpose(rho, perm).astype(complex), n


# --------------------------------------------------------------------------
# Per-chunk simulation
# --------------------------------------------------------------------------

def _noise_schedule(spec: LatticeSpec):
    """Layers after which every site receives the channel."""
    if spec.channel.is_identity:
        return set()
    if spec.setup == "I":
        return {spec.depth - 1}
    return set(range(spec.depth))


def _draw(spec, seed, indices, n_traj):
    geo = lattice.brickwork(spec.n_sites, spec.depth)
    q = spec.local_dim ** 2
    n_noise = len(_noise_schedule(spec)) * spec.n_sites
    gates, uniforms = [], []
    for i in indices:
        rng = sample_stream(seed, i)
        gates.append(haar_unitaries(q, len(geo.gates), rng))
        uniforms.append(rng.random((n_traj, n_noise)))
    return geo, np.stack(gates, axis=1), np.stack(uniforms, axis=1)


def _run_density(spec, targets, seed, indices):
    geo, gates, _ = _draw(spec, seed, indices, 0)
    d, n = spec.local_dim, spec.n_sites
    b = len(indices)
    schedule = _noise_schedule(spec)
    superop = spec.channel.superoperator()
    out = {}
    for target in targets:
        rho0, n_tot = _initial_density(spec, target)
        rho = np.broadcast_to(rho0, (b,) + rho0.shape).copy()
        psi_clean = None
        if target == "fidelity":
            psi_clean = np.zeros((b,) + (d,) * n, dtype=complex)
            psi_clean[(slice(None),) + (0,) * n] = 1.0
        layer_of = [layer for layer, _ in geo.gates]
        g = 0
        for layer in range(spec.depth):
            while g < len(geo.gates) and layer_of[g] == layer:
                x = geo.gates[g][1]
                rho = _apply_gate_dm(rho, gates[g], x, n_tot, d)
                if psi_clean is not None:
                    psi_clean = _apply_two_site(psi_clean, gates[g], x, d)
                g += 1
            if layer in schedule:
                for x in range(n):
                    rho = _apply_channel_dm(rho, superop, x, n_tot, d)
        mat = rho.reshape(b, d ** n_tot, d ** n_tot)
        if target == "fidelity":
            v = psi_clean.reshape(b, -1)
            vals = np.einsum("bi,bij,bj->b", v.conj(), mat, v).real
        elif target == "purity_B" or target == "purity_RB" or target.startswith("holevo"):
            vals = np.einsum("bij,bji->b", mat, mat).real
        out[target] = vals
    return out


def _run_trajectory(spec, targets, seed, indices):
    geo, gates, uniforms = _draw(spec, seed, indices, 2)
    d, n = spec.local_dim, spec.n_sites
    b = len(indices)
    schedule = sorted(_noise_schedule(spec))
    kraus = spec.channel.kraus_ops
    layer_of = [layer for layer, _ in geo.gates]
    out = {}

    def evolve(psi, traj, clean=False):
        g = 0
        event = 0
        for layer in range(spec.depth):
            while g < len(geo.gates) and layer_of[g] == layer:
                psi = _apply_two_site(psi, gates[g], geo.gates[g][1], d)
                g += 1
            if layer in schedule:
                for x in range(n):
                    if not clean:
                        psi = _trajectory_channel(psi, kraus, x, uniforms[traj, :, event])
                    event += 1
        return psi

    def batch(psi0):
        return np.broadcast_to(psi0, (b,) + psi0.shape).copy()

    need_choi = {"purity_B", "purity_RB"} & set(targets)
    if need_choi:
        logical = spec.logical_sites()
        k = len(logical)
        psi0 = _initial_pure(spec, k, logical)
        pa = evolve(batch(psi0), 0).reshape(b, d ** n, d ** k)
        pb = evolve(batch(psi0), 1).reshape(b, d ** n, d ** k)
        if "purity_RB" in targets:
            out["purity_RB"] = np.abs(np.einsum("bij,bij->b", pa.conj(), pb)) ** 2
        if "purity_B" in targets:
            m = np.einsum("bir,bis->brs", pa, pb.conj())
            out["purity_B"] = np.sum(np.abs(m) ** 2, axis=(1, 2))
    zero = np.zeros((d,) * n, dtype=complex)
    zero[(0,) * n] = 1.0
    if "holevo_zero" in targets or "fidelity" in targets:
        za = evolve(batch(zero), 0).reshape(b, -1)
        if "holevo_zero" in targets:
            zb = evolve(batch(zero), 1).reshape(b, -1)
            out["holevo_zero"] = np.abs(np.einsum("bi,bi->b", za.conj(), zb)) ** 2
        if "fidelity" in targets:
            clean = evolve(batch(zero), 0, clean=True).reshape(b, -1)
            out["fidelity"] = np.abs(np.einsum("bi,bi->b", clean.conj(), za)) ** 2
    if "holevo_mixed" in targets:
        psi0 = _initial_pure(spec, n, range(n))
        ma = evolve(batch(psi0), 0).reshape(b, d ** n, d ** n)
        mb = evolve(batch(psi0), 1).reshape(b, d ** n, d ** n)
        m = np.einsum("bir,bis->brs", ma, mb.conj())
        out["holevo_mixed"] = np.sum(np.abs(m) ** 2, axis=(1, 2))
    return out


def _chunk_job(args):
    spec, targets, seed, start, stop, method = args
    run = _run_density if method == "density" else _run_trajectory
    return run(spec, targets, seed, range(start, stop))


def choose_method(spec: LatticeSpec, targets) -> str:
    n_ref = 0
    if "purity_RB" in targets:
        n_ref = spec.k_logical
    sites = spec.n_sites + n_ref
    return "density" if sites <= 6 else "trajectory"


def simulate_annealed(spec: LatticeSpec, target, n_samples: int, seed: int = 0, *,
                      method: str = "auto", workers: int = 1, chunk: int = CHUNK):
    """Monte Carlo estimate of the annealed quantity for one or more targets.

    ``target`` may be a single name (returns a :class:`McEstimate`) or a
    sequence (returns a dict).
    """
    single = isinstance(target, str)
    targets = (target,) if single else tuple(target)
    for tg in targets:
        if tg not in ORACLE_TARGETS:
            raise ValueError(f"unknown oracle target {tg!r}")
        if tg == "fidelity" and spec.setup != "II":
            raise ValueError("fidelity needs setup II")
    if spec.alpha != 2:
        raise ValueError("the oracle estimates two-replica quantities")
    if n_samples < MIN_SAMPLES:
        raise ValueError(f"n_samples must be >= {MIN_SAMPLES}")
    if method == "auto":
        method = choose_method(spec, targets)
    n_ref = max([spec.k_logical if tg in ("purity_B", "purity_RB") else 0 for tg in targets]
                + [spec.n_sites if tg == "holevo_mixed" else 0 for tg in targets])
    limit = MAX_DENSITY_SITES if method == "density" else MAX_STATE_SITES
    sites = spec.n_sites + (n_ref if method == "trajectory" or "purity_RB" in targets or
                            "holevo_mixed" in targets and method == "trajectory" else 0)
    if sites > limit:
        raise ValueError(f"{sites} sites exceed the {method} ceiling of {limit}")
    jobs = [(spec, targets, seed, s, min(s + chunk, n_samples), method)
            for s in range(0, n_samples, chunk)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            parts = list(pool.map(_chunk_job, jobs))
    else:
        parts = [_chunk_job(j) for j in jobs]
    result = {tg: McEstimate.from_samples(np.concatenate([p[tg] for p in parts])) for tg in targets}
    return result[targets[0]] if single else result


# --------------------------------------------------------------------------
# Frame potential
# --------------------------------------------------------------------------

def haar_frame_potential(dim: int, alpha: int, convention: str = "state") -> float:
    """Haar value of ``E|<psi'|psi>|^(2 alpha)``.

    ``"state"``: the exact state-ensemble value ``alpha! (D-1)! / (D+alpha-1)!``.
    ``"printed"``: ``alpha! D^(-2 alpha)``.
    """
    if convention == "state":
        return math.exp(math.lgamma(alpha + 1) + math.lgamma(dim) - math.lgamma(dim + alpha))
    if convention == "printed":
        return math.factorial(alpha) * float(dim) ** (-2 * alpha)
    raise ValueError(f"unknown convention {convention!r}")


def _frame_chunk(args):
    n, t, alpha, d, seed, start, stop = args
    geo = lattice.brickwork(n, t)
    q = d * d
    idx = range(start, stop)
    b = len(idx)
    states = []
    for copy in (0, 1):
        gates = np.stack([haar_unitaries(q, len(geo.gates), sample_stream(seed, i, copy))
                          for i in idx], axis=1)
        psi = np.zeros((b,) + (d,) * n, dtype=complex)
        psi[(slice(None),) + (0,) * n] = 1.0
        for g, (_, x) in enumerate(geo.gates):
            psi = _apply_two_site(psi, gates[g], x, d)
        states.append(psi.reshape(b, -1))
    overlap = np.abs(np.einsum("bi,bi->b", states[0].conj(), states[1])) ** 2
    return overlap ** alpha


def frame_potential(n_sites: int, t: int, alpha: int, n_pairs: int, seed: int = 0, *,
                    d: int = 2, convention: str = "state", workers: int = 1,
                    chunk: int = CHUNK) -> FramePotential:
    """Monte Carlo frame potential of depth-``t`` brickwork states ``U|0..0>``."""
    if n_sites > 14:
        raise ValueError("statevector frame potential supports N <= 14")
    if n_pairs < MIN_SAMPLES:
        raise ValueError(f"n_pairs must be >= {MIN_SAMPLES}")
    haar = haar_frame_potential(d ** n_sites, alpha, convention)
    if t == 0:
        est = McEstimate(1.0, 0.0, n_pairs)
        return FramePotential(est, 1.0 / haar - 1.0)
    jobs = [(n_sites, t, alpha, d, seed, s, min(s + chunk, n_pairs)) for s in range(0, n_pairs, chunk)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            parts = list(pool.map(_frame_chunk, jobs))
    else:
        parts = [_frame_chunk(j) for j in jobs]
    est = McEstimate.from_samples(np.concatenate(parts))
    return FramePotential(est, est.mean / haar - 1.0)
