"""Infinite-depth (random-matrix) predictions and finite-depth correction fits."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from . import lattice, sym
from .noise import CostExponents

REGIME_TOL = 1e-9
MODELS = ("N_exp2t", "exp_t", "N_over_t", "N_exp_t")


@dataclass(frozen=True)
class RMPrediction:
    log_purity_B: float
    log_purity_RB: float
    info_per_site: float
    regime: str


@dataclass(frozen=True)
class CorrectionFit:
    model: str
    rate: float
    prefactor: float
    residual: float
    n_points: int
    rate_tau_units: float = math.nan


class AlphaMoments(NamedTuple):
    log_purity_B: float
    log_purity_RB: float
    f_alpha: float


class Setup2Prediction(NamedTuple):
    exponents_B: tuple[float, float]
    exponents_RB: tuple[float, float]
    critical_f2: float
    info_per_site: float


def _logsumexp_base(exponents, n, d):
    """``log(sum_i d^(-e_i N))`` in natural log."""
    logs = np.array([-e * n * math.log(d) for e in exponents])
    m = logs.max()
    return float(m + math.log(np.exp(logs - m).sum()))


def regime(h2: float, r: float, tol: float = REGIME_TOL) -> str:
    gap = h2 - (1 - r)
    if abs(gap) <= tol:
        return "critical"
    return "protected" if gap < 0 else "lost"


def rm_purities_setup1(r: float, g: CostExponents, n: int, d: int = 2) -> tuple[float, float]:
    """Two-term random-matrix purities (natural logs) for noise after the encoder."""
    _check_rate(r)
    log_b = _logsumexp_base([g.g_se + 1, g.g_ss + r], n, d)
    log_rb = _logsumexp_base([g.g_se + 1 + r, g.g_ss], n, d)
    return log_b, log_rb


def rm_coherent_setup1(r: float, g: CostExponents) -> float:
    _check_rate(r)
    return min(g.g_se + 1, g.g_ss + r) - min(g.g_se + 1 + r, g.g_ss)


def rm_setup1(r: float, g: CostExponents, n: int, d: int = 2) -> RMPrediction:
    log_b, log_rb = rm_purities_setup1(r, g, n, d)
    return RMPrediction(log_b, log_rb, rm_coherent_setup1(r, g), regime(g.h2, r))


def rm_setup2(r: float, g: CostExponents, f2: float) -> Setup2Prediction:
    """Exponents (per site, base d) of the noisy-encoder purities."""
    _check_rate(r)
    if f2 < 0:
        raise ValueError(f"f2 must be >= 0, got {f2}")
    exp_b = (g.g_se + 1, f2 + r * (1 + g.g_se))
    exp_rb = (g.g_se + 1 + r * (g.g_es + 1), f2 + g.g_ss * r)
    return Setup2Prediction(exp_b, exp_rb, (1 - r) * (1 + g.g_se), min(exp_b) - min(exp_rb))


def rm_setup2_purities(r: float, g: CostExponents, f2: float, n: int, d: int = 2):
    pred = rm_setup2(r, g, f2)
    return _logsumexp_base(pred.exponents_B, n, d), _logsumexp_base(pred.exponents_RB, n, d)


def rm_holevo(r: float, g: CostExponents) -> float:
    _check_rate(r)
    return min(g.g_se + 1, g.g_ss + r) - min(g.g_se + 1, g.g_ss)


def _check_rate(r):
    if not 0 <= r <= 1:
        raise ValueError(f"rate r must lie in [0, 1], got {r}")


def alpha_moments(r: float, n: int, alpha: int, log_f_tilde: float, d: int = 2,
                  restrict: bool = False) -> AlphaMoments:
    """Closed-form alpha-Renyi moments summed over the symmetric group.

    Per site the overlap is ``<<s|sigma>> = d^#cycles(s^-1 sigma)`` and each
    permutation picks up ``F~^(alpha - n_fixed(sigma))``. ``restrict`` keeps
    only the identity and the full cycle.
    """
    if alpha > sym.MAX_ALPHA:
        raise ValueError(f"alpha must be <= {sym.MAX_ALPHA}")
    table = sym.cycle_count_table(alpha)
    fixed = sym.fixed_point_counts(alpha)
    e, s = sym.identity_index(alpha), sym.cycle_index(alpha)
    idx = [e, s] if restrict else range(table.shape[0])
    ln_d = math.log(d)
    logs_b, logs_rb = [], []
    for i in idx:
        c_s = table[s, i]
        c_e = table[i, e]
        weight = (alpha - fixed[i]) * log_f_tilde
        logs_b.append(n * (c_s + r * c_e) * ln_d + weight)
        logs_rb.append(n * (1 + r) * c_s * ln_d + weight)
    pref = -alpha * (1 + r) * n * ln_d
    f_alpha = -alpha / ((alpha - 1) * n) * log_f_tilde / ln_d
    return AlphaMoments(pref + _lse(logs_b), pref + _lse(logs_rb), f_alpha)


def _lse(values):
    v = np.asarray(values, dtype=float)
    m = v.max()
    return float(m + math.log(np.exp(v - m).sum()))


def thouless_tau(d: int) -> float:
    """Purity-decay time, ``1 / ln((d^2 + 1) / (2d))`` (natural log)."""
    if d < 2:
        raise ValueError("d must be >= 2")
    return 1.0 / math.log((d * d + 1) / (2 * d))


def haar_log_moment(spec: lattice.LatticeSpec, target: str, top: str = "cycle") -> float:
    """Exact finite-N value for a single global Haar unitary on all sites,
    channel applied once afterwards (the infinite-depth limit of setup I).

    Natural log of ``sum_{pi,sigma} Wg(d^N)[pi,sigma] prod_x top_x[pi] prod_x bottom_x[sigma]``.
    """
    d, alpha, n = spec.local_dim, spec.alpha, spec.n_sites
    bottoms = lattice._bottom_vectors(spec, target)
    readout = lattice._readout(spec, target, top)
    top_vec = readout(0 if target == "frame" else 1)
    with np.errstate(divide="ignore"):
        log_top = n * np.log(top_vec)
        log_bot = np.sum([np.log(b) for b in bottoms], axis=0)
    # Wg(q) = inv(G / q^alpha) / q^alpha with q = d^N kept in log form
    table = sym.cycle_count_table(alpha)
    log_q = n * math.log(d)
    scaled = np.exp((table - alpha) * log_q)
    w, _ = sym.pinv_symmetric(scaled)
    terms = log_top[:, None] + log_bot[None, :]
    m = np.max(terms[np.isfinite(terms)])
    total = float(np.sum(w * np.exp(terms - m)))
    if total <= 0:
        return -math.inf
    return m + math.log(total) - alpha * log_q


def haar_coherent_info(spec: lattice.LatticeSpec) -> float:
    log_b = haar_log_moment(spec, "purity_B")
    log_rb = haar_log_moment(spec, "purity_RB")
    return lattice.renyi_difference(log_b, log_rb, spec.alpha, spec.local_dim)


def haar_holevo_info(spec: lattice.LatticeSpec) -> float:
    log_b = haar_log_moment(spec, "purity_B")
    log_z = haar_log_moment(spec, "holevo_zero")
    return lattice.renyi_difference(log_b, log_z, spec.alpha, spec.local_dim)


def default_window(n: int, d: int = 2, which: str = "early", l0: float = 1.0,
                   t_max: float = math.inf) -> tuple[float, float]:
    """Early window ``t < tau ln(N / L0)``, late window beyond it."""
    t_cross = thouless_tau(d) * math.log(n / l0)
    if which == "early":
        return (0.0, t_cross)
    if which == "late":
        return (t_cross, t_max)
    raise ValueError("which must be 'early' or 'late'")


def fit_corrections(series, model: str, window=(-math.inf, math.inf), d: int = 2) -> CorrectionFit:
    """Least-squares fit of ``log|dI|`` against the model's log-linear form.

    ``series`` holds ``(N, t, dI)`` triples. Exponential models fit
    ``log(dI / N^p) = log A - rate * t`` (``p = 1`` for the ``N_*`` models);
    ``N_over_t`` fits ``log(dI / N) = log A + rate * log t``.
    """
    if model not in MODELS:
        raise ValueError(f"unknown model {model!r}; choose from {MODELS}")
    lo, hi = window
    pts = [(float(n), float(t), float(di)) for n, t, di in series if lo <= t <= hi]
    if len(pts) < 4:
        raise ValueError(f"window {window} holds {len(pts)} points; need >= 4")
    if any(di <= 0 for _, _, di in pts):
        raise ValueError(f"window {window} contains non-positive corrections")
    n_arr, t_arr, di_arr = (np.array(c) for c in zip(*pts))
    y = np.log(di_arr)
    if model != "exp_t":
        y = y - np.log(n_arr)
    x = np.log(t_arr) if model == "N_over_t" else t_arr
    design = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = float(np.sqrt(np.mean((design @ coef - y) ** 2)))
    if model == "N_over_t":
        return CorrectionFit(model, float(coef[1]), float(math.exp(coef[0])), resid, len(pts))
    rate = -float(coef[1])
    return CorrectionFit(model, rate, float(math.exp(coef[0])), resid, len(pts),
                         rate * thouless_tau(d))
