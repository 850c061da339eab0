"""Command-line experiment runner.

    replicaqec run CONFIG [--out PATH] [--seed N] [--direction D] [--threads N]
    replicaqec reproduce FIGURE [--out DIR] ...
    replicaqec rm --channel depolarizing --r 0.25 --gamma-grid 0:1:21

Results are CSV files with a ``#`` header that embeds the full config and the
package version. Exit codes: 0 success, 1 config error, 2 some sweep points
failed, 3 some points hit the contraction size ceiling.
"""
from __future__ import annotations

import argparse
import itertools
import logging
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__, asym, lattice, noise, oracle
from .config import ConfigError, ExperimentConfig, load, load_recipe, loads

log = logging.getLogger("replicaqec")

SCHEMA_VERSION = 1
EXIT_OK, EXIT_CONFIG, EXIT_POINTS, EXIT_RESOURCES = 0, 1, 2, 3
FIGURES = ("fig2a", "fig2b", "fig2c", "fig2d", "fig3", "fig4", "fig5")

_PARAMS = ["n", "k", "t", "alpha", "r", "setup", "placement", "channel", "gamma", "h2", "h_alpha",
           "tau"]
COLUMNS = {
    "lattice": _PARAMS + ["f2_target", "direction", "log_purity_b", "log_purity_rb", "ic", "ic_per_site",
                          "holevo", "fidelity", "f2", "regime", "elapsed_s"],
    "rm": ["r", "setup", "channel", "gamma", "h2", "f2", "g_se", "g_ss", "g_es", "ic_per_site",
           "holevo_per_site", "critical_f2", "regime"],
    "oracle": _PARAMS + ["method", "n_samples", "purity_b", "purity_b_err", "purity_rb",
                         "purity_rb_err", "holevo_zero", "holevo_zero_err", "fidelity",
                         "fidelity_err", "elapsed_s"],
    "frame": ["n", "t", "alpha", "frame_exact", "haar_state", "haar_printed", "delta_f",
              "delta_f_printed", "mc_mean", "mc_err", "mc_delta_f", "n_samples", "elapsed_s"],
    "fit": _PARAMS + ["f2_target", "quantity", "value", "reference", "delta", "f2", "elapsed_s"],
}
FIT_COLUMNS = ["group", "n", "alpha", "r", "channel", "gamma", "h2", "f2", "quantity", "model",
               "window_lo", "window_hi", "rate", "rate_tau_units", "prefactor", "residual",
               "n_points"]
TIMING = {"elapsed_s"}


# --------------------------------------------------------------------------
# Formatting
# --------------------------------------------------------------------------

def fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, str):
        if any(c in value for c in ',"\n'):
            return '"' + value.replace('"', '""') + '"'
        return value
    x = float(value)
    if not math.isfinite(x):
        raise ValueError(f"non-finite value {x}")
    if x == 0:
        return "0"
    if abs(x) < 1e-3 or abs(x) >= 1e15:
        return f"{x:.12e}"
    return f"{x:.12g}"


def write_csv(path: Path, columns, rows, cfg: ExperimentConfig, schema: str, extra=()):
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"# replicaqec {__version__}", f"# schema: {schema}/{SCHEMA_VERSION}"]
    lines += [f"# {e}" for e in extra]
    lines.append("# config:")
    lines += [f"# {ln}" if ln else "#" for ln in cfg.to_toml().splitlines()]
    lines.append("# end config")
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(fmt(row.get(c)) for c in columns))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


# --------------------------------------------------------------------------
# Sweep points
# --------------------------------------------------------------------------

@dataclass
class Failure:
    params: dict
    error: str
    resource: bool = False


def make_channel(cfg: ExperimentConfig, axis: str | None, value):
    fam, d = cfg.channel.strip(), cfg.d
    if "(" in fam:
        return noise.parse_channel(fam, d=d)
    if fam == "identity" or value is None:
        return noise.identity_channel(d)
    if axis == "h2":
        return noise.depolarizing(d, noise.depolarizing_gamma(value, d))
    return _family(fam, d)(value)


def _family(fam, d):
    if fam == "depolarizing":
        return lambda g: noise.depolarizing(d, g)
    if fam == "amplitude_damping":
        if d != 2:
            raise ValueError("amplitude damping is defined for qubits")
        return noise.amplitude_damping
    raise ValueError(f"no single-parameter family {fam!r}")


def _channel_gamma(ch):
    if ch.label in ("depolarizing",):
        return ch.params[1]
    if ch.label in ("amplitude-damping", "amplitude_damping"):
        return ch.params[-1]
    return None


def _params(cfg, n, r, alpha, t, ch):
    k = int(round(r * n))
    gamma = _channel_gamma(ch)
    h_alpha = None
    if ch.label == "depolarizing" and gamma is not None:
        h_alpha = noise.hashing_h_alpha(cfg.d, gamma, alpha)
    return {"n": n, "k": k, "t": t, "alpha": alpha, "r": r, "setup": cfg.setup,
            "placement": cfg.placement, "channel": noise.channel_spec_string(ch), "gamma": gamma,
            "h2": noise.hashing_h2(ch), "h_alpha": h_alpha, "tau": asym.thouless_tau(cfg.d)}


def _groups(cfg: ExperimentConfig):
    """Sweep points grouped over everything but depth, in a fixed order."""
    sw = cfg.sweep
    axis = cfg.noise_axis
    noise_vals = sw.get(axis, (None,)) if axis else (None,)
    for gi, (n, r, alpha, nv) in enumerate(itertools.product(
            sw["n"], sw.get("r", (0.0,)), sw.get("alpha", (2,)), noise_vals)):
        yield gi, {"n": n, "r": r, "alpha": alpha, "noise": nv, "axis": axis, "ts": sw["t"]}


def _regime2(f2, crit, tol=1e-9):
    if abs(f2 - crit) <= tol:
        return "critical"
    return "protected" if f2 < crit else "lost"


def _check_row(row, d):
    """Moment bounds: d^-((alpha-1) * sites) <= E Tr rho^alpha <= 1."""
    n, k, alpha = row["n"], row["k"], row["alpha"]
    for key, sites in (("log_purity_b", n), ("log_purity_rb", n + k)):
        v = row.get(key)
        floor = -(alpha - 1) * sites * math.log(d) - 1e-9
        if v is not None and not floor <= v <= 1e-9:
            raise ArithmeticError(f"{key} = {v} outside [{floor:.6g}, 0]")
    ic = row.get("ic")
    if ic is not None and abs(ic) > row["k"] + 1e-9 * max(1, n):
        raise ArithmeticError(f"ic = {ic} outside [-k, k]")


def _series_specs(cfg, g):
    """(t, spec) for each depth of a group; f2 axes solve for gamma per depth."""
    n, r, alpha = g["n"], g["r"], g["alpha"]
    k = int(round(r * n))
    out = []
    for t in g["ts"]:
        if g["axis"] == "f2":
            base = lattice.LatticeSpec(n, k, t, noise.identity_channel(cfg.d), alpha=alpha,
                                       setup=cfg.setup, placement=cfg.placement)
            fam = _family(cfg.channel, cfg.d)
            gamma = lattice.gamma_for_f2(base, fam, g["noise"], max_states=cfg.max_states,
                                         direction=cfg.direction)
            ch = fam(gamma)
        else:
            ch = make_channel(cfg, g["axis"], g["noise"])
        out.append((t, lattice.LatticeSpec(n, k, t, ch, alpha=alpha, setup=cfg.setup,
                                           placement=cfg.placement)))
    return out


def _lattice_values(cfg, g, targets):
    """{t: {target: log value}} for one group, sharing sweeps where possible."""
    specs = _series_specs(cfg, g)
    same_channel = g["axis"] != "f2"
    out = {t: {} for t, _ in specs}
    deepest = max(specs, key=lambda p: p[0])[1]
    direction = lattice.choose_direction(deepest, cfg.direction)
    errors = {}
    for target in targets:
        alpha_spec = (lambda s: replace(s, alpha=2)) if target == "fidelity" else (lambda s: s)
        if same_channel and direction == "time":
            ts = [t for t, _ in specs]
            try:
                vals = lattice.contract_depths(alpha_spec(deepest), target, ts,
                                               max_states=cfg.max_states)
                for t in ts:
                    out[t][target] = vals[t]
                continue
            except lattice.ContractionTooLarge:
                pass    # fall back to per-depth choices below
        for t, spec in specs:
            try:
                out[t][target] = lattice.contract(alpha_spec(spec), target,
                                                  direction=cfg.direction,
                                                  max_states=cfg.max_states)
            except lattice.ContractionTooLarge as exc:
                errors[t] = exc
    return specs, out, errors


def _job_lattice(args):
    cfg, gi, g = args
    t0 = time.perf_counter()
    rows, fails = [], []
    targets = ["purity_B", "purity_RB"]
    if "holevo" in cfg.quantities:
        targets.append("holevo_zero")
    if "fidelity" in cfg.quantities:
        targets.append("fidelity")
    try:
        specs, vals, errors = _lattice_values(cfg, g, targets)
    except Exception as exc:  # noqa: BLE001 - per-point failures are reported, not raised
        base = {"n": g["n"], "r": g["r"], "alpha": g["alpha"], g["axis"] or "noise": g["noise"]}
        return gi, [], [Failure(base, repr(exc), isinstance(exc, lattice.ContractionTooLarge))]
    elapsed = (time.perf_counter() - t0) / max(1, len(specs))
    for t, spec in specs:
        params = _params(cfg, spec.n_sites, g["r"], spec.alpha, t, spec.channel)
        if g["axis"] == "f2":
            params["f2_target"] = g["noise"]
        if t in errors:
            fails.append(Failure(params, str(errors[t]), True))
            continue
        v = vals[t]
        try:
            row = dict(params)
            row["direction"] = lattice.choose_direction(spec, cfg.direction)
            row["log_purity_b"], row["log_purity_rb"] = v["purity_B"], v["purity_RB"]
            row["ic"] = lattice.renyi_difference(v["purity_B"], v["purity_RB"], spec.alpha, cfg.d)
            row["ic_per_site"] = row["ic"] / spec.n_sites
            if "holevo_zero" in v:
                row["holevo"] = lattice.renyi_difference(v["purity_B"], v["holevo_zero"],
                                                         spec.alpha, cfg.d)
            if cfg.setup == "I":
                row["regime"] = asym.regime(row["h2"], g["r"])
            if "fidelity" in v:
                row["fidelity"] = math.exp(v["fidelity"])
                row["f2"] = lattice.f2_from_log_fidelity(v["fidelity"], spec.n_sites, cfg.d)
                g_exp = noise.cost_exponents(spec.channel)
                crit = asym.rm_setup2(g["r"], g_exp, row["f2"]).critical_f2
                row["regime"] = _regime2(row["f2"], crit)
            row["elapsed_s"] = elapsed
            _check_row(row, cfg.d)
            for c in COLUMNS["lattice"]:
                fmt(row.get(c))
            rows.append((t, row))
        except (ArithmeticError, ValueError) as exc:
            fails.append(Failure(params, repr(exc)))
    return gi, rows, fails


def _fit_reference(cfg, spec, quantity, log_f=None):
    if cfg.setup == "I":
        if quantity == "holevo":
            return asym.haar_holevo_info(spec)
        return asym.haar_coherent_info(spec)
    # noisy encoder: random-matrix purities at the measured fidelity
    g_exp = noise.cost_exponents(spec.channel)
    r, n, d = spec.rate, spec.n_sites, spec.local_dim
    if spec.alpha == 2:
        f2 = lattice.f2_from_log_fidelity(log_f, n, d)
        lb, lrb = asym.rm_setup2_purities(r, g_exp, f2, n, d)
    else:
        mom = asym.alpha_moments(r, n, spec.alpha, lattice.fidelity_excess(log_f, n, d), d)
        lb, lrb = mom.log_purity_B, mom.log_purity_RB
    return lattice.renyi_difference(lb, lrb, spec.alpha, d)


def _job_fit(args):
    cfg, gi, g = args
    t0 = time.perf_counter()
    quantity = cfg.fit.quantity
    targets = ["purity_B", "purity_RB" if quantity == "coherent" else "holevo_zero"]
    if cfg.setup == "II":
        targets.append("fidelity")
    rows, fails = [], []
    try:
        specs, vals, errors = _lattice_values(cfg, g, targets)
    except Exception as exc:  # noqa: BLE001
        base = {"n": g["n"], "r": g["r"], "alpha": g["alpha"], g["axis"] or "noise": g["noise"]}
        return gi, [], [Failure(base, repr(exc), isinstance(exc, lattice.ContractionTooLarge))]
    elapsed = (time.perf_counter() - t0) / max(1, len(specs))
    ref_cache = {}
    for t, spec in specs:
        params = _params(cfg, spec.n_sites, g["r"], spec.alpha, t, spec.channel)
        if g["axis"] == "f2":
            params["f2_target"] = g["noise"]
        if t in errors:
            fails.append(Failure(params, str(errors[t]), True))
            continue
        v = vals[t]
        try:
            value = lattice.renyi_difference(v[targets[0]], v[targets[1]], spec.alpha, cfg.d)
            if cfg.setup == "I":
                key = spec.channel
                if key not in ref_cache:
                    ref_cache[key] = _fit_reference(cfg, spec, quantity)
                ref = ref_cache[key]
                f2 = None
            else:
                ref = _fit_reference(cfg, spec, quantity, v["fidelity"])
                f2 = lattice.f2_from_log_fidelity(v["fidelity"], spec.n_sites, cfg.d)
            row = dict(params, quantity=quantity, value=value, reference=ref, delta=value - ref,
                       f2=f2, elapsed_s=elapsed)
            for c in COLUMNS["fit"]:
                fmt(row.get(c))
            rows.append((t, row))
        except (ArithmeticError, ValueError) as exc:
            fails.append(Failure(params, repr(exc)))
    return gi, rows, fails


def _job_oracle(args):
    cfg, gi, g, workers = args
    rows, fails = [], []
    n, r = g["n"], g["r"]
    k = int(round(r * n))
    ch = make_channel(cfg, g["axis"], g["noise"])
    targets = ["purity_B", "purity_RB"]
    if "holevo" in cfg.quantities:
        targets.append("holevo_zero")
    if "fidelity" in cfg.quantities:
        targets.append("fidelity")
    for t in g["ts"]:
        spec = lattice.LatticeSpec(n, k, t, ch, setup=cfg.setup, placement=cfg.placement)
        params = _params(cfg, n, r, 2, t, ch)
        t0 = time.perf_counter()
        try:
            method = oracle.choose_method(spec, targets)
            est = oracle.simulate_annealed(spec, targets, cfg.samples, cfg.seed, method=method,
                                           workers=workers)
        except ValueError as exc:
            fails.append(Failure(params, repr(exc), "ceiling" in str(exc)))
            continue
        row = dict(params, method=method, n_samples=cfg.samples,
                   elapsed_s=time.perf_counter() - t0)
        for tg, col in (("purity_B", "purity_b"), ("purity_RB", "purity_rb"),
                        ("holevo_zero", "holevo_zero"), ("fidelity", "fidelity")):
            if tg in est:
                row[col], row[col + "_err"] = est[tg].mean, est[tg].std_error
        rows.append((t, row))
    return gi, rows, fails


# --------------------------------------------------------------------------
# Fits
# --------------------------------------------------------------------------

def _window(spec_window, n, d, l0, t_max):
    if spec_window == "all":
        return (-math.inf, math.inf)
    if isinstance(spec_window, str):
        return asym.default_window(n, d, spec_window, l0, t_max)
    return tuple(spec_window)


def fit_groups(cfg: ExperimentConfig, rows, value_key="delta", group_keys=None):
    """Fit every configured (model, window) pair to each group's correction series."""
    group_keys = group_keys or ("n", "alpha", "r", "channel", "gamma", "h2")
    groups: dict = {}
    for row in rows:
        key = tuple(row.get(k) for k in group_keys)
        groups.setdefault(key, []).append(row)
    fits, fails = [], []
    for gi, (key, members) in enumerate(groups.items()):
        members = sorted(members, key=lambda r: r["t"])
        n = members[0]["n"]
        t_max = max(r["t"] for r in members)
        series = [(r["n"], r["t"], abs(r[value_key])) for r in members]
        for model, win in zip(cfg.fit.models, cfg.fit.windows):
            lo, hi = _window(win, n, cfg.d, cfg.fit.l0, t_max)
            base = {"group": gi, "n": n, "alpha": members[0].get("alpha"),
                    "r": members[0].get("r"), "channel": members[0].get("channel"),
                    "gamma": members[0].get("gamma"), "h2": members[0].get("h2"),
                    "quantity": cfg.fit.quantity, "model": model,
                    "window_lo": lo if math.isfinite(lo) else None,
                    "window_hi": hi if math.isfinite(hi) else None}
            if "f2_target" in members[0]:
                base["f2"] = members[0]["f2_target"]
                base["gamma"] = base["h2"] = None
                base["channel"] = cfg.channel
            try:
                fit = asym.fit_corrections(series, model, (lo, hi), cfg.d)
            except ValueError as exc:
                fails.append(Failure(base, repr(exc)))
                continue
            tau_units = fit.rate_tau_units
            if tau_units is not None and not math.isfinite(tau_units):
                tau_units = None    # power-law fits carry no time scale
            fits.append(dict(base, rate=fit.rate, rate_tau_units=tau_units,
                             prefactor=fit.prefactor, residual=fit.residual,
                             n_points=fit.n_points))
    return fits, fails


# --------------------------------------------------------------------------
# Mode runners
# --------------------------------------------------------------------------

def _map(fn, jobs, threads):
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(threads) as pool:
            return list(pool.map(fn, jobs))
    return [fn(j) for j in jobs]


def _collect(results):
    rows, fails = [], []
    for gi, grows, gfails in sorted(results, key=lambda x: x[0]):
        rows.extend(row for _, row in sorted(grows, key=lambda x: x[0]))
        fails.extend(gfails)
    return rows, fails


def run_rm(cfg: ExperimentConfig):
    rows = []
    sw = cfg.sweep
    axis = "gamma" if "gamma" in sw else ("h2" if "h2" in sw else None)
    noise_vals = sw.get(axis, (None,)) if axis else (None,)
    for r, nv, f2 in itertools.product(sw["r"], noise_vals, sw.get("f2", (None,))):
        ch = make_channel(cfg, axis, nv)
        g = noise.cost_exponents(ch)
        row = {"r": r, "setup": cfg.setup, "channel": noise.channel_spec_string(ch),
               "gamma": _channel_gamma(ch), "h2": g.h2, "g_se": g.g_se, "g_ss": g.g_ss,
               "g_es": g.g_es}
        if cfg.setup == "I":
            row["ic_per_site"] = asym.rm_coherent_setup1(r, g)
            row["holevo_per_site"] = asym.rm_holevo(r, g)
            row["regime"] = asym.regime(g.h2, r)
        else:
            pred = asym.rm_setup2(r, g, f2)
            row.update(f2=f2, ic_per_site=pred.info_per_site, critical_f2=pred.critical_f2,
                       regime=_regime2(f2, pred.critical_f2))
        rows.append(row)
    return rows, []


def run_frame(cfg: ExperimentConfig, threads: int = 1):
    rows, fails = [], []
    sw = cfg.sweep
    for n, alpha in itertools.product(sw["n"], sw.get("alpha", (2,))):
        t0 = time.perf_counter()
        try:
            exact = lattice.frame_potential_curve(n, sw["t"], alpha, cfg.d)
        except lattice.ContractionTooLarge as exc:
            fails.append(Failure({"n": n, "alpha": alpha}, str(exc), True))
            continue
        per = (time.perf_counter() - t0) / len(sw["t"])
        dim = cfg.d ** n
        h_state = oracle.haar_frame_potential(dim, alpha, "state")
        h_print = oracle.haar_frame_potential(dim, alpha, "printed")
        for t in sw["t"]:
            row = {"n": n, "t": t, "alpha": alpha, "frame_exact": exact[t], "haar_state": h_state,
                   "haar_printed": h_print, "delta_f": exact[t] / h_state - 1,
                   "delta_f_printed": exact[t] / h_print - 1, "elapsed_s": per}
            if cfg.samples:
                t1 = time.perf_counter()
                res = oracle.frame_potential(n, t, alpha, cfg.samples, cfg.seed, d=cfg.d,
                                             workers=threads)
                row.update(mc_mean=res.estimate.mean, mc_err=res.estimate.std_error,
                           mc_delta_f=res.delta_f, n_samples=cfg.samples,
                           elapsed_s=per + time.perf_counter() - t1)
            rows.append(row)
    return rows, fails


def execute(cfg: ExperimentConfig, threads: int = 1):
    """Run one config; returns (rows, failures, fits)."""
    if cfg.mode == "rm":
        rows, fails = run_rm(cfg)
        return rows, fails, []
    if cfg.mode == "frame":
        rows, fails = run_frame(cfg, threads)
        fits = []
        if cfg.fit.models:
            positive = [dict(r, delta=r["delta_f"]) for r in rows if r["delta_f"] > 0]
            fits, ffails = fit_groups(cfg, positive, group_keys=("n", "alpha"))
            fails += ffails
        return rows, fails, fits
    groups = list(_groups(cfg))
    if cfg.mode == "oracle":
        workers = max(1, threads)
        rows, fails = _collect([_job_oracle((cfg, gi, g, workers)) for gi, g in groups])
        return rows, fails, []
    job = _job_lattice if cfg.mode == "lattice" else _job_fit
    rows, fails = _collect(_map(job, [(cfg, gi, g) for gi, g in groups], threads))
    fits = []
    if cfg.mode == "fit":
        keys = ("n", "alpha", "r", "f2_target") if cfg.noise_axis == "f2" else None
        fits, ffails = fit_groups(cfg, rows, group_keys=keys)
        fails += ffails
    return rows, fails, fits


def _write_failures(path: Path, fails):
    keys = sorted({k for f in fails for k in f.params})
    lines = [",".join(keys + ["resource", "error"])]
    for f in fails:
        lines.append(",".join([fmt(f.params.get(k)) for k in keys]
                              + [fmt(f.resource), fmt(f.error)]))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def emit(cfg: ExperimentConfig, out: Path, rows, fails, fits) -> int:
    extra = [f"rows: {len(rows)}", f"failed_points: {len(fails)}"]
    write_csv(out, COLUMNS[cfg.mode], rows, cfg, cfg.mode, extra)
    log.info("wrote %d rows to %s", len(rows), out)
    if fits:
        fit_path = out.with_name(out.stem + "_fits.csv")
        write_csv(fit_path, FIT_COLUMNS, fits, cfg, "fits")
        log.info("wrote %d fits to %s", len(fits), fit_path)
        for f in fits:
            log.info("fit n=%s %s %s: rate (tau units for exponentials) = %.4g (%d points)", f["n"], f["model"],
                     (fmt(f["window_lo"]), fmt(f["window_hi"])),
                     f["rate"] if f["rate_tau_units"] is None else f["rate_tau_units"],
                     f["n_points"])
    if fails:
        fail_path = out.with_name(out.stem + "_failures.csv")
        _write_failures(fail_path, fails)
        for f in fails:
            log.warning("point %s failed: %s", f.params, f.error)
        return EXIT_RESOURCES if any(f.resource for f in fails) else EXIT_POINTS
    return EXIT_OK


# --------------------------------------------------------------------------
# Entry points
# --------------------------------------------------------------------------

def _overrides(args):
    return {"seed": args.seed, "direction": args.direction}


def cmd_run(args) -> int:
    cfg = load(args.config).with_overrides(**_overrides(args))
    out = Path(args.out or cfg.out or Path(args.config).with_suffix(".csv").name)
    rows, fails, fits = execute(cfg, args.threads)
    return emit(cfg, out, rows, fails, fits)


def recipe_text(figure: str) -> str:
    if figure not in FIGURES:
        raise ConfigError(f"unknown figure {figure!r}; choose from {FIGURES}", "figure")
    return resources.files("replicaqec").joinpath("recipes", f"{figure}.toml").read_text("utf-8")


def cmd_reproduce(args) -> int:
    text = recipe_text(args.figure)
    panels = load_recipe(text, f"{args.figure}.toml")
    out_dir = Path(args.out or "results")
    code = EXIT_OK
    for name, cfg in panels:
        cfg = cfg.with_overrides(**_overrides(args))
        log.info("%s/%s: %d sweep points", args.figure, name, cfg.n_points())
        rows, fails, fits = execute(cfg, args.threads)
        code = max(code, emit(cfg, out_dir / f"{args.figure}_{name}.csv", rows, fails, fits))
    return code


def parse_grid(text: str) -> list[float]:
    """``start:stop:num`` (inclusive, evenly spaced) or a comma list."""
    try:
        if ":" in text:
            start, stop, num = text.split(":")
            return [float(x) for x in np.linspace(float(start), float(stop), int(num))]
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad grid {text!r}: {exc}", "grid") from exc


def cmd_rm(args) -> int:
    if (args.gamma_grid is None) == (args.h2_grid is None):
        raise ConfigError("give exactly one of --gamma-grid or --h2-grid", "grid")
    sweep = {"r": [float(x) for x in args.r]}
    if args.gamma_grid is not None:
        sweep["gamma"] = parse_grid(args.gamma_grid)
    else:
        sweep["h2"] = parse_grid(args.h2_grid)
    if args.f2_grid:
        sweep["f2"] = parse_grid(args.f2_grid)
    from .config import from_dict
    cfg = from_dict({"mode": "rm", "setup": args.setup, "channel": args.channel, "d": args.d,
                     "sweep": sweep})
    rows, fails, _ = execute(cfg)
    if args.out:
        return emit(cfg, Path(args.out), rows, fails, [])
    cols = COLUMNS["rm"]
    print(",".join(cols))
    for row in rows:
        print(",".join(fmt(row.get(c)) for c in cols))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, default=1, help="worker processes")
    common.add_argument("--out", help="output CSV (run/rm) or directory (reproduce)")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--direction", choices=("time", "space", "auto"),
                        help="override the contraction direction")
    common.add_argument("-v", "--verbose", action="store_true")
    p = argparse.ArgumentParser(prog="replicaqec", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"replicaqec {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", parents=[common], help="run an experiment config")
    run.add_argument("config")
    rep = sub.add_parser("reproduce", parents=[common], help="run a registered figure recipe")
    rep.add_argument("figure", choices=FIGURES)
    rm = sub.add_parser("rm", parents=[common], help="random-matrix predictions on a grid")
    rm.add_argument("--channel", default="depolarizing")
    rm.add_argument("--r", nargs="+", required=True, help="encoding rate(s)")
    rm.add_argument("--gamma-grid", help="start:stop:num or comma list")
    rm.add_argument("--h2-grid", help="depolarizing Hashing-bound grid instead of gamma")
    rm.add_argument("--f2-grid", help="f2 grid (setup II)")
    rm.add_argument("--setup", choices=("I", "II"), default="I")
    rm.add_argument("--d", type=int, default=2)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    if args.threads < 1:
        log.error("--threads must be >= 1")
        return EXIT_CONFIG
    try:
        if args.command == "run":
            return cmd_run(args)
        if args.command == "reproduce":
            return cmd_reproduce(args)
        return cmd_rm(args)
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except lattice.ContractionTooLarge as exc:
        log.error("%s", exc)
        return EXIT_RESOURCES


if __name__ == "__main__":
    sys.exit(main())
