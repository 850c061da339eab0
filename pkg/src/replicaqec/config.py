"""Experiment configuration: a small TOML schema with line-precise validation.

A config looks like::

    mode = "lattice"          # lattice | rm | oracle | frame | fit
    setup = "I"
    channel = "depolarizing"  # family (paired with a gamma/h2 axis) or full spec
    placement = "uniform"

    [sweep]
    n = [64, 128]
    t = [4, 8, 16]
    h2 = [0.4]
    r = [0.25]

    [fit]
    models = ["N_exp2t", "exp_t"]
    windows = ["early", "late"]

Recipes for figure reproduction hold several such tables under ``[[panel]]``.
"""
from __future__ import annotations

import math
import re
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import tomli
import tomli_w

from . import noise

MODES = ("lattice", "rm", "oracle", "frame", "fit")
AXES = ("n", "t", "gamma", "h2", "f2", "r", "alpha")
QUANTITIES = ("coherent", "holevo", "fidelity")
FAMILIES = ("depolarizing", "amplitude_damping", "identity")
FIT_MODELS = ("N_exp2t", "exp_t", "N_over_t", "N_exp_t")
TOP_KEYS = {"mode", "name", "setup", "direction", "placement", "channel", "d", "seed",
            "samples", "quantities", "max_states", "out", "sweep", "fit"}


class ConfigError(ValueError):
    """Invalid configuration; carries the offending field and source line."""

    def __init__(self, message: str, field_name: str | None = None, line: int | None = None,
                 source: str | None = None):
        self.field_name = field_name
        self.line = line
        self.source = source
        where = source or "<config>"
        if line is not None:
            where += f":{line}"
        prefix = f"{where}: " + (f"{field_name}: " if field_name else "")
        super().__init__(prefix + message)


@dataclass(frozen=True)
class FitConfig:
    models: tuple[str, ...] = ()
    windows: tuple = ()
    l0: float = 1.0
    quantity: str = "coherent"


@dataclass(frozen=True)
class ExperimentConfig:
    mode: str
    sweep: dict
    name: str = ""
    setup: str = "I"
    direction: str = "auto"
    placement: str = "contiguous"
    channel: str = "depolarizing"
    d: int = 2
    seed: int = 0
    samples: int = 10000
    quantities: tuple[str, ...] = ("coherent",)
    max_states: int = 2 ** 24
    out: str = ""
    fit: FitConfig = field(default_factory=FitConfig)

    @property
    def noise_axis(self) -> str | None:
        """Axis that sets the channel strength (f2 wins outside rm mode)."""
        order = ("gamma", "h2", "f2") if self.mode == "rm" else ("f2", "gamma", "h2")
        for ax in order:
            if ax in self.sweep:
                return ax
        return None

    def axis(self, name, default=None):
        return self.sweep.get(name, default)

    def n_points(self) -> int:
        return math.prod(len(v) for v in self.sweep.values())

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name == "fit":
                fit = {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(value).items()}
                fit["windows"] = [list(w) if isinstance(w, (tuple, list)) else w for w in value.windows]
                if value.models:
                    out["fit"] = fit
                continue
            if f.name == "sweep":
                out["sweep"] = {k: list(v) for k, v in value.items()}
                continue
            out[f.name] = list(value) if isinstance(value, tuple) else value
        return out

    def to_toml(self) -> str:
        data = self.to_dict()
        # tables last so scalar keys stay at top level
        ordered = {k: v for k, v in data.items() if not isinstance(v, dict)}
        ordered.update({k: v for k, v in data.items() if isinstance(v, dict)})
        return tomli_w.dumps(ordered)

    def with_overrides(self, **kw) -> "ExperimentConfig":
        data = self.to_dict()
        data.update({k: v for k, v in kw.items() if v is not None})
        return from_dict(data)


# --------------------------------------------------------------------------
# Locating fields in the source text
# --------------------------------------------------------------------------

def _line_of(text: str | None, key: str, table: str | None = None) -> int | None:
    if not text:
        return None
    current = None
    key_re = re.compile(rf"^\s*{re.escape(key)}\s*=")
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        head = re.match(r"^\[\[?\s*([A-Za-z0-9_.]+)\s*\]\]?", stripped)
        if head:
            current = head.group(1)
            continue
        if key_re.match(line) and (table is None or current == table or
                                   (current or "").endswith("." + table)):
            return lineno
    return None


class _Checker:
    def __init__(self, text, source):
        self.text = text
        self.source = source

    def fail(self, message, key, table=None):
        name = f"{table}.{key}" if table else key
        raise ConfigError(message, name, _line_of(self.text, key, table), self.source)


# --------------------------------------------------------------------------
# Parsing
# --------------------------------------------------------------------------

def _is_number(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _check_channel(chk, text_value, noise_axis, d):
    name = text_value.strip()
    if "(" in name:
        if noise_axis in ("gamma", "h2", "f2"):
            chk.fail("a full channel spec cannot be combined with a gamma/h2/f2 axis", "channel")
        try:
            noise.parse_channel(name, d=d, base_dir=Path(chk.source).parent if chk.source else None)
        except (ValueError, OSError) as exc:
            chk.fail(str(exc), "channel")
        return
    if name not in FAMILIES:
        chk.fail(f"unknown channel family {name!r}; expected one of {FAMILIES} "
                 "or a spec such as 'pauli(p=[...])'", "channel")
    if name != "identity" and noise_axis is None:
        chk.fail(f"family {name!r} needs a gamma, h2 or f2 sweep axis", "channel")
    if noise_axis == "h2" and name != "depolarizing":
        chk.fail("the h2 axis is only defined for the depolarizing family", "h2", "sweep")


def _parse_sweep(chk, raw):
    if not isinstance(raw, dict):
        chk.fail("must be a table", "sweep")
    sweep = {}
    for key, values in raw.items():
        if key not in AXES:
            chk.fail(f"unknown axis; expected one of {AXES}", key, "sweep")
        if not isinstance(values, list):
            values = [values]
        if not values:
            chk.fail("axis is empty", key, "sweep")
        if not all(_is_number(v) for v in values):
            chk.fail("axis values must be numbers", key, "sweep")
        if key in ("n", "t", "alpha") and not all(float(v).is_integer() for v in values):
            chk.fail("axis values must be integers", key, "sweep")
        if key in ("n", "t", "alpha"):
            values = [int(v) for v in values]
        else:
            values = [float(v) for v in values]
        sweep[key] = tuple(values)
    present = [ax for ax in ("gamma", "h2") if ax in sweep]
    if len(present) > 1:
        chk.fail(f"axes {present} are mutually exclusive", present[1], "sweep")
    return sweep


def _parse_fit(chk, raw):
    if raw is None:
        return FitConfig()
    if not isinstance(raw, dict):
        chk.fail("must be a table", "fit")
    unknown = set(raw) - {"models", "windows", "l0", "quantity"}
    if unknown:
        chk.fail("unknown key", sorted(unknown)[0], "fit")
    models = raw.get("models", [])
    windows = raw.get("windows", ["all"] * len(models))
    if isinstance(models, str):
        models = [models]
    if not models:
        chk.fail("at least one model is required", "models", "fit")
    for m in models:
        if m not in FIT_MODELS:
            chk.fail(f"unknown model {m!r}; expected one of {FIT_MODELS}", "models", "fit")
    if len(windows) != len(models):
        chk.fail("needs one window per model", "windows", "fit")
    parsed = []
    for w in windows:
        if isinstance(w, str):
            if w not in ("early", "late", "all"):
                chk.fail(f"unknown window {w!r}; use early, late, all or [lo, hi]", "windows", "fit")
            parsed.append(w)
        elif isinstance(w, list) and len(w) == 2 and all(_is_number(v) for v in w) and w[0] < w[1]:
            parsed.append((float(w[0]), float(w[1])))
        else:
            chk.fail(f"bad window {w!r}", "windows", "fit")
    l0 = raw.get("l0", 1.0)
    if not _is_number(l0) or l0 <= 0:
        chk.fail("must be a positive number", "l0", "fit")
    quantity = raw.get("quantity", "coherent")
    if quantity not in ("coherent", "holevo", "frame"):
        chk.fail("must be 'coherent', 'holevo' or 'frame'", "quantity", "fit")
    return FitConfig(tuple(models), tuple(parsed), float(l0), quantity)


def from_dict(raw: dict, text: str | None = None, source: str | None = None) -> ExperimentConfig:
    chk = _Checker(text, source)
    for key in raw:
        if key not in TOP_KEYS:
            chk.fail("unknown key", key)
    mode = raw.get("mode")
    if mode not in MODES:
        chk.fail(f"must be one of {MODES}", "mode")
    if "sweep" not in raw:
        chk.fail("missing [sweep] table", "sweep")
    sweep = _parse_sweep(chk, raw["sweep"])

    def get(key, kind, default):
        value = raw.get(key, default)
        if kind is int and not (isinstance(value, int) and not isinstance(value, bool)):
            chk.fail("must be an integer", key)
        if kind is str and not isinstance(value, str):
            chk.fail("must be a string", key)
        return value

    setup = get("setup", str, "I")
    if setup not in ("I", "II"):
        chk.fail("must be 'I' or 'II'", "setup")
    direction = get("direction", str, "auto")
    if direction not in ("auto", "time", "space"):
        chk.fail("must be auto, time or space", "direction")
    placement = get("placement", str, "contiguous")
    if placement not in ("contiguous", "uniform"):
        chk.fail("must be contiguous or uniform", "placement")
    d = get("d", int, 2)
    if d < 2:
        chk.fail("must be >= 2", "d")
    seed = get("seed", int, 0)
    if not 0 <= seed < 2 ** 64:
        chk.fail("must fit in an unsigned 64-bit integer", "seed")
    samples = get("samples", int, 10000)
    max_states = get("max_states", int, 2 ** 24)
    quantities = raw.get("quantities", ["coherent"])
    if isinstance(quantities, str):
        quantities = [quantities]
    for q in quantities:
        if q not in QUANTITIES:
            chk.fail(f"unknown quantity {q!r}; expected one of {QUANTITIES}", "quantities")
    fit = _parse_fit(chk, raw.get("fit"))
    cfg = ExperimentConfig(
        mode=mode, sweep=sweep, name=get("name", str, ""), setup=setup, direction=direction,
        placement=placement, channel=get("channel", str, "depolarizing"), d=d, seed=seed,
        samples=samples, quantities=tuple(quantities), max_states=max_states,
        out=get("out", str, ""), fit=fit)
    _validate(chk, cfg)
    return cfg


def _require(chk, cfg, *axes):
    for ax in axes:
        if ax not in cfg.sweep:
            chk.fail(f"mode {cfg.mode!r} needs a {ax!r} axis", "sweep")


def _validate(chk, cfg: ExperimentConfig):
    mode, sw = cfg.mode, cfg.sweep
    if mode != "frame":
        _check_channel(chk, cfg.channel, cfg.noise_axis, cfg.d)
    if "gamma" in sw and not all(0 <= g <= 1 for g in sw["gamma"]):
        chk.fail("gamma must lie in [0, 1]", "gamma", "sweep")
    if "h2" in sw and not all(0 <= h <= 2 for h in sw["h2"]):
        chk.fail("h2 must lie in [0, 2]", "h2", "sweep")
    if "f2" in sw:
        if mode != "rm" and ("gamma" in sw or "h2" in sw):
            chk.fail("f2 fixes the noise strength; drop the gamma/h2 axis", "f2", "sweep")
        if not all(f >= 0 for f in sw["f2"]):
            chk.fail("f2 must be >= 0", "f2", "sweep")
        if cfg.setup != "II":
            chk.fail("an f2 axis needs setup = 'II'", "f2", "sweep")
    if "r" in sw and not all(0 <= r <= 1 for r in sw["r"]):
        chk.fail("r must lie in [0, 1]", "r", "sweep")
    if "alpha" in sw and not all(2 <= a <= 6 for a in sw["alpha"]):
        chk.fail("alpha must lie in [2, 6]", "alpha", "sweep")
    if "t" in sw and not all(t >= 0 for t in sw["t"]):
        chk.fail("depths must be >= 0", "t", "sweep")
    if "n" in sw:
        if not all(n >= 2 and n % 2 == 0 for n in sw["n"]):
            chk.fail("system sizes must be even and >= 2", "n", "sweep")
        for r in sw.get("r", (0.0,)):
            for n in sw["n"]:
                if abs(r * n - round(r * n)) > 1e-9:
                    chk.fail(f"r*N must be integral (r={r}, N={n})", "r", "sweep")
    if mode == "rm":
        _require(chk, cfg, "r")
        if cfg.setup == "II" and "f2" not in sw:
            chk.fail("setup II rm needs an f2 axis", "sweep")
        for ax in ("n", "t", "alpha"):
            if ax in sw:
                chk.fail("rm mode has no size, depth or replica axis", ax, "sweep")
        return
    if mode == "frame":
        _require(chk, cfg, "n", "t")
        if cfg.samples and max(sw["n"]) > 14:
            chk.fail("Monte Carlo frame potentials support N <= 14 (set samples = 0 for exact only)",
                     "n", "sweep")
        if cfg.samples and cfg.samples < 100:
            chk.fail("must be 0 (exact only) or >= 100", "samples")
        return
    _require(chk, cfg, "n", "t", "r")
    if "f2" in sw and cfg.channel not in ("depolarizing", "amplitude_damping"):
        chk.fail("an f2 axis needs a channel family", "channel")
    if "f2" in sw and mode == "oracle":
        chk.fail("oracle mode does not solve for f2; use a gamma axis", "f2", "sweep")
    if mode == "oracle":
        if cfg.samples < 100:
            chk.fail("must be >= 100", "samples")
        if any(a != 2 for a in sw.get("alpha", (2,))):
            chk.fail("oracle mode estimates two-replica quantities only", "alpha", "sweep")
        if max(sw["n"]) > 10:
            chk.fail("oracle mode supports N <= 10", "n", "sweep")
    if "fidelity" in cfg.quantities and cfg.setup != "II":
        chk.fail("fidelity is defined for setup II", "quantities")
    if mode == "fit":
        if not cfg.fit.models:
            chk.fail("fit mode needs a [fit] table", "fit")
        if cfg.fit.quantity == "holevo" and cfg.setup != "I":
            chk.fail("Holevo corrections are referenced to the setup-I random-matrix value",
                     "quantity", "fit")
        if cfg.fit.quantity == "frame":
            chk.fail("use mode = 'frame' for frame potentials", "quantity", "fit")
        if len(sw["t"]) < 4:
            chk.fail("fits need at least 4 depths", "t", "sweep")


def loads(text: str, source: str | None = None) -> ExperimentConfig:
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"TOML syntax: {exc}", None, int(m.group(1)) if m else None, source) from exc
    return from_dict(raw, text, source)


def load(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", source=str(path)) from exc
    return loads(text, str(path))


def load_recipe(text: str, source: str | None = None) -> list[tuple[str, ExperimentConfig]]:
    """Parse a recipe holding ``[[panel]]`` tables; returns (panel name, config) pairs."""
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"TOML syntax: {exc}", None, int(m.group(1)) if m else None, source) from exc
    panels = raw.get("panel")
    if not isinstance(panels, list) or not panels:
        raise ConfigError("recipe needs at least one [[panel]] table", "panel", None, source)
    out = []
    for i, panel in enumerate(panels):
        panel = dict(panel)
        name = panel.get("name") or f"panel{i}"
        out.append((name, from_dict(panel, text, source)))
    return out


def embedded_config(csv_text: str) -> ExperimentConfig:
    """Recover the config from the ``# config`` block of an emitted CSV."""
    lines, inside = [], False
    for line in csv_text.splitlines():
        if not line.startswith("#"):
            break
        body = line[1:].lstrip(" ") if line.startswith("# ") else line[1:]
        if body.strip() == "config:":
            inside = True
            continue
        if body.strip() == "end config":
            break
        if inside:
            lines.append(line[2:] if line.startswith("# ") else line[1:])
    if not lines:
        raise ConfigError("no embedded config block found")
    return loads("\n".join(lines))
