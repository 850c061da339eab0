#!/usr/bin/env python3
"""Render PNGs from the CSVs written by ``replicaqec reproduce``.

Lives outside the package on purpose: the CSVs are the interface and the core
has no plotting dependency.

    python scripts/plot_figures.py results/ --out figures/
"""
import argparse
import csv
import math
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def read_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def num(row, key):
    v = row.get(key, "")
    return float(v) if v not in ("", None) else math.nan


def grouped(rows, *keys):
    out = defaultdict(list)
    for r in rows:
        out[tuple(r[k] for k in keys)].append(r)
    return out


def plot_curves(rows, x, y, keys, xlabel, ylabel, title, logy=False):
    fig, ax = plt.subplots(figsize=(4.5, 3.4))
    for key, members in sorted(grouped(rows, *keys).items()):
        members.sort(key=lambda r: num(r, x))
        xs = [num(r, x) for r in members]
        ys = [abs(num(r, y)) if logy else num(r, y) for r in members]
        label = ", ".join(f"{k}={v}" for k, v in zip(keys, key))
        ax.plot(xs, ys, "o-", ms=3, lw=1, label=label)
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title, fontsize=9)
    ax.legend(fontsize=6, frameon=False)
    fig.tight_layout()
    return fig


def render(csv_path, out_dir):
    rows = read_rows(csv_path)
    if not rows:
        return None
    stem = csv_path.stem
    cols = rows[0].keys()
    if "delta_f" in cols:
        fig = plot_curves(rows, "t", "delta_f", ("n", "alpha"), "t", r"$\Delta F$", stem, logy=True)
    elif "delta" in cols:
        for r in rows:
            r["delta_per_n"] = num(r, "delta") / num(r, "n")
        keys = ("n", "f2_target") if rows[0].get("f2_target") else ("n", "h2")
        fig = plot_curves(rows, "t", "delta_per_n", keys, "t", r"$|\Delta I|/N$", stem, logy=True)
    elif "f2" in cols and rows[0].get("f2"):
        fig = plot_curves(rows, "f2", "ic_per_site", ("t",), r"$f_2$", r"$I_c/N$", stem)
    elif "ic_per_site" in cols and "h2" in cols and "n" in cols:
        fig = plot_curves(rows, "h2", "ic_per_site", ("t",), r"$H_2$", r"$I_c/N$", stem)
    elif "ic_per_site" in cols:
        fig = plot_curves(rows, "h2", "ic_per_site", ("r",), r"$H_2$", r"$I_c/N$ (RM)", stem)
    else:
        return None
    out = out_dir / f"{stem}.png"
    fig.savefig(out, dpi=150)
    plt.close(fig)
    return out


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("inputs", nargs="+", help="CSV files or directories of CSVs")
    p.add_argument("--out", default="figures")
    args = p.parse_args()
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for item in map(Path, args.inputs):
        paths += sorted(item.glob("*.csv")) if item.is_dir() else [item]
    for path in paths:
        if path.stem.endswith(("_fits", "_failures")):
            continue
        out = render(path, out_dir)
        if out:
            print(out)


if __name__ == "__main__":
    main()
