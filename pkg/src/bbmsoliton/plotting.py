"""Report figures rendered from the CSV/JSON artifacts of a run directory."""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.ticker import NullFormatter  # noqa: E402

GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0
FIG_WIDTH = 5.0
CORE_VIEW = 30.0

PARAMS = {
    "axes.labelsize": 10,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 9,
    "ytick.labelsize": 9,
    "figure.figsize": [FIG_WIDTH, FIG_WIDTH * GOLDEN],
    "figure.dpi": 150,
    "lines.linewidth": 1.2,
    "lines.markersize": 4,
    "savefig.bbox": "tight",
}


def _pyplot():
    plt.rcParams.update(PARAMS)
    return plt


def read_csv(path):
    """Header names (last comment line) and a float/str column mapping."""
    header, rows = None, []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("#"):
                header = [h.strip() for h in line[1:].split(",")]
                continue
            if line:
                rows.append(line.split(","))
    cols = {}
    for j, name in enumerate(header or []):
        vals = [r[j] for r in rows]
        try:
            cols[name] = np.array([float(v) if v != "" else np.nan for v in vals])
        except ValueError:
            cols[name] = np.array(vals)
    return cols


def plot_phase(run_dir, plt):
    d = read_csv(run_dir / "phase.csv")
    fig, (ax1, ax2) = plt.subplots(2, 1, sharex=True)
    ax1.plot(d["t"], d["phi"], label=r"$\varphi$")
    ax1.plot(d["t"], d["dphi"], "--", label=r"$\varphi'$")
    ax1.legend()
    ax2.plot(d["t"], d["margin"], color="C2")
    ax2.set_xlabel("t")
    ax2.set_ylabel("margin")
    out = run_dir / "phase.png"
    fig.savefig(out)
    plt.close(fig)
    return out


def plot_solution(run_dir, plt):
    outs = []
    for path in sorted(run_dir.glob("solution_eps*.csv")):
        d = read_csv(path)
        times = np.unique(d["t"])
        pick = times[np.linspace(0, times.size - 1, min(4, times.size)).astype(int)]
        fig, ax = plt.subplots()
        for tk in pick:
            sel = d["t"] == tk
            ax.plot(d["x"][sel], d["Y"][sel], label=f"t = {tk:.3g}")
        ax.set_xlabel("x")
        ax.set_ylabel("Y")
        ax.set_title(path.stem.replace("solution_", ""))
        ax.legend()
        out = path.with_suffix(".png")
        fig.savefig(out)
        plt.close(fig)
        outs.append(out)
    return outs


def plot_singular(run_dir, plt):
    path = run_dir / "singular.csv"
    if not path.exists():
        return None
    d = read_csv(path)
    times = np.unique(d["t"])
    fig, (ax1, ax2) = plt.subplots(2, 1, sharex=True)
    for tk in times[[0, times.size // 2, -1]]:
        sel = d["t"] == tk
        ax1.plot(d["tau"][sel], d["v0"][sel], label=f"t = {tk:.3g}")
        ax2.plot(d["tau"][sel], d["v1"][sel])
    ax1.set_ylabel(r"$v_0$")
    ax2.set_ylabel(r"$v_1$")
    ax2.set_xlabel(r"$\tau$")
    ax2.set_xlim(-CORE_VIEW, CORE_VIEW)
    ax1.legend()
    out = run_dir / "singular.png"
    fig.savefig(out)
    plt.close(fig)
    return out


def plot_residuals(run_dir, plt):
    path = run_dir / "residual_report.json"
    if not path.exists():
        return None
    rep = json.loads(path.read_text())
    eps = np.asarray(rep["eps"])
    fig, ax = plt.subplots()
    for key, mark in (("near", "o-"), ("far", "s-")):
        norms = np.asarray(rep[f"{key}_norms"], float)
        slope = rep[f"{key}_slope"]
        lab = f"{key} (slope {slope:.2f})" if slope is not None else f"{key} (floor)"
        ax.loglog(eps, np.maximum(norms, 1e-300), mark, label=lab)
    ax.xaxis.set_minor_formatter(NullFormatter())
    ax.set_xlabel(r"$\varepsilon$")
    ax.set_ylabel(r"$\|r\|_\infty$")
    ax.legend()
    out = run_dir / "residuals.png"
    fig.savefig(out)
    plt.close(fig)
    return out


def render_report(run_dir):
    """Render every figure whose source artifact exists; returns the PNG paths."""
    run_dir = Path(run_dir)
    plt = _pyplot()
    outs = []
    if (run_dir / "phase.csv").exists():
        outs.append(plot_phase(run_dir, plt))
    outs += plot_solution(run_dir, plt)
    for fn in (plot_singular, plot_residuals):
        p = fn(run_dir, plt)
        if p is not None:
            outs.append(p)
    return outs
