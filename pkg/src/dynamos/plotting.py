"""Matplotlib figures written next to the CSV/JSON tables."""

from __future__ import annotations

import math
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (6.4, 4.0),
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 10,
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_threshold_curve(points: Sequence, path) -> Path:
    """Scaled thresholds ``p_z(n) ln n``: circles at the median, bars spanning the outer levels."""
    by_n: dict[int, dict[float, float]] = {}
    for pt in points:
        by_n.setdefault(pt.n, {})[pt.z] = pt.p_z * math.log(pt.n)
    ns = sorted(by_n)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for n in ns:
            levels = by_n[n]
            zs = sorted(levels)
            mid = levels.get(0.5, levels[zs[len(zs) // 2]])
            ax.vlines(n, levels[zs[0]], levels[zs[-1]], color="0.4", lw=1.2)
            ax.plot(n, mid, "o", mfc="white", mec="C0", ms=7)
        ax.set_xscale("log", base=2)
        ax.set_xticks(ns, [str(n) for n in ns])
        ax.minorticks_off()
        ax.set_xlabel("torus side n")
        ax.set_ylabel(r"$p_z(n)\,\ln n$")
        ax.set_title("dynamo threshold on the toroidal mesh")
        return _save(fig, path)


def plot_sweep(rows: Sequence, path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for n in sorted({r.n for r in rows}):
            sel = sorted((r for r in rows if r.n == n), key=lambda r: r.p)
            p = np.array([r.p for r in sel])
            y = np.array([r.point for r in sel])
            lo = np.array([r.ci_low for r in sel])
            hi = np.array([r.ci_high for r in sel])
            line, = ax.plot(p, y, "-o", ms=3, label=f"n={n}")
            ax.fill_between(p, lo, hi, color=line.get_color(), alpha=0.2, lw=0)
        ax.set_xlabel("seed probability p")
        ax.set_ylabel("P(dynamo)")
        ax.set_ylim(-0.02, 1.02)
        ax.legend(frameon=False)
        return _save(fig, path)


def plot_sc_trace(result, recurrence, path) -> Path:
    """Empirical SC fractions (markers) over the recurrence (lines)."""
    emp = result.fractions()
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for key, color in (("b", "k"), ("m", "C1"), ("r", "C0")):
            ax.plot(np.arange(emp[key].size), emp[key], "o", ms=3, color=color, label=f"{key} (SC)")
            rec = getattr(recurrence, key)
            ax.plot(np.arange(rec.size), rec, "-", lw=1, color=color, alpha=0.7)
        ax.set_yscale("symlog", linthresh=1e-6)
        ax.set_xlabel("step i")
        ax.set_ylabel("fraction of n")
        ax.legend(frameon=False, ncol=3)
        return _save(fig, path)
