"""Figure rendering for the CLI. PNGs carry no timestamp or version metadata."""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

RC = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "figure.figsize": (5.0, 3.4),
    "axes.grid": True,
    "grid.alpha": 0.3,
    "svg.hashsalt": "paoi",
}


def _save(fig, path) -> None:
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)


def meta_ccdf_figure(path, xi, curves: dict[str, np.ndarray], title: str = "") -> None:
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        for label, y in curves.items():
            ax.plot(xi, y, label=label, lw=1.5)
        ax.set_xlabel(r"reliability $\xi$")
        ax.set_ylabel("fraction of links above $\\xi$")
        ax.set_xlim(0, 1)
        ax.set_ylim(0, 1.02)
        if title:
            ax.set_title(title)
        ax.legend(loc="lower left")
        _save(fig, path)


def paoi_figure(path, series: dict[str, tuple[list[float], list[float]]], xlabel: str) -> None:
    """PAoI against load, one line per theta; infinite points are dropped and marked at the top."""
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        for label, (x, y) in series.items():
            x = np.asarray(x, dtype=float)
            y = np.asarray(y, dtype=float)
            finite = np.isfinite(y)
            line, = ax.plot(x[finite], y[finite], marker="o", ms=3, lw=1.5, label=label)
            if (~finite).any():
                ax.plot(x[~finite], np.full((~finite).sum(), np.nan), color=line.get_color())
        ax.set_xlabel(xlabel)
        ax.set_ylabel("mean peak AoI [slots]")
        ax.legend()
        _save(fig, path)


def frontier_figure(path, frontier: dict[int, list[tuple[float, float]]], ylabel: str) -> None:
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        cmap = plt.get_cmap("viridis")
        n = max(len(frontier), 1)
        for k, cls in enumerate(sorted(frontier)):
            pts = [(t, s) for t, s in frontier[cls] if not math.isnan(s)]
            if not pts:
                continue
            t, s = zip(*pts)
            ax.plot(t, s, marker=".", lw=1.2, color=cmap(k / max(n - 1, 1)), label=f"class {cls}")
        ax.set_xlabel(r"$\theta$ [dB]")
        ax.set_ylabel(ylabel)
        ax.legend(ncol=2, fontsize=6)
        _save(fig, path)
