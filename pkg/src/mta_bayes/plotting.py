"""Posterior density panels rendered to SVG.

Figures are built on ``matplotlib.figure.Figure`` with the SVG canvas (no
pyplot state), a fixed hash salt and no date metadata, so identical inputs
give byte-identical files.
"""

from __future__ import annotations

import io
import math

import matplotlib
import numpy as np
from matplotlib.backends.backend_svg import FigureCanvasSVG
from matplotlib.figure import Figure
from scipy import stats

SVG_RC = {"svg.hashsalt": "mta-bayes", "svg.fonttype": "path", "font.size": 9}


class UnsupportedError(ValueError):
    pass


def default_bins(n: int) -> int:
    """Odd bin count near sqrt(n), between 5 and 51."""
    k = int(min(51, max(5, round(math.sqrt(n)))))
    return k if k % 2 else k + 1


def histogram_counts(values, n_bins: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Equal-width bin counts over [min, max].

    A value on an interior edge is counted in the bin nearer the middle of
    the range, so reflecting the data about its midpoint reflects the counts.
    Constant input gives a single bin holding every value.
    """
    x = np.asarray(values, dtype=float).reshape(-1)
    lo, hi = float(x.min()), float(x.max())
    if hi == lo:
        half = max(abs(lo) * 1e-3, 1e-3)
        return np.array([lo - half, lo + half]), np.array([x.size])
    n = n_bins or default_bins(x.size)
    span = hi - lo
    left = (x - lo) * n / span
    right = (hi - x) * n / span
    idx = np.where(left <= right, np.floor(left), n - 1 - np.floor(right))
    idx = np.clip(idx, 0, n - 1).astype(int)
    counts = np.bincount(idx, minlength=n)
    edges = lo + span * np.arange(n + 1) / n
    return edges, counts


def central_interval(values, mass: float = 0.95) -> tuple[float, float]:
    tail = (1.0 - mass) / 2.0
    lo, hi = np.quantile(np.asarray(values, dtype=float), [tail, 1.0 - tail])
    return float(lo), float(hi)


def density_figure(values, label: str) -> Figure:
    x = np.asarray(values, dtype=float).reshape(-1)
    if x.size < 2 or not np.all(np.isfinite(x)):
        raise UnsupportedError("density plot needs at least 2 finite values")
    edges, counts = histogram_counts(x)
    widths = np.diff(edges)
    density = counts / (counts.sum() * widths)
    lo, hi = central_interval(x)

    fig = Figure(figsize=(4.0, 2.6))
    ax = fig.add_subplot(1, 1, 1)
    ax.axvspan(lo, hi, color="#9ecae1", alpha=0.45, lw=0, label="95% interval")
    ax.bar(edges[:-1], density, width=widths, align="edge", color="#3182bd", edgecolor="white", lw=0.4)
    if x.std() > 0:
        grid = np.linspace(edges[0], edges[-1], 200)
        ax.plot(grid, stats.gaussian_kde(x)(grid), color="#08306b", lw=1.0)
    ax.axvline(float(x.mean()), color="#de2d26", lw=0.8)
    ax.set_xlabel(label)
    ax.set_ylabel("density")
    ax.set_title(f"{label}: mean {x.mean():.4g}, 95% [{lo:.4g}, {hi:.4g}]", fontsize=8)
    fig.tight_layout()
    return fig


def render_density_svg(values, label: str) -> str:
    """Histogram and kernel density of ``values`` with the central 95% shaded."""
    with matplotlib.rc_context(SVG_RC):
        fig = density_figure(values, label)
        buf = io.StringIO()
        FigureCanvasSVG(fig).print_svg(buf, metadata={"Date": None})
    return buf.getvalue()
