"""Figures for the command-line reports, rendered to PNG files.

Matplotlib is imported lazily with the non-interactive Agg backend so that
nothing here needs a display.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120, bbox_inches="tight", metadata={"Software": None})
    _pyplot().close(fig)
    return str(path)


def matrix_heatmaps(mats, path):
    """Side-by-side heatmaps of named square matrices."""
    plt = _pyplot()
    fig, axes = plt.subplots(1, len(mats), figsize=(4 * len(mats), 3.6), squeeze=False)
    for ax, (name, m) in zip(axes[0], mats.items()):
        m = np.asarray(m, dtype=float)
        im = ax.imshow(m, cmap="viridis")
        ax.set_title(name)
        J = m.shape[0]
        ax.set_xticks(range(J), [str(j + 1) for j in range(J)])
        ax.set_yticks(range(J), [str(j + 1) for j in range(J)])
        fig.colorbar(im, ax=ax, shrink=0.8)
    return _save(fig, path)


def path_plot(times, values, path, labels=None, title="", ylabel="value"):
    """Line plot of one or more paths sharing a time axis."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(7, 3.6))
    values = np.atleast_2d(np.asarray(values, dtype=float).T).T
    for j in range(values.shape[1]):
        lab = labels[j] if labels else f"{j + 1}"
        ax.plot(times, values[:, j], lw=0.9, label=lab)
    ax.set_xlabel("t")
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8)
    return _save(fig, path)


def sweep_plot(sweeps, path):
    """Metric against r (log axis) for each named sweep."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 3.8))
    for name, sw in sweeps.items():
        ax.plot(sw["r_grid"], sw["metric"], marker="o", label=f"{name}: {sw['name']}")
    ax.set_xscale("log")
    ax.invert_xaxis()
    ax.set_xlabel("r")
    ax.set_ylabel("metric")
    ax.legend(fontsize=7)
    return _save(fig, path)


def histogram_plot(samples, path, density=None, title=""):
    """Histogram of a sample, optionally overlaid with a density callable."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 3.8))
    x = np.asarray(samples, dtype=float).ravel()
    ax.hist(x, bins=50, density=True, alpha=0.6)
    if density is not None:
        grid = np.linspace(0, max(x.max(), 1e-9), 200)
        ax.plot(grid, density(grid), "k-", lw=1)
    if title:
        ax.set_title(title)
    return _save(fig, path)
