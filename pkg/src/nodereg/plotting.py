"""Static SVG rendering of risk and error curves."""
from __future__ import annotations

from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# fixed hash salt keeps SVG element ids stable between runs
matplotlib.rcParams["svg.hashsalt"] = "nodereg"
matplotlib.rcParams["svg.fonttype"] = "none"


def plot_curves(curves: Sequence, path, xlabel: str = "length-scale", ylabel: str = "MSE", title: str = "", vline=None):
    """One line per curve with a shaded one-stderr band, log-scaled x axis."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for c in curves:
        ok = np.isfinite(c.mean)
        ax.plot(c.grid[ok], c.mean[ok], marker=".", label=c.estimator)
        se = np.where(np.isfinite(c.stderr), c.stderr, 0.0)
        ax.fill_between(c.grid[ok], (c.mean - se)[ok], (c.mean + se)[ok], alpha=0.2)
    if vline is not None:
        ax.axvline(vline, color="grey", linestyle="--", linewidth=1)
    ax.set_xscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path
