"""Figures written next to the CLI's CSV output (Agg backend, files only)."""

from __future__ import annotations

import io

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# fixed metadata keeps PNG bytes identical between runs
_META = {"Software": None}


def _png(fig) -> bytes:
    buf = io.BytesIO()
    fig.savefig(buf, format="png", dpi=120, metadata=_META)
    plt.close(fig)
    return buf.getvalue()


def mode_traces(full, partial, title: str = "") -> bytes:
    """Mode trajectories under full (solid) and partial (dashed) feedback."""
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    colors = plt.rcParams["axes.prop_cycle"].by_key()["color"]
    for i in range(full.states.shape[1]):
        c = colors[i % len(colors)]
        ax.plot(full.times, full.states[:, i], "-", color=c, lw=1.4, label=rf"$\zeta_{i}$ full")
        ax.plot(partial.times, partial.states[:, i], "--", color=c, lw=1.4, label=rf"$\zeta_{i}$ partial")
    ax.set_xlabel("t")
    ax.set_ylabel("mode amplitude")
    if title:
        ax.set_title(title)
    ax.legend(ncol=2, fontsize=8, frameon=False)
    fig.tight_layout()
    return _png(fig)


def kernel_heatmap(grid: np.ndarray, values: np.ndarray, title: str = "") -> bytes:
    """Heat map of a two-argument kernel sampled on ``grid`` x ``grid``."""
    fig, ax = plt.subplots(figsize=(4.8, 4.0))
    im = ax.imshow(values.T, origin="lower", extent=(grid[0], grid[-1], grid[0], grid[-1]), cmap="viridis")
    ax.set_xlabel("$x_1$")
    ax.set_ylabel("$x_2$")
    if title:
        ax.set_title(title)
    fig.colorbar(im, ax=ax)
    fig.tight_layout()
    return _png(fig)
