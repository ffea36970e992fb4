"""Matplotlib rendering of feasibility-region overlays to SVG.

Output is byte-stable: the SVG hash salt is fixed and the date metadata is
dropped, so identical grids give identical files.
"""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
from matplotlib.patches import Patch  # noqa: E402

# (label, face colour, fill alpha); drawn bottom to top
LAYERS = (
    ("True distribution", "#1f4e9c", 0.45),
    ("Monte Carlo", "#d95f02", 0.30),
    ("VB (mean field)", "#1b9e77", 0.18),
)

RC = {
    "svg.hashsalt": "ccvb-region-overlay",
    "svg.fonttype": "none",
    "font.size": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 7,
}


def render_region_overlay(grids, path, title: str = "", samples=None) -> Path:
    """Draw three RegionGrids (true, MC, VB) as filled layers and save as SVG.

    ``samples``, if given, is an ``(m, 2)`` array of MC draws shown as a faint
    scatter underneath the regions.
    """
    path = Path(path)
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(4.2, 4.2))
        first = grids[0]
        if samples is not None:
            ax.scatter(samples[:, 0], samples[:, 1], s=0.3, c="0.6", alpha=0.4, linewidths=0, rasterized=False)
        handles = []
        for grid, (label, colour, alpha) in zip(grids, LAYERS):
            z = grid.membership.astype(float)
            if z.any():
                ax.contourf(grid.xs, grid.ys, z, levels=[0.5, 1.5], colors=[colour], alpha=alpha)
                ax.contour(grid.xs, grid.ys, z, levels=[0.5], colors=[colour], linewidths=0.9)
            handles.append(Patch(facecolor=colour, alpha=alpha, edgecolor=colour, label=label))
        ax.set_xlim(*first.x_bounds)
        ax.set_ylim(*first.y_bounds)
        ax.set_aspect("equal")
        ax.set_xlabel(r"$x_1$")
        ax.set_ylabel(r"$x_2$")
        if title:
            ax.set_title(title)
        ax.legend(handles=handles, loc="upper right", frameon=False)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return path
