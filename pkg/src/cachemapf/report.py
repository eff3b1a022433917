"""Figure rendering for run reports (wait-frequency heatmaps)."""

from __future__ import annotations

from pathlib import Path
from typing import Optional

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .grid_map import CACHE, PORT, SHELF, GridMap  # noqa: E402


def render_wait_heatmap(counts, path, grid: Optional[GridMap] = None, title: str = "wait actions per cell") -> Path:
    data = np.asarray(counts, dtype=float)
    fig, ax = plt.subplots(figsize=(max(4.0, data.shape[1] * 0.25), max(3.0, data.shape[0] * 0.25 + 0.8)))
    if grid is not None:
        blocked = np.array([[not grid.passable((r, c)) for c in range(grid.width)] for r in range(grid.height)])
        data = np.ma.masked_array(data, mask=blocked)
    cmap = matplotlib.colormaps["Greys"].copy()
    cmap.set_bad("#808080")
    im = ax.imshow(data, cmap=cmap, interpolation="nearest", vmin=0)
    if grid is not None:
        # outline shelves, caches and ports so congestion can be read against the layout
        for ch, color in ((SHELF, "tab:blue"), (CACHE, "tab:purple"), (PORT, "tab:green")):
            cells = grid.cells_of(ch)
            if cells:
                rows, cols = zip(*cells)
                ax.scatter(cols, rows, s=60, marker="s", facecolors="none", edgecolors=color, linewidths=1.0)
    ax.set_title(title, fontsize=9)
    ax.set_xticks([])
    ax.set_yticks([])
    fig.colorbar(im, ax=ax, fraction=0.03, pad=0.02)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
