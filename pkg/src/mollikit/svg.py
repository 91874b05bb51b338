"""Minimal SVG heatmap and scatter writers for quick looks at grids and samples.

Best effort only: no axes, ticks or legends.  The text outputs are the
authoritative artifacts.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np


def _grey(v: float) -> str:
    c = int(round(255 * (1.0 - v)))
    return f"#{c:02x}{c:02x}{c:02x}"


def heatmap(values: np.ndarray, path: str | Path, cell: int = 4) -> None:
    """Row 0 of ``values`` is drawn at the bottom, so y grows upwards."""
    v = np.asarray(values, dtype=np.float64)
    rows, cols = v.shape
    span = v.max() - v.min()
    norm = (v - v.min()) / span if span > 0 else np.zeros_like(v)
    w, h = cols * cell, rows * cell
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}">']
    for i in range(rows):
        y = (rows - 1 - i) * cell
        for j in range(cols):
            parts.append(f'<rect x="{j * cell}" y="{y}" width="{cell}" height="{cell}" '
                         f'fill="{_grey(norm[i, j])}"/>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n", encoding="utf-8")


def scatter(points: np.ndarray, path: str | Path, bounds=(-4.0, 4.0), size: int = 400) -> None:
    pts = np.asarray(points, dtype=np.float64)
    lo, hi = bounds
    scale = size / (hi - lo)
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}">']
    for x, y in pts[:, :2]:
        if lo <= x <= hi and lo <= y <= hi:
            parts.append(f'<circle cx="{(x - lo) * scale:.2f}" cy="{(hi - y) * scale:.2f}" r="1"/>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n", encoding="utf-8")
