"""SVG heatmaps of per-obstacle scores."""
from __future__ import annotations

from typing import Sequence
from xml.sax.saxutils import quoteattr

import numpy as np

from .maze import GridMaze

CELL = 40
LOW = np.array([239, 243, 255])   # score 0
HIGH = np.array([8, 48, 107])     # score 1, full saturation


def normalize(scores: Sequence[float], normalization: str = "unit") -> np.ndarray:
    """Map scores to [0, 1].  ``minmax`` with a zero range gives all ones."""
    x = np.asarray(scores, dtype=float)
    if normalization == "unit":
        return np.clip(x, 0.0, 1.0)
    if normalization == "minmax":
        if x.size == 0:
            return x
        lo, hi = x.min(), x.max()
        return np.ones_like(x) if hi - lo == 0 else (x - lo) / (hi - lo)
    raise ValueError(f"unknown normalization {normalization!r}")


def ramp(t: float) -> str:
    r, g, b = np.rint(LOW + (HIGH - LOW) * t).astype(int)
    return f"#{r:02x}{g:02x}{b:02x}"


def render_heatmap(maze: GridMaze, scores: Sequence[float], normalization: str = "unit",
                   title: str = "") -> str:
    if len(scores) != maze.n_obstacles:
        raise ValueError(f"got {len(scores)} scores for {maze.n_obstacles} obstacles")
    level = normalize(scores, normalization)
    w, h = maze.width * CELL, maze.height * CELL
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" '
        f'viewBox="0 0 {w} {h}">',
    ]
    if title:
        out.append(f"<title>{title.replace('&', '&amp;').replace('<', '&lt;')}</title>")
    out.append(f'<rect class="background" x="0" y="0" width="{w}" height="{h}" fill="#ffffff"/>')
    for x, y in sorted(maze.walls):
        out.append(f'<rect class="wall" x="{x * CELL}" y="{y * CELL}" width="{CELL}" '
                   f'height="{CELL}" fill="#000000"/>')
    for ob in maze.obstacles:
        fill = ramp(float(level[ob.id]))
        for x, y in sorted(ob.cells):
            out.append(f'<rect class="obstacle" data-obstacle="{ob.id}" '
                       f'data-score={quoteattr(repr(float(scores[ob.id])))} x="{x * CELL}" '
                       f'y="{y * CELL}" width="{CELL}" height="{CELL}" fill="{fill}"/>')
    for i in range(maze.width + 1):
        out.append(f'<line x1="{i * CELL}" y1="0" x2="{i * CELL}" y2="{h}" stroke="#cccccc"/>')
    for j in range(maze.height + 1):
        out.append(f'<line x1="0" y1="{j * CELL}" x2="{w}" y2="{j * CELL}" stroke="#cccccc"/>')
    sx, sy = maze.start
    out.append(f'<circle class="start" cx="{sx * CELL + CELL / 2}" cy="{sy * CELL + CELL / 2}" '
               f'r="{CELL * 0.3}" fill="#2ca02c"/>')
    gx, gy = maze.goal
    pad = CELL * 0.2
    out.append(f'<rect class="goal" x="{gx * CELL + pad}" y="{gy * CELL + pad}" '
               f'width="{CELL - 2 * pad}" height="{CELL - 2 * pad}" fill="#d62728"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
