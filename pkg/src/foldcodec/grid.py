"""The 2D lattice that gets folded onto the cloud."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np


@dataclass(frozen=True)
class Grid:
    """w x h lattice with 3D coordinates, row-major (index i -> row i // w, col i % w)."""

    w: int
    h: int
    points: np.ndarray  # (w*h, 3) float64

    def __post_init__(self):
        if self.w < 1 or self.h < 1:
            raise ValueError("grid dimensions must be positive")
        pts = np.ascontiguousarray(self.points, dtype=np.float64)
        if pts.shape != (self.w * self.h, 3):
            raise ValueError("points must have shape (w*h, 3)")
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.w * self.h


def _axis_coords(count: int) -> np.ndarray:
    if count == 1:
        return np.zeros(1)
    return -1.0 + 2.0 * np.arange(count) / (count - 1)


def make_grid(n: int) -> Grid:
    """Square grid with w = h = ceil(sqrt(n)), spanning [-1,1] x [-1,1] x {0}."""
    if n < 1:
        raise ValueError("n must be >= 1")
    side = math.isqrt(n - 1) + 1  # ceil(sqrt(n)) without float error
    xs = _axis_coords(side)
    cols, rows = np.meshgrid(xs, xs)  # row-major: y varies by row, x by column
    points = np.stack([cols.ravel(), rows.ravel(), np.zeros(side * side)], axis=1)
    return Grid(w=side, h=side, points=points)


@lru_cache(maxsize=32)
def neighbor_table(w: int, h: int) -> tuple[np.ndarray, np.ndarray]:
    """Horizontal/vertical lattice neighbors of every cell.

    Returns (idx, mask) of shape (w*h, 4) in fixed slot order
    up, down, left, right; invalid slots are masked out and index 0.
    """
    n = w * h
    rows, cols = np.divmod(np.arange(n), w)
    idx = np.zeros((n, 4), dtype=np.int64)
    mask = np.zeros((n, 4), dtype=bool)
    for slot, (dr, dc) in enumerate(((-1, 0), (1, 0), (0, -1), (0, 1))):
        r, c = rows + dr, cols + dc
        ok = (r >= 0) & (r < h) & (c >= 0) & (c < w)
        idx[ok, slot] = r[ok] * w + c[ok]
        mask[:, slot] = ok
    return idx, mask
