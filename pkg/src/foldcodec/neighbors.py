"""Exact k-nearest-neighbor search with deterministic tie-breaking.

Results always equal exhaustive search: ascending squared distance, ties
broken by lowest point index. This determinism is what lets the decoder
replay every encoder-side search bit-exactly.
"""

from __future__ import annotations

import numpy as np

from . import _kernels


class SpatialIndex:
    """Exact-NN structure over a fixed point set."""

    def __init__(self, points: np.ndarray):
        points = np.ascontiguousarray(points, dtype=np.float64)
        if points.ndim != 2 or points.shape[1] != 3:
            raise ValueError("points must have shape (n, 3)")
        if points.shape[0] < 1:
            raise ValueError("cannot index an empty point set")
        self.points = points

    def __len__(self) -> int:
        return self.points.shape[0]

    def query(self, queries: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
        """Batch k-NN: (indices, squared distances), each (n_queries, k)."""
        queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
        return _kernels.knn(self.points, queries, k)


def build_index(points: np.ndarray) -> SpatialIndex:
    return SpatialIndex(points)


def nearest(index: SpatialIndex, query: np.ndarray, k: int) -> list[tuple[int, float]]:
    """k nearest neighbors of a single query point."""
    idx, d2 = index.query(np.asarray(query, dtype=np.float64).reshape(1, 3), k)
    return [(int(i), float(d)) for i, d in zip(idx[0], d2[0])]
