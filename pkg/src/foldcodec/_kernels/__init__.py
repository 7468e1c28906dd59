"""Kernel backend selection.

The compiled Cython core is used when importable; otherwise the pure-numpy
fallback takes over. ``FOLDCODEC_PURE=1`` forces the fallback. Both backends
return bit-identical results, so the choice never affects codec output.
"""

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

if os.environ.get("FOLDCODEC_PURE") == "1":
    from . import pure as _backend
else:
    try:
        from . import _core as _backend  # type: ignore[attr-defined]
    except ImportError:
        from . import pure as _backend

BACKEND = _backend.BACKEND

_num_threads = 1


def set_num_threads(n: int) -> None:
    """Set the worker count for k-NN query blocks (results are unaffected)."""
    global _num_threads
    if n < 1:
        raise ValueError("thread count must be >= 1")
    _num_threads = int(n)


def get_num_threads() -> int:
    return _num_threads


def _as_points(a, name):
    a = np.ascontiguousarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[1] != 3:
        raise ValueError(f"{name} must have shape (n, 3)")
    return a


def knn(points, queries, k):
    """Exact k nearest neighbors of each query among ``points``.

    Returns (idx, d2), each of shape (n_queries, k), ascending by squared
    distance with ties broken by lower point index.
    """
    points = _as_points(points, "points")
    queries = _as_points(queries, "queries")
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > points.shape[0]:
        raise ValueError(f"k={k} exceeds point count {points.shape[0]}")
    nq = queries.shape[0]
    if nq == 0:
        return (np.empty((0, k), dtype=np.int64), np.empty((0, k), dtype=np.float64))
    threads = _num_threads
    if threads == 1 or nq < 2 * threads:
        return _backend.knn_block(points, queries, k)
    # contiguous query chunks; each chunk is independent so the stitched
    # result is identical to the single-threaded one
    bounds = np.linspace(0, nq, threads + 1, dtype=np.int64)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(
            pool.map(lambda se: _backend.knn_block(points, queries[se[0]:se[1]], k),
                     zip(bounds[:-1], bounds[1:]))
        )
    idx = np.vstack([p[0] for p in parts])
    d2 = np.vstack([p[1] for p in parts])
    return idx, d2


def nn1(points, queries):
    """Nearest neighbor only: returns (idx, d2) of shape (n_queries,)."""
    idx, d2 = knn(points, queries, 1)
    return idx[:, 0], d2[:, 0]


def greedy_assign(cand_idx, cand_dist, n_cells):
    """Sequential occupancy-regularized assignment.

    For each row p (in order), picks argmin over candidates of
    occupancy * distance, ties by smaller distance then lower cell index,
    updating occupancy immediately.
    """
    cand_idx = np.ascontiguousarray(cand_idx, dtype=np.int64)
    cand_dist = np.ascontiguousarray(cand_dist, dtype=np.float64)
    if cand_idx.shape != cand_dist.shape or cand_idx.ndim != 2:
        raise ValueError("candidate arrays must share shape (n, k)")
    return _backend.greedy_assign(cand_idx, cand_dist, int(n_cells))
