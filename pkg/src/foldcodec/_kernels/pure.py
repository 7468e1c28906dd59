"""Pure-numpy fallback for the compiled kernels.

Semantics are bit-identical to ``_core``: squared distances are accumulated
as ((dx*dx + dy*dy) + dz*dz) and neighbor order is ascending (d2, index).
"""

import numpy as np

BACKEND = "pure"

# Query rows processed per temporary distance block; bounds memory at
# ~_BLOCK * n * 8 bytes without affecting results.
_BLOCK = 256


def knn_block(points, queries, k):
    nq = queries.shape[0]
    idx = np.empty((nq, k), dtype=np.int64)
    d2 = np.empty((nq, k), dtype=np.float64)
    for start in range(0, nq, _BLOCK):
        stop = min(start + _BLOCK, nq)
        diff = queries[start:stop, None, :] - points[None, :, :]
        sq = diff * diff
        dist = (sq[:, :, 0] + sq[:, :, 1]) + sq[:, :, 2]
        # stable sort on d2 keeps ties in ascending point order
        order = np.argsort(dist, axis=1, kind="stable")[:, :k]
        idx[start:stop] = order
        d2[start:stop] = np.take_along_axis(dist, order, axis=1)
    return idx, d2


def greedy_assign(cand_idx, cand_dist, n_cells):
    n, k = cand_idx.shape
    occupancy = np.zeros(n_cells, dtype=np.int64)
    forward = np.empty(n, dtype=np.int64)
    for p in range(n):
        best = None
        for j in range(k):
            cell = int(cand_idx[p, j])
            dist = float(cand_dist[p, j])
            key = (occupancy[cell] * dist, dist, cell)
            if best is None or key < best:
                best = key
        cell = best[2]
        forward[p] = cell
        occupancy[cell] += 1
    return forward, occupancy
