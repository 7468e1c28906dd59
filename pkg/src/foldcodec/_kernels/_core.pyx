# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: exact k-NN selection and the greedy mapping loop.

Must stay bit-identical to the numpy fallback in ``pure.py``; compiled with
-ffp-contract=off so the squared-distance sum rounds the same way.
"""

import numpy as np

BACKEND = "compiled"


def knn_block(double[:, ::1] points, double[:, ::1] queries, Py_ssize_t k):
    cdef Py_ssize_t m = points.shape[0]
    cdef Py_ssize_t nq = queries.shape[0]
    idx_arr = np.empty((nq, k), dtype=np.int64)
    d2_arr = np.empty((nq, k), dtype=np.float64)
    cdef long long[:, ::1] idx = idx_arr
    cdef double[:, ::1] d2 = d2_arr
    cdef Py_ssize_t qi, pi, cnt, pos, j
    cdef double qx, qy, qz, dx, dy, dz, dist, worst

    with nogil:
        for qi in range(nq):
            qx = queries[qi, 0]
            qy = queries[qi, 1]
            qz = queries[qi, 2]
            cnt = 0
            for pi in range(m):
                dx = points[pi, 0] - qx
                dy = points[pi, 1] - qy
                dz = points[pi, 2] - qz
                dist = (dx * dx + dy * dy) + dz * dz
                if cnt == k:
                    worst = d2[qi, k - 1]
                    # lexicographic (d2, index); stored indices at equal d2
                    # are always lower because pi ascends
                    if dist > worst or (dist == worst and pi > idx[qi, k - 1]):
                        continue
                    pos = k - 1
                else:
                    pos = cnt
                    cnt += 1
                # insertion keeping ascending (d2, index)
                while pos > 0 and (d2[qi, pos - 1] > dist or
                                   (d2[qi, pos - 1] == dist and idx[qi, pos - 1] > pi)):
                    d2[qi, pos] = d2[qi, pos - 1]
                    idx[qi, pos] = idx[qi, pos - 1]
                    pos -= 1
                d2[qi, pos] = dist
                idx[qi, pos] = pi
    return idx_arr, d2_arr


def greedy_assign(long long[:, ::1] cand_idx, double[:, ::1] cand_dist,
                  Py_ssize_t n_cells):
    cdef Py_ssize_t n = cand_idx.shape[0]
    cdef Py_ssize_t k = cand_idx.shape[1]
    occ_arr = np.zeros(n_cells, dtype=np.int64)
    fwd_arr = np.empty(n, dtype=np.int64)
    cdef long long[::1] occ = occ_arr
    cdef long long[::1] fwd = fwd_arr
    cdef Py_ssize_t p, j
    cdef long long cell, best_cell
    cdef double dist, score, best_score, best_dist

    with nogil:
        for p in range(n):
            best_cell = -1
            best_score = 0.0
            best_dist = 0.0
            for j in range(k):
                cell = cand_idx[p, j]
                dist = cand_dist[p, j]
                score = occ[cell] * dist
                if (best_cell < 0 or score < best_score or
                        (score == best_score and
                         (dist < best_dist or (dist == best_dist and cell < best_cell)))):
                    best_cell = cell
                    best_score = score
                    best_dist = dist
            fwd[p] = best_cell
            occ[best_cell] += 1
    return fwd_arr, occ_arr
