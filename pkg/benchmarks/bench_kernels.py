"""Compare the compiled kernel core against the pure-numpy fallback.

Times the two hot kernels (exact k-NN blocks and greedy cell assignment)
on identical seeded inputs, verifies the backends agree bit for bit, and
prints per-size timings with speedups. Run from a checkout with the
package installed:

    python3 benchmarks/bench_kernels.py --sizes 500,2000,8000 --k 9
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from foldcodec._kernels import pure

try:
    from foldcodec._kernels import _core
except ImportError:
    _core = None


def _best_of(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        started = time.perf_counter()
        result = fn()
        best = min(best, time.perf_counter() - started)
    return best, result


def _bench_knn(backend, points, queries, k, repeats):
    return _best_of(lambda: backend.knn_block(points, queries, k), repeats)


def _bench_greedy(backend, cand_idx, cand_dist, n_cells, repeats):
    return _best_of(lambda: backend.greedy_assign(cand_idx, cand_dist, n_cells), repeats)


def _check_equal(a, b, label):
    for lhs, rhs in zip(a, b):
        if lhs.tobytes() != rhs.tobytes():
            raise AssertionError(f"{label}: backends disagree")


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", default="500,2000,8000",
                        help="comma-separated point counts (default 500,2000,8000)")
    parser.add_argument("--k", type=int, default=9,
                        help="neighbors per query (default 9)")
    parser.add_argument("--repeats", type=int, default=5,
                        help="timing repeats, best run kept (default 5)")
    args = parser.parse_args()

    sizes = [int(s) for s in args.sizes.split(",") if s]
    if _core is None:
        print("compiled core not importable; timing the pure backend only")

    header = f"{'kernel':<14}{'n':>8}{'pure ms':>12}{'compiled ms':>14}{'speedup':>10}"
    print(header)
    print("-" * len(header))

    rng = np.random.default_rng(99)
    for n in sizes:
        points = np.ascontiguousarray(rng.uniform(-1, 1, size=(n, 3)))
        queries = np.ascontiguousarray(rng.uniform(-1, 1, size=(n, 3)))

        pure_t, pure_out = _bench_knn(pure, points, queries, args.k, args.repeats)
        if _core is not None:
            core_t, core_out = _bench_knn(_core, points, queries, args.k, args.repeats)
            _check_equal(pure_out, core_out, f"knn n={n}")
            ratio = f"{pure_t / core_t:9.1f}x"
            core_ms = f"{core_t * 1e3:14.2f}"
        else:
            ratio, core_ms = f"{'-':>10}", f"{'-':>14}"
        print(f"{'knn_block':<14}{n:>8}{pure_t * 1e3:>12.2f}{core_ms}{ratio}")

        cand_idx, cand_dist = pure.knn_block(points, queries, args.k)
        pure_t, pure_out = _bench_greedy(pure, cand_idx, cand_dist, n, args.repeats)
        if _core is not None:
            core_t, core_out = _bench_greedy(_core, cand_idx, cand_dist, n, args.repeats)
            _check_equal(pure_out, core_out, f"greedy n={n}")
            ratio = f"{pure_t / core_t:9.1f}x"
            core_ms = f"{core_t * 1e3:14.2f}"
        else:
            ratio, core_ms = f"{'-':>10}", f"{'-':>14}"
        print(f"{'greedy_assign':<14}{n:>8}{pure_t * 1e3:>12.2f}{core_ms}{ratio}")

    return 0


if __name__ == "__main__":
    raise SystemExit(main())
