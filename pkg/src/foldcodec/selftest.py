"""Embedded oracle suite behind ``foldcodec selftest``.

Each check recomputes an expected value by an independent route (hand
calculation, brute force, finite differences) and asserts the library
matches. Runs in a few seconds with no input files.
"""

from __future__ import annotations

import math

import numpy as np

from . import _kernels
from .grid import make_grid
from .imagecodec import CODEC_LOSSLESS, CodecChoice, compress, decompress, y_psnr
from .mapping import build_mapping, occupancy_stats
from .model import ModelDims, init_model
from .refine import (
    grid_attractor,
    inverse_density_weights,
    normalize_weights,
    pull_targets,
    push_targets,
)
from .training import chamfer, loss_and_grad, repulsion


def _check_gradients():
    """Analytic gradients vs central finite differences on a toy fold."""
    rng = np.random.Generator(np.random.PCG64(123))
    x = rng.uniform(-1.0, 1.0, size=(4, 3))
    grid = make_grid(4)
    model = init_model(seed=5, dims=ModelDims())
    params = model.parameters()
    report, grads = loss_and_grad(model, x, grid)
    base = [p.copy() for p in params]

    def loss_at(offset):
        for p, b, d in zip(params, base, offset):
            p[...] = b + d
        value = loss_and_grad(model, x, grid)[0].total
        for p, b in zip(params, base):
            p[...] = b
        return value

    eps = 1e-6
    worst = 0.0
    for trial in range(20):
        direction = [rng.normal(size=p.shape) for p in params]
        norm = math.sqrt(sum(float((d * d).sum()) for d in direction))
        direction = [d / norm for d in direction]
        analytic = sum(float((g * d).sum()) for g, d in zip(grads, direction))
        plus = loss_at([eps * d for d in direction])
        minus = loss_at([-eps * d for d in direction])
        numeric = (plus - minus) / (2.0 * eps)
        rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-12)
        worst = max(worst, rel)
        assert rel < 1e-4, (
            f"direction {trial}: analytic {analytic:.10g} vs numeric "
            f"{numeric:.10g} (relative error {rel:.3g})"
        )
    assert math.isfinite(report.total)


def _check_exhaustive_nn():
    """k-NN kernel vs a brute-force oracle, ties included."""
    rng = np.random.Generator(np.random.PCG64(7))
    # integer coordinates make squared distances exact, so tie order is
    # well-defined; duplicated points force actual ties
    points = rng.integers(0, 6, size=(120, 3)).astype(np.float64)
    points[40] = points[3]
    points[90] = points[3]
    queries = rng.integers(0, 6, size=(40, 3)).astype(np.float64)
    for k in (1, 5, 9):
        idx, d2 = _kernels.knn(points, queries, k)
        for qi, q in enumerate(queries):
            dist = [float(((p[0] - q[0]) ** 2 + (p[1] - q[1]) ** 2) + (p[2] - q[2]) ** 2)
                    for p in points]
            expect = sorted(range(len(points)), key=lambda i: (dist[i], i))[:k]
            got = [int(v) for v in idx[qi]]
            assert got == expect, f"query {qi}, k={k}: {got} != {expect}"
            for j, i in enumerate(expect):
                assert d2[qi, j] == dist[i]


def _check_chamfer_repulsion():
    x = np.array([[0.0, 0.0, 0.0]])
    recon = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    got = chamfer(x, recon)
    assert got == 3.0, f"chamfer: {got} != 3"
    line = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [3.0, 0.0, 0.0]])
    got = repulsion(line)
    assert got == 2.0, f"repulsion: {got} != 2"


def _check_refine_examples():
    # 2x2 fold stretched at one corner: origin sees neighbors at distance
    # 2 (right) and 1 (down), so its inverse density weight is 1.5
    recon = np.array([
        [0.0, 0.0, 0.0],
        [2.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [1.0, 1.0, 0.0],
    ])
    omega = inverse_density_weights(recon, 2, 2)
    assert omega[0] == 1.5, f"omega[0]: {omega[0]} != 1.5"

    hat = normalize_weights(np.array([1.0, 2.0, 3.0]))
    assert np.array_equal(hat, [0.0, 0.5, 1.0]), f"normalize: {hat}"

    # point 0's neighbors carry (0,0,0) at weight 0.5 and (2,0,0) at
    # weight 1: the normalized weighted mean is (4/3, 0, 0)
    recon2 = np.array([
        [5.0, 5.0, 5.0],
        [2.0, 0.0, 0.0],
        [0.0, 0.0, 0.0],
        [7.0, 7.0, 7.0],
    ])
    weights = np.array([0.0, 1.0, 0.5, 0.0])
    p_grid = grid_attractor(recon2, weights, 2, 2)
    assert np.allclose(p_grid[0], [4.0 / 3.0, 0.0, 0.0], rtol=0, atol=1e-15), (
        f"p_grid[0]: {p_grid[0]}"
    )

    x = np.array([[0.0, 0.0, 0.0], [2.0, 0.0, 0.0]])
    tilde = np.array([[0.9, 0.0, 0.0]])
    push = push_targets(tilde, x)
    assert np.array_equal(push[0], [0.0, 0.0, 0.0]), f"push: {push[0]}"

    tilde2 = np.array([[1.0, 0.0, 0.0], [10.0, 10.0, 10.0]])
    push2 = push_targets(tilde2, x)
    pull2 = pull_targets(tilde2, x, push2)
    assert np.array_equal(pull2[0], [1.0, 0.0, 0.0]), f"pull[0]: {pull2[0]}"
    assert np.array_equal(pull2[1], [2.0, 0.0, 0.0]), f"pull[1]: {pull2[1]}"


def _check_greedy_trace():
    x = np.array([[0.0, 0.0, 0.0], [0.1, 0.0, 0.0]])
    recon = np.array([[0.0, 0.0, 0.0], [5.0, 0.0, 0.0]])
    table = build_mapping(x, recon, k=2)
    assert list(table.forward) == [0, 1], f"forward: {list(table.forward)}"
    assert list(table.occupancy) == [1, 1]


def _check_occupancy_stats():
    rows, cols = occupancy_stats(np.array([[2, 1], [0, 1]]))
    assert np.array_equal(rows, [1.5, 1.0]), f"row means: {rows}"
    assert np.array_equal(cols, [2.0, 1.0]), f"col means: {cols}"


def _check_y_psnr():
    a = np.full((50, 3), 100, dtype=np.uint8)
    b = np.full((50, 3), 101, dtype=np.uint8)
    got = y_psnr(a, b)
    expect = 20.0 * math.log10(255.0)
    assert abs(got - expect) < 1e-6, f"y_psnr: {got} != {expect}"
    assert y_psnr(a, a) == math.inf


def _check_lossless_codec():
    rng = np.random.Generator(np.random.PCG64(11))
    pixels = rng.integers(0, 256, size=(17, 23, 3)).astype(np.uint8)
    blob = compress(pixels, CodecChoice(CODEC_LOSSLESS))
    assert np.array_equal(decompress(blob), pixels)


CHECKS = (
    ("finite-difference gradients", _check_gradients),
    ("exhaustive nearest-neighbor oracle", _check_exhaustive_nn),
    ("chamfer and repulsion hand values", _check_chamfer_repulsion),
    ("refinement hand examples", _check_refine_examples),
    ("greedy mapping hand trace", _check_greedy_trace),
    ("occupancy line means", _check_occupancy_stats),
    ("luma psnr closed form", _check_y_psnr),
    ("lossless image round trip", _check_lossless_codec),
)


def run_selftest(write=print) -> int:
    """Run every check; returns the number of failures."""
    failures = 0
    for name, check in CHECKS:
        try:
            check()
        except AssertionError as exc:
            failures += 1
            write(f"FAIL: {name}: {exc}")
        except Exception as exc:  # broken environment still gets a report
            failures += 1
            write(f"FAIL: {name}: unexpected {type(exc).__name__}: {exc}")
        else:
            write(f"PASS: {name}")
    return failures
