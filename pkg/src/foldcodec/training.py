"""Loss (Chamfer + repulsion), hand-written gradients, and Adam overfitting.

Nearest-neighbor correspondences inside the loss are recomputed every
iteration but held fixed while differentiating a step (the usual
subgradient treatment of min-based losses). All reductions have a fixed
order, so training is bit-reproducible — the decoder depends on it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .grid import Grid, make_grid
from .model import (
    LEAKY_SLOPE,
    FoldingError,
    FoldingModel,
    ModelDims,
    decoder_forward,
    encoder_forward,
    init_model,
)


class TrainingError(RuntimeError):
    def __init__(self, message: str, iteration: int | None = None):
        if iteration is not None:
            message = f"{message} (iteration {iteration})"
        super().__init__(message)
        self.iteration = iteration


@dataclass(frozen=True)
class LossReport:
    total: float
    chamfer: float
    repulsion: float


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 5000
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")


def _check_set(x, name):
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != 3 or x.shape[0] < 1:
        raise ValueError(f"{name} must be a nonempty (n, 3) array")
    return x


def chamfer(x: np.ndarray, recon: np.ndarray) -> float:
    """Symmetric sum of squared nearest-neighbor distances between two sets."""
    x = _check_set(x, "x")
    recon = _check_set(recon, "recon")
    _, d2_fwd = _kernels.nn1(recon, x)
    _, d2_bwd = _kernels.nn1(x, recon)
    return float(d2_fwd.sum() + d2_bwd.sum())


def _self_nn(recon: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Nearest *other* point within a set: (indices, squared distances)."""
    idx, d2 = _kernels.knn(recon, recon, 2)
    n = recon.shape[0]
    own = np.arange(n)
    # first column is the point itself unless a lower-indexed duplicate exists
    use_second = idx[:, 0] == own
    nn_idx = np.where(use_second, idx[:, 1], idx[:, 0])
    nn_d2 = np.where(use_second, d2[:, 1], d2[:, 0])
    return nn_idx, nn_d2


def repulsion(recon: np.ndarray) -> float:
    """Population variance of each point's squared distance to its nearest other point."""
    recon = _check_set(recon, "recon")
    if recon.shape[0] < 2:
        raise ValueError("repulsion needs at least 2 points")
    _, s = _self_nn(recon)
    return float(np.mean((s - s.mean()) ** 2))


def _loss_terms(x, recon):
    """Loss pieces plus the fixed correspondences used for the gradient."""
    fwd_idx, fwd_d2 = _kernels.nn1(recon, x)  # each original -> nearest recon
    bwd_idx, bwd_d2 = _kernels.nn1(x, recon)  # each recon -> nearest original
    d_ch = float(fwd_d2.sum() + bwd_d2.sum())
    if recon.shape[0] >= 2:
        rep_idx, rep_d2 = _self_nn(recon)
        d_rep = float(np.mean((rep_d2 - rep_d2.mean()) ** 2))
    else:  # repulsion is undefined for a single cell; contributes nothing
        rep_idx = np.zeros(recon.shape[0], dtype=np.int64)
        rep_d2 = np.zeros(recon.shape[0])
        d_rep = 0.0
    return d_ch, d_rep, fwd_idx, bwd_idx, rep_idx, rep_d2


def _grad_wrt_recon(x, recon, fwd_idx, bwd_idx, rep_idx, rep_d2):
    n_r = recon.shape[0]
    grad = 2.0 * (recon - x[bwd_idx])  # second Chamfer term
    np.add.at(grad, fwd_idx, 2.0 * (recon[fwd_idx] - x))  # first Chamfer term
    # repulsion: dVar/ds_j = 2 (s_j - mean) / n'
    ds = 2.0 * (rep_d2 - rep_d2.mean()) / n_r
    pair = 2.0 * (recon - recon[rep_idx])
    grad += ds[:, None] * pair
    np.add.at(grad, rep_idx, -ds[:, None] * pair)
    return grad


def _backprop_fold_layer(layer, cache, d_out):
    acts, pre = cache
    grads = [None] * len(layer)
    d = d_out
    for li in range(len(layer) - 1, -1, -1):
        w, _ = layer[li]
        if li < len(layer) - 1:  # output layer has no activation
            d = d * np.where(pre[li] > 0.0, 1.0, LEAKY_SLOPE)
        grads[li] = (acts[li].T @ d, d.sum(axis=0))
        d = d @ w.T
    d_inp = d[:, :3]
    d_y = d[:, 3:].sum(axis=0)
    return grads, d_inp, d_y


def loss_and_grad(model: FoldingModel, x: np.ndarray, grid: Grid):
    """Loss report and gradients w.r.t. every weight, in parameters() order."""
    x = _check_set(x, "x")
    y, enc_cache = encoder_forward(model, x)
    recon, (cache1, cache2) = decoder_forward(model, grid.points, y)

    d_ch, d_rep, fwd_idx, bwd_idx, rep_idx, rep_d2 = _loss_terms(x, recon)
    total = d_ch + d_rep
    if not np.isfinite(total):
        raise TrainingError("non-finite loss")
    report = LossReport(total=total, chamfer=d_ch, repulsion=d_rep)

    d_recon = _grad_wrt_recon(x, recon, fwd_idx, bwd_idx, rep_idx, rep_d2)
    g2, d_mid, d_y2 = _backprop_fold_layer(model.fold_layers[1], cache2, d_recon)
    g1, _, d_y1 = _backprop_fold_layer(model.fold_layers[0], cache1, d_mid)
    d_y = d_y1 + d_y2

    # maxpool routes each channel's gradient to the first argmax row
    acts, pre, argmax = enc_cache
    d_a = np.zeros_like(acts[-1])
    d_a[argmax, np.arange(d_y.shape[0])] = d_y
    enc_grads = [None] * len(model.encoder)
    for li in range(len(model.encoder) - 1, -1, -1):
        w, _ = model.encoder[li]
        d_z = d_a * (pre[li] > 0.0)
        enc_grads[li] = (acts[li].T @ d_z, d_z.sum(axis=0))
        d_a = d_z @ w.T

    grads = []
    for gw, gb in enc_grads:
        grads.extend((gw, gb))
    for layer_grads in (g1, g2):
        for gw, gb in layer_grads:
            grads.extend((gw, gb))
    return report, grads


def train(
    x: np.ndarray,
    config: TrainConfig = TrainConfig(),
    dims: ModelDims = ModelDims(),
) -> tuple[FoldingModel, Grid, np.ndarray]:
    """Overfit the folding network to a single cloud with full-batch Adam.

    Returns (model, grid, reconstruction); the model carries the final
    codeword. Bit-deterministic for identical (x, config, dims).
    """
    x = _check_set(x, "x")
    grid = make_grid(x.shape[0])
    model = init_model(config.seed, dims)
    params = model.parameters()
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]

    for t in range(1, config.iterations + 1):
        try:
            _, grads = loss_and_grad(model, x, grid)
        except (TrainingError, FoldingError) as exc:
            raise TrainingError(str(exc), iteration=t) from exc
        bc1 = 1.0 - config.beta1**t
        bc2 = 1.0 - config.beta2**t
        for p, g, mi, vi in zip(params, grads, m, v):
            mi *= config.beta1
            mi += (1.0 - config.beta1) * g
            vi *= config.beta2
            vi += (1.0 - config.beta2) * g * g
            p -= config.learning_rate * (mi / bc1) / (np.sqrt(vi / bc2) + config.eps)

    y, _ = encoder_forward(model, x)
    model.codeword = y
    recon, _ = decoder_forward(model, grid.points, y)
    return model, grid, recon
