"""Post-training refinement of a folded reconstruction.

Each iteration blends three attractors per reconstructed point: a
density-weighted mean of its grid neighbors, its nearest point in the
original cloud, and the mean of the original points that chose it as
their nearest. All targets are computed from the reconstruction at the
start of the iteration (Jacobi style), so point order cannot matter.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .grid import neighbor_table


@dataclass(frozen=True)
class RefineConfig:
    alpha: float = 1.0 / 3.0
    iterations: int = 100

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")


def inverse_density_weights(recon: np.ndarray, w: int, h: int) -> np.ndarray:
    """Mean Euclidean distance from each point to its up/down/left/right
    grid neighbors (missing neighbors at the border are skipped)."""
    recon = np.ascontiguousarray(recon, dtype=np.float64)
    if recon.shape != (w * h, 3):
        raise ValueError(f"expected ({w * h}, 3) points for a {w}x{h} grid")
    idx, mask = neighbor_table(w, h)
    nb = recon[idx]  # (n, 4, 3); garbage where mask is False
    diff = nb - recon[:, None, :]
    d2 = (diff[..., 0] * diff[..., 0] + diff[..., 1] * diff[..., 1]) + diff[..., 2] * diff[..., 2]
    dist = np.sqrt(d2) * mask
    counts = mask.sum(axis=1)
    if np.any(counts == 0):
        # only possible for a 1x1 grid
        out = np.zeros(recon.shape[0])
        np.divide(dist.sum(axis=1), counts, out=out, where=counts > 0)
        return out
    return dist.sum(axis=1) / counts


def normalize_weights(weights: np.ndarray) -> np.ndarray:
    """Min-max rescale to [0, 1]; a constant vector maps to all ones."""
    weights = np.asarray(weights, dtype=np.float64)
    lo = weights.min()
    hi = weights.max()
    if hi == lo:
        return np.ones_like(weights)
    return (weights - lo) / (hi - lo)


def grid_attractor(recon: np.ndarray, weights: np.ndarray, w: int, h: int) -> np.ndarray:
    """Weighted mean of grid-neighbor positions, weights from
    normalize_weights. Where every contributing weight is zero the plain
    neighbor mean is used instead."""
    recon = np.ascontiguousarray(recon, dtype=np.float64)
    idx, mask = neighbor_table(w, h)
    nb = recon[idx]
    wn = weights[idx] * mask  # (n, 4)
    den = wn.sum(axis=1)
    num = (wn[:, :, None] * nb).sum(axis=1)
    out = np.empty_like(recon)
    zero = den == 0.0
    np.divide(num, den[:, None], out=out, where=~zero[:, None])
    if np.any(zero):
        counts = mask.sum(axis=1)
        mean = recon.copy()  # a 1x1 grid has no neighbors: stay put
        has = counts > 0
        mean[has] = (nb * mask[:, :, None]).sum(axis=1)[has] / counts[has, None]
        out[zero] = mean[zero]
    return out


def push_targets(recon: np.ndarray, original: np.ndarray) -> np.ndarray:
    """Nearest original point for each reconstructed point."""
    original = np.ascontiguousarray(original, dtype=np.float64)
    idx, _ = _kernels.nn1(original, np.ascontiguousarray(recon, dtype=np.float64))
    return original[idx]


def pull_targets(recon: np.ndarray, original: np.ndarray, push: np.ndarray) -> np.ndarray:
    """Mean of the original points whose nearest reconstructed point is
    this one; points that attract nobody fall back to their push target."""
    recon = np.ascontiguousarray(recon, dtype=np.float64)
    original = np.ascontiguousarray(original, dtype=np.float64)
    idx, _ = _kernels.nn1(recon, original)  # nearest cell for each original point
    n = recon.shape[0]
    acc = np.zeros((n, 3))
    np.add.at(acc, idx, original)
    counts = np.bincount(idx, minlength=n).astype(np.float64)
    out = push.copy()
    hit = counts > 0
    out[hit] = acc[hit] / counts[hit, None]
    return out


def refine_step(recon: np.ndarray, original: np.ndarray, w: int, h: int,
                alpha: float) -> np.ndarray:
    omega = inverse_density_weights(recon, w, h)
    p_grid = grid_attractor(recon, normalize_weights(omega), w, h)
    p_push = push_targets(recon, original)
    p_pull = pull_targets(recon, original, p_push)
    return alpha * p_grid + (1.0 - alpha) * (p_push + p_pull) / 2.0


def refine(recon: np.ndarray, original: np.ndarray, w: int, h: int,
           config: RefineConfig | None = None) -> np.ndarray:
    """Run refine_step for config.iterations rounds."""
    if config is None:
        config = RefineConfig()
    recon = np.ascontiguousarray(recon, dtype=np.float64)
    original = np.ascontiguousarray(original, dtype=np.float64)
    if recon.shape != (w * h, 3):
        raise ValueError(f"expected ({w * h}, 3) points for a {w}x{h} grid")
    if original.ndim != 2 or original.shape[1] != 3 or original.shape[0] == 0:
        raise ValueError("original cloud must be a nonempty (n, 3) array")
    for _ in range(config.iterations):
        recon = refine_step(recon, original, w, h, config.alpha)
    return recon
