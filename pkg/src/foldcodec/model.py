"""The parametric folding function: pointwise encoder, maxpool codeword,
and a two-fold decoder that drapes the grid over the cloud.

Everything here is deterministic: fixed weight draw order, fixed reduction
orders, float64 throughout. The decoder re-creates this model from a seed,
so any hidden nondeterminism would corrupt decoded attributes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import Grid

LEAKY_SLOPE = 0.2


class FoldingError(ValueError):
    pass


@dataclass(frozen=True)
class ModelDims:
    """Layer widths; defaults are the production architecture."""

    encoder_widths: tuple[int, ...] = (128, 128, 128, 128)
    fold_widths: tuple[int, ...] = (64, 64, 3)

    def __post_init__(self):
        if not self.encoder_widths or not self.fold_widths:
            raise ValueError("layer width tuples must be nonempty")
        if any(w < 1 for w in self.encoder_widths + self.fold_widths):
            raise ValueError("layer widths must be positive")
        if self.fold_widths[-1] != 3:
            raise ValueError("each folding layer must end in a width-3 output")

    @property
    def latent(self) -> int:
        return self.encoder_widths[-1]


@dataclass
class FoldingModel:
    """Weights of encoder + two folding layers, plus the codeword after training."""

    dims: ModelDims
    seed: int
    encoder: list[tuple[np.ndarray, np.ndarray]]
    fold_layers: list[list[tuple[np.ndarray, np.ndarray]]]
    codeword: np.ndarray | None = None

    def parameters(self) -> list[np.ndarray]:
        """All weight arrays in a fixed, documented order."""
        out = []
        for w, b in self.encoder:
            out.extend((w, b))
        for layer in self.fold_layers:
            for w, b in layer:
                out.extend((w, b))
        return out


def init_model(seed: int, dims: ModelDims = ModelDims()) -> FoldingModel:
    """Seeded He-style uniform init: W ~ U(+-sqrt(6/fan_in)), zero biases.

    Identical (seed, dims) gives bit-identical weights; the draw order below
    is part of the bitstream format.
    """
    rng = np.random.Generator(np.random.PCG64(seed))

    def layer(fan_in, fan_out):
        limit = np.sqrt(6.0 / fan_in)
        w = rng.uniform(-limit, limit, size=(fan_in, fan_out))
        return w, np.zeros(fan_out)

    encoder = []
    fan_in = 3
    for width in dims.encoder_widths:
        encoder.append(layer(fan_in, width))
        fan_in = width

    fold_layers = []
    for _ in range(2):
        this = []
        fan_in = 3 + dims.latent
        for width in dims.fold_widths:
            this.append(layer(fan_in, width))
            fan_in = width
        fold_layers.append(this)

    return FoldingModel(dims=dims, seed=seed, encoder=encoder, fold_layers=fold_layers)


def _relu(z):
    return np.maximum(z, 0.0)


def _leaky(z):
    return np.where(z > 0.0, z, LEAKY_SLOPE * z)


def encoder_forward(model: FoldingModel, positions: np.ndarray):
    """Returns (codeword, cache) where cache holds activations for backprop."""
    a = np.ascontiguousarray(positions, dtype=np.float64)
    if a.ndim != 2 or a.shape[1] != 3 or a.shape[0] < 1:
        raise FoldingError("positions must have shape (n, 3) with n >= 1")
    acts = [a]
    pre = []
    for w, b in model.encoder:
        z = acts[-1] @ w + b
        pre.append(z)
        acts.append(_relu(z))
    y = acts[-1].max(axis=0)
    if not np.isfinite(y).all():
        raise FoldingError("non-finite encoder activation")
    argmax = np.argmax(acts[-1], axis=0)  # first max per channel
    return y, (acts, pre, argmax)


def encode_cloud(model: FoldingModel, positions: np.ndarray) -> np.ndarray:
    """Permutation-invariant codeword: channelwise max of the encoder output."""
    y, _ = encoder_forward(model, positions)
    return y


def _fold_layer_forward(layer, inp: np.ndarray, y: np.ndarray):
    n = inp.shape[0]
    z0 = np.concatenate([inp, np.broadcast_to(y, (n, y.shape[0]))], axis=1)
    acts = [z0]
    pre = []
    for li, (w, b) in enumerate(layer):
        z = acts[-1] @ w + b
        pre.append(z)
        # no activation on the width-3 output of a folding layer
        acts.append(_leaky(z) if li < len(layer) - 1 else z)
    return acts[-1], (acts, pre)


def decoder_forward(model: FoldingModel, grid_points: np.ndarray, y: np.ndarray):
    mid, cache1 = _fold_layer_forward(model.fold_layers[0], grid_points, y)
    out, cache2 = _fold_layer_forward(model.fold_layers[1], mid, y)
    if not np.isfinite(out).all():
        raise FoldingError("non-finite decoder output")
    return out, (cache1, cache2)


def fold(model: FoldingModel, grid: Grid, y: np.ndarray) -> np.ndarray:
    """Reconstruction: fold the grid through both folding layers.

    Output is index-aligned with the grid and never permuted.
    """
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (model.dims.latent,):
        raise FoldingError(f"codeword must have shape ({model.dims.latent},)")
    if not np.isfinite(y).all():
        raise FoldingError("non-finite codeword")
    out, _ = decoder_forward(model, grid.points, y)
    return out
