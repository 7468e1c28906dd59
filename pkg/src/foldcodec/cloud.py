"""Point cloud data model, normalization, and automatic block segmentation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PointCloud:
    """A static point cloud: positions (n, 3) plus 8-bit RGB attributes (n, 3)."""

    positions: np.ndarray
    attributes: np.ndarray

    def __post_init__(self):
        pos = np.ascontiguousarray(self.positions, dtype=np.float64)
        att = np.ascontiguousarray(self.attributes, dtype=np.uint8)
        if pos.ndim != 2 or pos.shape[1] != 3:
            raise ValueError("positions must have shape (n, 3)")
        if att.shape != pos.shape:
            raise ValueError("attributes must have shape (n, 3) matching positions")
        if pos.shape[0] < 1:
            raise ValueError("point cloud must contain at least one point")
        if not np.isfinite(pos).all():
            raise ValueError("positions contain non-finite coordinates")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "attributes", att)

    @property
    def n(self) -> int:
        return self.positions.shape[0]


@dataclass(frozen=True)
class NormalizeTransform:
    """Centering + scaling applied to a cloud; invertible."""

    centroid: np.ndarray
    scale: float

    def apply(self, positions: np.ndarray) -> np.ndarray:
        return (positions - self.centroid) / self.scale

    def invert(self, positions: np.ndarray) -> np.ndarray:
        return positions * self.scale + self.centroid


def normalize_positions(positions: np.ndarray) -> tuple[np.ndarray, NormalizeTransform]:
    """Positions-only core of normalize; the attribute-free decoder uses it."""
    positions = np.asarray(positions, dtype=np.float64)
    centroid = positions.mean(axis=0)
    centered = positions - centroid
    scale = float(np.abs(centered).max())
    if scale == 0.0:
        scale = 1.0
    return centered / scale, NormalizeTransform(centroid=centroid, scale=scale)


def normalize(pc: PointCloud) -> tuple[PointCloud, NormalizeTransform]:
    """Center the cloud at its centroid and scale so max |coordinate| == 1.

    A degenerate all-equal cloud maps to the origin with scale 1. Attributes
    are untouched.
    """
    normalized, transform = normalize_positions(pc.positions)
    return PointCloud(normalized, pc.attributes), transform


def segment_indices(positions: np.ndarray, max_points: int) -> list[np.ndarray]:
    """Index partition behind segment_blocks; depends on positions only, so
    an attribute-free decoder reproduces the same patches."""
    if max_points < 1:
        raise ValueError("max_points must be >= 1")
    positions = np.asarray(positions, dtype=np.float64)
    patches: list[np.ndarray] = []

    def split(indices: np.ndarray) -> None:
        if indices.shape[0] <= max_points:
            patches.append(np.sort(indices))
            return
        pts = positions[indices]
        extent = pts.max(axis=0) - pts.min(axis=0)
        axis = int(np.argmax(extent))
        order = np.argsort(pts[:, axis], kind="stable")
        half = (indices.shape[0] + 1) // 2
        split(indices[order[:half]])
        split(indices[order[half:]])

    split(np.arange(positions.shape[0], dtype=np.int64))
    return patches


def segment_blocks(
    pc: PointCloud, max_points: int
) -> list[tuple[PointCloud, np.ndarray]]:
    """Split a cloud into patches of at most ``max_points`` points.

    Recursive median splits along the longest bounding-box axis. Each patch
    comes with its index map into the original cloud (ascending original
    index); the maps together form a permutation of 0..n-1.
    """
    return [
        (PointCloud(pc.positions[idx], pc.attributes[idx]), idx)
        for idx in segment_indices(pc.positions, max_points)
    ]
