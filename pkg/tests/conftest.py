"""Shared synthetic fixtures: small clouds with smooth color fields."""

from __future__ import annotations

import numpy as np
import pytest

from foldcodec import PointCloud

# Verdict lines collected by the acceptance checks; printed after the run
# because pytest's capture would otherwise swallow them on passing tests.
ACCEPTANCE_SCORECARD: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_SCORECARD:
        return
    terminalreporter.section("acceptance scorecard")
    for line in ACCEPTANCE_SCORECARD:
        terminalreporter.write_line(line)


def _gradient_colors(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Smooth, spatially coherent RGB field over two surface coordinates."""
    r = 255.0 * u
    g = 255.0 * v
    b = 127.5 * (1.0 + np.sin(4.0 * np.pi * u) * np.cos(3.0 * np.pi * v))
    return np.clip(np.stack([r, g, b], axis=1), 0, 255).astype(np.uint8)


def make_plane(n: int, seed: int = 0, noise: float = 0.0) -> PointCloud:
    """Jittered samples of the unit square, optional z noise."""
    rng = np.random.Generator(np.random.PCG64(seed))
    u = rng.uniform(0.0, 1.0, n)
    v = rng.uniform(0.0, 1.0, n)
    z = noise * rng.standard_normal(n) if noise else np.zeros(n)
    positions = np.stack([u, v, z], axis=1)
    return PointCloud(positions, _gradient_colors(u, v))


def make_hemisphere(n: int, seed: int = 0) -> PointCloud:
    """Uniform samples on the upper unit hemisphere."""
    rng = np.random.Generator(np.random.PCG64(seed))
    d = rng.standard_normal((n, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    d[:, 2] = np.abs(d[:, 2])
    u = 0.5 * (1.0 + d[:, 0])
    v = 0.5 * (1.0 + d[:, 1])
    return PointCloud(d, _gradient_colors(u, v))


def make_hemisphere_spiral(n: int) -> PointCloud:
    """Golden-angle spiral covering of the upper unit hemisphere.

    Deterministic and close to evenly spaced, so nearest-neighbor
    distances are far more uniform than with random sampling.
    """
    k = np.arange(n, dtype=np.float64)
    z = (k + 0.5) / n
    r = np.sqrt(1.0 - z * z)
    theta = np.pi * (3.0 - np.sqrt(5.0)) * k
    positions = np.stack([r * np.cos(theta), r * np.sin(theta), z], axis=1)
    u = 0.5 * (1.0 + positions[:, 0])
    v = 0.5 * (1.0 + positions[:, 1])
    return PointCloud(positions, _gradient_colors(u, v))


def make_corner(n: int, seed: int = 0) -> PointCloud:
    """Two unit half-planes meeting at a right angle along the y axis."""
    rng = np.random.Generator(np.random.PCG64(seed))
    u = rng.uniform(0.0, 1.0, n)
    v = rng.uniform(0.0, 1.0, n)
    half = n // 2
    positions = np.empty((n, 3))
    positions[:half] = np.stack([u[:half], v[:half], np.zeros(half)], axis=1)
    positions[half:] = np.stack([np.zeros(n - half), v[half:], u[half:]], axis=1)
    return PointCloud(positions, _gradient_colors(u, v))


@pytest.fixture(scope="session")
def plane_cloud() -> PointCloud:
    return make_plane(400, seed=101, noise=0.05)


@pytest.fixture(scope="session")
def hemisphere_cloud() -> PointCloud:
    return make_hemisphere_spiral(400)


@pytest.fixture(scope="session")
def corner_cloud() -> PointCloud:
    return make_corner(400, seed=303)


@pytest.fixture(scope="session")
def stage_fixtures(plane_cloud, hemisphere_cloud, corner_cloud):
    return {
        "plane": plane_cloud,
        "hemisphere": hemisphere_cloud,
        "corner": corner_cloud,
    }
