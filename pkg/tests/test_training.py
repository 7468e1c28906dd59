"""Loss, gradient, and optimizer tests.

The gradient check compares hand-written backprop against central finite
differences; the loss values are checked against exhaustive references.
"""

import numpy as np
import pytest

from foldcodec import (
    LossReport,
    ModelDims,
    TrainConfig,
    TrainingError,
    chamfer,
    init_model,
    loss_and_grad,
    make_grid,
    repulsion,
    train,
)
from foldcodec.training import _loss_terms


def chamfer_reference(x, recon):
    """O(n*m) pairwise version for cross-checking."""
    d2 = ((x[:, None, :] - recon[None, :, :]) ** 2).sum(axis=2)
    return float(d2.min(axis=1).sum() + d2.min(axis=0).sum())


def repulsion_reference(recon):
    n = recon.shape[0]
    s = np.empty(n)
    for i in range(n):
        d2 = ((recon - recon[i]) ** 2).sum(axis=1)
        d2[i] = np.inf
        s[i] = d2.min()
    return float(np.mean((s - s.mean()) ** 2))


class TestChamfer:
    def test_hand_example(self):
        # x = {0}, recon = {e1}: forward 1 + backward 1
        x = np.array([[0.0, 0.0, 0.0]])
        recon = np.array([[1.0, 0.0, 0.0]])
        assert chamfer(x, recon) == 2.0

    def test_asymmetric_sizes(self):
        # x = {0, 2e1}, recon = {e1}: fwd 1+1, bwd 1
        x = np.array([[0.0, 0.0, 0.0], [2.0, 0.0, 0.0]])
        recon = np.array([[1.0, 0.0, 0.0]])
        assert chamfer(x, recon) == 3.0

    def test_identical_sets_zero(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(20, 3))
        assert chamfer(x, x.copy()) == 0.0

    def test_matches_pairwise_reference(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(35, 3))
        recon = rng.normal(size=(42, 3))
        assert chamfer(x, recon) == pytest.approx(
            chamfer_reference(x, recon), rel=1e-12
        )

    def test_symmetric(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(15, 3))
        r = rng.normal(size=(18, 3))
        assert chamfer(x, r) == chamfer(r, x)

    def test_rejects_empty(self):
        with pytest.raises(ValueError, match="nonempty"):
            chamfer(np.empty((0, 3)), np.zeros((1, 3)))


class TestRepulsion:
    def test_hand_example(self):
        # points 0, 1, 3 on a line: nearest-other d2 = 1, 1, 4
        # mean 2, variance (1+1+4)/3 = 2
        recon = np.array([[0.0, 0, 0], [1.0, 0, 0], [3.0, 0, 0]])
        assert repulsion(recon) == 2.0

    def test_uniform_spacing_zero(self):
        recon = np.stack([np.arange(6.0), np.zeros(6), np.zeros(6)], axis=1)
        assert repulsion(recon) == 0.0

    def test_duplicates_use_nearest_other(self):
        # two coincident points: both see d2=0 to the other, variance 0
        recon = np.zeros((2, 3))
        assert repulsion(recon) == 0.0

    def test_matches_reference(self):
        rng = np.random.default_rng(4)
        recon = rng.normal(size=(30, 3))
        assert repulsion(recon) == pytest.approx(
            repulsion_reference(recon), rel=1e-12
        )

    def test_reference_with_duplicates(self):
        rng = np.random.default_rng(5)
        recon = rng.integers(0, 3, size=(25, 3)).astype(np.float64)
        assert repulsion(recon) == pytest.approx(
            repulsion_reference(recon), rel=1e-12
        )

    def test_needs_two_points(self):
        with pytest.raises(ValueError, match="2 points"):
            repulsion(np.zeros((1, 3)))

    def test_single_cell_loss_drops_repulsion(self):
        x = np.array([[0.2, -0.1, 0.4]])
        d_ch, d_rep, *_ = _loss_terms(x, np.array([[0.5, 0.0, 0.0]]))
        assert d_rep == 0.0
        assert d_ch > 0.0


SMALL_DIMS = ModelDims(encoder_widths=(10, 10), fold_widths=(6, 3))


class TestGradient:
    def _fd_check(self, n_points, seed, directions=12, eps=1e-6):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=(n_points, 3)) * 0.5
        grid = make_grid(n_points)
        model = init_model(seed + 1, SMALL_DIMS)
        report, grads = loss_and_grad(model, x, grid)
        params = model.parameters()
        flat_g = np.concatenate([g.ravel() for g in grads])

        for _ in range(directions):
            direction = rng.normal(size=flat_g.shape)
            direction /= np.linalg.norm(direction)
            analytic = float(flat_g @ direction)

            offset = 0
            originals = [p.copy() for p in params]

            def poke(sign):
                off = 0
                for p, orig in zip(params, originals):
                    d = direction[off:off + p.size].reshape(p.shape)
                    p[:] = orig + sign * eps * d
                    off += p.size

            poke(+1.0)
            f_plus = loss_and_grad(model, x, grid)[0].total
            poke(-1.0)
            f_minus = loss_and_grad(model, x, grid)[0].total
            for p, orig in zip(params, originals):
                p[:] = orig

            numeric = (f_plus - f_minus) / (2 * eps)
            rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-12)
            assert rel < 1e-4, f"directional derivative off: {analytic} vs {numeric}"

    def test_gradient_matches_finite_differences(self):
        self._fd_check(n_points=6, seed=10)

    def test_gradient_single_point_cloud(self):
        # exercises the single-cell path (repulsion absent)
        self._fd_check(n_points=1, seed=11, directions=6)

    def test_loss_report_fields(self):
        rng = np.random.default_rng(12)
        x = rng.normal(size=(8, 3))
        model = init_model(2, SMALL_DIMS)
        report, grads = loss_and_grad(model, x, make_grid(8))
        assert isinstance(report, LossReport)
        assert report.total == pytest.approx(report.chamfer + report.repulsion)
        assert report.chamfer >= 0.0
        assert report.repulsion >= 0.0
        assert len(grads) == len(model.parameters())
        for g, p in zip(grads, model.parameters()):
            assert g.shape == p.shape


class TestTrain:
    def test_deterministic(self):
        rng = np.random.default_rng(13)
        x = rng.normal(size=(12, 3))
        cfg = TrainConfig(iterations=15, seed=3)
        m1, g1, r1 = train(x, cfg, SMALL_DIMS)
        m2, g2, r2 = train(x, cfg, SMALL_DIMS)
        np.testing.assert_array_equal(r1, r2)
        np.testing.assert_array_equal(m1.codeword, m2.codeword)
        for p1, p2 in zip(m1.parameters(), m2.parameters()):
            np.testing.assert_array_equal(p1, p2)

    def test_loss_decreases(self):
        rng = np.random.default_rng(14)
        x = rng.uniform(-1, 1, size=(16, 3))
        x[:, 2] *= 0.05  # near-planar target suits the flat grid
        model0, grid, recon0 = train(x, TrainConfig(iterations=0), SMALL_DIMS)
        _, _, recon = train(x, TrainConfig(iterations=120), SMALL_DIMS)
        before = chamfer(x, recon0) + repulsion(recon0)
        after = chamfer(x, recon) + repulsion(recon)
        assert after < before * 0.5

    def test_zero_iterations_returns_initial_model(self):
        rng = np.random.default_rng(15)
        x = rng.normal(size=(9, 3))
        model, grid, recon = train(x, TrainConfig(iterations=0), SMALL_DIMS)
        fresh = init_model(0, SMALL_DIMS)
        for p, q in zip(model.parameters(), fresh.parameters()):
            np.testing.assert_array_equal(p, q)
        assert model.codeword is not None
        assert recon.shape == (grid.n, 3)

    def test_grid_sized_to_cloud(self):
        rng = np.random.default_rng(16)
        x = rng.normal(size=(10, 3))
        _, grid, recon = train(x, TrainConfig(iterations=1), SMALL_DIMS)
        assert (grid.w, grid.h) == (4, 4)
        assert recon.shape == (16, 3)

    def test_codeword_stored_on_model(self):
        rng = np.random.default_rng(17)
        x = rng.normal(size=(5, 3))
        model, _, _ = train(x, TrainConfig(iterations=2), SMALL_DIMS)
        assert model.codeword.shape == (SMALL_DIMS.latent,)

    def test_config_validation(self):
        with pytest.raises(ValueError, match="iterations"):
            TrainConfig(iterations=-1)
        with pytest.raises(ValueError, match="learning rate"):
            TrainConfig(learning_rate=0.0)

    def test_error_carries_iteration(self):
        # non-finite input blows up the encoder inside the first step and
        # gets wrapped with the iteration number
        x = np.array([[np.inf, 0.0, 0.0]])
        with np.errstate(invalid="ignore"):
            with pytest.raises(TrainingError, match="iteration 1") as exc_info:
                train(x, TrainConfig(iterations=1), SMALL_DIMS)
        assert exc_info.value.iteration == 1
