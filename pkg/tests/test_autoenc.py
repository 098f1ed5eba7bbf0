import numpy as np
import pytest

from uwhfl.autoenc import (DEFAULT_LAYER_SIZES, LocalDataset, ModelParams,
                           SgdConfig, calibrate_threshold, flag, forward,
                           gradient, init_params, local_sgd, loss,
                           param_count, scores)
from uwhfl.errors import DomainError


def small_model(seed=0, sizes=(6, 4, 2, 4, 6)):
    return init_params(sizes, np.random.default_rng(seed))


class TestParams:
    def test_default_param_count(self):
        # 32*16+16 + 16*8+8 + 8*16+16 + 16*32+32 = 1352
        assert param_count(DEFAULT_LAYER_SIZES) == 1352

    def test_init_matches_count(self):
        model = init_params(DEFAULT_LAYER_SIZES, np.random.default_rng(0))
        assert model.d_params == 1352

    def test_biases_start_zero(self):
        model = small_model()
        # Last chunk of each layer is the bias vector.
        offset = 0
        for n_in, n_out in zip(model.layer_sizes[:-1], model.layer_sizes[1:]):
            offset += n_in * n_out
            np.testing.assert_array_equal(model.values[offset:offset + n_out], 0.0)
            offset += n_out

    def test_glorot_bounds(self):
        model = init_params((100, 50), np.random.default_rng(1))
        limit = np.sqrt(6.0 / 150.0)
        w = model.values[:5000]
        assert np.all(np.abs(w) <= limit)

    def test_init_deterministic(self):
        a = init_params(DEFAULT_LAYER_SIZES, np.random.default_rng(5))
        b = init_params(DEFAULT_LAYER_SIZES, np.random.default_rng(5))
        np.testing.assert_array_equal(a.values, b.values)


class TestForward:
    def test_single_and_batch_agree(self):
        model = small_model()
        x = np.random.default_rng(2).normal(size=6)
        np.testing.assert_allclose(forward(model, x), forward(model, x[None, :])[0])

    def test_loss_is_mean_squared_norm(self):
        model = small_model()
        x = np.random.default_rng(3).normal(size=(5, 6))
        out = forward(model, x)
        expected = np.mean(np.sum((out - x) ** 2, axis=1))
        assert loss(model, x) == pytest.approx(expected)

    def test_scores_match_loss(self):
        model = small_model()
        x = np.random.default_rng(4).normal(size=(7, 6))
        assert np.mean(scores(model, x)) == pytest.approx(loss(model, x))


class TestGradient:
    @pytest.mark.parametrize("pair_seed", range(20))
    def test_matches_finite_differences(self, pair_seed):
        rng = np.random.default_rng(pair_seed)
        model = init_params((5, 3, 2, 3, 5), rng)
        # Perturb away from the zero-bias init so ReLU kinks are unlikely
        # to sit exactly at a finite-difference evaluation point.
        model.values += 0.01 * rng.normal(size=model.d_params)
        batch = rng.normal(size=(4, 5))
        g = gradient(model, batch)
        h = 1e-5
        for idx in rng.choice(model.d_params, size=15, replace=False):
            theta = model.values.copy()
            theta[idx] += h
            up = loss(ModelParams(model.layer_sizes, theta), batch)
            theta[idx] -= 2 * h
            down = loss(ModelParams(model.layer_sizes, theta), batch)
            fd = (up - down) / (2 * h)
            scale = max(abs(fd), abs(g[idx]), 1e-8)
            assert abs(g[idx] - fd) / scale <= 1e-4

    def test_zero_at_perfect_reconstruction(self):
        # Identity-capable model: wide layers, weights set to pass-through.
        model = init_params((2, 2, 2), np.random.default_rng(0))
        model.values[:] = 0.0
        x = np.zeros((3, 2))
        np.testing.assert_allclose(gradient(model, x), 0.0)


class TestLocalSgd:
    def make_data(self, seed=0, n=64, dim=6):
        rng = np.random.default_rng(seed)
        base = rng.normal(size=(n, dim))
        return LocalDataset(train=base, val=base[:8], test=base[:8],
                            test_labels=np.zeros(8, dtype=bool), name="t")

    def test_loss_decreases(self):
        model = small_model()
        data = self.make_data()
        cfg = SgdConfig(epochs=5, lr=0.01, batch_size=16)
        trained, _ = local_sgd(model, data, cfg, np.random.default_rng(1))
        assert loss(trained, data.train) < loss(model, data.train)

    def test_start_point_unchanged(self):
        model = small_model()
        before = model.values.copy()
        local_sgd(model, self.make_data(), SgdConfig(), np.random.default_rng(1))
        np.testing.assert_array_equal(model.values, before)

    def test_flop_accounting(self):
        model = small_model()
        data = self.make_data(n=50)
        _, flops = local_sgd(model, data, SgdConfig(epochs=3), np.random.default_rng(1))
        assert flops == 6 * model.d_params * 3 * 50

    def test_prox_pulls_towards_anchor(self):
        model = small_model()
        data = self.make_data()
        plain, _ = local_sgd(model, data, SgdConfig(prox_mu=0.0), np.random.default_rng(9))
        prox, _ = local_sgd(model, data, SgdConfig(prox_mu=10.0), np.random.default_rng(9))
        assert (np.linalg.norm(prox.values - model.values)
                < np.linalg.norm(plain.values - model.values))

    def test_deterministic_given_rng(self):
        model = small_model()
        data = self.make_data()
        a, _ = local_sgd(model, data, SgdConfig(), np.random.default_rng(11))
        b, _ = local_sgd(model, data, SgdConfig(), np.random.default_rng(11))
        np.testing.assert_array_equal(a.values, b.values)

    def test_rejects_bad_config(self):
        with pytest.raises(DomainError):
            SgdConfig(epochs=0)
        with pytest.raises(DomainError):
            SgdConfig(lr=0.0)


class TestThreshold:
    def test_nearest_rank_oracle(self):
        errors = np.arange(1.0, 101.0)  # 1..100
        # ceil(0.99 * 100) = 99 -> the 99th smallest value.
        assert calibrate_threshold(errors, 99.0) == 99.0
        assert calibrate_threshold(errors, 100.0) == 100.0
        assert calibrate_threshold(errors, 50.0) == 50.0

    def test_small_sample(self):
        assert calibrate_threshold(np.array([3.0, 1.0, 2.0]), 99.0) == 3.0
        assert calibrate_threshold(np.array([5.0]), 1.0) == 5.0

    def test_rejects_empty_and_bad_percentile(self):
        with pytest.raises(DomainError):
            calibrate_threshold(np.array([]), 99.0)
        with pytest.raises(DomainError):
            calibrate_threshold(np.array([1.0]), 0.0)

    def test_flag_is_strictly_greater(self):
        flags = flag(np.array([0.9, 1.0, 1.1]), 1.0)
        np.testing.assert_array_equal(flags, [False, False, True])
