import numpy as np
import pytest

from rdncnn import ops


def _random_input(seed, shape=(4, 2, 3, 3), scale=2.0):
    gen = np.random.default_rng(seed)
    return (scale * gen.standard_normal(shape)).astype(np.float32)


class TestBatchNormForward:
    def test_train_mode_normalizes(self):
        x = _random_input(0, shape=(8, 3, 5, 5))
        c = x.shape[1]
        stats = ops.RunningStats.fresh(c)
        out, cache = ops.batchnorm_forward(x, np.ones(c, np.float32),
                                           np.zeros(c, np.float32), stats, "train")
        assert cache is not None
        mean = out.mean(axis=(0, 2, 3))
        var = out.var(axis=(0, 2, 3))
        assert np.all(np.abs(mean) < 1e-5)
        assert np.all(np.abs(var - 1.0) < 1e-3)

    def test_constant_channel_maps_to_beta(self):
        x = np.full((2, 1, 4, 4), 3.7, dtype=np.float32)
        stats = ops.RunningStats.fresh(1)
        out, _ = ops.batchnorm_forward(x, np.ones(1, np.float32),
                                       np.full(1, 5.0, np.float32), stats, "train")
        np.testing.assert_allclose(out, 5.0, atol=1e-5)

    def test_single_element_train_rejected(self):
        x = np.zeros((1, 2, 1, 1), dtype=np.float32)
        stats = ops.RunningStats.fresh(2)
        with pytest.raises(ValueError, match=">= 2"):
            ops.batchnorm_forward(x, np.ones(2, np.float32),
                                  np.zeros(2, np.float32), stats, "train")

    def test_infer_uses_running_stats(self):
        c = 2
        x = _random_input(1, shape=(2, c, 3, 3))
        stats = ops.RunningStats(mean=np.array([1.0, -1.0], np.float32),
                                 var=np.array([4.0, 9.0], np.float32))
        gamma = np.ones(c, np.float32)
        beta = np.zeros(c, np.float32)
        out, cache = ops.batchnorm_forward(x, gamma, beta, stats, "infer")
        assert cache is None
        expected = (x - stats.mean[None, :, None, None]) / np.sqrt(
            stats.var[None, :, None, None] + np.float32(1e-3))
        np.testing.assert_allclose(out, expected, rtol=1e-6)

    def test_running_stats_momentum(self):
        x = _random_input(2, shape=(4, 1, 4, 4))
        stats = ops.RunningStats.fresh(1)
        batch_mean = x.mean(axis=(0, 2, 3))
        batch_var = x.var(axis=(0, 2, 3))
        ops.batchnorm_forward(x, np.ones(1, np.float32), np.zeros(1, np.float32),
                              stats, "train")
        np.testing.assert_allclose(stats.mean, 0.1 * batch_mean, rtol=1e-5)
        np.testing.assert_allclose(stats.var, 0.9 * 1.0 + 0.1 * batch_var, rtol=1e-5)


class TestBatchNormBackward:
    def test_zero_grad_out(self):
        x = _random_input(3)
        c = x.shape[1]
        stats = ops.RunningStats.fresh(c)
        _, cache = ops.batchnorm_forward(x, np.ones(c, np.float32),
                                         np.zeros(c, np.float32), stats, "train")
        gx, gg, gb = ops.batchnorm_backward(np.zeros_like(x), cache)
        assert not gx.any() and not gg.any() and not gb.any()

    def test_grad_gamma_is_sum_of_normalized(self):
        x = _random_input(4)
        c = x.shape[1]
        stats = ops.RunningStats.fresh(c)
        _, cache = ops.batchnorm_forward(x, np.ones(c, np.float32),
                                         np.zeros(c, np.float32), stats, "train")
        _, gg, _ = ops.batchnorm_backward(np.ones_like(x), cache)
        np.testing.assert_allclose(gg, cache.x_hat.sum(axis=(0, 2, 3)), rtol=1e-5)

    def test_missing_cache_rejected(self):
        with pytest.raises(RuntimeError, match="cache"):
            ops.batchnorm_backward(np.zeros((1, 1, 2, 2), dtype=np.float32), None)

    def test_mismatched_cache_rejected(self):
        x = _random_input(5)
        c = x.shape[1]
        stats = ops.RunningStats.fresh(c)
        _, cache = ops.batchnorm_forward(x, np.ones(c, np.float32),
                                         np.zeros(c, np.float32), stats, "train")
        with pytest.raises(RuntimeError, match="shape"):
            ops.batchnorm_backward(np.zeros((1, c, 2, 2), dtype=np.float32), cache)
