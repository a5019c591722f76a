import numpy as np
import pytest

from rdncnn import ops


class TestRelu:
    def test_basic_values(self):
        x = np.array([-1.0, 0.0, 2.0], dtype=np.float32)
        np.testing.assert_array_equal(ops.relu(x), [0.0, 0.0, 2.0])

    def test_all_negative(self):
        x = -np.abs(np.random.default_rng(0).standard_normal((3, 4))).astype(np.float32) - 0.1
        assert not ops.relu(x).any()
        assert not ops.relu_backward(np.ones_like(x), x).any()

    def test_derivative_at_zero_is_zero(self):
        x = np.zeros(3, dtype=np.float32)
        assert not ops.relu_backward(np.ones_like(x), x).any()

    def test_backward_passes_where_positive(self):
        x = np.array([-2.0, 3.0, 0.5], dtype=np.float32)
        go = np.array([10.0, 20.0, 30.0], dtype=np.float32)
        np.testing.assert_array_equal(ops.relu_backward(go, x), [0.0, 20.0, 30.0])


class TestResidualMseLoss:
    def test_perfect_prediction(self):
        gen = np.random.default_rng(0)
        clean = gen.uniform(0, 1, (2, 1, 4, 4)).astype(np.float32)
        noisy = clean + 0.1 * gen.standard_normal(clean.shape).astype(np.float32)
        loss, grad = ops.residual_mse_loss(noisy - clean, noisy, clean)
        assert loss == 0.0
        assert not grad.any()

    def test_constant_offset_closed_form(self):
        # B=1, predicted = target + c over n pixels -> loss = n c^2 / 2
        c = 0.5
        shape = (1, 1, 3, 4)
        n = 12
        clean = np.zeros(shape, dtype=np.float32)
        noisy = np.ones(shape, dtype=np.float32)
        pred = (noisy - clean) + np.float32(c)
        loss, grad = ops.residual_mse_loss(pred, noisy, clean)
        assert loss == pytest.approx(n * c * c / 2.0, rel=1e-6)
        np.testing.assert_allclose(grad, c, rtol=1e-6)

    def test_shape_mismatch(self):
        a = np.zeros((1, 1, 2, 2), dtype=np.float32)
        b = np.zeros((1, 1, 2, 3), dtype=np.float32)
        with pytest.raises(ValueError, match="shape"):
            ops.residual_mse_loss(a, b, a)

    def test_batch_normalization_of_loss(self):
        # doubling the batch with identical items leaves the loss unchanged
        gen = np.random.default_rng(1)
        pred = gen.standard_normal((1, 1, 4, 4)).astype(np.float32)
        noisy = gen.standard_normal(pred.shape).astype(np.float32)
        clean = gen.standard_normal(pred.shape).astype(np.float32)
        loss1, _ = ops.residual_mse_loss(pred, noisy, clean)
        loss2, _ = ops.residual_mse_loss(np.repeat(pred, 2, 0), np.repeat(noisy, 2, 0),
                                         np.repeat(clean, 2, 0))
        assert loss2 == pytest.approx(loss1, rel=1e-6)
