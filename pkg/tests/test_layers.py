"""Layer forward semantics, shape algebra, and finite-difference gradients."""

import numpy as np
import pytest

from fedforage import nn
from fedforage.nn import layers as L
from fedforage.nn.gradcheck import layer_gradient_check


def make_params(layer, in_shape, seed=0, dtype=np.float64):
    rng = np.random.default_rng(seed)
    return L.init_blocks(layer, in_shape, rng, np.dtype(dtype))


def kink_free(rng, shape, margin=0.25):
    """Random values bounded away from 0 so activation kinks stay untouched."""
    signs = np.where(rng.random(shape) < 0.5, -1.0, 1.0)
    return signs * (margin + rng.random(shape))


class TestForwardExamples:
    def test_leaky_relu_negative_slope(self):
        layer = L.Activation("leaky_relu", alpha=0.1)
        y, _ = L.layer_forward(layer, np.array([[-1.0]]), {})
        assert y[0, 0] == pytest.approx(-0.1)

    def test_dropout_infer_is_identity(self):
        layer = L.Dropout(0.25)
        x = np.random.default_rng(3).random((4, 3, 8, 8))
        y, _ = L.layer_forward(layer, x, {}, mode="infer")
        np.testing.assert_array_equal(y, x)

    def test_maxpool_blocks(self):
        x = np.arange(1.0, 17.0).reshape(1, 1, 4, 4)
        y, _ = L.layer_forward(L.MaxPool2D(), x, {})
        np.testing.assert_array_equal(y[0, 0], [[6.0, 8.0], [14.0, 16.0]])

    def test_dropout_train_inverted_scaling(self):
        layer = L.Dropout(0.5)
        x = np.ones((64, 100))
        y, (_, mask, keep) = L.layer_forward(
            layer, x, {}, mode="train", rng=np.random.default_rng(0)
        )
        assert keep == 0.5
        np.testing.assert_array_equal(y[mask], 2.0)
        np.testing.assert_array_equal(y[~mask], 0.0)

    def test_dropout_train_needs_rng(self):
        with pytest.raises(ValueError, match="rng"):
            L.layer_forward(L.Dropout(0.25), np.ones((2, 2)), {}, mode="train")

    def test_batchnorm_train_normalizes_and_updates_stats(self):
        layer = L.BatchNorm(momentum=0.99, epsilon=0.01)
        x = np.random.default_rng(0).normal(3.0, 2.0, size=(16, 4))
        params = make_params(layer, (4,))
        y, _ = L.layer_forward(layer, x, params, mode="train")
        assert np.abs(y.mean(axis=0)).max() < 1e-10
        # running stats moved 1% of the way toward the batch statistics
        np.testing.assert_allclose(params["running_mean"], 0.01 * x.mean(axis=0))
        np.testing.assert_allclose(
            params["running_var"], 0.99 + 0.01 * x.var(axis=0)
        )

    def test_batchnorm_infer_uses_running_stats(self):
        layer = L.BatchNorm()
        params = make_params(layer, (4,))
        params["running_mean"][...] = 1.0
        params["running_var"][...] = 4.0
        x = np.full((2, 4), 3.0)
        y, _ = L.layer_forward(layer, x, params, mode="infer")
        np.testing.assert_allclose(y, (3.0 - 1.0) / np.sqrt(4.0 + 0.01))

    def test_global_avg_pool(self):
        x = np.arange(8.0).reshape(1, 2, 2, 2)
        y, _ = L.layer_forward(L.GlobalAvgPool(), x, {})
        np.testing.assert_allclose(y, [[1.5, 5.5]])

    def test_convnext_residual_identity_at_zero_weights(self):
        layer = L.ConvNeXtBlock(channels=3, kernel=3)
        params = {k: np.zeros(s) for k, s in L.param_blocks(layer, (3, 4, 4))}
        x = np.random.default_rng(1).random((2, 3, 4, 4))
        y, _ = L.layer_forward(layer, x, params)
        np.testing.assert_array_equal(y, x)

    def test_conv_channel_mismatch_raises(self):
        layer = L.Conv2D(4, 3)
        params = make_params(layer, (3, 8, 8))
        with pytest.raises(L.ShapeError, match="channels"):
            L.layer_forward(layer, np.zeros((1, 5, 8, 8)), params)

    def test_cache_layer_mismatch_raises(self):
        x = np.ones((2, 3, 4, 4))
        _, cache = L.layer_forward(L.MaxPool2D(), x, {})
        with pytest.raises(nn.CacheError):
            L.layer_backward(L.Flatten(), cache, x)


class TestBackwardExamples:
    def test_leaky_relu_negative_branch_slope(self):
        layer = L.Activation("leaky_relu", alpha=0.1)
        _, cache = L.layer_forward(layer, np.array([[-2.0]]), {})
        gx, _ = L.layer_backward(layer, cache, np.array([[1.0]]))
        assert gx[0, 0] == pytest.approx(0.1)

    def test_dense_zero_upstream_gives_zero_grads(self):
        layer = L.Dense(5)
        params = make_params(layer, (7,))
        x = np.random.default_rng(0).random((3, 7))
        _, cache = L.layer_forward(layer, x, params)
        gx, grads = L.layer_backward(layer, cache, np.zeros((3, 5)))
        assert not gx.any()
        assert not grads["weight"].any() and not grads["bias"].any()

    def test_dropout_backward_reuses_forward_mask(self):
        layer = L.Dropout(0.4)
        x = np.ones((8, 8))
        y, cache = L.layer_forward(layer, x, {}, mode="train", rng=np.random.default_rng(5))
        gx, _ = L.layer_backward(layer, cache, np.ones_like(x))
        np.testing.assert_array_equal((gx != 0), (y != 0))


SHAPE_CASES = [
    (L.Conv2D(8, 3), (3, 10, 10), (8, 10, 10)),
    (L.Conv2D(4, 5), (2, 9, 7), (4, 9, 7)),
    (L.MaxPool2D(), (3, 8, 6), (3, 4, 3)),
    (L.Activation("tanh"), (5, 4, 4), (5, 4, 4)),
    (L.Dropout(0.3), (7,), (7,)),
    (L.BatchNorm(), (6, 4, 4), (6, 4, 4)),
    (L.Flatten(), (3, 4, 5), (60,)),
    (L.GlobalAvgPool(), (9, 5, 5), (9,)),
    (L.Dense(11), (6,), (11,)),
    (L.ConvNeXtBlock(4, 3), (4, 6, 6), (4, 6, 6)),
    (L.SoftmaxHead(4), (16,), (4,)),
]


class TestShapeAlgebra:
    @pytest.mark.parametrize("layer,in_shape,expected", SHAPE_CASES)
    def test_documented_formula(self, layer, in_shape, expected):
        assert L.out_shape(layer, in_shape) == expected

    @pytest.mark.parametrize("seed", range(10))
    def test_forward_shape_matches_algebra(self, seed):
        rng = np.random.default_rng(seed)
        layer, in_shape, expected = SHAPE_CASES[seed % len(SHAPE_CASES)]
        b = int(rng.integers(1, 5))
        x = rng.random((b, *in_shape))
        params = make_params(layer, in_shape, seed=seed)
        y, _ = L.layer_forward(layer, x, params, mode="infer")
        assert y.shape == (b, *expected)

    def test_odd_spatial_pool_rejected(self):
        with pytest.raises(L.ShapeError, match="even"):
            L.out_shape(L.MaxPool2D(), (3, 7, 8))

    def test_hyperparameter_validation(self):
        with pytest.raises(ValueError):
            L.Conv2D(8, kernel=4)  # even kernel
        with pytest.raises(ValueError):
            L.Activation("leaky_relu", alpha=1.5)
        with pytest.raises(ValueError):
            L.Dropout(1.0)
        with pytest.raises(ValueError):
            L.BatchNorm(momentum=0.0)
        with pytest.raises(ValueError):
            L.BatchNorm(epsilon=0.0)


def gradcheck_case(layer, in_shape, seed, batch=2, mode="train"):
    rng = np.random.default_rng(seed)
    if isinstance(layer, (L.Activation, L.MaxPool2D)):
        x = kink_free(rng, (batch, *in_shape))
    else:
        x = rng.standard_normal((batch, *in_shape))
    params = make_params(layer, in_shape, seed=seed)
    return layer_gradient_check(layer, x, params, mode=mode, rng_seed=seed)


class TestGradients:
    """Analytic vs central-difference gradients at 64-bit, per layer kind."""

    @pytest.mark.parametrize("seed", range(5))
    def test_conv2d(self, seed):
        assert gradcheck_case(L.Conv2D(3, 3), (2, 5, 5), seed) < 1e-4

    def test_conv2d_wide_kernel(self):
        assert gradcheck_case(L.Conv2D(2, 5), (2, 6, 6), 7) < 1e-4

    @pytest.mark.parametrize("fn", L.ACTIVATIONS)
    def test_activations(self, fn):
        assert gradcheck_case(L.Activation(fn, alpha=0.1), (3, 4, 4), 11) < 1e-4

    @pytest.mark.parametrize("seed", range(3))
    def test_maxpool(self, seed):
        assert gradcheck_case(L.MaxPool2D(), (2, 4, 4), seed) < 1e-4

    @pytest.mark.parametrize("seed", range(3))
    def test_dropout_frozen_mask(self, seed):
        assert gradcheck_case(L.Dropout(0.4), (3, 17), seed) < 1e-6

    @pytest.mark.parametrize("seed", range(3))
    def test_batchnorm_train(self, seed):
        assert gradcheck_case(L.BatchNorm(), (3, 4, 4), seed, batch=4) < 1e-4

    def test_batchnorm_dense_input(self):
        assert gradcheck_case(L.BatchNorm(), (6,), 2, batch=5) < 1e-4

    def test_flatten(self):
        assert gradcheck_case(L.Flatten(), (2, 3, 3), 0) < 1e-8

    def test_global_avg_pool(self):
        assert gradcheck_case(L.GlobalAvgPool(), (3, 4, 4), 0) < 1e-8

    @pytest.mark.parametrize("seed", range(3))
    def test_dense(self, seed):
        assert gradcheck_case(L.Dense(4), (9,), seed) < 1e-4

    def test_softmax_head(self):
        assert gradcheck_case(L.SoftmaxHead(4), (6,), 1) < 1e-4

    @pytest.mark.parametrize("seed", range(3))
    def test_convnext_block(self, seed):
        assert gradcheck_case(L.ConvNeXtBlock(3, 3), (3, 4, 4), seed) < 1e-4
