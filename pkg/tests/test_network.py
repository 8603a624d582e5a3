"""Network assembly: layout bookkeeping, determinism, whole-net gradients."""

import numpy as np
import pytest

from fedforage import nn
from fedforage.nn import layers as L


def toy_spec(classes=3, with_dropout=False, with_bn=False):
    stack = [
        L.Conv2D(4, 3),
        L.Activation("leaky_relu", 0.1),
        L.MaxPool2D(),
    ]
    if with_bn:
        stack.append(L.BatchNorm())
    if with_dropout:
        stack.append(L.Dropout(0.25))
    stack += [L.GlobalAvgPool(), L.Dense(6), L.Activation("relu"), L.SoftmaxHead(classes)]
    return nn.NetworkSpec(input_shape=(2, 8, 8), layers=tuple(stack), classes=classes)


def linear_spec():
    return nn.NetworkSpec(
        input_shape=(1, 2, 2),
        layers=(L.Flatten(), L.SoftmaxHead(3)),
        classes=3,
    )


class TestLayout:
    def test_segments_are_disjoint_and_cover_vector(self):
        net = nn.Network(toy_spec(with_bn=True), dtype=np.float64)
        seen = np.zeros(net.n_params, dtype=int)
        for seg in net.layout.segments:
            seen[seg.offset : seg.offset + seg.size] += 1
        assert (seen == 1).all()

    def test_views_write_through(self):
        net = nn.Network(toy_spec(), dtype=np.float64)
        vec = np.zeros(net.n_params)
        views = net.layout.views(vec, 0)
        views["bias"][...] = 7.0
        seg = [s for s in net.layout.segments if s.layer == 0 and s.name == "bias"][0]
        assert (vec[seg.offset : seg.offset + seg.size] == 7.0).all()

    def test_trainable_mask_excludes_running_stats(self):
        net = nn.Network(toy_spec(with_bn=True), dtype=np.float64)
        mask = net.layout.trainable_mask(net.spec)
        stats = sum(
            s.size for s in net.layout.segments if s.name in ("running_mean", "running_var")
        )
        assert (~mask).sum() == stats > 0

    def test_shape_closure_error_names_layer(self):
        bad = nn.NetworkSpec(
            input_shape=(3, 7, 7),  # odd spatial dims break the pool
            layers=(L.Conv2D(4, 3), L.MaxPool2D(), L.GlobalAvgPool(), L.SoftmaxHead(2)),
            classes=2,
        )
        with pytest.raises(L.ShapeError, match="layer 1 .MaxPool2D."):
            nn.Network(bad)


class TestForwardBackward:
    def test_infer_forward_is_pure_and_deterministic(self):
        net = nn.Network(toy_spec(with_dropout=True, with_bn=True), dtype=np.float64)
        params = net.init_params(0)
        x = np.random.default_rng(1).random((5, 2, 8, 8))
        y1, _ = net.forward(params.copy(), x, mode="infer")
        y2, _ = net.forward(params.copy(), x, mode="infer")
        np.testing.assert_array_equal(y1, y2)

    def test_outputs_finite_after_forward_and_backward(self):
        net = nn.Network(toy_spec(with_dropout=True, with_bn=True), dtype=np.float64)
        params = net.init_params(3)
        rng = np.random.default_rng(2)
        x = rng.random((6, 2, 8, 8))
        labels = nn.one_hot(rng.integers(0, 3, size=6), 3)
        loss, grads, logits = net.loss_and_grad(params, x, labels, rng=rng)
        assert np.isfinite(loss)
        assert np.isfinite(grads).all()
        assert np.isfinite(logits).all()

    def test_init_is_seed_deterministic(self):
        net = nn.Network(toy_spec(), dtype=np.float32)
        np.testing.assert_array_equal(net.init_params(9), net.init_params(9))
        assert not np.array_equal(net.init_params(9), net.init_params(10))

    def test_wrong_input_shape_raises(self):
        net = nn.Network(toy_spec())
        with pytest.raises(L.ShapeError, match="input shape"):
            net.forward(net.init_params(0), np.zeros((1, 3, 8, 8)))

    def test_predict_proba_rows_sum_to_one(self):
        net = nn.Network(toy_spec(), dtype=np.float64)
        params = net.init_params(0)
        x = np.random.default_rng(0).random((7, 2, 8, 8))
        proba = net.predict_proba(params, x)
        np.testing.assert_allclose(proba.sum(axis=1), 1.0, atol=1e-12)


class TestGradientCheck:
    def test_linear_network_is_exact_to_rounding(self):
        net = nn.Network(linear_spec(), dtype=np.float64)
        params = net.init_params(0)
        rng = np.random.default_rng(4)
        x = rng.uniform(0.5, 1.5, size=(4, 1, 2, 2))
        labels = nn.one_hot(rng.integers(0, 3, size=4), 3)
        report = nn.gradient_check(net, params, x, labels, objective="mean_logit")
        assert max(report.values()) < 1e-8

    def test_small_conv_net_under_1e4(self):
        net = nn.Network(toy_spec(with_bn=True), dtype=np.float64)
        params = net.init_params(1)
        rng = np.random.default_rng(5)
        x = rng.random((4, 2, 8, 8))
        labels = nn.one_hot(rng.integers(0, 3, size=4), 3)
        report = nn.gradient_check(net, params, x, labels)
        assert max(report.values()) < 1e-4

    def test_dropout_net_with_frozen_mask_under_1e6(self):
        spec = nn.NetworkSpec(
            input_shape=(1, 4, 4),
            layers=(L.Flatten(), L.Dense(8), L.Dropout(0.5), L.SoftmaxHead(2)),
            classes=2,
        )
        net = nn.Network(spec, dtype=np.float64)
        params = net.init_params(2)
        rng = np.random.default_rng(6)
        x = rng.random((6, 1, 4, 4))
        labels = nn.one_hot(rng.integers(0, 2, size=6), 2)
        report = nn.gradient_check(net, params, x, labels, rng_seed=17)
        assert max(report.values()) < 1e-6

    def test_requires_float64(self):
        net = nn.Network(linear_spec(), dtype=np.float32)
        with pytest.raises(ValueError, match="float64"):
            nn.gradient_check(net, net.init_params(0), np.zeros((1, 1, 2, 2)), np.array([[1.0, 0, 0]]))
