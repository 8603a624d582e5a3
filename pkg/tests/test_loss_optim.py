"""Cross-entropy loss, softmax invariants, and optimizer steps."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedforage.nn import AdamState, adam_step, one_hot, sgd_step, softmax, softmax_cross_entropy


class TestSoftmaxCrossEntropy:
    def test_uniform_logits_give_log_k(self):
        logits = np.zeros((3, 4))
        labels = one_hot(np.array([0, 1, 3]), 4)
        loss, _ = softmax_cross_entropy(logits, labels)
        assert loss == pytest.approx(np.log(4.0), abs=1e-12)

    def test_saturated_correct_logit_drives_loss_to_zero(self):
        logits = np.array([[1e6, 0.0, 0.0, 0.0]])
        labels = one_hot(np.array([0]), 4)
        loss, _ = softmax_cross_entropy(logits, labels)
        assert loss == pytest.approx(0.0, abs=1e-9)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(42)
        logits = rng.standard_normal((8, 4))
        labels = one_hot(rng.integers(0, 4, size=8), 4)
        _, grad = softmax_cross_entropy(logits, labels)
        eps = 1e-6
        num = np.zeros_like(logits)
        for i in range(logits.size):
            p = logits.copy().reshape(-1)
            p[i] += eps
            lp, _ = softmax_cross_entropy(p.reshape(logits.shape), labels)
            p[i] -= 2 * eps
            lm, _ = softmax_cross_entropy(p.reshape(logits.shape), labels)
            num.reshape(-1)[i] = (lp - lm) / (2 * eps)
        rel = np.abs(grad - num) / np.maximum(np.abs(grad) + np.abs(num), 1e-8)
        assert rel.max() < 1e-6

    def test_rejects_non_one_hot_rows(self):
        logits = np.zeros((2, 3))
        bad = np.array([[1.0, 0.0, 0.0], [0.5, 0.5, 0.0]])
        with pytest.raises(ValueError, match="one-hot"):
            softmax_cross_entropy(logits, bad)

    def test_loss_nonnegative_on_random_inputs(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            logits = rng.standard_normal((5, 6)) * rng.uniform(0.1, 10)
            labels = one_hot(rng.integers(0, 6, size=5), 6)
            loss, _ = softmax_cross_entropy(logits, labels)
            assert loss >= 0.0

    @given(st.lists(st.floats(-50, 50), min_size=2, max_size=8))
    @settings(max_examples=100, deadline=None)
    def test_softmax_rows_sum_to_one(self, row):
        p = softmax(np.array([row]))
        assert abs(p.sum() - 1.0) < 1e-12
        assert (p >= 0).all()


class TestAdam:
    def test_zero_gradient_leaves_params_and_bumps_t(self):
        params = np.array([1.0, -2.0, 3.0])
        state = AdamState.zeros(3, dtype=np.float64)
        out, state = adam_step(params.copy(), np.zeros(3), state, lr=0.1)
        np.testing.assert_array_equal(out, params)
        assert state.t == 1

    def test_first_step_magnitude_is_learning_rate(self):
        # single scalar, grad 1: bias correction makes the first step ~= lr
        params = np.zeros(1)
        state = AdamState.zeros(1, dtype=np.float64)
        out, _ = adam_step(params, np.ones(1), state, lr=0.001)
        assert out[0] == pytest.approx(-0.001, abs=1e-6)

    def test_two_seeded_runs_are_bitwise_identical(self):
        def run():
            rng = np.random.default_rng(123)
            params = rng.standard_normal(50)
            state = AdamState.zeros(50, dtype=np.float64)
            for _ in range(20):
                grads = rng.standard_normal(50)
                params, state = adam_step(params, grads, state, lr=0.01)
            return params

        a, b = run(), run()
        np.testing.assert_array_equal(a, b)

    def test_length_mismatch_raises(self):
        with pytest.raises(ValueError, match="mismatch"):
            adam_step(np.zeros(3), np.zeros(4), AdamState.zeros(3), lr=0.1)

    def test_t_increments_by_one_per_step(self):
        state = AdamState.zeros(2)
        p = np.zeros(2, dtype=np.float32)
        for expected in (1, 2, 3):
            _, state = adam_step(p, np.ones(2, dtype=np.float32), state, lr=0.01)
            assert state.t == expected


class TestSGD:
    def test_plain_descent_step(self):
        p = sgd_step(np.array([1.0, 2.0]), np.array([0.5, -0.5]), lr=0.1)
        np.testing.assert_allclose(p, [0.95, 2.05])

    def test_zero_lr_is_identity(self):
        start = np.array([3.0, -1.0])
        p = sgd_step(start.copy(), np.array([10.0, 10.0]), lr=0.0)
        np.testing.assert_array_equal(p, start)
