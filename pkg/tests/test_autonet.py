import math

import numpy as np
import pytest

from rada import autonet
from rada.autonet import NetworkParams
from rada.errors import DimensionError, LabelError


def scalar_reference_forward(params, x, activation="relu"):
    """Per-sample, per-neuron pure-Python evaluator, independent of the array path."""
    outputs = []
    for sample in x:
        a = list(sample)
        for l, w in enumerate(params.layers):
            ab = a + [1.0]
            z = []
            for j in range(w.shape[1]):
                acc = 0.0
                for i, v in enumerate(ab):
                    acc += v * w[i, j]
                z.append(acc)
            if l == len(params.layers) - 1 or activation == "identity":
                a = z
            else:
                a = [max(v, 0.0) for v in z]
        outputs.append(a)
    return np.array(outputs)


def make_net(widths, seed=0):
    return autonet.init_params(widths, np.random.default_rng(seed))


class TestForward:
    def test_identity_layer_passthrough(self):
        w = np.vstack([np.eye(3), np.zeros((1, 3))])
        params = NetworkParams([w])
        x = np.random.default_rng(0).standard_normal((4, 3))
        assert np.array_equal(autonet.forward(params, x).output, x)

    def test_zero_weights_zero_output(self):
        params = NetworkParams([np.zeros((4, 5)), np.zeros((6, 2))])
        x = np.random.default_rng(1).standard_normal((3, 3))
        assert np.array_equal(autonet.forward(params, x).output, np.zeros((3, 2)))

    def test_matches_scalar_reference(self):
        params = make_net([3, 5, 2], seed=2)
        x = np.random.default_rng(3).standard_normal((4, 3))
        got = autonet.forward(params, x).output
        ref = scalar_reference_forward(params, x)
        assert np.max(np.abs(got - ref)) <= 1e-12

    def test_dimension_mismatch(self):
        params = make_net([3, 2], seed=0)
        with pytest.raises(DimensionError):
            autonet.forward(params, np.ones((2, 4)))

    def test_trace_replay_is_bit_exact(self):
        params = make_net([4, 6, 3], seed=4)
        x = np.random.default_rng(5).standard_normal((5, 4))
        t1 = autonet.forward(params, x)
        t2 = autonet.forward(params, x)
        assert np.array_equal(t1.output, t2.output)


class TestSoftmaxCE:
    def test_uniform_logits(self):
        loss, _ = autonet.softmax_ce_loss(np.array([[0.0, 0.0]]), np.array([0]))
        assert abs(loss - math.log(2.0)) <= 1e-12

    def test_extreme_logits_stable(self):
        loss, grad = autonet.softmax_ce_loss(
            np.array([[1000.0, -1000.0]]), np.array([0])
        )
        assert loss == pytest.approx(0.0, abs=1e-12)
        assert np.all(np.isfinite(grad))

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(6)
        logits = rng.standard_normal((5, 4))
        labels = rng.integers(0, 4, 5)
        _, grad = autonet.softmax_ce_loss(logits, labels)
        h = 1e-5
        fd = np.zeros_like(logits)
        for i in range(5):
            for j in range(4):
                up, down = logits.copy(), logits.copy()
                up[i, j] += h
                down[i, j] -= h
                fd[i, j] = (
                    autonet.softmax_ce_loss(up, labels)[0]
                    - autonet.softmax_ce_loss(down, labels)[0]
                ) / (2 * h)
        assert np.max(np.abs(grad - fd)) / max(1.0, np.max(np.abs(fd))) <= 1e-6

    def test_label_out_of_range(self):
        with pytest.raises(LabelError):
            autonet.softmax_ce_loss(np.zeros((1, 3)), np.array([3]))


class TestSigmoidBCE:
    def test_symmetric_case(self):
        loss, _ = autonet.sigmoid_bce_loss(0.0, 1)
        assert abs(loss - math.log(2.0)) <= 1e-12

    def test_extreme_logit_stable(self):
        loss, _ = autonet.sigmoid_bce_loss(-1000.0, 0)
        assert loss == pytest.approx(0.0, abs=1e-12)

    def test_derivative_matches_finite_differences(self):
        rng = np.random.default_rng(7)
        h = 1e-6
        for _ in range(10):
            z = float(rng.uniform(-4, 4))
            y = int(rng.integers(0, 2))
            _, dz = autonet.sigmoid_bce_loss(z, y)
            fd = (
                autonet.sigmoid_bce_loss(z + h, y)[0]
                - autonet.sigmoid_bce_loss(z - h, y)[0]
            ) / (2 * h)
            assert abs(dz - fd) <= 1e-8


class TestGRL:
    def test_sign_flip(self):
        g = np.array([[1.0, -2.0]])
        assert np.array_equal(autonet.grl_backward(g, 1.0), -g)

    def test_zero_lambda(self):
        g = np.array([[3.0, 4.0]])
        assert np.array_equal(autonet.grl_backward(g, 0.0), np.zeros((1, 2)))

    def test_hand_case(self):
        got = autonet.grl_backward(np.array([[2.0, -4.0]]), 0.5)
        assert np.array_equal(got, np.array([[-1.0, 2.0]]))

    def test_rejects_negative_lambda(self):
        with pytest.raises(ValueError):
            autonet.grl_backward(np.ones((1, 1)), -0.1)


class TestBackward:
    def test_zero_upstream(self):
        params = make_net([3, 4, 2], seed=8)
        x = np.random.default_rng(9).standard_normal((5, 3))
        trace = autonet.forward(params, x)
        grads, dx = autonet.backward(trace, np.zeros_like(trace.output))
        assert all(np.array_equal(g, np.zeros_like(w)) for g, w in zip(grads, params.layers))
        assert np.array_equal(dx, np.zeros_like(x))

    def test_single_linear_layer(self):
        params = make_net([3, 2], seed=10)
        x = np.random.default_rng(11).standard_normal((4, 3))
        trace = autonet.forward(params, x)
        u = np.random.default_rng(12).standard_normal((4, 2))
        grads, _ = autonet.backward(trace, u)
        expected = np.hstack([x, np.ones((4, 1))]).T @ u
        assert np.max(np.abs(grads[0] - expected)) <= 1e-12

    def test_matches_finite_differences(self):
        params = make_net([3, 6, 2], seed=13)
        x = np.random.default_rng(14).standard_normal((4, 3))
        labels = np.random.default_rng(15).integers(0, 2, 4)

        def loss_fn(p):
            out = autonet.forward(p, x).output
            return autonet.softmax_ce_loss(out, labels)[0]

        trace = autonet.forward(params, x)
        _, dlogits = autonet.softmax_ce_loss(trace.output, labels)
        analytic, _ = autonet.backward(trace, dlogits)
        fd = autonet.finite_diff_grad(loss_fn, params, 1e-5)
        assert autonet.grad_relative_error(analytic, fd) <= 1e-5

    def test_shape_mismatch(self):
        params = make_net([3, 2], seed=16)
        trace = autonet.forward(params, np.ones((2, 3)))
        with pytest.raises(DimensionError):
            autonet.backward(trace, np.ones((2, 3)))


class TestFiniteDiff:
    def test_constant_loss(self):
        params = make_net([2, 2], seed=17)
        grads = autonet.finite_diff_grad(lambda p: 1.0, params, 1e-5)
        assert all(np.array_equal(g, np.zeros_like(g)) for g in grads)

    def test_quadratic_loss(self):
        params = make_net([2, 3], seed=18)

        def loss_fn(p):
            return sum(float(np.sum(w**2)) for w in p.layers)

        grads = autonet.finite_diff_grad(loss_fn, params, 1e-5)
        for g, w in zip(grads, params.layers):
            assert np.max(np.abs(g - 2.0 * w)) <= 1e-8


def test_gradient_agreement_over_seeds():
    # Cross-check contract: analytic vs finite differences on 10 random nets.
    for seed in range(10):
        rng = np.random.default_rng(seed)
        params = autonet.init_params([4, 5, 3], rng)
        x = rng.standard_normal((4, 4))
        labels = rng.integers(0, 3, 4)

        trace = autonet.forward(params, x)
        _, dlogits = autonet.softmax_ce_loss(trace.output, labels)
        analytic, _ = autonet.backward(trace, dlogits)

        def loss_fn(p):
            return autonet.softmax_ce_loss(autonet.forward(p, x).output, labels)[0]

        fd = autonet.finite_diff_grad(loss_fn, params, 1e-5)
        assert autonet.grad_relative_error(analytic, fd) <= 1e-4


def test_init_params_shapes_and_bias():
    params = autonet.init_params([5, 7, 3], np.random.default_rng(19))
    assert [w.shape for w in params.layers] == [(6, 7), (8, 3)]
    for w in params.layers:
        assert np.array_equal(w[-1, :], np.zeros(w.shape[1]))
