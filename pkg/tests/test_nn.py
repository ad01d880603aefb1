import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from leakage_lab.datasets import make_blobs
from leakage_lab.nn import (
    Mlp,
    TrainConfig,
    accuracy,
    backprop,
    forward,
    grad_sqnorm_per_sample,
    load_checkpoint,
    mse_loss,
    one_hot,
    save_checkpoint,
    train,
)


def random_model(rng, dims):
    return Mlp([rng.standard_normal((a, b)) for a, b in zip(dims[:-1], dims[1:])],
               [rng.standard_normal(b) * 0.5 for b in dims[1:]])


def random_dims(rng):
    depth = int(rng.integers(1, 4))
    return [int(v) for v in rng.integers(1, 6, size=depth)] + [int(rng.integers(2, 5))]


def naive_forward(model, x, upto=None):
    # recompute every layer from the input; no activations are kept around
    layers = len(model.weights) if upto is None else upto
    a = x
    for k in range(layers):
        z = a @ model.weights[k] + model.biases[k]
        if k == len(model.weights) - 1:
            z = z - z.max(axis=-1, keepdims=True)
            e = np.exp(z)
            a = e / e.sum(axis=-1, keepdims=True)
        else:
            a = np.maximum(z, 0.0)
    return a


def naive_backprop(model, x, y):
    """Single-sample gradients, recomputing forward activations at every layer."""
    L = len(model.weights)
    p = naive_forward(model, x)
    g = 2.0 * (p - y)
    delta = p * (g - np.sum(g * p, axis=-1, keepdims=True))
    grads = [None] * (2 * L)
    for k in range(L - 1, -1, -1):
        a_in = naive_forward(model, x, upto=k)
        grads[2 * k] = a_in.T @ delta / 1
        grads[2 * k + 1] = delta.sum(axis=0) / 1
        if k:
            delta = (delta @ model.weights[k].T) * (naive_forward(model, x, upto=k) > 0)
    return grads


def jacobian_backprop(model, x, y):
    """Chain rule with the explicit softmax Jacobian diag(p) - p p^T."""
    acts = [x]
    for k, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = acts[-1] @ w + b
        acts.append(np.exp(z - z.max()) / np.exp(z - z.max()).sum() if k == len(model.weights) - 1 else np.maximum(z, 0))
    p = acts[-1]
    delta = (np.diag(p) - np.outer(p, p)) @ (2 * (p - y))
    grads = []
    for k in range(len(model.weights) - 1, -1, -1):
        grads = [np.outer(acts[k], delta), delta] + grads
        if k:
            delta = (model.weights[k] @ delta) * (acts[k] > 0)
    return grads


def finite_difference(model, x, y, h=1e-5):
    out = []
    for p in model.params():
        g = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + h
            up = mse_loss(model, x, y)
            p[idx] = old - h
            down = mse_loss(model, x, y)
            p[idx] = old
            g[idx] = (up - down) / (2 * h)
        out.append(g)
    return out


class TestForward:
    def test_zero_weights_uniform(self):
        model = Mlp.zeros([4, 3, 5])
        np.testing.assert_allclose(forward(model, np.ones(4)), np.full(5, 0.2))

    def test_simplex(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            model = random_model(rng, random_dims(rng))
            p = forward(model, rng.standard_normal((10, model.layer_dims[0])))
            np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-9)
            assert np.all((p > 0) & (p < 1))

    def test_logistic_hand_value(self):
        model = Mlp([np.array([[0.0, 2.0], [0.0, -1.0]])], [np.array([0.0, 0.5])])
        x = np.array([1.0, 3.0])
        z1 = 2.0 - 3.0 + 0.5
        p = forward(model, x)
        assert p[1] == pytest.approx(1 / (1 + math.exp(-z1)), rel=1e-14)

    def test_bitwise_against_naive(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            model = random_model(rng, random_dims(rng))
            x = rng.standard_normal(model.layer_dims[0])
            assert np.array_equal(forward(model, x), naive_forward(model, x))

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            forward(Mlp.zeros([3, 2]), np.ones(4))

    def test_param_count(self):
        assert Mlp.init([110, 30, 30, 10, 10]).n_params == sum((a + 1) * b for a, b in zip([110, 30, 30, 10], [30, 30, 10, 10]))


class TestLoss:
    def test_perfect(self):
        model = Mlp([np.zeros((1, 2))], [np.array([50.0, -50.0])])
        assert mse_loss(model, [0.0], [1.0, 0.0]) == pytest.approx(0.0, abs=1e-40)

    def test_uniform_two_class(self):
        assert mse_loss(Mlp.zeros([3, 2]), np.ones(3), [0.0, 1.0]) == pytest.approx(0.5)

    @given(st.integers(0, 10_000))
    def test_below_two(self, seed):
        rng = np.random.default_rng(seed)
        model = random_model(rng, [3, 4, 3])
        # moderate logits: at |z| ~ 40 float64 rounds the softmax to an exact one-hot
        x = rng.standard_normal((20, 3))
        assert np.all(mse_loss(model, x, one_hot(rng.integers(3, size=20), 3)) < 2.0)


class TestBackprop:
    def test_zero_at_strict_minimum(self):
        # loss(w) = 2 (sigmoid(w) - 1/2)^2 is strictly minimized at w = 0
        model = Mlp([np.array([[0.0, 0.0]])], [np.zeros(2)])
        _, grads = backprop(model, np.array([1.0]), np.array([0.5, 0.5]))
        assert all(np.all(np.abs(g) <= 1e-10) for g in grads)

    def test_finite_differences(self):
        rng = np.random.default_rng(2)
        worst = 0.0
        for _ in range(20):
            model = random_model(rng, random_dims(rng))
            x = rng.standard_normal(model.layer_dims[0])
            y = one_hot(rng.integers(model.n_classes), model.n_classes)
            _, grads = backprop(model, x, y)
            fd = finite_difference(model, x, y)
            for g, f in zip(grads, fd):
                worst = max(worst, np.max(np.abs(g - f) / np.maximum(np.abs(f), 1e-6)))
        assert worst < 1e-5

    def test_bitwise_against_naive(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            model = random_model(rng, random_dims(rng))
            x = rng.standard_normal(model.layer_dims[0])
            y = one_hot(rng.integers(model.n_classes), model.n_classes)
            _, grads = backprop(model, x[None, :], y[None, :])
            for g, n in zip(grads, naive_backprop(model, x[None, :], y[None, :])):
                assert np.array_equal(g, n.reshape(g.shape))

    def test_explicit_jacobian(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            model = random_model(rng, random_dims(rng))
            x = rng.standard_normal(model.layer_dims[0])
            y = one_hot(rng.integers(model.n_classes), model.n_classes)
            _, grads = backprop(model, x, y)
            for g, j in zip(grads, jacobian_backprop(model, x, y)):
                np.testing.assert_allclose(g, j, rtol=1e-10, atol=1e-14)

    def test_linearity(self):
        rng = np.random.default_rng(5)
        model = random_model(rng, [3, 4, 3])
        x = rng.standard_normal((6, 3))
        y = one_hot(rng.integers(3, size=6), 3)
        loss, grads = backprop(model, x, y)
        per = [backprop(model, x[i], y[i]) for i in range(6)]
        assert loss == pytest.approx(np.mean([p[0] for p in per]))
        # the summed loss (6x the mean) has 6x the averaged gradient
        for k, g in enumerate(grads):
            np.testing.assert_allclose(6 * g, sum(p[1][k] for p in per), rtol=1e-12, atol=1e-15)

    def test_per_sample_norm(self):
        rng = np.random.default_rng(6)
        model = random_model(rng, [4, 5, 3, 3])
        x = rng.standard_normal((8, 4))
        y = one_hot(rng.integers(3, size=8), 3)
        expected = [sum(float(np.sum(g * g)) for g in backprop(model, x[i], y[i])[1]) for i in range(8)]
        np.testing.assert_allclose(grad_sqnorm_per_sample(model, x, y), expected, rtol=1e-12)


class TestTraining:
    def blobs(self):
        return make_blobs(200, dim=2, separation=6.0, seed=0)

    def test_separable_blobs(self):
        data = self.blobs()
        model, log = train(Mlp.init([2, 8, 2], seed=0), data.x, data.y, TrainConfig(lr=0.05, max_epochs=300))
        assert accuracy(model, data.x, data.y) >= 0.95
        assert log.epoch_losses[-1] <= 0.5 * log.initial_loss

    def test_single_epoch_with_infinite_delta(self):
        data = self.blobs()
        _, log = train(Mlp.init([2, 4, 2]), data.x, data.y, TrainConfig(early_stop_delta=math.inf))
        assert log.epochs == 1 and log.stopped_early

    def test_early_stop_rule(self):
        data = self.blobs()
        cfg = TrainConfig(lr=0.02, max_epochs=500, early_stop_delta=1e-3)
        _, log = train(Mlp.init([2, 4, 2]), data.x, data.y, cfg)
        losses = [log.initial_loss] + log.epoch_losses
        diffs = np.abs(np.diff(losses))
        assert np.all(diffs[:-1] >= 1e-3)
        assert log.stopped_early == (diffs[-1] < 1e-3)

    def test_deterministic(self):
        data = self.blobs()
        cfg = TrainConfig(max_epochs=20, seed=3)
        a, _ = train(Mlp.init([2, 5, 2], seed=1), data.x, data.y, cfg)
        b, _ = train(Mlp.init([2, 5, 2], seed=1), data.x, data.y, cfg)
        assert all(np.array_equal(p, q) for p, q in zip(a.params(), b.params()))

    def test_input_not_modified(self):
        data = self.blobs()
        start = Mlp.init([2, 3, 2])
        before = [p.copy() for p in start.params()]
        train(start, data.x, data.y, TrainConfig(max_epochs=3))
        assert all(np.array_equal(p, q) for p, q in zip(before, start.params()))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(adam_beta1=1.0)
        with pytest.raises(ValueError):
            TrainConfig(lr=0)


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        model = random_model(np.random.default_rng(7), [5, 4, 3])
        path = tmp_path / "m.txt"
        save_checkpoint(model, path)
        loaded = load_checkpoint(path)
        assert loaded.layer_dims == [5, 4, 3]
        assert all(np.array_equal(p, q) for p, q in zip(model.params(), loaded.params()))

    def test_layout(self, tmp_path):
        model = Mlp([np.array([[1.0, 2.0], [3.0, 4.0]])], [np.array([0.5, -0.5])])
        save_checkpoint(model, tmp_path / "m.txt")
        assert (tmp_path / "m.txt").read_text().splitlines() == [
            "leakage-lab-mlp 1", "2 2", "1.0 2.0 3.0 4.0", "0.5 -0.5"]

    def test_rejects_garbage(self, tmp_path):
        (tmp_path / "bad.txt").write_text("hello\n")
        with pytest.raises(ValueError):
            load_checkpoint(tmp_path / "bad.txt")
        (tmp_path / "short.txt").write_text("leakage-lab-mlp 1\n2 2\n1 2 3\n0 0\n")
        with pytest.raises(ValueError):
            load_checkpoint(tmp_path / "short.txt")
