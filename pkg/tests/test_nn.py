import numpy as np
import pytest

from varinit.initialization import NetworkShape, build_plan
from varinit.nn import Mlp, backward, forward, initialize, load_checkpoint, mse_loss, save_checkpoint

SEVEN = ["identity", "relu", "tanh", "sigmoid", "sine:30", "gaussian:0.05", "sinc:1", "gabor_wavelet:1"]

# sigma_p per activation so that the net is away from saturation and kinks
SIGMA = {"sine:30": 1.0, "gaussian:0.05": 0.078, "sinc:1": 2.2, "gabor_wavelet:1": 0.87}


def net(text, hidden=4, width=16, seed=0, bias="same_as_weights"):
    shape = NetworkShape.mlp(2, hidden, width, 3)
    plan = build_plan(shape, text, SIGMA.get(text, 1.0), "vi_forward", bias_policy=bias)
    return initialize(plan, seed=seed, dtype=np.float64)


def loss_of(mlp, x, y):
    return mse_loss(mlp(x), y)[0]


def finite_difference_check(mlp, x, y, eps=1e-6):
    out, trace = forward(mlp, x)
    _, g = mse_loss(out, y)
    grads = backward(mlp, trace, g)
    worst = 0.0
    for p, gp in zip(mlp.parameters(), grads.parameters()):
        num = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + eps
            up = loss_of(mlp, x, y)
            p[idx] = old - eps
            down = loss_of(mlp, x, y)
            p[idx] = old
            num[idx] = (up - down) / (2 * eps)
        scale = max(np.max(np.abs(num)), np.max(np.abs(gp)), 1e-12)
        worst = max(worst, np.max(np.abs(num - gp)) / scale)
    return worst


class TestGradients:
    @pytest.mark.parametrize("text", SEVEN)
    def test_parameters_match_central_differences(self, text):
        mlp = net(text)
        rng = np.random.default_rng(1)
        x = rng.uniform(-1, 1, (8, 2))
        y = rng.normal(size=(8, 3))
        # sin(30 x) compounds its third derivative layer by layer, so the
        # central-difference truncation error needs a much smaller step
        eps = 1e-8 if text == "sine:30" else 1e-6
        assert finite_difference_check(mlp, x, y, eps) < 1e-4

    def test_input_gradient(self):
        mlp = net("tanh")
        x = np.random.default_rng(2).uniform(-1, 1, (5, 2))
        out, trace = forward(mlp, x)
        g = backward(mlp, trace, np.ones_like(out)).input
        eps = 1e-6
        for k in range(2):
            d = np.zeros_like(x)
            d[:, k] = eps
            num = (mlp(x + d).sum(axis=1) - mlp(x - d).sum(axis=1)) / (2 * eps)
            np.testing.assert_allclose(g[:, k], num, rtol=1e-6, atol=1e-9)

    def test_mse_gradient(self):
        p = np.array([[1.0, 2.0]])
        t = np.array([[0.0, 0.0]])
        loss, g = mse_loss(p, t)
        assert loss == 2.5
        np.testing.assert_allclose(g, [[1.0, 2.0]])

    def test_shape_mismatch(self):
        mlp = net("tanh")
        _, trace = forward(mlp, np.zeros((4, 2)))
        with pytest.raises(ValueError):
            backward(mlp, trace, np.zeros((4, 2)))
        with pytest.raises(ValueError):
            forward(mlp, np.zeros((4, 3)))


class TestForwardVariance:
    def test_layer_recursion(self):
        # Var(z_i) = M_i sigma^2(W_i) E[x_i^2] for zero-mean weights
        width = 512
        shape = NetworkShape([width] * 5)
        plan = build_plan(shape, "tanh", 1.0, "vi_forward", preactivation_input=True)
        mlp = initialize(plan, seed=3)
        x = np.tanh(np.random.default_rng(0).normal(size=(2048, width)))
        _, trace = forward(mlp, x)
        for i, layer in enumerate(plan):
            predicted = layer.fan_in * layer.weight_variance * np.mean(trace.x[i] ** 2)
            assert np.var(trace.z[i]) == pytest.approx(predicted, rel=0.05)
            assert np.var(trace.z[i]) == pytest.approx(1.0, rel=0.1)


class TestParameters:
    def test_zero_bias_policy(self):
        mlp = net("tanh", bias="zero")
        assert all(np.all(b == 0) for b in mlp.biases)

    def test_seeded(self):
        a, b = net("tanh", seed=4), net("tanh", seed=4)
        for p, q in zip(a.parameters(), b.parameters()):
            np.testing.assert_array_equal(p, q)
        assert not np.array_equal(a.weights[0], net("tanh", seed=5).weights[0])

    def test_validation(self):
        mlp = net("tanh")
        with pytest.raises(ValueError):
            Mlp(mlp.shape, mlp.activation, mlp.weights[:-1], mlp.biases)


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        mlp = net("gaussian:0.05")
        path = save_checkpoint(mlp, tmp_path / "m.bin")
        back = load_checkpoint(path)
        assert back.shape == mlp.shape and back.activation == mlp.activation
        x = np.random.default_rng(0).uniform(-1, 1, (10, 2))
        np.testing.assert_array_equal(back(x), mlp(x))

    def test_rejects_garbage(self, tmp_path):
        bad = tmp_path / "x.bin"
        bad.write_bytes(b"NOTACKPT" + bytes(40))
        with pytest.raises(ValueError):
            load_checkpoint(bad)

    def test_rejects_truncated(self, tmp_path):
        path = save_checkpoint(net("relu"), tmp_path / "m.bin")
        path.write_bytes(path.read_bytes() + b"\0")
        with pytest.raises(ValueError):
            load_checkpoint(path)
