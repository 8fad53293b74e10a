"""Layer-level gradient checks, including the 2-layer LSTM finite-difference oracle."""

import numpy as np
import pytest

from atnet.autodiff import Tensor, concat, grad_check
from atnet.nn import BatchNorm2d, Conv2d, LSTMLayer, Linear, orthogonal

RNG = np.random.default_rng(99)


def test_orthogonal_init_is_orthonormal():
    q = orthogonal(np.random.default_rng(1), 16, 16)
    np.testing.assert_allclose(q @ q.T, np.eye(16), atol=1e-10)


def test_orthogonal_deterministic():
    a = orthogonal(np.random.default_rng(5), 8, 8)
    b = orthogonal(np.random.default_rng(5), 8, 8)
    np.testing.assert_array_equal(a, b)


def test_conv_layer_gradients():
    layer = Conv2d(2, 3, 3, stride=1, rng=np.random.default_rng(2))
    x = Tensor(RNG.uniform(-1, 1, size=(2, 2, 8, 8)), requires_grad=True)
    params = {"w": layer.weight, "x": x}
    err = grad_check(lambda p: (layer(p["x"]) ** 2).sum(), params)
    assert err < 1e-4


def test_linear_gradients():
    layer = Linear(5, 3, rng=np.random.default_rng(3))
    x = Tensor(RNG.uniform(-1, 1, size=(4, 5)), requires_grad=True)
    params = {"w": layer.weight, "b": layer.bias, "x": x}
    err = grad_check(lambda p: (layer(p["x"]) ** 2).sum(), params)
    assert err < 1e-4


def test_batchnorm_train_statistics():
    bn = BatchNorm2d(3)
    x = Tensor(RNG.normal(2.0, 3.0, size=(8, 3, 4, 4)))
    out = bn(x, training=True).data
    np.testing.assert_allclose(out.mean(axis=(0, 2, 3)), 0.0, atol=1e-10)
    np.testing.assert_allclose(out.std(axis=(0, 2, 3)), 1.0, atol=1e-3)


def test_batchnorm_running_average_update():
    bn = BatchNorm2d(2, momentum=0.9)
    x = Tensor(np.full((4, 2, 2, 2), 5.0))
    bn(x, training=True)
    np.testing.assert_allclose(bn.running_mean, 0.9 * 0.0 + 0.1 * 5.0)


def test_batchnorm_eval_uses_running_stats():
    bn = BatchNorm2d(1)
    bn.running_mean = np.array([1.0])
    bn.running_var = np.array([4.0])
    x = Tensor(np.full((1, 1, 2, 2), 3.0))
    out = bn(x, training=False).data
    np.testing.assert_allclose(out, (3.0 - 1.0) / np.sqrt(4.0 + bn.eps), rtol=1e-12)


def test_batchnorm_gradients():
    # project with a fixed random tensor: sum(BN(x)^2) alone is nearly
    # constant in x, which starves finite differences of signal
    bn = BatchNorm2d(2)
    bn.gamma.data = RNG.uniform(0.5, 1.5, size=2)
    bn.beta.data = RNG.uniform(-0.5, 0.5, size=2)
    x = Tensor(RNG.uniform(-1, 1, size=(4, 2, 3, 3)), requires_grad=True)
    k = Tensor(RNG.uniform(-1, 1, size=(4, 2, 3, 3)))
    params = {"gamma": bn.gamma, "beta": bn.beta, "x": x}
    err = grad_check(lambda p: (bn(p["x"], training=True) * k).sum(), params)
    assert err < 1e-4


def test_lstm_zero_input_zero_state_fixed_point():
    layer = LSTMLayer(4, 3, rng=np.random.default_rng(7))
    layer.b.data[:] = 0.0
    outs = layer(Tensor(np.zeros((1, 5, 4))))
    np.testing.assert_array_equal(outs.data, np.zeros((1, 5, 3)))


def test_two_layer_lstm_gradient_check_random_5x8():
    """2-layer LSTM on a random 5x8 input sequence vs finite differences."""
    rng = np.random.default_rng(41)
    l1 = LSTMLayer(8, 6, rng=np.random.default_rng(11))
    l2 = LSTMLayer(6, 6, rng=np.random.default_rng(12))
    x = Tensor(rng.uniform(-1, 1, size=(1, 5, 8)), requires_grad=True)
    # small projection keeps |loss| ~ 1e-2 so finite-difference round-off
    # stays below the checker's 1e-8 relative-error floor
    proj = Tensor(0.01 * rng.uniform(0.5, 1.5, size=(1, 6)))

    def build(p):
        h2 = l2(l1(p["x"]))
        return (h2[:, -1, :] * proj).sum()

    params = {"x": x}
    for prefix, layer in (("l1", l1), ("l2", l2)):
        for name, tensor in layer.params():
            params[f"{prefix}.{name}"] = tensor
    err = grad_check(build, params, step=1e-6)
    assert err < 1e-4


def test_lstm_gradient_through_64_steps():
    """Gradients through a full 64-step stacked LSTM stay within 1e-4 of
    central differences (sampled coordinates to bound runtime)."""
    rng = np.random.default_rng(42)
    l1 = LSTMLayer(16, 8, rng=np.random.default_rng(21))
    l2 = LSTMLayer(8, 8, rng=np.random.default_rng(22))
    seq = rng.uniform(-1, 1, size=(1, 64, 16))
    proj = Tensor(0.01 * rng.uniform(0.5, 1.5, size=(1, 8)))

    def build(p):
        h = l2(l1(Tensor(seq)))
        return (h[:, -1, :] * proj).sum()

    params = {}
    for prefix, layer in (("l1", l1), ("l2", l2)):
        for name, tensor in layer.params():
            params[f"{prefix}.{name}"] = tensor
    err = grad_check(build, params, sample=6, rng=np.random.default_rng(0))
    assert err < 1e-4


def test_lstm_batched_matches_per_sample():
    layer = LSTMLayer(3, 4, rng=np.random.default_rng(9))
    seq = RNG.uniform(-1, 1, size=(2, 5, 3))
    batched = layer(Tensor(seq)).data[:, -1, :]
    singles = [layer(Tensor(seq[i : i + 1])).data[:, -1, :] for i in range(2)]
    np.testing.assert_allclose(batched, np.vstack(singles), atol=1e-12)


def test_lstm_matches_explicit_composite_recurrence():
    """The fused sequence op agrees with the same equations written out
    step by step with whole-graph primitives."""
    from atnet.autodiff import matmul

    layer = LSTMLayer(3, 4, rng=np.random.default_rng(31))
    seq = RNG.uniform(-1, 1, size=(2, 6, 3))
    fused = layer(Tensor(seq)).data

    h = 4
    h_t = Tensor(np.zeros((2, h)))
    c_t = Tensor(np.zeros((2, h)))
    outs = []
    for t in range(6):
        gates = matmul(Tensor(seq[:, t]), layer.wx) + matmul(h_t, layer.wh) + layer.b
        i = gates[:, 0:h].sigmoid()
        f = gates[:, h : 2 * h].sigmoid()
        o = gates[:, 2 * h : 3 * h].sigmoid()
        g = gates[:, 3 * h : 4 * h].tanh()
        c_t = f * c_t + i * g
        h_t = o * c_t.tanh()
        outs.append(h_t.data)
    np.testing.assert_allclose(fused, np.stack(outs, axis=1), atol=1e-12)
