"""Trainable layers built on the autodiff engine.

Initialization scheme: He-normal for convolution kernels, orthogonal for
LSTM recurrent matrices, uniform +-1/sqrt(fan_in) for input/linear
matrices and biases, forget-gate bias 1, batch-norm scale 1 and shift 0.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor, batch_norm_train, conv2d, lstm_sequence, matmul

__all__ = ["Conv2d", "BatchNorm2d", "Linear", "LSTMLayer", "orthogonal"]


def orthogonal(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    """Orthogonal (or orthonormal-column) matrix via QR with sign fixing."""
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))  # make the factorization unique
    return q if rows >= cols else q.T


class Conv2d:
    """Bias-free convolution; pairs with batch norm inside residual blocks."""

    def __init__(self, in_channels: int, out_channels: int, kernel: int,
                 stride: int = 1, pad: int | None = None, rng: np.random.Generator | None = None):
        if rng is None:
            rng = np.random.default_rng(0)
        self.stride = stride
        self.pad = kernel // 2 if pad is None else pad
        fan_in = in_channels * kernel * kernel
        scale = np.sqrt(2.0 / fan_in)
        self.weight = Tensor(rng.standard_normal((out_channels, in_channels, kernel, kernel)) * scale,
                             requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return conv2d(x, self.weight, stride=self.stride, pad=self.pad)

    def params(self):
        return [("weight", self.weight)]

    def buffers(self):
        return []


class BatchNorm2d:
    """Per-channel batch normalization over (N, H, W).

    Training mode normalizes with batch statistics and updates running
    averages with momentum 0.9; evaluation mode uses the running averages.
    """

    def __init__(self, channels: int, momentum: float = 0.9, eps: float = 1e-5):
        self.gamma = Tensor(np.ones(channels), requires_grad=True)
        self.beta = Tensor(np.zeros(channels), requires_grad=True)
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)
        self.momentum = momentum
        self.eps = eps

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        c = self.gamma.data.size
        if training:
            out, mu, var = batch_norm_train(x, self.gamma, self.beta, eps=self.eps)
            m = self.momentum
            self.running_mean = m * self.running_mean + (1 - m) * mu
            self.running_var = m * self.running_var + (1 - m) * var
            return out
        inv_std = 1.0 / np.sqrt(self.running_var + self.eps)
        scale = self.gamma * Tensor(inv_std)
        shift = self.beta - self.gamma * Tensor(self.running_mean * inv_std)
        return x * scale.reshape(1, c, 1, 1) + shift.reshape(1, c, 1, 1)

    def params(self):
        return [("gamma", self.gamma), ("beta", self.beta)]

    def buffers(self):
        return [("running_mean", self.running_mean), ("running_var", self.running_var)]

    def load_buffers(self, values):
        self.running_mean, self.running_var = values[0].copy(), values[1].copy()


class Linear:
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator | None = None):
        if rng is None:
            rng = np.random.default_rng(0)
        bound = 1.0 / np.sqrt(in_dim)
        self.weight = Tensor(rng.uniform(-bound, bound, size=(in_dim, out_dim)), requires_grad=True)
        self.bias = Tensor(rng.uniform(-bound, bound, size=out_dim), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return matmul(x, self.weight) + self.bias

    def params(self):
        return [("weight", self.weight), ("bias", self.bias)]

    def buffers(self):
        return []


class LSTMLayer:
    """One vanilla LSTM layer with sigmoid input/forget/output gates and
    tanh candidate/cell output, consuming a whole (N, T, D) sequence.

    Gate weights are packed along the last axis in the fixed order
    (input, forget, output, candidate); the forget-gate bias starts at 1.
    """

    def __init__(self, input_dim: int, hidden: int, rng: np.random.Generator | None = None):
        if rng is None:
            rng = np.random.default_rng(0)
        self.hidden = hidden
        bound = 1.0 / np.sqrt(input_dim)
        self.wx = Tensor(rng.uniform(-bound, bound, size=(input_dim, 4 * hidden)), requires_grad=True)
        wh = np.concatenate([orthogonal(rng, hidden, hidden) for _ in range(4)], axis=1)
        self.wh = Tensor(wh, requires_grad=True)
        bias = np.zeros(4 * hidden)
        bias[hidden : 2 * hidden] = 1.0
        self.b = Tensor(bias, requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        """(N, T, input_dim) -> (N, T, hidden) hidden-state sequence."""
        return lstm_sequence(x, self.wx, self.wh, self.b)

    def params(self):
        return [("wx", self.wx), ("wh", self.wh), ("b", self.b)]

    def buffers(self):
        return []
