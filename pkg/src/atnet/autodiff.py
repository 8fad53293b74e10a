"""Reverse-mode automatic differentiation on dense float64 tensors.

A ``Tensor`` records the operation that produced it and links back to its
input tensors, so every forward computation builds an implicit acyclic
graph (a tape). Calling :meth:`Tensor.backward` on a scalar root walks
that graph in reverse topological order and accumulates gradients into
every tensor created with ``requires_grad=True``.

Everything runs in 64-bit floats: the models here are desk-scale and the
finite-difference gradient checking needs the precision.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Tensor",
    "ShapeError",
    "batch_norm_train",
    "concat",
    "conv2d",
    "dropout",
    "global_avg_pool",
    "grad_check",
    "l2_normalize",
    "log_softmax",
    "lstm_sequence",
    "matmul",
    "max_pool2d",
    "softmax",
]


class ShapeError(ValueError):
    """Raised when an operation receives tensors of incompatible shapes."""


def _as_array(value) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    return arr


class Tensor:
    """A node in the computation graph: float64 data plus gradient plumbing.

    ``requires_grad`` marks leaves that should receive gradients; interior
    nodes track it automatically from their parents.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad: bool = False, parents=(), backward=None, op: str = "leaf"):
        self.data = _as_array(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad) or any(p.requires_grad for p in parents)
        self._parents = tuple(parents)
        self._backward = backward
        self.op = op

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        return f"Tensor(op={self.op!r}, shape={self.data.shape})"

    # -- graph traversal -------------------------------------------------

    def _toposort(self) -> list["Tensor"]:
        # Iterative DFS: LSTM graphs can run several hundred nodes deep,
        # past the default recursion limit.
        order: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))
        return order

    def backward(self) -> None:
        """Populate ``.grad`` of every reachable tensor with d(self)/d(tensor).

        The root must be a scalar (size-1) tensor.
        """
        if self.data.size != 1:
            raise ShapeError(f"backward requires a scalar root, got shape {self.data.shape} from op {self.op!r}")
        order = self._toposort()
        for node in order:
            node.grad = None
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def _accumulate(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = grad.copy()
        else:
            self.grad += grad

    # -- elementwise arithmetic -------------------------------------------

    def __add__(self, other):
        other = _wrap(other)
        out_data = self.data + other.data
        a, b = self, other

        def backward(g):
            a._accumulate(_unbroadcast(g, a.data.shape))
            b._accumulate(_unbroadcast(g, b.data.shape))

        return Tensor(out_data, parents=(a, b), backward=backward, op="add")

    __radd__ = __add__

    def __mul__(self, other):
        other = _wrap(other)
        a, b = self, other
        out_data = a.data * b.data

        def backward(g):
            a._accumulate(_unbroadcast(g * b.data, a.data.shape))
            b._accumulate(_unbroadcast(g * a.data, b.data.shape))

        return Tensor(out_data, parents=(a, b), backward=backward, op="mul")

    __rmul__ = __mul__

    def __neg__(self):
        a = self

        def backward(g):
            a._accumulate(-g)

        return Tensor(-a.data, parents=(a,), backward=backward, op="neg")

    def __sub__(self, other):
        return self + (-_wrap(other))

    def __rsub__(self, other):
        return _wrap(other) + (-self)

    def __truediv__(self, other):
        other = _wrap(other)
        a, b = self, other
        out_data = a.data / b.data

        def backward(g):
            a._accumulate(_unbroadcast(g / b.data, a.data.shape))
            b._accumulate(_unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

        return Tensor(out_data, parents=(a, b), backward=backward, op="div")

    def __pow__(self, exponent):
        if not isinstance(exponent, (int, float)):
            raise TypeError("only scalar exponents are supported")
        a = self
        out_data = a.data ** exponent

        def backward(g):
            a._accumulate(g * exponent * a.data ** (exponent - 1))

        return Tensor(out_data, parents=(a,), backward=backward, op="pow")

    # -- nonlinearities ----------------------------------------------------

    def relu(self):
        a = self
        out_data = np.maximum(a.data, 0.0)

        def backward(g):
            a._accumulate(g * (a.data > 0.0))

        return Tensor(out_data, parents=(a,), backward=backward, op="relu")

    def sigmoid(self):
        a = self
        out_data = 1.0 / (1.0 + np.exp(-a.data))

        def backward(g):
            a._accumulate(g * out_data * (1.0 - out_data))

        return Tensor(out_data, parents=(a,), backward=backward, op="sigmoid")

    def tanh(self):
        a = self
        out_data = np.tanh(a.data)

        def backward(g):
            a._accumulate(g * (1.0 - out_data * out_data))

        return Tensor(out_data, parents=(a,), backward=backward, op="tanh")

    def exp(self):
        a = self
        out_data = np.exp(a.data)

        def backward(g):
            a._accumulate(g * out_data)

        return Tensor(out_data, parents=(a,), backward=backward, op="exp")

    def log(self):
        a = self
        out_data = np.log(a.data)

        def backward(g):
            a._accumulate(g / a.data)

        return Tensor(out_data, parents=(a,), backward=backward, op="log")

    def maximum(self, threshold: float):
        """Elementwise max against a constant; gradient passes where unclamped."""
        a = self
        out_data = np.maximum(a.data, threshold)

        def backward(g):
            a._accumulate(g * (a.data > threshold))

        return Tensor(out_data, parents=(a,), backward=backward, op="maximum")

    # -- reductions and reshaping -------------------------------------------

    def sum(self, axis=None, keepdims: bool = False):
        a = self
        out_data = a.data.sum(axis=axis, keepdims=keepdims)

        def backward(g):
            if axis is None:
                a._accumulate(np.broadcast_to(g, a.data.shape).copy())
            else:
                gg = g if keepdims else np.expand_dims(g, axis)
                a._accumulate(np.broadcast_to(gg, a.data.shape).copy())

        return Tensor(out_data, parents=(a,), backward=backward, op="sum")

    def mean(self, axis=None, keepdims: bool = False):
        count = self.data.size if axis is None else _axis_size(self.data.shape, axis)
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        a = self
        out_data = a.data.reshape(shape)

        def backward(g):
            a._accumulate(g.reshape(a.data.shape))

        return Tensor(out_data, parents=(a,), backward=backward, op="reshape")

    def transpose(self, axes=None):
        a = self
        out_data = a.data.transpose(axes)
        inverse = None if axes is None else np.argsort(axes)

        def backward(g):
            a._accumulate(g.transpose(inverse))

        return Tensor(out_data, parents=(a,), backward=backward, op="transpose")

    def __getitem__(self, index):
        a = self
        out_data = a.data[index]

        def backward(g):
            full = np.zeros_like(a.data)
            np.add.at(full, index, g)
            a._accumulate(full)

        return Tensor(out_data, parents=(a,), backward=backward, op="getitem")


def _wrap(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a gradient back to the shape of a broadcast operand."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _axis_size(shape: tuple, axis) -> int:
    if isinstance(axis, int):
        return shape[axis]
    return int(np.prod([shape[ax] for ax in axis]))


# -- free-function operations ------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeError(f"matmul needs >=2-d operands, got {a.data.shape} @ {b.data.shape}")
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeError(f"matmul: inner dimensions disagree, {a.data.shape} @ {b.data.shape}")
    out_data = a.data @ b.data

    def backward(g):
        a._accumulate(_unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.data.shape))
        b._accumulate(_unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.data.shape))

    return Tensor(out_data, parents=(a, b), backward=backward, op="matmul")


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [_wrap(t) for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            t._accumulate(g[tuple(sl)])

    return Tensor(out_data, parents=tuple(tensors), backward=backward, op="concat")


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Numerically stable softmax; outputs are positive and sum to 1."""
    x = _wrap(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out_data = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        inner = (g * out_data).sum(axis=axis, keepdims=True)
        x._accumulate(out_data * (g - inner))

    return Tensor(out_data, parents=(x,), backward=backward, op="softmax")


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    """log(softmax(x)) in the stable log-sum-exp form."""
    x = _wrap(x)
    m = x.data.max(axis=axis, keepdims=True)
    shifted = x.data - m
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out_data = shifted - lse
    probs = np.exp(out_data)

    def backward(g):
        x._accumulate(g - probs * g.sum(axis=axis, keepdims=True))

    return Tensor(out_data, parents=(x,), backward=backward, op="log_softmax")


def l2_normalize(x: Tensor, axis: int = -1, eps: float = 1e-12) -> Tensor:
    """Scale ``x`` to unit L2 norm along ``axis``; vectors with norm below
    ``eps`` pass through unchanged (a zero vector stays zero)."""
    x = _wrap(x)
    norm = ((x * x).sum(axis=axis, keepdims=True)) ** 0.5
    return x / norm.maximum(eps)


def dropout(x: Tensor, p: float, rng: np.random.Generator | None, training: bool) -> Tensor:
    """Inverted dropout: kept activations are scaled by 1/(1-p) during
    training so that evaluation mode is the identity function."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return x
    if rng is None:
        raise ValueError("dropout in training mode needs an explicit rng")
    x = _wrap(x)
    mask = (rng.random(x.data.shape) >= p) / (1.0 - p)
    out_data = x.data * mask

    def backward(g):
        x._accumulate(g * mask)

    return Tensor(out_data, parents=(x,), backward=backward, op="dropout")


# -- convolution and pooling ---------------------------------------------


def _im2col(x: np.ndarray, kh: int, kw: int, stride: int, pad: int):
    n, c, h, w = x.shape
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (w + 2 * pad - kw) // stride + 1
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    cols = np.empty((n, c, kh, kw, oh, ow), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = xp[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride]
    return cols.reshape(n, c * kh * kw, oh * ow), oh, ow


def _col2im(cols: np.ndarray, x_shape, kh: int, kw: int, stride: int, pad: int) -> np.ndarray:
    n, c, h, w = x_shape
    hp, wp = h + 2 * pad, w + 2 * pad
    oh = (hp - kh) // stride + 1
    ow = (wp - kw) // stride + 1
    cols = cols.reshape(n, c, kh, kw, oh, ow)
    xp = np.zeros((n, c, hp, wp), dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            xp[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride] += cols[:, :, i, j]
    return xp[:, :, pad : pad + h, pad : pad + w] if pad else xp


def conv2d(x: Tensor, weight: Tensor, stride: int = 1, pad: int = 0) -> Tensor:
    """2-d cross-correlation with zero padding.

    ``x``: (N, C, H, W), ``weight``: (F, C, kh, kw) -> (N, F, OH, OW).
    """
    x, weight = _wrap(x), _wrap(weight)
    if x.data.ndim != 4 or weight.data.ndim != 4:
        raise ShapeError(f"conv2d expects 4-d input and weight, got {x.data.shape} and {weight.data.shape}")
    n, c, h, w = x.data.shape
    f, cw, kh, kw = weight.data.shape
    if c != cw:
        raise ShapeError(f"conv2d: input has {c} channels but weight expects {cw}")
    cols, oh, ow = _im2col(x.data, kh, kw, stride, pad)
    wmat = weight.data.reshape(f, c * kh * kw)
    out_data = np.matmul(wmat, cols).reshape(n, f, oh, ow)

    def backward(g):
        gmat = g.reshape(n, f, oh * ow)
        gw = np.tensordot(gmat, cols, axes=([0, 2], [0, 2]))
        weight._accumulate(gw.reshape(weight.data.shape))
        gcols = np.matmul(wmat.T, gmat)
        x._accumulate(_col2im(gcols, x.data.shape, kh, kw, stride, pad))

    return Tensor(out_data, parents=(x, weight), backward=backward, op="conv2d")


def lstm_sequence(x: Tensor, wx: Tensor, wh: Tensor, b: Tensor) -> Tensor:
    """One LSTM layer unrolled over a whole (N, T, D) sequence in a single
    graph node, returning the (N, T, H) hidden-state sequence.

    Gate weights pack along the last axis in the order (input, forget,
    output, candidate); sigmoid gates, tanh candidate and cell output,
    zero initial state. The backward pass is classic truncated-free BPTT
    with the input/recurrent weight gradients batched into single matrix
    products.
    """
    x, wx, wh, b = _wrap(x), _wrap(wx), _wrap(wh), _wrap(b)
    n, t, d = x.data.shape
    hidden = wh.data.shape[0]
    if wx.data.shape != (d, 4 * hidden) or wh.data.shape != (hidden, 4 * hidden) \
            or b.data.shape != (4 * hidden,):
        raise ShapeError(
            f"lstm_sequence: input dim {d}, hidden {hidden} do not fit weights "
            f"{wx.data.shape}, {wh.data.shape}, {b.data.shape}")

    h3 = 3 * hidden
    x_flat = x.data.reshape(n * t, d)
    gates_x = (x_flat @ wx.data).reshape(n, t, 4 * hidden) + b.data

    h_all = np.empty((n, t, hidden))
    c_all = np.empty((n, t, hidden))
    gates = np.empty((n, t, 4 * hidden))  # post-activation (i, f, o, g)
    tanh_c = np.empty((n, t, hidden))
    h_prev = np.zeros((n, hidden))
    c_prev = np.zeros((n, hidden))
    for step in range(t):
        a = gates_x[:, step] + h_prev @ wh.data
        a[:, :h3] = 1.0 / (1.0 + np.exp(-a[:, :h3]))
        np.tanh(a[:, h3:], out=a[:, h3:])
        i, f, o, g = a[:, :hidden], a[:, hidden : 2 * hidden], a[:, 2 * hidden : h3], a[:, h3:]
        c_prev = f * c_prev + i * g
        tc = np.tanh(c_prev)
        h_prev = o * tc
        gates[:, step] = a
        c_all[:, step] = c_prev
        tanh_c[:, step] = tc
        h_all[:, step] = h_prev

    def backward(grad_h):
        da_all = np.empty((n, t, 4 * hidden))
        dh_next = np.zeros((n, hidden))
        dc_next = np.zeros((n, hidden))
        for step in range(t - 1, -1, -1):
            a = gates[:, step]
            i, f, o, g = a[:, :hidden], a[:, hidden : 2 * hidden], a[:, 2 * hidden : h3], a[:, h3:]
            tc = tanh_c[:, step]
            dh = grad_h[:, step] + dh_next
            dc = dc_next + dh * o * (1.0 - tc * tc)
            c_before = c_all[:, step - 1] if step > 0 else 0.0
            da = da_all[:, step]
            da[:, :hidden] = dc * g * i * (1.0 - i)
            da[:, hidden : 2 * hidden] = dc * c_before * f * (1.0 - f)
            da[:, 2 * hidden : h3] = dh * tc * o * (1.0 - o)
            da[:, h3:] = dc * i * (1.0 - g * g)
            dc_next = dc * f
            dh_next = da @ wh.data.T
        da_flat = da_all.reshape(n * t, 4 * hidden)
        x._accumulate((da_flat @ wx.data.T).reshape(n, t, d))
        wx._accumulate(x_flat.T @ da_flat)
        h_shifted = np.concatenate([np.zeros((n, 1, hidden)), h_all[:, :-1]], axis=1)
        wh._accumulate(h_shifted.reshape(n * t, hidden).T @ da_flat)
        b._accumulate(da_flat.sum(axis=0))

    return Tensor(h_all, parents=(x, wx, wh, b), backward=backward, op="lstm_sequence")


def batch_norm_train(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5):
    """Training-mode batch normalization over (N, H, W) per channel as one
    graph node. Returns (out, batch_mean (C,), batch_var (C,)); the
    statistics are plain arrays for running-average updates."""
    x, gamma, beta = _wrap(x), _wrap(gamma), _wrap(beta)
    n, c, h, w = x.data.shape
    axes = (0, 2, 3)
    count = n * h * w
    mu = x.data.mean(axis=axes)
    centered = x.data - mu.reshape(1, c, 1, 1)
    var = (centered * centered).mean(axis=axes)
    inv_std = 1.0 / np.sqrt(var + eps)
    xn = centered * inv_std.reshape(1, c, 1, 1)
    out_data = gamma.data.reshape(1, c, 1, 1) * xn + beta.data.reshape(1, c, 1, 1)

    def backward(g):
        gamma._accumulate((g * xn).sum(axis=axes))
        beta._accumulate(g.sum(axis=axes))
        dxn = g * gamma.data.reshape(1, c, 1, 1)
        mean_dxn = dxn.mean(axis=axes).reshape(1, c, 1, 1)
        mean_dxn_xn = (dxn * xn).mean(axis=axes).reshape(1, c, 1, 1)
        x._accumulate(inv_std.reshape(1, c, 1, 1) * (dxn - mean_dxn - xn * mean_dxn_xn))

    out = Tensor(out_data, parents=(x, gamma, beta), backward=backward, op="batch_norm")
    return out, mu, var


def max_pool2d(x: Tensor, k: int = 2) -> Tensor:
    """Non-overlapping k x k max pooling; spatial dims must divide by k."""
    x = _wrap(x)
    n, c, h, w = x.data.shape
    if h % k or w % k:
        raise ShapeError(f"max_pool2d: spatial dims {(h, w)} not divisible by {k}")
    oh, ow = h // k, w // k
    windows = x.data.reshape(n, c, oh, k, ow, k).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, oh, ow, k * k)
    arg = windows.argmax(axis=-1)
    out_data = np.take_along_axis(windows, arg[..., None], axis=-1)[..., 0]

    def backward(g):
        gw = np.zeros_like(windows)
        np.put_along_axis(gw, arg[..., None], g[..., None], axis=-1)
        gx = gw.reshape(n, c, oh, ow, k, k).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h, w)
        x._accumulate(gx)

    return Tensor(out_data, parents=(x,), backward=backward, op="max_pool2d")


def global_avg_pool(x: Tensor) -> Tensor:
    """(N, C, H, W) -> (N, C) mean over the spatial dimensions."""
    return x.mean(axis=(2, 3))


# -- gradient checking ---------------------------------------------------


def grad_check(build, params: dict, step: float = 1e-6, sample: int | None = None,
               rng: np.random.Generator | None = None) -> float:
    """Compare analytic gradients against central finite differences.

    ``build`` maps the ``params`` dict (name -> Tensor with
    ``requires_grad=True``) to a scalar Tensor and must be deterministic:
    it is re-run twice per probed coordinate with perturbed data.

    ``sample`` bounds the number of coordinates probed per parameter
    (deterministically chosen from ``rng``); None probes every entry.
    Returns the max over probed coordinates of
    ``|analytic - central_difference| / max(|analytic|, |cd|, 1e-8)``.
    """
    if not 0.0 < step <= 1e-3:
        raise ValueError(f"finite-difference step must be in (0, 1e-3], got {step}")
    root = build(params)
    if root.data.size != 1:
        raise ShapeError(f"grad_check requires a scalar output, got shape {root.data.shape}")
    root.backward()
    analytic = {name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
                for name, p in params.items()}
    if sample is not None and rng is None:
        rng = np.random.default_rng(0)

    worst = 0.0
    for name, p in params.items():
        flat = p.data.reshape(-1)
        n = flat.size
        if sample is None or sample >= n:
            indices = range(n)
        else:
            indices = np.sort(rng.choice(n, size=sample, replace=False))
        ga = analytic[name].reshape(-1)
        for idx in indices:
            orig = flat[idx]
            flat[idx] = orig + step
            f_plus = float(build(params).data)
            flat[idx] = orig - step
            f_minus = float(build(params).data)
            flat[idx] = orig
            cd = (f_plus - f_minus) / (2.0 * step)
            denom = max(abs(ga[idx]), abs(cd), 1e-8)
            worst = max(worst, abs(ga[idx] - cd) / denom)
    return worst
