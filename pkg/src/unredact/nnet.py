"""Small dense/convolutional network kernel with manual backprop and Adam.

Layouts: dense activations are ``[N, features]``; convolutional ones are
``[N, channels, length]``. Convolutions and pooling use no padding.
"""

from __future__ import annotations

import io
import json
import struct
from typing import BinaryIO, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

MODEL_MAGIC = b"RBNN1"


class ShapeError(ValueError):
    pass


# ---------------------------------------------------------------- functional ops


def linear(x: np.ndarray, W: np.ndarray, b: np.ndarray) -> np.ndarray:
    if x.ndim != 2 or W.ndim != 2 or x.shape[1] != W.shape[0] or b.shape != (W.shape[1],):
        raise ShapeError(f"linear: x{x.shape} W{W.shape} b{b.shape}")
    return x @ W + b


def linear_backward(x: np.ndarray, W: np.ndarray, dy: np.ndarray):
    """Returns (dx, dW, db)."""
    return dy @ W.T, x.T @ dy, dy.sum(axis=0)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward(x: np.ndarray, dy: np.ndarray) -> np.ndarray:
    return dy * (x > 0)


def conv_out_len(length: int, kernel: int, stride: int) -> int:
    if length < kernel:
        raise ShapeError(f"input length {length} shorter than kernel {kernel}")
    return (length - kernel) // stride + 1


def _im2col(x: np.ndarray, kernel: int, stride: int) -> np.ndarray:
    # [N, L, C] -> [N * L_out, K * C]
    win = sliding_window_view(x, kernel, axis=1)[:, ::stride].transpose(0, 1, 3, 2)
    n, l_out, k, c = win.shape
    return np.ascontiguousarray(win).reshape(n * l_out, k * c)


def _filters_to_matrix(filters: np.ndarray) -> np.ndarray:
    # [C_out, C_in, K] -> [K * C_in, C_out], matching the im2col column order
    return np.ascontiguousarray(filters.transpose(2, 1, 0)).reshape(-1, filters.shape[0])


def conv1d_cl(x: np.ndarray, filters: np.ndarray, bias: np.ndarray | None, stride: int) -> np.ndarray:
    """Channels-last convolution: [N, L, C_in] -> [N, L_out, C_out]."""
    c_out, c_in, k = filters.shape
    if x.ndim != 3 or x.shape[2] != c_in:
        raise ShapeError(f"conv1d: x{x.shape} filters{filters.shape}")
    l_out = conv_out_len(x.shape[1], k, stride)
    y = _im2col(x, k, stride) @ _filters_to_matrix(filters)
    if bias is not None:
        y += bias
    return y.reshape(x.shape[0], l_out, c_out)


def conv1d_cl_backward(x: np.ndarray, filters: np.ndarray, dy: np.ndarray, stride: int, need_dx: bool = True):
    c_out, c_in, k = filters.shape
    n, l_out, _ = dy.shape
    dy2 = dy.reshape(n * l_out, c_out)
    dWm = _im2col(x, k, stride).T @ dy2
    dW = np.ascontiguousarray(dWm.reshape(k, c_in, c_out).transpose(2, 1, 0))
    db = dy2.sum(axis=0)
    if not need_dx:
        return None, dW, db
    dcols = (dy2 @ _filters_to_matrix(filters).T).reshape(n, l_out, k, c_in)
    dx = np.zeros_like(x)
    span = stride * (l_out - 1) + 1
    for j in range(k):
        dx[:, j : j + span : stride] += dcols[:, :, j]
    return dx, dW, db


def conv1d(x: np.ndarray, filters: np.ndarray, bias: np.ndarray | None = None, stride: int = 1) -> np.ndarray:
    """Valid 1-D cross-correlation on channels-first input ``[C_in, L]`` or ``[N, C_in, L]``."""
    single = x.ndim == 2
    xb = x[None] if single else x
    if xb.ndim != 3 or filters.ndim != 3 or xb.shape[1] != filters.shape[1]:
        raise ShapeError(f"conv1d: x{x.shape} filters{filters.shape}")
    y = conv1d_cl(xb.transpose(0, 2, 1), filters, bias, stride).transpose(0, 2, 1)
    return y[0] if single else y


def conv1d_backward(x: np.ndarray, filters: np.ndarray, dy: np.ndarray, stride: int = 1):
    """Channels-first gradients; returns (dx, dfilters, dbias)."""
    dx, dW, db = conv1d_cl_backward(x.transpose(0, 2, 1), filters, dy.transpose(0, 2, 1), stride)
    return dx.transpose(0, 2, 1), dW, db


def _argmax_pairwise(v0, i0, v1, i1):
    # strict comparison keeps the earlier index on ties; arithmetic select beats np.where here
    take = (v1 > v0).astype(i0.dtype)
    return np.maximum(v0, v1), i0 + take * (i1 - i0)


def maxpool1d_cl(x: np.ndarray, kernel: int, stride: int):
    """Channels-last max pooling along axis 1; returns (y, argmax position in the input)."""
    n, length, c = x.shape
    l_out = conv_out_len(length, kernel, stride)
    blocks = kernel // stride
    if kernel % stride == 0 and blocks & (blocks - 1) == 0:
        # max over stride-wide blocks, then a doubling sliding max over blocks
        nb = length // stride
        vals = x[:, 0 : nb * stride : stride]
        base = np.broadcast_to(np.arange(0, nb * stride, stride, dtype=np.int32)[None, :, None], vals.shape)
        pos = base
        for j in range(1, stride):
            vals, pos = _argmax_pairwise(vals, pos, x[:, j : nb * stride : stride], base + np.int32(j))
        width = 1
        while width < blocks:
            m = vals.shape[1] - width
            vals, pos = _argmax_pairwise(vals[:, :m], pos[:, :m], vals[:, width:], pos[:, width:])
            width *= 2
        return vals[:, :l_out], pos[:, :l_out]
    span = stride * (l_out - 1) + 1
    vals = x[:, 0:span:stride]
    base = np.broadcast_to(np.arange(0, span, stride, dtype=np.int32)[None, :, None], vals.shape)
    pos = base
    for k in range(1, kernel):
        vals, pos = _argmax_pairwise(vals, pos, x[:, k : k + span : stride], base + np.int32(k))
    return vals, pos


def maxpool1d_cl_backward(x_shape: Sequence[int], pos: np.ndarray, dy: np.ndarray) -> np.ndarray:
    n, length, c = x_shape
    flat = (pos * c + np.arange(c, dtype=np.int32)).astype(np.int64) + (np.arange(n) * length * c)[:, None, None]
    dx = np.bincount(flat.ravel(), weights=dy.ravel(), minlength=n * length * c)
    return dx.astype(dy.dtype).reshape(x_shape)


def maxpool1d(x: np.ndarray, kernel: int = 8, stride: int = 2):
    """Channels-first pooling of ``[C, L]`` or ``[N, C, L]``; returns (y, argmax position).

    Ties route to the earliest maximum.
    """
    single = x.ndim == 2
    xb = x[None] if single else x
    y, pos = maxpool1d_cl(xb.transpose(0, 2, 1), kernel, stride)
    y, pos = y.transpose(0, 2, 1), pos.transpose(0, 2, 1)
    return (y[0], pos[0]) if single else (y, pos)


def maxpool1d_backward(x_shape: Sequence[int], pos: np.ndarray, dy: np.ndarray) -> np.ndarray:
    """Channels-first counterpart of the pooling gradient."""
    n, c, length = x_shape
    dx = maxpool1d_cl_backward((n, length, c), pos.transpose(0, 2, 1), dy.transpose(0, 2, 1))
    return dx.transpose(0, 2, 1)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy over the batch; returns (loss, dlogits)."""
    labels = np.asarray(labels, dtype=np.int64)
    n = logits.shape[0]
    z = logits - logits.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1))
    loss = float(np.mean(logsum - z[np.arange(n), labels]))
    grad = softmax(logits)
    grad[np.arange(n), labels] -= 1
    return loss, grad / n


# ---------------------------------------------------------------- optimizer


class Adam:
    """Bias-corrected Adam over a fixed list of parameter arrays (updated in place)."""

    def __init__(self, params: Sequence[np.ndarray], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = [np.zeros_like(p) for p in self.params]
        self.v = [np.zeros_like(p) for p in self.params]
        self.t = 0

    def step(self, grads: Sequence[np.ndarray]) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        step = self.lr / bc1
        inv_sqrt_bc2 = 1.0 / np.sqrt(bc2)
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            denom = np.sqrt(v)
            denom *= inv_sqrt_bc2
            denom += self.eps
            np.divide(m, denom, out=denom)
            denom *= step
            p -= denom


def adam_step(params, grads, state: Adam | None = None, lr: float = 1e-3) -> Adam:
    """Functional wrapper: creates the state on first use, then steps it."""
    if state is None:
        state = Adam(params, lr=lr)
    state.step(grads)
    return state


# ---------------------------------------------------------------- layers


class Layer:
    params: list[np.ndarray] = []
    grads: list[np.ndarray] = []

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dy: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def describe(self) -> dict:
        raise NotImplementedError

    def out_shape(self, in_shape: tuple[int, ...]) -> tuple[int, ...]:
        raise NotImplementedError


def _glorot(rng: np.random.Generator, shape, fan_in: int, fan_out: int, dtype) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Linear(Layer):
    def __init__(self, din: int, dout: int, rng: np.random.Generator | None = None, dtype=np.float32):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.W = _glorot(rng, (din, dout), din, dout, dtype)
        self.b = np.zeros(dout, dtype=dtype)
        self.params = [self.W, self.b]
        self.grads = [np.zeros_like(self.W), np.zeros_like(self.b)]

    def forward(self, x):
        self._x = x
        return linear(x, self.W, self.b)

    def backward(self, dy):
        dx, dW, db = linear_backward(self._x, self.W, dy)
        self.grads[0][...] = dW
        self.grads[1][...] = db
        return dx

    def describe(self):
        return {"op": "linear", "in": self.W.shape[0], "out": self.W.shape[1]}

    def out_shape(self, in_shape):
        if in_shape != (self.W.shape[0],):
            raise ShapeError(f"linear expects ({self.W.shape[0]},), got {in_shape}")
        return (self.W.shape[1],)


class ReLU(Layer):
    def forward(self, x):
        self._x = x
        return relu(x)

    def backward(self, dy):
        return relu_backward(self._x, dy)

    def describe(self):
        return {"op": "relu"}

    def out_shape(self, in_shape):
        return in_shape


class Conv1d(Layer):
    """Convolution on channels-last activations ``[N, length, channels]``."""

    def __init__(self, c_in: int, c_out: int, kernel: int, stride: int = 1,
                 rng: np.random.Generator | None = None, dtype=np.float32):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.stride = stride
        self.W = _glorot(rng, (c_out, c_in, kernel), c_in * kernel, c_out * kernel, dtype)
        self.b = np.zeros(c_out, dtype=dtype)
        self.params = [self.W, self.b]
        self.grads = [np.zeros_like(self.W), np.zeros_like(self.b)]
        self.need_dx = True

    def forward(self, x):
        self._x = x
        return conv1d_cl(x, self.W, self.b, self.stride)

    def backward(self, dy):
        dx, dW, db = conv1d_cl_backward(self._x, self.W, dy, self.stride, self.need_dx)
        self.grads[0][...] = dW
        self.grads[1][...] = db
        return dx

    def describe(self):
        c_out, c_in, k = self.W.shape
        return {"op": "conv1d", "in_channels": c_in, "out_channels": c_out, "kernel": k, "stride": self.stride}

    def out_shape(self, in_shape):
        c_out, c_in, k = self.W.shape
        if len(in_shape) != 2 or in_shape[1] != c_in:
            raise ShapeError(f"conv1d expects (L, {c_in}), got {in_shape}")
        return (conv_out_len(in_shape[0], k, self.stride), c_out)


class MaxPool1d(Layer):
    def __init__(self, kernel: int = 8, stride: int = 2):
        self.kernel = kernel
        self.stride = stride

    def forward(self, x):
        self._shape = x.shape
        y, self._pos = maxpool1d_cl(x, self.kernel, self.stride)
        return y

    def backward(self, dy):
        return maxpool1d_cl_backward(self._shape, self._pos, dy)

    def describe(self):
        return {"op": "maxpool1d", "kernel": self.kernel, "stride": self.stride}

    def out_shape(self, in_shape):
        return (conv_out_len(in_shape[0], self.kernel, self.stride), in_shape[1])


class Flatten(Layer):
    def forward(self, x):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dy):
        return dy.reshape(self._shape)

    def describe(self):
        return {"op": "flatten"}

    def out_shape(self, in_shape):
        return (int(np.prod(in_shape)),)


class Unsqueeze(Layer):
    """[N, L] -> [N, L, 1]: feeds a flat vector to a convolution as one channel."""

    def forward(self, x):
        return x[:, :, None]

    def backward(self, dy):
        return None if dy is None else dy[:, :, 0]

    def describe(self):
        return {"op": "unsqueeze"}

    def out_shape(self, in_shape):
        return tuple(in_shape) + (1,)


class Network:
    def __init__(self, layers: Sequence[Layer], input_shape: tuple[int, ...]):
        self.layers = list(layers)
        self.input_shape = tuple(input_shape)
        self.shapes = self._trace_shapes()
        # a leading convolution never needs to propagate into the raw input
        for layer in self.layers:
            if isinstance(layer, Conv1d):
                layer.need_dx = False
            if layer.params:
                break

    def _trace_shapes(self) -> list[tuple[int, ...]]:
        shapes = [self.input_shape]
        for layer in self.layers:
            shapes.append(tuple(layer.out_shape(shapes[-1])))
        return shapes

    @property
    def params(self) -> list[np.ndarray]:
        return [p for layer in self.layers for p in layer.params]

    @property
    def grads(self) -> list[np.ndarray]:
        return [g for layer in self.layers for g in layer.grads]

    @property
    def dtype(self):
        ps = self.params
        return ps[0].dtype if ps else np.float32

    def forward(self, x: np.ndarray) -> np.ndarray:
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, dy: np.ndarray) -> np.ndarray | None:
        for layer in reversed(self.layers):
            dy = layer.backward(dy)
        return dy

    def loss_and_grads(self, x: np.ndarray, labels: np.ndarray) -> float:
        loss, dlogits = softmax_cross_entropy(self.forward(x), labels)
        self.backward(dlogits.astype(self.dtype, copy=False))
        return loss

    def predict_logits(self, x: np.ndarray, batch_size: int = 1000) -> np.ndarray:
        x = np.asarray(x, dtype=self.dtype)
        out = [self.forward(x[i : i + batch_size]) for i in range(0, len(x), batch_size)]
        if not out:
            return np.zeros((0,) + self.shapes[-1], dtype=self.dtype)
        return np.concatenate(out)

    def describe(self) -> dict:
        return {
            "input_shape": list(self.input_shape),
            "layers": [layer.describe() for layer in self.layers],
            "shapes": [list(s) for s in self.shapes],
        }

    # -------------------------------------------------------------- files

    def save(self, fh: BinaryIO) -> None:
        desc = json.dumps(self.describe(), sort_keys=True, separators=(",", ":")).encode("utf-8")
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<I", len(desc)))
        fh.write(desc)
        for p in self.params:
            fh.write(np.ascontiguousarray(p, dtype="<f4").tobytes())

    def to_bytes(self) -> bytes:
        buf = io.BytesIO()
        self.save(buf)
        return buf.getvalue()

    @classmethod
    def load(cls, fh: BinaryIO, dtype=np.float32) -> "Network":
        if fh.read(len(MODEL_MAGIC)) != MODEL_MAGIC:
            raise ValueError("not a network model file")
        (n,) = struct.unpack("<I", fh.read(4))
        desc = json.loads(fh.read(n).decode("utf-8"))
        net = cls.from_description(desc, dtype=dtype)
        for p in net.params:
            raw = fh.read(p.size * 4)
            if len(raw) != p.size * 4:
                raise ValueError("truncated model file")
            p[...] = np.frombuffer(raw, dtype="<f4").reshape(p.shape)
        return net

    @classmethod
    def from_bytes(cls, data: bytes, dtype=np.float32) -> "Network":
        return cls.load(io.BytesIO(data), dtype=dtype)

    @classmethod
    def from_description(cls, desc: dict, rng: np.random.Generator | None = None, dtype=np.float32) -> "Network":
        layers: list[Layer] = []
        for d in desc["layers"]:
            op = d["op"]
            if op == "linear":
                layers.append(Linear(d["in"], d["out"], rng, dtype))
            elif op == "relu":
                layers.append(ReLU())
            elif op == "conv1d":
                layers.append(Conv1d(d["in_channels"], d["out_channels"], d["kernel"], d["stride"], rng, dtype))
            elif op == "maxpool1d":
                layers.append(MaxPool1d(d["kernel"], d["stride"]))
            elif op == "flatten":
                layers.append(Flatten())
            elif op == "unsqueeze":
                layers.append(Unsqueeze())
            else:
                raise ValueError(f"unknown layer op {op!r}")
        return cls(layers, tuple(desc["input_shape"]))


# ---------------------------------------------------------------- checking


def grad_check(network: Network, x: np.ndarray, labels: np.ndarray, h: float = 1e-4,
               max_entries: int | None = None, seed: int = 0) -> float:
    """Max relative error between backprop and central differences.

    Run on a float64 network. ``max_entries`` limits how many entries per
    parameter array are probed (chosen at random) for larger networks.
    """
    x = np.asarray(x, dtype=network.dtype)
    network.loss_and_grads(x, labels)
    analytic = [g.copy() for g in network.grads]
    rng = np.random.default_rng(seed)
    worst = 0.0
    for p, g in zip(network.params, analytic):
        flat = p.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = rng.choice(flat.size, size=max_entries, replace=False)
        for i in idx:
            old = flat[i]
            flat[i] = old + h
            lp, _ = softmax_cross_entropy(network.forward(x), labels)
            flat[i] = old - h
            lm, _ = softmax_cross_entropy(network.forward(x), labels)
            flat[i] = old
            numeric = (lp - lm) / (2 * h)
            a = g.reshape(-1)[i]
            denom = max(abs(a) + abs(numeric), 1e-8)
            worst = max(worst, abs(a - numeric) / denom)
    return worst
