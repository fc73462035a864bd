"""Dense tensors with reverse-mode gradients.

Small by design: enough operations for the fault encoder and the migration
networks, nothing more. Values are float32; reductions accumulate in float64
before casting back. Gradient verification may cast leaf tensors to float64,
in which case downstream results promote via normal numpy rules.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

from .errors import ShapeError

_FLOAT_KINDS = (np.float32, np.float64)

_grad_enabled = True


class no_grad:
    """Context manager that disables graph construction (inference mode)."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


def _as_array(data) -> np.ndarray:
    arr = np.asarray(data)
    if arr.dtype not in _FLOAT_KINDS:
        arr = arr.astype(np.float32)
    return arr


class Tensor:
    """A dense array plus an optional gradient and backward closure."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_grad_fn")

    def __init__(self, data, requires_grad: bool = False):
        self.data = _as_array(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad) and _grad_enabled
        self._parents: tuple[Tensor, ...] = ()
        self._grad_fn: Callable[[np.ndarray], None] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # Operator sugar used by tests; the model code calls the functions below.
    def __add__(self, other):
        return add(self, _wrap(other))

    def __sub__(self, other):
        return sub(self, _wrap(other))

    def __mul__(self, other):
        return mul(self, _wrap(other))

    def __matmul__(self, other):
        return matmul(self, _wrap(other))

    def __neg__(self):
        return neg(self)


def _wrap(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _make(data: np.ndarray, parents: Sequence[Tensor], grad_fn) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.requires_grad = False
    out._parents = ()
    out._grad_fn = None
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._grad_fn = grad_fn
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not (t.requires_grad or t._grad_fn is not None):
        return
    if t.grad is None:
        t.grad = np.array(g, copy=True)
    else:
        t.grad = t.grad + g


def backward(loss: Tensor) -> None:
    """Backpropagate from a scalar loss, populating .grad along the graph."""
    if loss.size != 1:
        raise ShapeError(f"backward expects a scalar loss, got shape {loss.shape}")
    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, done = stack.pop()
        if done:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node._grad_fn is not None and node.grad is not None:
            node._grad_fn(node.grad)


# ---------------------------------------------------------------------------
# primitives


def add(a: Tensor, b: Tensor) -> Tensor:
    data = a.data + b.data

    def grad_fn(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(g, b.shape))

    return _make(data, (a, b), grad_fn)


def sub(a: Tensor, b: Tensor) -> Tensor:
    data = a.data - b.data

    def grad_fn(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(-g, b.shape))

    return _make(data, (a, b), grad_fn)


def mul(a: Tensor, b: Tensor) -> Tensor:
    data = a.data * b.data

    def grad_fn(g):
        _accum(a, _unbroadcast(g * b.data, a.shape))
        _accum(b, _unbroadcast(g * a.data, b.shape))

    return _make(data, (a, b), grad_fn)


def div(a: Tensor, b: Tensor) -> Tensor:
    data = a.data / b.data

    def grad_fn(g):
        _accum(a, _unbroadcast(g / b.data, a.shape))
        _accum(b, _unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return _make(data, (a, b), grad_fn)


def neg(a: Tensor) -> Tensor:
    def grad_fn(g):
        _accum(a, -g)

    return _make(-a.data, (a,), grad_fn)


def scale(a: Tensor, factor: float) -> Tensor:
    factor = float(factor)

    def grad_fn(g):
        _accum(a, g * factor)

    return _make(a.data * np.asarray(factor, dtype=a.data.dtype), (a,), grad_fn)


def add_const(a: Tensor, value: float) -> Tensor:
    def grad_fn(g):
        _accum(a, g)

    return _make(a.data + np.asarray(float(value), dtype=a.data.dtype), (a,), grad_fn)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.shape} @ {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dims differ: {a.shape} @ {b.shape}")
    data = a.data @ b.data

    def grad_fn(g):
        _accum(a, g @ b.data.T)
        _accum(b, a.data.T @ g)

    return _make(data, (a, b), grad_fn)


def transpose(a: Tensor) -> Tensor:
    if a.ndim != 2:
        raise ShapeError(f"transpose expects a 2-D tensor, got {a.shape}")

    def grad_fn(g):
        _accum(a, g.T)

    return _make(a.data.T.copy(), (a,), grad_fn)


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    data = a.data.reshape(shape)

    def grad_fn(g):
        _accum(a, g.reshape(a.shape))

    return _make(data, (a,), grad_fn)


def rows(a: Tensor, start: int, stop: int) -> Tensor:
    """Slice rows [start, stop) along axis 0."""
    data = a.data[start:stop].copy()

    def grad_fn(g):
        full = np.zeros_like(a.data)
        full[start:stop] = g
        _accum(a, full)

    return _make(data, (a,), grad_fn)


def concat(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    parts = list(parts)
    if not parts:
        raise ShapeError("concat needs at least one tensor")
    data = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def grad_fn(g):
        for p, piece in zip(parts, np.split(g, splits, axis=axis)):
            _accum(p, piece)

    return _make(data, parts, grad_fn)


def tsum(a: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    data = np.sum(a.data, axis=axis, dtype=np.float64, keepdims=keepdims)
    data = np.asarray(data, dtype=a.data.dtype)

    def grad_fn(g):
        if axis is None:
            _accum(a, np.broadcast_to(g, a.shape).copy())
        else:
            ge = g if keepdims else np.expand_dims(g, axis)
            _accum(a, np.broadcast_to(ge, a.shape).copy())

    return _make(data, (a,), grad_fn)


def tmean(a: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    count = a.size if axis is None else a.shape[axis]
    data = np.mean(a.data, axis=axis, dtype=np.float64, keepdims=keepdims)
    data = np.asarray(data, dtype=a.data.dtype)

    def grad_fn(g):
        gg = g / count
        if axis is None:
            _accum(a, np.broadcast_to(gg, a.shape).copy())
        else:
            ge = gg if keepdims else np.expand_dims(gg, axis)
            _accum(a, np.broadcast_to(ge, a.shape).copy())

    return _make(data, (a,), grad_fn)


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)

    def grad_fn(g):
        _accum(a, g * out * (1.0 - out))

    return _make(out, (a,), grad_fn)


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)

    def grad_fn(g):
        _accum(a, g * (1.0 - out * out))

    return _make(out, (a,), grad_fn)


def relu(a: Tensor) -> Tensor:
    out = np.maximum(a.data, 0.0)

    def grad_fn(g):
        _accum(a, g * (a.data > 0))

    return _make(out, (a,), grad_fn)


def leaky_relu(a: Tensor, slope: float = 0.2) -> Tensor:
    out = np.where(a.data > 0, a.data, a.data * slope)

    def grad_fn(g):
        _accum(a, g * np.where(a.data > 0, 1.0, slope).astype(g.dtype))

    return _make(np.asarray(out, dtype=a.data.dtype), (a,), grad_fn)


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)

    def grad_fn(g):
        _accum(a, g * out)

    return _make(out, (a,), grad_fn)


def log(a: Tensor) -> Tensor:
    def grad_fn(g):
        _accum(a, g / a.data)

    return _make(np.log(a.data), (a,), grad_fn)


def sqrt(a: Tensor) -> Tensor:
    out = np.sqrt(a.data)

    def grad_fn(g):
        _accum(a, g / (2.0 * out))

    return _make(out, (a,), grad_fn)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    x = a.data
    shifted = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(shifted)
    denom = np.sum(e, axis=axis, dtype=np.float64, keepdims=True)
    out = np.asarray(e / denom, dtype=x.dtype)

    def grad_fn(g):
        dot = np.sum(g * out, axis=axis, keepdims=True)
        _accum(a, out * (g - dot))

    return _make(out, (a,), grad_fn)


def max_along(a: Tensor, axis: int = -1) -> Tensor:
    """Max along one axis; the gradient routes to the first argmax entry."""
    idx = np.argmax(a.data, axis=axis)
    out = np.take_along_axis(a.data, np.expand_dims(idx, axis), axis=axis).squeeze(axis)

    def grad_fn(g):
        full = np.zeros_like(a.data)
        np.put_along_axis(full, np.expand_dims(idx, axis), np.expand_dims(g, axis), axis=axis)
        _accum(a, full)

    return _make(out.copy(), (a,), grad_fn)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis, then apply a learned affine map."""
    data = x.data
    n = data.shape[-1]
    mu = np.mean(data, axis=-1, dtype=np.float64, keepdims=True)
    var = np.mean((data - mu) ** 2, axis=-1, dtype=np.float64, keepdims=True)
    inv = np.asarray(1.0 / np.sqrt(var + eps), dtype=data.dtype)
    xhat = np.asarray((data - mu) * inv, dtype=data.dtype)
    out = xhat * gain.data + bias.data

    def grad_fn(g):
        dxhat = g * gain.data
        m1 = np.mean(dxhat, axis=-1, keepdims=True)
        m2 = np.mean(dxhat * xhat, axis=-1, keepdims=True)
        _accum(x, inv * (dxhat - m1 - xhat * m2))
        lead = tuple(range(g.ndim - 1))
        _accum(gain, _unbroadcast((g * xhat).sum(axis=lead) if lead else g * xhat, gain.shape))
        _accum(bias, _unbroadcast(g.sum(axis=lead) if lead else g, bias.shape))

    return _make(out, (x, gain, bias), grad_fn)


# ---------------------------------------------------------------------------
# composites


def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    return add(matmul(x, weight), bias)


def attention(q: Tensor, k: Tensor, v: Tensor) -> tuple[Tensor, Tensor]:
    """Scaled dot-product attention; returns (output, weights)."""
    dk = q.shape[-1]
    scores = scale(matmul(q, transpose(k)), 1.0 / math.sqrt(dk))
    weights = softmax(scores, axis=-1)
    return matmul(weights, v), weights


def scaled_dot_attention(q: Tensor, k: Tensor, v: Tensor) -> Tensor:
    out, _ = attention(q, k, v)
    return out


def multi_head_attention(
    q_in: Tensor, k_in: Tensor, v_in: Tensor, heads: Sequence[dict]
) -> tuple[Tensor, list[np.ndarray]]:
    """Concatenated per-head attention, one projection triple per head.

    Each head is a dict with keys wq, wk, wv mapping to weight tensors. The
    head outputs are concatenated along the feature axis with no extra output
    projection.
    """
    outs = []
    weights = []
    for head in heads:
        out, w = attention(
            matmul(q_in, head["wq"]), matmul(k_in, head["wk"]), matmul(v_in, head["wv"])
        )
        outs.append(out)
        weights.append(np.array(w.data, dtype=np.float64))
    return concat(outs, axis=1), weights


def gru_cell(x: Tensor, h: Tensor, params: dict) -> Tensor:
    """One GRU step.

    z = sigmoid(W_z [x; h] + b_z)
    r = sigmoid(W_r [x; h] + b_r)
    n = tanh(W_n [x; r*h] + b_n)
    h' = (1 - z) * n + z * h
    """
    xh = concat([x, h], axis=1)
    z = sigmoid(linear(xh, params["w_z"], params["b_z"]))
    r = sigmoid(linear(xh, params["w_r"], params["b_r"]))
    xrh = concat([x, mul(r, h)], axis=1)
    n = tanh(linear(xrh, params["w_n"], params["b_n"]))
    ones = Tensor(np.ones_like(z.data))
    return add(mul(sub(ones, z), n), mul(z, h))
