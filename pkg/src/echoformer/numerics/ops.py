"""Differentiable operations.

Every function takes/returns Tensor and registers a closed-form backward on
the tape. Shapes follow numpy broadcasting; gradients of broadcast operands
are summed back down to the operand shape. All ops are pure: inputs are
never mutated, and identical inputs give bitwise-identical outputs.
"""

from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import erf as _erf

from ..errors import ConfigurationError, DegenerateInputError, ShapeMismatchError
from .tensor import Tensor, as_tensor

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum gradient g down to `shape` (inverse of numpy broadcasting)."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    keep = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if keep:
        g = g.sum(axis=keep, keepdims=True)
    return g


# -- arithmetic ----------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data + b.data

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return Tensor.from_op(out, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data - b.data

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return Tensor.from_op(out, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data * b.data

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return Tensor.from_op(out, (a, b), backward)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data

    def backward(g):
        ga = _unbroadcast(g / b.data, a.shape)
        gb = _unbroadcast(-g * a.data / (b.data * b.data), b.shape)
        return ga, gb

    return Tensor.from_op(out, (a, b), backward)


def neg(a) -> Tensor:
    a = as_tensor(a)
    return Tensor.from_op(-a.data, (a,), lambda g: (-g,))


def absolute(a) -> Tensor:
    """|a| elementwise; subgradient 0 at exactly 0."""
    a = as_tensor(a)
    out = np.abs(a.data)

    def backward(g):
        return (g * np.sign(a.data),)

    return Tensor.from_op(out, (a,), backward)


def log(a, floor: float = 0.0) -> Tensor:
    """Natural log of max(a, floor); floor > 0 guards against log(0)."""
    a = as_tensor(a)
    clamped = np.maximum(a.data, floor) if floor > 0.0 else a.data
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.log(clamped)

    def backward(g):
        grad = g / clamped
        if floor > 0.0:
            grad = np.where(a.data >= floor, grad, 0.0)
        return (grad,)

    return Tensor.from_op(out, (a,), backward)


def matmul(a, b) -> Tensor:
    """Batched matrix product a @ b; batch dims must match (no broadcasting)."""
    a, b = as_tensor(a), as_tensor(b)
    out = a.data @ b.data

    def backward(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return Tensor.from_op(out, (a, b), backward)


# -- reductions / shaping --------------------------------------------------------


def reduce_sum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return Tensor.from_op(out, (a,), backward)


def reduce_mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    n = a.data.size if axis is None else a.data.shape[axis]
    return div(reduce_sum(a, axis=axis, keepdims=keepdims), float(n))


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    out = a.data.reshape(shape)

    def backward(g):
        return (g.reshape(a.shape),)

    return Tensor.from_op(out, (a,), backward)


def permute(a, axes) -> Tensor:
    a = as_tensor(a)
    out = np.transpose(a.data, axes)
    inv = np.argsort(axes)

    def backward(g):
        return (np.transpose(g, inv),)

    return Tensor.from_op(out, (a,), backward)


def leading_rows(a, n: int) -> Tensor:
    """First n rows along axis 0 (used to crop positional embeddings)."""
    a = as_tensor(a)
    out = a.data[:n].copy()

    def backward(g):
        full = np.zeros_like(a.data)
        full[:n] = g
        return (full,)

    return Tensor.from_op(out, (a,), backward)


def take_per_row(a, idx: np.ndarray) -> Tensor:
    """y[i] = a[i, idx[i]] for a 2-D tensor."""
    a = as_tensor(a)
    idx = np.asarray(idx, dtype=np.intp)
    rows = np.arange(a.shape[0])
    out = a.data[rows, idx]

    def backward(g):
        full = np.zeros_like(a.data)
        np.add.at(full, (rows, idx), g)
        return (full,)

    return Tensor.from_op(out, (a,), backward)


def stack_scalars(items) -> Tensor:
    """Stack scalar tensors into a 1-D tensor."""
    items = [as_tensor(x) for x in items]
    out = np.array([t.data.reshape(()) for t in items])

    def backward(g):
        return tuple(np.asarray(gi) for gi in g)

    return Tensor.from_op(out, tuple(items), backward)


# -- activations -----------------------------------------------------------------


def gelu(a) -> Tensor:
    """x * Phi(x) with the exact normal CDF (erf form, not tanh approximation)."""
    a = as_tensor(a)
    cdf = 0.5 * (1.0 + _erf(a.data * _INV_SQRT2))
    out = a.data * cdf

    def backward(g):
        pdf = _INV_SQRT2PI * np.exp(-0.5 * a.data * a.data)
        return (g * (cdf + a.data * pdf),)

    return Tensor.from_op(out, (a,), backward)


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)

    def backward(g):
        return (g * (1.0 - out * out),)

    return Tensor.from_op(out, (a,), backward)


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out = np.where(a.data >= 0, 1.0 / (1.0 + np.exp(-np.abs(a.data))),
                   np.exp(-np.abs(a.data)) / (1.0 + np.exp(-np.abs(a.data))))

    def backward(g):
        return (g * out * (1.0 - out),)

    return Tensor.from_op(out, (a,), backward)


_ACTIVATIONS = {"gelu": gelu, "tanh": tanh, "sigmoid": sigmoid}


def activation(kind: str, a) -> Tensor:
    """Dispatch by name; kinds: gelu, tanh, sigmoid."""
    try:
        fn = _ACTIVATIONS[kind]
    except KeyError:
        raise ConfigurationError(
            f"unknown activation kind {kind!r}; expected one of {sorted(_ACTIVATIONS)}"
        ) from None
    return fn(a)


# -- neural-net building blocks ----------------------------------------------------


def linear(x, weights, bias) -> Tensor:
    """y = x @ W + b along the last axis. W: (d_in, d_out), b: (d_out,)."""
    x, weights, bias = as_tensor(x), as_tensor(weights), as_tensor(bias)
    if x.shape[-1] != weights.shape[0]:
        raise ShapeMismatchError(
            f"linear: input shape {x.shape} does not match weights shape {weights.shape}"
        )
    if weights.shape[1] != bias.shape[-1]:
        raise ShapeMismatchError(
            f"linear: weights shape {weights.shape} does not match bias shape {bias.shape}"
        )
    out = x.data @ weights.data + bias.data

    def backward(g):
        gx = g @ weights.data.T
        x2 = x.data.reshape(-1, x.shape[-1])
        g2 = g.reshape(-1, g.shape[-1])
        gw = x2.T @ g2
        gb = g2.sum(axis=0)
        return gx, gw, gb

    return Tensor.from_op(out, (x, weights, bias), backward)


def layer_norm(x, gain, bias, eps: float = 1e-5) -> Tensor:
    """Standardize the last axis to mean 0 / variance 1, then scale and shift."""
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    d = x.shape[-1] if x.data.ndim else 0
    if d == 0:
        raise DegenerateInputError("layer_norm: last axis is empty")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = gain.data * xhat + bias.data

    def backward(g):
        gh = g * gain.data
        # d/dx of (x - mu) / sqrt(var + eps), var and mu both depend on x
        gx = inv * (gh - gh.mean(axis=-1, keepdims=True)
                    - xhat * (gh * xhat).mean(axis=-1, keepdims=True))
        axes = tuple(range(g.ndim - 1))
        ggain = (g * xhat).sum(axis=axes)
        gbias = g.sum(axis=axes)
        return gx, _unbroadcast(ggain, gain.shape), _unbroadcast(gbias, bias.shape)

    return Tensor.from_op(out, (x, gain, bias), backward)


def masked_softmax(scores, mask) -> Tensor:
    """Softmax over the last axis restricted to mask==True positions.

    Masked positions get exactly 0; each row's live entries sum to 1.
    mask broadcasts against scores' trailing axis.
    """
    scores = as_tensor(scores)
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), scores.shape)
    if not mask.any(axis=-1).all():
        raise DegenerateInputError("masked_softmax: a row has no unmasked position")
    neg = np.where(mask, scores.data, -np.inf)
    m = neg.max(axis=-1, keepdims=True)
    e = np.where(mask, np.exp(neg - m), 0.0)
    out = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        inner = (g * out).sum(axis=-1, keepdims=True)
        return (out * (g - inner),)

    return Tensor.from_op(out, (scores,), backward)


def conv2d(x, weights, bias, stride: int = 1, padding: int = 1) -> Tensor:
    """2-D convolution via im2col. x: (N,Ci,H,W), weights: (Co,Ci,k,k), bias: (Co,)."""
    x, weights, bias = as_tensor(x), as_tensor(weights), as_tensor(bias)
    n, ci, h, w = x.shape
    co, ci_w, k, k2 = weights.shape
    if ci != ci_w or k != k2:
        raise ShapeMismatchError(
            f"conv2d: input shape {x.shape} does not match weights shape {weights.shape}"
        )
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    ho = (h + 2 * padding - k) // stride + 1
    wo = (w + 2 * padding - k) // stride + 1
    win = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, ci * k * k)
    w2 = weights.data.reshape(co, ci * k * k)
    y = cols @ w2.T + bias.data
    out = y.reshape(n, ho, wo, co).transpose(0, 3, 1, 2)

    def backward(g):
        g2 = g.transpose(0, 2, 3, 1).reshape(n * ho * wo, co)
        gw = (g2.T @ cols).reshape(weights.shape)
        gb = g2.sum(axis=0)
        gcols = (g2 @ w2).reshape(n, ho, wo, ci, k, k)
        gxp = np.zeros_like(xp)
        for di in range(k):
            for dj in range(k):
                gxp[:, :, di:di + stride * ho:stride, dj:dj + stride * wo:stride] += (
                    gcols[:, :, :, :, di, dj].transpose(0, 3, 1, 2)
                )
        gx = gxp[:, :, padding:padding + h, padding:padding + w] if padding else gxp
        return gx, gw, gb

    return Tensor.from_op(out, (x, weights, bias), backward)


def dropout(x, p: float, rng: np.random.Generator | None, training: bool) -> Tensor:
    """Inverted dropout; identity when not training or p == 0."""
    x = as_tensor(x)
    if not training or p <= 0.0:
        return x
    if rng is None:
        raise ConfigurationError("dropout in training mode needs an rng")
    keep = (rng.random(x.shape) >= p).astype(x.dtype) / x.dtype.type(1.0 - p)

    def backward(g):
        return (g * keep,)

    return Tensor.from_op(x.data * keep, (x,), backward)


# -- Tensor operator sugar ----------------------------------------------------------

Tensor.__add__ = lambda self, other: add(self, other)
Tensor.__radd__ = lambda self, other: add(other, self)
Tensor.__sub__ = lambda self, other: sub(self, other)
Tensor.__rsub__ = lambda self, other: sub(other, self)
Tensor.__mul__ = lambda self, other: mul(self, other)
Tensor.__rmul__ = lambda self, other: mul(other, self)
Tensor.__truediv__ = lambda self, other: div(self, other)
Tensor.__rtruediv__ = lambda self, other: div(other, self)
Tensor.__neg__ = lambda self: neg(self)
Tensor.__matmul__ = lambda self, other: matmul(self, other)
