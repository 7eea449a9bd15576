"""Differentiable operators.  Forward values are computed in float64 and
stored in the active precision; backward closures return float64."""

from __future__ import annotations

import math

import numpy as np

from .. import deephit as dh
from ..errors import DomainError, ShapeError
from .tensor import Tensor, as_tensor, make_node

MASK_VALUE = -1e9
_GELU_C = math.sqrt(2.0 / math.pi)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum ``g`` down to ``shape`` after numpy broadcasting."""
    if g.shape == tuple(shape):
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _broadcast_shape(op, a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(op, a.shape, b.shape) from None


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)

    def back(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return make_node(a.f64() + b.f64(), (a, b), back, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a, b)

    def back(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return make_node(a.f64() - b.f64(), (a, b), back, "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a, b)
    av, bv = a.f64(), b.f64()

    def back(g):
        return (_unbroadcast(g * bv, a.shape) if a.requires_grad else None,
                _unbroadcast(g * av, b.shape) if b.requires_grad else None)

    return make_node(av * bv, (a, b), back, "mul")


def scale(a, c: float) -> Tensor:
    a = as_tensor(a)
    c = float(c)
    return make_node(a.f64() * c, (a,), lambda g: (g * c,), "scale")


def matmul(a, b) -> Tensor:
    """Batched matrix product over the last two axes (leading axes broadcast)."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError("matmul", a.shape, b.shape)
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise ShapeError("matmul", a.shape, b.shape) from None
    av, bv = a.f64(), b.f64()

    def back(g):
        ga = _unbroadcast(g @ np.swapaxes(bv, -1, -2), a.shape) if a.requires_grad else None
        gb = _unbroadcast(np.swapaxes(av, -1, -2) @ g, b.shape) if b.requires_grad else None
        return ga, gb

    return make_node(av @ bv, (a, b), back, "matmul")


def row_softmax(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    z = x.f64()
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=axis, keepdims=True)

    def back(g):
        return (p * (g - np.sum(g * p, axis=axis, keepdims=True)),)

    return make_node(p, (x,), back, "row_softmax")


def layer_norm(x, gamma=None, beta=None, eps: float = 1e-5) -> Tensor:
    """Normalise the last axis to zero mean and unit variance, then apply
    the optional affine ``gamma * xhat + beta``."""
    x = as_tensor(x)
    parents = [x]
    d = x.shape[-1]
    if gamma is not None:
        gamma = as_tensor(gamma)
        if gamma.shape != (d,):
            raise ShapeError("layer_norm", x.shape, gamma.shape)
        parents.append(gamma)
    if beta is not None:
        beta = as_tensor(beta)
        if beta.shape != (d,):
            raise ShapeError("layer_norm", x.shape, beta.shape)
        parents.append(beta)
    xv = x.f64()
    mu = xv.mean(axis=-1, keepdims=True)
    xc = xv - mu
    var = np.mean(xc * xc, axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    gv = gamma.f64() if gamma is not None else None
    out = xhat * gv if gv is not None else xhat
    if beta is not None:
        out = out + beta.f64()

    def back(g):
        gx_hat = g * gv if gv is not None else g
        gx = inv * (gx_hat - gx_hat.mean(axis=-1, keepdims=True)
                    - xhat * np.mean(gx_hat * xhat, axis=-1, keepdims=True))
        res = [gx]
        lead = tuple(range(g.ndim - 1))
        if gamma is not None:
            res.append(np.sum(g * xhat, axis=lead))
        if beta is not None:
            res.append(np.sum(g, axis=lead))
        return tuple(res)

    return make_node(out, parents, back, "layer_norm")


def gelu(x) -> Tensor:
    """Tanh approximation of the Gaussian error linear unit."""
    x = as_tensor(x)
    v = x.f64()
    u = _GELU_C * (v + 0.044715 * v**3)
    th = np.tanh(u)
    out = 0.5 * v * (1.0 + th)

    def back(g):
        du = _GELU_C * (1.0 + 3 * 0.044715 * v**2)
        return (g * (0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * du),)

    return make_node(out, (x,), back, "gelu")


def relu(x) -> Tensor:
    x = as_tensor(x)
    v = x.f64()
    on = v > 0
    return make_node(np.where(on, v, 0.0), (x,), lambda g: (g * on,), "relu")


def exp(x) -> Tensor:
    x = as_tensor(x)
    out = np.exp(x.f64())
    return make_node(out, (x,), lambda g: (g * out,), "exp")


def log(x) -> Tensor:
    x = as_tensor(x)
    v = x.f64()
    if np.any(v <= 0):
        raise DomainError("log: input must be > 0")
    return make_node(np.log(v), (x,), lambda g: (g / v,), "log")


def tanh(x) -> Tensor:
    x = as_tensor(x)
    out = np.tanh(x.f64())
    return make_node(out, (x,), lambda g: (g * (1.0 - out * out),), "tanh")


def sum(x, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001 - op name
    x = as_tensor(x)
    out = np.sum(x.f64(), axis=axis, keepdims=keepdims)

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return make_node(out, (x,), back, "sum")


def mean(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    if axis is None:
        count = x.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        count = int(np.prod([x.shape[a] for a in axes]))
    return scale(sum(x, axis=axis, keepdims=keepdims), 1.0 / count)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise DomainError("concat: no inputs")
    nd = tensors[0].ndim
    ax = axis % nd
    for t in tensors[1:]:
        if t.ndim != nd or any(s != r for i, (s, r) in enumerate(zip(t.shape, tensors[0].shape)) if i != ax):
            raise ShapeError("concat", tensors[0].shape, t.shape)
    sizes = [t.shape[ax] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def back(g):
        return tuple(np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=ax) for i in range(len(tensors)))

    return make_node(np.concatenate([t.f64() for t in tensors], axis=ax), tensors, back, "concat")


def slice(x, index) -> Tensor:  # noqa: A001 - op name
    """``x[index]`` for basic or integer-array indices."""
    x = as_tensor(x)
    try:
        out = x.f64()[index]
    except IndexError as exc:
        raise ShapeError("slice", x.shape, ()) from exc

    def back(g):
        full = np.zeros(x.shape, dtype=np.float64)
        np.add.at(full, index, g)
        return (full,)

    return make_node(np.array(out), (x,), back, "slice")


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    try:
        out = x.f64().reshape(shape)
    except ValueError:
        raise ShapeError("reshape", x.shape, tuple(np.atleast_1d(shape))) from None
    return make_node(out, (x,), lambda g: (g.reshape(x.shape),), "reshape")


def transpose(x, axes=None) -> Tensor:
    x = as_tensor(x)
    axes = tuple(reversed(range(x.ndim))) if axes is None else tuple(axes)
    if sorted(axes) != list(range(x.ndim)):
        raise ShapeError("transpose", x.shape, axes)
    inv = tuple(np.argsort(axes))
    return make_node(np.transpose(x.f64(), axes), (x,), lambda g: (np.transpose(g, inv),), "transpose")


def masked_fill(x, mask, value: float = MASK_VALUE) -> Tensor:
    """Additive masking: positions where ``mask`` is True get ``value`` added."""
    x = as_tensor(x)
    mask = np.asarray(mask, dtype=bool)
    try:
        np.broadcast_shapes(x.shape, mask.shape)
    except ValueError:
        raise ShapeError("masked_fill", x.shape, mask.shape) from None
    out = x.f64() + np.where(mask, value, 0.0)
    if out.shape != x.shape:
        raise ShapeError("masked_fill", x.shape, mask.shape)
    return make_node(out, (x,), lambda g: (g,), "masked_fill")


def one_hot(indices, n_classes: int) -> Tensor:
    idx = np.asarray(indices, dtype=np.intp)
    if np.any((idx < 0) | (idx >= n_classes)):
        raise DomainError("one_hot: index out of range")
    return Tensor(np.eye(n_classes)[idx])


def embedding_select(table, indices) -> Tensor:
    table = as_tensor(table)
    idx = np.asarray(indices, dtype=np.intp)
    if table.ndim != 2 or np.any((idx < 0) | (idx >= table.shape[0])):
        raise ShapeError("embedding_select", table.shape, idx.shape)

    def back(g):
        full = np.zeros(table.shape, dtype=np.float64)
        np.add.at(full, idx, g)
        return (full,)

    return make_node(table.f64()[idx], (table,), back, "embedding_select")


def deephit_loss(logits, bin_idx, event, alpha: float = 0.5, sigma: float = 0.1) -> Tensor:
    """Fused softmax + DeepHit loss over rows of ``logits``."""
    logits = as_tensor(logits)
    if logits.ndim != 2:
        raise ShapeError("deephit_loss", logits.shape, np.shape(bin_idx))
    value, grad = dh.deephit_loss_grad(logits.f64(), bin_idx, event, alpha, sigma)
    return make_node(np.array(value), (logits,), lambda g: (g * grad,), "deephit_loss")
