"""Tensor type, storage precision and the reverse-mode backward pass.

Values are stored in the active storage dtype (float32 by default) while
every op computes in float64 and gradients are accumulated in float64.
``precision("float64")`` switches storage for gradient checks.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Sequence

import numpy as np

from ..errors import DomainError, GraphError

_STATE = {"dtype": np.float32, "grad": True}


def get_precision():
    return _STATE["dtype"]


def set_precision(name) -> None:
    dtype = np.dtype(name).type
    if dtype not in (np.float32, np.float64):
        raise DomainError(f"unsupported storage precision {name!r}")
    _STATE["dtype"] = dtype


@contextlib.contextmanager
def precision(name):
    old = _STATE["dtype"]
    set_precision(name)
    try:
        yield
    finally:
        _STATE["dtype"] = old


@contextlib.contextmanager
def no_grad():
    """Build no graph: ops return plain constant tensors."""
    old = _STATE["grad"]
    _STATE["grad"] = False
    try:
        yield
    finally:
        _STATE["grad"] = old


def grad_enabled() -> bool:
    return _STATE["grad"]


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "op", "_parents", "_backward", "_consumed")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=_STATE["dtype"])
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self.op = None
        self._parents: tuple = ()
        self._backward: Callable | None = None
        self._consumed = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self.op is None

    def f64(self) -> np.ndarray:
        return self.data.astype(np.float64, copy=False)

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, op={self.op}, requires_grad={self.requires_grad})"

    # operator sugar, resolved lazily to avoid an import cycle
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        from . import ops
        return ops.scale(self, -1.0)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def __getitem__(self, index):
        from . import ops
        return ops.slice(self, index)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def make_node(data: np.ndarray, parents: Sequence[Tensor], backward: Callable, op: str) -> Tensor:
    """Wrap an op result; ``backward(g)`` returns one gradient (or None) per parent."""
    out = Tensor(data)
    if _STATE["grad"] and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.op = op
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _topological(loss: Tensor) -> list[Tensor]:
    order, seen = [], set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(loss: Tensor) -> dict:
    """Reverse-mode accumulation from a scalar ``loss``.

    Returns ``{leaf: gradient}`` for every trainable leaf reached and also
    stores each gradient in ``leaf.grad``.  A graph can be traversed once;
    leaves must have their gradients reset (``zero_grad``) before the next
    backward pass.
    """
    if loss.data.size != 1:
        raise DomainError(f"backward: loss must be scalar, got shape {loss.shape}")
    if loss._consumed:
        raise GraphError("backward: graph already consumed; rebuild it for another pass")
    if not loss.requires_grad:
        return {}
    order = _topological(loss)
    leaves = [n for n in order if n.is_leaf]
    stale = [n for n in leaves if n.grad is not None]
    if stale:
        raise GraphError(f"backward: {len(stale)} leaf gradient(s) not reset since the last pass")
    # any consumed interior node means part of this graph was already traversed
    if any(n._consumed for n in order):
        raise GraphError("backward: graph already consumed; rebuild it for another pass")

    grads = {id(loss): np.ones(loss.shape, dtype=np.float64)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.is_leaf:
            node.grad = g
            continue
        parent_grads = node._backward(g)
        for parent, pg in zip(node._parents, parent_grads):
            if pg is None or not parent.requires_grad:
                continue
            if pg.shape != parent.shape:
                raise GraphError(f"{node.op}: gradient shape {pg.shape} != input shape {parent.shape}")
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
    for node in order:
        if not node.is_leaf:
            node._consumed = True
            node._backward = None
            node._parents = ()
    loss._consumed = True
    return {leaf: leaf.grad for leaf in leaves if leaf.grad is not None}
