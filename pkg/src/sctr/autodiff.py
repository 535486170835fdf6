"""A small reverse-mode autodiff engine over numpy arrays.

Only the primitives needed by the ALTF forward graph are provided. Every
primitive returns a :class:`Node` holding its value and a closure mapping the
output gradient to the gradients of its inputs. :func:`backward` walks the
graph in reverse topological order and accumulates into
:attr:`Parameter.grad`.
"""

from __future__ import annotations

import itertools

import numpy as np

from .errors import NumericalError

_ids = itertools.count()


class Node:
    __slots__ = ("value", "parents", "backward_fn", "op", "requires_grad")

    def __init__(self, value, parents=(), backward_fn=None, op="const"):
        self.value = np.asarray(value)
        self.parents = tuple(parents)
        self.backward_fn = backward_fn
        self.op = op
        self.requires_grad = any(p.requires_grad for p in self.parents)

    @property
    def shape(self):
        return self.value.shape

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, scale(_lift(other), -1.0))

    def __mul__(self, other):
        if np.isscalar(other):
            return scale(self, float(other))
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        return f"{type(self).__name__}(op={self.op}, shape={self.value.shape})"


class Parameter(Node):
    """A trainable leaf. ``grad`` accumulates across backward passes until zeroed."""

    __slots__ = ("id", "grad", "name")

    def __init__(self, value, name: str | None = None):
        super().__init__(np.array(value, copy=True), op="param")
        self.requires_grad = True
        self.id = next(_ids)
        self.name = name or f"p{self.id}"
        self.grad = np.zeros_like(self.value)

    def zero_grad(self):
        self.grad = np.zeros_like(self.value)


def zero_grad(params):
    for p in params:
        p.zero_grad()


def _lift(x) -> Node:
    return x if isinstance(x, Node) else Node(x)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# ---------------------------------------------------------------- primitives


def add(a, b) -> Node:
    a, b = _lift(a), _lift(b)
    sa, sb = a.shape, b.shape
    return Node(a.value + b.value, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)), "add")


def mul(a, b) -> Node:
    a, b = _lift(a), _lift(b)
    av, bv = a.value, b.value
    return Node(
        av * bv,
        (a, b),
        lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)),
        "mul",
    )


def scale(a, c: float) -> Node:
    a = _lift(a)
    return Node(a.value * c, (a,), lambda g: (g * c,), "scale")


def matmul(a, b) -> Node:
    a, b = _lift(a), _lift(b)
    av, bv = a.value, b.value
    return Node(av @ bv, (a, b), lambda g: (g @ bv.T, av.T @ g), "matmul")


def transpose(a) -> Node:
    a = _lift(a)
    return Node(a.value.T, (a,), lambda g: (g.T,), "transpose")


def reshape(a, shape) -> Node:
    a = _lift(a)
    old = a.shape
    return Node(a.value.reshape(shape), (a,), lambda g: (g.reshape(old),), "reshape")


def sin(a) -> Node:
    a = _lift(a)
    c = np.cos(a.value)
    return Node(np.sin(a.value), (a,), lambda g: (g * c,), "sin")


def relu(a) -> Node:
    a = _lift(a)
    on = a.value > 0
    return Node(np.where(on, a.value, 0), (a,), lambda g: (g * on,), "relu")


def softmax(a, axis: int = -1) -> Node:
    a = _lift(a)
    z = a.value - a.value.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)
    return Node(s, (a,), lambda g: (s * (g - np.sum(g * s, axis=axis, keepdims=True)),), "softmax")


def mode_n_product(t, m, mode: int) -> Node:
    """``t ×_mode m`` for a 3rd-order ``t`` and ``m`` of shape (J, I_mode)."""
    t, m = _lift(t), _lift(m)
    if mode not in (1, 2, 3):
        raise ValueError(f"mode must be 1, 2 or 3, got {mode!r}")
    ax = mode - 1
    tv, mv = t.value, m.value
    if mv.ndim != 2 or mv.shape[1] != tv.shape[ax]:
        raise ValueError(f"matrix {mv.shape} incompatible with mode-{mode} length {tv.shape[ax]}")
    out = np.moveaxis(np.tensordot(tv, mv, axes=([ax], [1])), -1, ax)
    others = [i for i in range(3) if i != ax]

    def back(g):
        gt = np.moveaxis(np.tensordot(g, mv, axes=([ax], [0])), -1, ax)
        gm = np.tensordot(g, tv, axes=(others, others))
        return gt, gm

    return Node(np.ascontiguousarray(out), (t, m), back, f"mode{mode}_product")


def sum_all(a) -> Node:
    a = _lift(a)
    shape, dt = a.shape, a.value.dtype
    return Node(a.value.sum(), (a,), lambda g: (np.broadcast_to(g, shape).astype(dt),), "sum")


def masked_sse(pred, target, mask) -> Node:
    """Sum of squared errors over the entries where ``mask`` is True."""
    pred = _lift(pred)
    m = np.asarray(mask, dtype=bool)
    r = np.where(m, pred.value - np.asarray(target, dtype=pred.value.dtype), 0)
    return Node(np.sum(r * r), (pred,), lambda g: (2 * g * r,), "masked_sse")


def mean_squared(pred, target, mask=None) -> Node:
    pred = _lift(pred)
    if mask is None:
        mask = np.ones(pred.shape, dtype=bool)
    count = int(np.count_nonzero(mask))
    if count == 0:
        raise ValueError("mean_squared over an empty mask")
    return scale(masked_sse(pred, target, mask), 1.0 / count)


def add_n(nodes) -> Node:
    nodes = [_lift(n) for n in nodes]
    shapes = [n.shape for n in nodes]
    total = nodes[0].value
    for n in nodes[1:]:
        total = total + n.value
    return Node(total, nodes, lambda g: tuple(_unbroadcast(g, s) for s in shapes), "add_n")


# ------------------------------------------------------------------ backward


def _topo_order(root: Node) -> list[Node]:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen or not node.requires_grad:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen and p.requires_grad:
                stack.append((p, False))
    return order


def backward(loss: Node) -> None:
    """Accumulate d(loss)/d(param) into every reachable Parameter's ``grad``."""
    if loss.value.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not np.isfinite(loss.value).all():
        raise NumericalError(f"non-finite loss at node {loss.op}", node=loss.op)
    grads = {id(loss): np.ones_like(loss.value)}
    for node in reversed(_topo_order(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient at node {node.op}", node=node.op)
        if isinstance(node, Parameter):
            node.grad = node.grad + g.reshape(node.value.shape)
            continue
        if node.backward_fn is None:
            continue
        for p, pg in zip(node.parents, node.backward_fn(g)):
            if not p.requires_grad:
                continue
            key = id(p)
            grads[key] = grads[key] + pg if key in grads else pg
