"""Reverse-mode differentiation over dense float64 arrays of rank <= 2.

Every op returns a new :class:`Value` holding its forward result and a
closure that pushes the incoming gradient to its parents.  Nodes that do
not depend on any trainable leaf carry no closure, so constant feature
matrices cost nothing on the backward pass.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Value",
    "ShapeMismatch",
    "NonScalarLoss",
    "as_value",
    "backward",
    "add",
    "sub",
    "mul",
    "neg",
    "matmul",
    "dense",
    "relu",
    "sigmoid",
    "exp",
    "log",
    "softplus",
    "softmax",
    "segment_softmax",
    "concat",
    "sum",
    "mean",
    "gather",
    "scatter_add",
    "grad_reverse",
    "detach",
]

# clamp used by log() when called from cross-entropy style losses
LOG_EPS = 1e-7


class ShapeMismatch(ValueError):
    pass


class NonScalarLoss(ValueError):
    pass


class Value:
    """A node of the differentiation graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, parents=(), backward=None, requires_grad=False, name=None):
        self.data = np.asarray(data, dtype=np.float64)
        if self.data.ndim > 2:
            raise ShapeMismatch(f"rank {self.data.ndim} arrays are not supported")
        self.requires_grad = requires_grad
        self._parents = parents
        self._backward = backward
        self.name = name
        self.grad = np.zeros_like(self.data) if requires_grad and not parents else None

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Value{label}(shape={self.data.shape})"

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g

    def backward(self):
        backward(self)

    __add__ = lambda self, other: add(self, other)
    __radd__ = lambda self, other: add(other, self)
    __sub__ = lambda self, other: sub(self, other)
    __rsub__ = lambda self, other: sub(other, self)
    __mul__ = lambda self, other: mul(self, other)
    __rmul__ = lambda self, other: mul(other, self)
    __neg__ = lambda self: neg(self)
    __matmul__ = lambda self, other: matmul(self, other)


def as_value(x) -> Value:
    return x if isinstance(x, Value) else Value(x)


def _node(data, parents, make_backward):
    """Wrap an op result; attach the backward closure only when needed."""
    if any(p.requires_grad for p in parents):
        out = Value(data, parents, requires_grad=True)
        out._backward = make_backward(out)
        return out
    return Value(data)


def _unbroadcast(g, shape):
    """Sum ``g`` down to ``shape`` (inverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


def _topo_order(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Value):
    """Accumulate d(loss)/d(leaf) into every trainable leaf reachable from ``loss``."""
    if loss.data.size != 1:
        raise NonScalarLoss(f"loss must be scalar, got shape {loss.data.shape}")
    if not loss.requires_grad:
        return
    order = _topo_order(loss)
    # intermediate grads are rebuilt on every call; leaves keep accumulating
    for node in order:
        if node._parents:
            node.grad = None
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


# -- elementwise arithmetic ------------------------------------------------


def _check_broadcast(a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeMismatch(f"cannot broadcast {a.shape} with {b.shape}") from None


def add(a, b) -> Value:
    a, b = as_value(a), as_value(b)
    _check_broadcast(a, b)

    def make(out):
        def _backward(g):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g, a.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(g, b.shape))
        return _backward

    return _node(a.data + b.data, (a, b), make)


def sub(a, b) -> Value:
    a, b = as_value(a), as_value(b)
    _check_broadcast(a, b)

    def make(out):
        def _backward(g):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g, a.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(-g, b.shape))
        return _backward

    return _node(a.data - b.data, (a, b), make)


def mul(a, b) -> Value:
    a, b = as_value(a), as_value(b)
    _check_broadcast(a, b)

    def make(out):
        def _backward(g):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g * b.data, a.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(g * a.data, b.shape))
        return _backward

    return _node(a.data * b.data, (a, b), make)


def neg(a) -> Value:
    a = as_value(a)

    def make(out):
        def _backward(g):
            a._accumulate(-g)
        return _backward

    return _node(-a.data, (a,), make)


# -- linear algebra --------------------------------------------------------


def matmul(a, b) -> Value:
    """``a @ b`` for (m,k)@(k,n), (m,k)@(k,) and (k,)@(k,n)."""
    a, b = as_value(a), as_value(b)
    if a.data.ndim == 0 or b.data.ndim == 0 or a.shape[-1] != b.shape[0]:
        raise ShapeMismatch(f"matmul {a.shape} @ {b.shape}")

    def make(out):
        def _backward(g):
            if a.requires_grad:
                if b.data.ndim == 1:
                    ga = np.multiply.outer(g, b.data)
                else:
                    ga = g @ b.data.T
                a._accumulate(ga)
            if b.requires_grad:
                if a.data.ndim == 1:
                    gb = np.multiply.outer(a.data, g)
                else:
                    gb = a.data.T @ g
                b._accumulate(gb)
        return _backward

    return _node(a.data @ b.data, (a, b), make)


def dense(x, W, b=None) -> Value:
    """``x W^T + b`` for a single vector x of shape (n,) or a row batch (B, n)."""
    x, W = as_value(x), as_value(W)
    if W.data.ndim != 2 or x.shape[-1] != W.shape[1]:
        raise ShapeMismatch(f"dense: input {x.shape} vs weight {W.shape}")

    def make(out):
        def _backward(g):
            if x.requires_grad:
                x._accumulate(g @ W.data)
            if W.requires_grad:
                if x.data.ndim == 1:
                    W._accumulate(np.multiply.outer(g, x.data))
                else:
                    W._accumulate(g.T @ x.data)
        return _backward

    out = _node(x.data @ W.data.T, (x, W), make)
    if b is not None:
        b = as_value(b)
        if b.shape != (W.shape[0],):
            raise ShapeMismatch(f"dense: bias {b.shape} vs weight {W.shape}")
        out = add(out, b)
    return out


# -- nonlinearities ----------------------------------------------------------


def relu(x) -> Value:
    x = as_value(x)
    mask = x.data > 0

    def make(out):
        def _backward(g):
            x._accumulate(g * mask)
        return _backward

    return _node(np.where(mask, x.data, 0.0), (x,), make)


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def sigmoid(x) -> Value:
    x = as_value(x)
    s = _sigmoid(np.atleast_1d(x.data)).reshape(x.shape)

    def make(out):
        def _backward(g):
            x._accumulate(g * s * (1.0 - s))
        return _backward

    return _node(s, (x,), make)


def exp(x) -> Value:
    x = as_value(x)
    e = np.exp(x.data)

    def make(out):
        def _backward(g):
            x._accumulate(g * e)
        return _backward

    return _node(e, (x,), make)


def log(x, eps: float | None = None) -> Value:
    """Natural log; with ``eps`` the input is first clamped to [eps, 1 - eps].

    Inside the clamp the gradient is 1/x; outside it is zero.
    """
    x = as_value(x)
    if eps is None:
        xc = x.data
        inside = None
    else:
        xc = np.clip(x.data, eps, 1.0 - eps)
        inside = (x.data >= eps) & (x.data <= 1.0 - eps)

    def make(out):
        def _backward(g):
            gx = g / xc
            if inside is not None:
                gx = gx * inside
            x._accumulate(gx)
        return _backward

    return _node(np.log(xc), (x,), make)


def softplus(x) -> Value:
    """log(1 + exp(x)), evaluated without overflow."""
    x = as_value(x)
    val = np.logaddexp(0.0, x.data)
    s = _sigmoid(np.atleast_1d(x.data)).reshape(x.shape)

    def make(out):
        def _backward(g):
            x._accumulate(g * s)
        return _backward

    return _node(val, (x,), make)


def segment_softmax(x, segments, n_segments: int) -> Value:
    """Softmax of a column (N, 1) or vector (N,) independently within each segment."""
    x = as_value(x)
    segments = np.asarray(segments, dtype=np.intp)
    flat = x.data.reshape(-1)
    if flat.shape[0] != segments.shape[0]:
        raise ShapeMismatch(f"segment ids {segments.shape} vs input {x.shape}")
    top = np.full(n_segments, -np.inf)
    np.maximum.at(top, segments, flat)
    e = np.exp(flat - top[segments])
    denom = np.zeros(n_segments)
    np.add.at(denom, segments, e)
    y = e / denom[segments]

    def make(out):
        def _backward(g):
            gf = g.reshape(-1)
            dots = np.zeros(n_segments)
            np.add.at(dots, segments, gf * y)
            x._accumulate((y * (gf - dots[segments])).reshape(x.shape))
        return _backward

    return _node(y.reshape(x.shape), (x,), make)


def softmax(x) -> Value:
    """Softmax over all entries of a vector (or column)."""
    x = as_value(x)
    n = x.data.reshape(-1).shape[0]
    return segment_softmax(x, np.zeros(n, dtype=np.intp), 1)


# -- structure -----------------------------------------------------------------


def concat(a, b, axis: int = -1) -> Value:
    a, b = as_value(a), as_value(b)
    if a.data.ndim != b.data.ndim:
        raise ShapeMismatch(f"concat {a.shape} with {b.shape}")
    try:
        data = np.concatenate([a.data, b.data], axis=axis)
    except ValueError:
        raise ShapeMismatch(f"concat {a.shape} with {b.shape}") from None
    split = a.shape[axis]

    def make(out):
        def _backward(g):
            ga, gb = np.split(g, [split], axis=axis)
            if a.requires_grad:
                a._accumulate(ga)
            if b.requires_grad:
                b._accumulate(gb)
        return _backward

    return _node(data, (a, b), make)


def sum(x, axis=None) -> Value:  # noqa: A001 - mirrors numpy naming
    x = as_value(x)
    shape = x.shape

    def make(out):
        def _backward(g):
            if axis is None:
                x._accumulate(np.broadcast_to(g, shape))
            else:
                x._accumulate(np.broadcast_to(np.expand_dims(g, axis), shape))
        return _backward

    return _node(x.data.sum(axis=axis), (x,), make)


def mean(x, axis=None) -> Value:
    x = as_value(x)
    count = x.data.size if axis is None else x.shape[axis]
    if count == 0:
        raise ShapeMismatch("mean of an empty array")
    return mul(sum(x, axis=axis), 1.0 / count)


def gather(x, index) -> Value:
    """Rows ``x[index]``."""
    x = as_value(x)
    index = np.asarray(index, dtype=np.intp)

    def make(out):
        def _backward(g):
            gx = np.zeros_like(x.data)
            np.add.at(gx, index, g)
            x._accumulate(gx)
        return _backward

    return _node(x.data[index], (x,), make)


def scatter_add(x, index, n: int) -> Value:
    """Row-wise segment sum: ``out[k] = sum(x[i] for i where index[i] == k)``."""
    x = as_value(x)
    index = np.asarray(index, dtype=np.intp)
    data = np.zeros((n,) + x.shape[1:])
    np.add.at(data, index, x.data)

    def make(out):
        def _backward(g):
            x._accumulate(g[index])
        return _backward

    return _node(data, (x,), make)


def grad_reverse(x, sign: float = -1.0) -> Value:
    """Identity on the forward pass; multiplies the gradient by ``sign`` on the way back.

    ``sign=+1`` gives a plain identity node with the same graph structure,
    which is what the reversal checks compare against.
    """
    x = as_value(x)

    def make(out):
        def _backward(g):
            x._accumulate(g if sign == 1.0 else sign * g)
        return _backward

    return _node(x.data, (x,), make)


def detach(x) -> Value:
    """Same data, cut from the graph."""
    return Value(as_value(x).data)
