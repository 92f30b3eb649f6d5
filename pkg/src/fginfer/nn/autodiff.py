"""Reverse-mode automatic differentiation over numpy arrays.

Each :class:`Tensor` produced by an op while gradients are enabled keeps a
reference to its inputs and a closure returning the input adjoints; that
chain is the tape. :meth:`Tensor.backward` walks it once in reverse
topological order.
"""
from __future__ import annotations

import threading
from contextlib import contextmanager
from typing import Callable, Sequence

import numpy as np

from ..layout import Segments

_state = threading.local()


def _grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


@contextmanager
def no_grad():
    prev = _grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


@contextmanager
def record_kinks():
    """Collect activation patterns of piecewise-linear ops (relu, abs, max).

    Yields a list that receives one bytes signature per op call; the
    gradient checker compares these between perturbed evaluations.
    """
    prev = getattr(_state, "kinks", None)
    log: list[bytes] = []
    _state.kinks = log
    try:
        yield log
    finally:
        _state.kinks = prev


def _note_kink(pattern: np.ndarray) -> None:
    log = getattr(_state, "kinks", None)
    if log is not None:
        log.append(np.ascontiguousarray(pattern).tobytes())


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "op", "_parents", "_backward")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, op: str = ""):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.op = op
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None

    def __repr__(self):
        return f"Tensor({self.data!r}, op={self.op!r})"

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def backward(self, grad=None) -> None:
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward without a seed gradient needs a scalar output")
            grad = np.ones_like(self.data)
        order: list[Tensor] = []
        seen: set[int] = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        grads: dict[int, np.ndarray] = {id(self): np.asarray(grad, dtype=np.float64)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g if node.grad is None else node.grad + g
                continue
            for p, gp in zip(node._parents, node._backward(g)):
                if gp is None or not p.requires_grad:
                    continue
                key = id(p)
                grads[key] = gp if key not in grads else grads[key] + gp

    def __add__(self, o):
        return add(self, o)

    def __radd__(self, o):
        return add(o, self)

    def __sub__(self, o):
        return sub(self, o)

    def __rsub__(self, o):
        return sub(o, self)

    def __mul__(self, o):
        return mul(self, o)

    def __rmul__(self, o):
        return mul(o, self)

    def __truediv__(self, o):
        return div(self, o)

    def __rtruediv__(self, o):
        return div(o, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, o):
        return matmul(self, o)

    def __getitem__(self, idx):
        return index(self, idx)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data, parents: Sequence[Tensor], backward: Callable, op: str) -> Tensor:
    req = _grad_enabled() and any(p.requires_grad for p in parents)
    t = Tensor(data, requires_grad=req, op=op)
    if req:
        t._parents = tuple(parents)
        t._backward = backward
    return t


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# ---- elementwise arithmetic -------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _node(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)), "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _node(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)), "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _node(a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)), "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data
    return _node(out, (a, b),
                 lambda g: (_unbroadcast(g / b.data, a.shape), _unbroadcast(-g * out / b.data, b.shape)), "div")


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _node(-a.data, (a,), lambda g: (-g,), "neg")


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return _node(out, (a,), lambda g: (g * out,), "exp")


def log(a) -> Tensor:
    a = as_tensor(a)
    return _node(np.log(a.data), (a,), lambda g: (g / a.data,), "log")


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    out = np.sqrt(a.data)
    return _node(out, (a,), lambda g: (g * 0.5 / out,), "sqrt")


def abs(a) -> Tensor:  # noqa: A001 - mirrors numpy naming
    a = as_tensor(a)
    _note_kink(a.data >= 0)
    return _node(np.abs(a.data), (a,), lambda g: (g * np.sign(a.data),), "abs")


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out = np.empty_like(a.data)
    pos = a.data >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a.data[pos]))
    e = np.exp(a.data[~pos])
    out[~pos] = e / (1.0 + e)
    return _node(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)
    return _node(out, (a,), lambda g: (g * (1.0 - out * out),), "tanh")


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    _note_kink(mask)
    return _node(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,), "relu")


def leaky_relu(a, slope: float = 0.01) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    _note_kink(mask)
    scale = np.where(mask, 1.0, slope)
    return _node(a.data * scale, (a,), lambda g: (g * scale,), "leaky_relu")


# ---- shape ops ---------------------------------------------------------------

def matmul(a, b) -> Tensor:
    """Matrix product for 2-d/2-d, 1-d/2-d (vector-matrix) and 2-d/1-d (matvec)."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim not in (1, 2) or b.ndim not in (1, 2) or a.shape[-1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch {a.shape} @ {b.shape}")
    out = a.data @ b.data

    def backward(g):
        if a.ndim == 2 and b.ndim == 2:
            return g @ b.data.T, a.data.T @ g
        if a.ndim == 1 and b.ndim == 2:
            return b.data @ g, np.outer(a.data, g)
        if a.ndim == 2:
            return np.outer(g, b.data), a.data.T @ g
        return g * b.data, g * a.data

    return _node(out, (a, b), backward, "matmul")


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    return _node(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),), "reshape")


def index(a, idx) -> Tensor:
    """Basic (slice) indexing."""
    a = as_tensor(a)

    def backward(g):
        out = np.zeros_like(a.data)
        out[idx] += g
        return (out,)

    return _node(a.data[idx], (a,), backward, "index")


def concat(ts: Sequence, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in ts]
    if not ts:
        raise ValueError("concat needs at least one tensor")
    sizes = [t.shape[axis] for t in ts]
    try:
        out = np.concatenate([t.data for t in ts], axis=axis)
    except ValueError as e:
        raise ValueError(f"concat shape mismatch: {e}") from None
    cuts = np.cumsum(sizes)[:-1]
    return _node(out, ts, lambda g: tuple(np.split(g, cuts, axis=axis)), "concat")


def stack_columns(ts: Sequence) -> Tensor:
    """Stack equal-length vectors into an ``(n, len(ts))`` matrix."""
    return concat([reshape(as_tensor(t), (-1, 1)) for t in ts], axis=1)


# ---- reductions ----------------------------------------------------------------

def sum(a, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _node(out, (a,), backward, "sum")


def mean(a, axis=None) -> Tensor:
    a = as_tensor(a)
    n = a.data.size if axis is None else a.shape[axis]
    return sum(a, axis=axis) * (1.0 / n)


def softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)
    return _node(out, (a,), lambda g: (out * (g - (g * out).sum(axis=axis, keepdims=True)),), "softmax")


def log_softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    z = a.data - a.data.max(axis=axis, keepdims=True)
    out = z - np.log(np.exp(z).sum(axis=axis, keepdims=True))
    p = np.exp(out)
    return _node(out, (a,), lambda g: (g - p * g.sum(axis=axis, keepdims=True),), "log_softmax")


def _other_axes(t: np.ndarray, keep_axis: int) -> tuple:
    if not 0 <= keep_axis < t.ndim:
        raise ValueError(f"axis {keep_axis} out of range for rank {t.ndim}")
    return tuple(ax for ax in range(t.ndim) if ax != keep_axis)


def logsumexp_except(a, keep_axis: int) -> Tensor:
    a = as_tensor(a)
    axes = _other_axes(a.data, keep_axis)
    if not axes:
        return _node(a.data.copy(), (a,), lambda g: (g,), "logsumexp_except")
    m = a.data.max(axis=axes, keepdims=True)
    s = np.exp(a.data - m).sum(axis=axes, keepdims=True)
    out_k = m + np.log(s)
    shape = [1] * a.ndim
    shape[keep_axis] = a.shape[keep_axis]

    def backward(g):
        return (g.reshape(shape) * np.exp(a.data - out_k),)

    return _node(out_k.reshape(a.shape[keep_axis]), (a,), backward, "logsumexp_except")


def max_except(a, keep_axis: int) -> Tensor:
    """Max over all axes but one; the gradient goes to one argmax per slice."""
    a = as_tensor(a)
    axes = _other_axes(a.data, keep_axis)
    moved = np.moveaxis(a.data, keep_axis, 0).reshape(a.shape[keep_axis], -1)
    arg = moved.argmax(axis=1)
    _note_kink(arg)
    out = moved[np.arange(moved.shape[0]), arg]

    def backward(g):
        gm = np.zeros_like(moved)
        gm[np.arange(moved.shape[0]), arg] = g
        rest = tuple(a.shape[ax] for ax in axes)
        return (np.moveaxis(gm.reshape((a.shape[keep_axis],) + rest), 0, keep_axis),)

    return _node(out, (a,), backward, "max_except")


def tensor_sum(operands: Sequence) -> Tensor:
    ts = [as_tensor(t) for t in operands]
    if not ts:
        raise ValueError("tensor_sum needs at least one operand")
    if any(t.ndim != 1 or t.shape[0] == 0 for t in ts):
        raise ValueError("tensor_sum operands must be non-empty vectors")
    k = len(ts)
    out = np.zeros(tuple(t.shape[0] for t in ts))
    for ax, t in enumerate(ts):
        shape = [1] * k
        shape[ax] = t.shape[0]
        out = out + t.data.reshape(shape)

    def backward(g):
        return tuple(g.sum(axis=tuple(x for x in range(k) if x != ax)) if k > 1 else g for ax in range(k))

    return _node(out, ts, backward, "tensor_sum")


# ---- gather / segment ops ----------------------------------------------------

def gather(a, idx: np.ndarray, segments: Segments | None = None) -> Tensor:
    """Rows ``a[idx]``. ``segments`` (ids == idx) makes the backward scatter fast."""
    a = as_tensor(a)
    idx = np.asarray(idx)

    def backward(g):
        if segments is not None:
            return (segments.sum(g),)
        out = np.zeros_like(a.data)
        np.add.at(out, idx, g)
        return (out,)

    return _node(a.data[idx], (a,), backward, "gather")


def segment_sum(a, seg: Segments) -> Tensor:
    a = as_tensor(a)
    return _node(seg.sum(a.data), (a,), lambda g: (g[seg.ids],), "segment_sum")


def segment_logsumexp(a, seg: Segments) -> Tensor:
    a = as_tensor(a)
    out = seg.logsumexp(a.data)
    return _node(out, (a,), lambda g: (g[seg.ids] * np.exp(a.data - out[seg.ids]),), "segment_logsumexp")


def segment_max(a, seg: Segments) -> Tensor:
    a = as_tensor(a)
    if a.ndim != 1:
        raise ValueError("segment_max expects a vector")
    arg = seg.argmax(a.data)
    _note_kink(arg)
    out = seg.max(a.data)
    valid = arg < a.shape[0]

    def backward(g):
        ga = np.zeros_like(a.data)
        ga[arg[valid]] = g[valid]
        return (ga,)

    return _node(out, (a,), backward, "segment_max")
