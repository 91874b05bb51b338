"""Tape-based reverse-mode automatic differentiation over float64 arrays.

Every differentiable operation returns a new :class:`Tensor` that remembers
its parents and a closure that maps the output gradient to parent gradients.
Tensors carry a monotonically increasing creation index, so a backward pass
simply visits the ancestors of the loss in decreasing creation order, which
is exactly the reverse of the order in which the graph was built.

Shape promotion is deliberately narrow.  Binary elementwise operations accept
operands of identical shape, a scalar (shape ``()``) on either side, or a
``(D,)`` row vector against an ``(N, D)`` matrix (the bias-add pattern).
Anything else raises :class:`ShapeError`.
"""

from __future__ import annotations

import itertools
from contextlib import contextmanager
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "ShapeError",
    "DomainError",
    "NumericError",
    "tensor",
    "no_grad",
    "is_grad_enabled",
    "backward",
    "matmul",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "exp",
    "log",
    "tanh",
    "relu",
    "sigmoid",
    "softplus",
    "square",
    "clip",
    "sum",
    "mean",
    "logsumexp",
    "take",
    "concat",
    "add_bias",
    "reshape",
    "grad",
]


class ShapeError(ValueError):
    """Operands have incompatible shapes."""

    def __init__(self, op: str, a: tuple, b: tuple):
        super().__init__(f"{op}: incompatible shapes {a} and {b}")
        self.op = op
        self.shapes = (a, b)


class DomainError(ValueError):
    """An operand lies outside the domain of the operation (e.g. log of 0)."""


class NumericError(FloatingPointError):
    """A forward value became NaN or infinite."""


_counter = itertools.count()
_grad_enabled = True


@contextmanager
def no_grad():
    """Disable graph recording inside the block."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def is_grad_enabled() -> bool:
    return _grad_enabled


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "_id", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim > 0 and 0 in arr.shape and arr.size != 0:
            raise ShapeError("tensor", arr.shape, arr.shape)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None
        self._id = next(_counter)
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _check_finite(op: str, arr: np.ndarray) -> None:
    if not np.isfinite(arr).all():
        raise NumericError(f"{op}: produced non-finite values")


# bounded or overflow-only ops skip the per-op finiteness scan (hot path)
_UNCHECKED = frozenset({"add", "sub", "neg", "take", "concat", "reshape", "relu", "tanh",
                        "sigmoid", "clip"})


def _make(op: str, data: np.ndarray, parents: tuple, backward_fn) -> Tensor:
    if op not in _UNCHECKED:
        _check_finite(op, data)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = None
    out._id = next(_counter)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward_fn
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward = None
    return out


def _broadcast_kind(op: str, a: tuple, b: tuple) -> None:
    if a == b or a == () or b == ():
        return
    if len(a) == 2 and len(b) == 1 and a[1] == b[0]:
        return
    if len(b) == 2 and len(a) == 1 and b[1] == a[0]:
        return
    raise ShapeError(op, a, b)


def _reduce_to(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    if shape == ():
        return np.asarray(g.sum())
    return g.sum(axis=0)


# ---------------------------------------------------------------------------
# binary elementwise


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_kind("add", a.shape, b.shape)
    sa, sb = a.shape, b.shape
    return _make("add", a.data + b.data, (a, b),
                 lambda g: (_reduce_to(g, sa), _reduce_to(g, sb)))


def add_bias(x, bias) -> Tensor:
    """``x + bias`` where ``bias`` is a row vector broadcast over rows."""
    x, bias = _as_tensor(x), _as_tensor(bias)
    if x.ndim != 2 or bias.shape != (x.shape[1],):
        raise ShapeError("add_bias", x.shape, bias.shape)
    return add(x, bias)


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_kind("sub", a.shape, b.shape)
    sa, sb = a.shape, b.shape
    return _make("sub", a.data - b.data, (a, b),
                 lambda g: (_reduce_to(g, sa), _reduce_to(-g, sb)))


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_kind("mul", a.shape, b.shape)
    ad, bd = a.data, b.data
    sa, sb = a.shape, b.shape
    return _make("mul", ad * bd, (a, b),
                 lambda g: (_reduce_to(g * bd, sa), _reduce_to(g * ad, sb)))


def div(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_kind("div", a.shape, b.shape)
    if np.any(b.data == 0.0):
        raise DomainError("div: division by zero")
    ad, bd = a.data, b.data
    sa, sb = a.shape, b.shape
    out = ad / bd
    return _make("div", out, (a, b),
                 lambda g: (_reduce_to(g / bd, sa), _reduce_to(-g * out / bd, sb)))


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError("matmul", a.shape, b.shape)
    ad, bd = a.data, b.data
    return _make("matmul", ad @ bd, (a, b), lambda g: (g @ bd.T, ad.T @ g))


# ---------------------------------------------------------------------------
# unary elementwise


def neg(a) -> Tensor:
    a = _as_tensor(a)
    return _make("neg", -a.data, (a,), lambda g: (-g,))


def exp(a) -> Tensor:
    a = _as_tensor(a)
    with np.errstate(over="ignore"):
        out = np.exp(a.data)
    return _make("exp", out, (a,), lambda g: (g * out,))


def log(a) -> Tensor:
    a = _as_tensor(a)
    if np.any(a.data <= 0.0):
        raise DomainError("log: non-positive argument")
    ad = a.data
    return _make("log", np.log(ad), (a,), lambda g: (g / ad,))


def tanh(a) -> Tensor:
    a = _as_tensor(a)
    out = np.tanh(a.data)
    return _make("tanh", out, (a,), lambda g: (g * (1.0 - out * out),))


def relu(a) -> Tensor:
    a = _as_tensor(a)
    pos = a.data > 0.0
    return _make("relu", np.where(pos, a.data, 0.0), (a,), lambda g: (g * pos,))


def _sigmoid_np(x: np.ndarray) -> np.ndarray:
    # split on sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def sigmoid(a) -> Tensor:
    a = _as_tensor(a)
    out = _sigmoid_np(np.atleast_1d(a.data)).reshape(a.shape)
    return _make("sigmoid", out, (a,), lambda g: (g * out * (1.0 - out),))


def softplus(a) -> Tensor:
    a = _as_tensor(a)
    x = a.data
    out = np.logaddexp(0.0, x)
    sig = _sigmoid_np(np.atleast_1d(x)).reshape(x.shape)
    return _make("softplus", out, (a,), lambda g: (g * sig,))


def square(a) -> Tensor:
    a = _as_tensor(a)
    ad = a.data
    return _make("square", ad * ad, (a,), lambda g: (2.0 * g * ad,))


def clip(a, lo: float, hi: float) -> Tensor:
    """Clamp into ``[lo, hi]``; gradient is zero where the clamp is active."""
    a = _as_tensor(a)
    inside = (a.data >= lo) & (a.data <= hi)
    return _make("clip", np.clip(a.data, lo, hi), (a,), lambda g: (g * inside,))


# ---------------------------------------------------------------------------
# reductions and indexing


def sum(a, axis: int | None = None) -> Tensor:  # noqa: A001
    a = _as_tensor(a)
    shape = a.shape
    if axis is None:
        return _make("sum", np.asarray(a.data.sum()), (a,),
                     lambda g: (np.broadcast_to(g, shape).copy(),))
    if not 0 <= axis < a.ndim:
        raise ShapeError("sum", shape, (axis,))
    return _make("sum", a.data.sum(axis=axis), (a,),
                 lambda g: (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),))


def mean(a, axis: int | None = None) -> Tensor:
    a = _as_tensor(a)
    n = a.size if axis is None else a.shape[axis]
    return mul(sum(a, axis), 1.0 / n)


def logsumexp(a, axis: int = 1) -> Tensor:
    """Stable ``log(sum(exp(a), axis))`` for 2-D input."""
    a = _as_tensor(a)
    if a.ndim != 2:
        raise ShapeError("logsumexp", a.shape, (axis,))
    m = a.data.max(axis=axis, keepdims=True)
    e = np.exp(a.data - m)
    s = e.sum(axis=axis, keepdims=True)
    out = (np.log(s) + m).squeeze(axis)
    soft = e / s
    return _make("logsumexp", out, (a,),
                 lambda g: (np.expand_dims(g, axis) * soft,))


def take(a, index: Sequence[int] | np.ndarray, axis: int = 1) -> Tensor:
    """Gather along ``axis`` (columns by default)."""
    a = _as_tensor(a)
    idx = np.asarray(index, dtype=np.intp)
    shape = a.shape

    def back(g):
        full = np.zeros(shape)
        if axis == 1:
            np.add.at(full, (slice(None), idx), g)
        else:
            np.add.at(full, idx, g)
        return (full,)

    return _make("take", np.take(a.data, idx, axis=axis), (a,), back)


def reshape(a, shape: tuple) -> Tensor:
    a = _as_tensor(a)
    old = a.shape
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError("reshape", old, tuple(shape)) from None
    return _make("reshape", out, (a,), lambda g: (g.reshape(old),))


def concat(tensors: Iterable, axis: int = 1) -> Tensor:
    ts = tuple(_as_tensor(t) for t in tensors)
    if not ts:
        raise ValueError("concat: nothing to concatenate")
    ref = ts[0].shape
    for t in ts[1:]:
        if t.ndim != len(ref) or any(t.shape[i] != ref[i] for i in range(len(ref)) if i != axis):
            raise ShapeError("concat", ref, t.shape)
    splits = np.cumsum([t.shape[axis] for t in ts])[:-1]
    return _make("concat", np.concatenate([t.data for t in ts], axis=axis), ts,
                 lambda g: tuple(np.split(g, splits, axis=axis)))


# ---------------------------------------------------------------------------


def _topo(loss: Tensor) -> list[Tensor]:
    nodes: dict[int, Tensor] = {}
    stack = [loss]
    while stack:
        t = stack.pop()
        if t._id in nodes:
            continue
        nodes[t._id] = t
        stack.extend(p for p in t._parents if p.requires_grad and p._id not in nodes)
    return [nodes[i] for i in sorted(nodes, reverse=True)]


def _propagate(loss: Tensor, sink) -> None:
    grads: dict[int, np.ndarray] = {loss._id: np.ones(())}
    for t in _topo(loss):
        g = grads.pop(t._id, None)
        if g is None:
            continue
        if t._backward is None:
            sink(t, g)
            continue
        for p, pg in zip(t._parents, t._backward(g)):
            if pg is None or not p.requires_grad:
                continue
            prev = grads.get(p._id)
            grads[p._id] = pg if prev is None else prev + pg


def grad(loss: Tensor, inputs: Sequence[Tensor]) -> list[np.ndarray]:
    """Gradients of scalar ``loss`` w.r.t. ``inputs`` without touching any ``.grad``."""
    if loss.size != 1 or loss.ndim != 0:
        raise ShapeError("grad", loss.shape, ())
    wanted = {t._id: np.zeros(t.shape) for t in inputs}
    if loss.requires_grad:
        def sink(t, g):
            if t._id in wanted:
                wanted[t._id] = wanted[t._id] + g
        _propagate(loss, sink)
    return [wanted[t._id] for t in inputs]


def backward(loss: Tensor) -> None:
    """Populate ``.grad`` on every ``requires_grad`` leaf reachable from ``loss``.

    Gradients accumulate into existing ``.grad`` buffers; call ``zero_grad`` on
    the parameters between optimisation steps.
    """
    if loss.size != 1 or loss.ndim != 0:
        raise ShapeError("backward", loss.shape, ())
    if not loss.requires_grad:
        return

    def sink(t, g):
        t.grad = g.copy() if t.grad is None else t.grad + g

    _propagate(loss, sink)
