"""Dense tensors with reverse-mode automatic differentiation.

Every :class:`Tensor` produced by an operation remembers its parents and a
closure that pushes the output adjoint back onto them.  ``backward`` walks the
graph in reverse topological order exactly once and accumulates (``+=``)
adjoints, so fan-out nodes receive the sum of their contributions.

Data lives in numpy arrays.  float64 is the default and is what the gradient
checker expects; float32 parameters are carried through unchanged for faster
training.
"""
from __future__ import annotations

import threading
from contextlib import contextmanager
from typing import Callable, Iterable, Sequence

import numpy as np

DEFAULT_DTYPE = np.float64


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


_state = threading.local()


def grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


@contextmanager
def no_grad():
    """Evaluate without recording a graph (per thread)."""
    prev = grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype.kind != "f":
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None
        self.op = "leaf"
        self.name = name

    @classmethod
    def from_op(cls, data: np.ndarray, parents: Sequence["Tensor"], backward, op: str) -> "Tensor":
        """Wrap ``data`` as the output of an op.

        ``backward(g)`` receives the output adjoint and must call
        :meth:`_accum` on every parent that requires a gradient.  The node is
        only linked into the graph when recording is on and some parent needs
        a gradient.
        """
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out.name = None
        out.op = op
        if getattr(_state, "enabled", True) and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward
        else:
            out.requires_grad = False
            out._parents = ()
            out._backward = None
        return out

    def _accum(self, g: np.ndarray) -> None:
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    # -- conveniences -------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        tag = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, op={self.op}{tag})"

    def __len__(self) -> int:
        return self.data.shape[0]

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

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return getitem(self, key)

    def sum(self, axis=None, keepdims: bool = False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def tanh(self):
        return tanh(self)

    def relu(self):
        return relu(self)

    def sigmoid(self):
        return sigmoid(self)

    def backward(self, leaves: Iterable["Tensor"] | None = None):
        return backward(self, leaves)


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x, dtype=dtype)


def _const_like(x, ref: Tensor) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=ref.data.dtype))


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    nlead = g.ndim - len(shape)
    if nlead > 0:
        g = g.sum(axis=tuple(range(nlead)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _pair(a, b) -> tuple[Tensor, Tensor]:
    if isinstance(a, Tensor):
        return a, _const_like(b, a)
    if isinstance(b, Tensor):
        return _const_like(a, b), b
    return as_tensor(a), as_tensor(b)


def _binary(fn, a: Tensor, b: Tensor, op: str) -> np.ndarray:
    try:
        return fn(a.data, b.data)
    except ValueError:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


# -- binary arithmetic ------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _pair(a, b)
    out = _binary(np.add, a, b, "add")

    def _bw(g):
        if a.requires_grad:
            a._accum(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b._accum(_unbroadcast(g, b.data.shape))

    return Tensor.from_op(out, (a, b), _bw, "add")


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)
    out = _binary(np.subtract, a, b, "sub")

    def _bw(g):
        if a.requires_grad:
            a._accum(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b._accum(_unbroadcast(-g, b.data.shape))

    return Tensor.from_op(out, (a, b), _bw, "sub")


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)
    out = _binary(np.multiply, a, b, "mul")

    def _bw(g):
        if a.requires_grad:
            a._accum(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accum(_unbroadcast(g * a.data, b.shape))

    return Tensor.from_op(out, (a, b), _bw, "mul")


def scale(x: Tensor, c: float) -> Tensor:
    """Multiply by a fixed scalar."""
    x = as_tensor(x)

    def _bw(g):
        x._accum(g * c)

    return Tensor.from_op(x.data * c, (x,), _bw, "scale")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product with numpy ``matmul`` semantics (leading axes broadcast)."""
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    if ad.ndim < 1 or bd.ndim < 1:
        raise ShapeError(f"matmul: scalar operand, shapes {ad.shape} and {bd.shape}")
    if ad.shape[-1] != (bd.shape[-2] if bd.ndim >= 2 else bd.shape[0]):
        raise ShapeError(f"matmul: inner dimensions differ, shapes {ad.shape} and {bd.shape}")
    try:
        out = np.matmul(ad, bd)
    except ValueError:
        raise ShapeError(f"matmul: incompatible batch shapes {ad.shape} and {bd.shape}") from None

    def _bw(g):
        a2 = ad if ad.ndim >= 2 else ad[None, :]
        b2 = bd if bd.ndim >= 2 else bd[:, None]
        gg = g
        if ad.ndim == 1:
            gg = gg[..., None, :]
        if bd.ndim == 1:
            gg = gg[..., None]
        if a.requires_grad:
            ga = np.matmul(gg, np.swapaxes(b2, -1, -2))
            if ad.ndim == 1:
                ga = ga[..., 0, :]
            a._accum(_unbroadcast(ga, ad.shape))
        if b.requires_grad:
            if b2.ndim == 2:
                # weight shared across leading axes: fold them into one product
                gb = a2.reshape(-1, a2.shape[-1]).T @ gg.reshape(-1, gg.shape[-1])
            else:
                gb = _unbroadcast(np.matmul(np.swapaxes(a2, -1, -2), gg), b2.shape)
            if bd.ndim == 1:
                gb = gb[..., 0]
            b._accum(gb)

    return Tensor.from_op(out, (a, b), _bw, "matmul")


# -- unary elementwise ------------------------------------------------------

def tanh(x: Tensor) -> Tensor:
    x = as_tensor(x)
    y = np.tanh(x.data)

    def _bw(g):
        x._accum(g * (1.0 - y * y))

    return Tensor.from_op(y, (x,), _bw, "tanh")


def relu(x: Tensor) -> Tensor:
    x = as_tensor(x)
    pos = x.data > 0
    y = np.maximum(x.data, 0.0).astype(x.data.dtype, copy=False)   # keeps NaN visible

    def _bw(g):
        x._accum(g * pos)

    return Tensor.from_op(y, (x,), _bw, "relu")


def sigmoid(x: Tensor) -> Tensor:
    x = as_tensor(x)
    d = x.data
    # split by sign so exp never overflows
    e = np.exp(-np.abs(d))
    y = np.where(d >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(d.dtype, copy=False)

    def _bw(g):
        x._accum(g * y * (1.0 - y))

    return Tensor.from_op(y, (x,), _bw, "sigmoid")


def exp(x: Tensor) -> Tensor:
    x = as_tensor(x)
    y = np.exp(x.data)

    def _bw(g):
        x._accum(g * y)

    return Tensor.from_op(y, (x,), _bw, "exp")


def log(x: Tensor) -> Tensor:
    x = as_tensor(x)

    def _bw(g):
        x._accum(g / x.data)

    return Tensor.from_op(np.log(x.data), (x,), _bw, "log")


# -- reductions and normalisation -------------------------------------------

def tsum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def _bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        x._accum(np.broadcast_to(g, x.shape))

    return Tensor.from_op(np.asarray(out), (x,), _bw, "sum")


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    if axis is None:
        n = x.data.size
    else:
        axes = (axis,) if isinstance(axis, int) else axis
        n = int(np.prod([x.shape[a] for a in axes]))
    return scale(tsum(x, axis=axis, keepdims=keepdims), 1.0 / n)


def _masked_logits(x: np.ndarray, mask, axis: int) -> np.ndarray:
    if mask is None:
        return x
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)
    if not mask.any(axis=axis).all():
        raise ValueError("softmax: a row has every entry masked out")
    return np.where(mask, x, -np.inf)


def softmax(x: Tensor, axis: int = -1, mask=None) -> Tensor:
    """Numerically stable softmax along ``axis``.

    ``mask`` (boolean, broadcastable to ``x``) excludes entries; they receive
    probability exactly zero.
    """
    x = as_tensor(x)
    if x.ndim == 0 or x.shape[axis] == 0:
        raise ValueError("softmax: empty input")
    z = _masked_logits(x.data, mask, axis)
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)

    def _bw(g):
        x._accum(y * (g - (g * y).sum(axis=axis, keepdims=True)))

    return Tensor.from_op(y, (x,), _bw, "softmax")


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    if x.ndim == 0 or x.shape[axis] == 0:
        raise ValueError("log_softmax: empty input")
    z = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    y = z - lse
    p = np.exp(y)

    def _bw(g):
        x._accum(g - p * g.sum(axis=axis, keepdims=True))

    return Tensor.from_op(y, (x,), _bw, "log_softmax")


# -- structural ops ---------------------------------------------------------

def concat(xs: Sequence[Tensor], axis: int = -1) -> Tensor:
    xs = [as_tensor(x) for x in xs]
    if not xs:
        raise ValueError("concat: no operands")
    nd = xs[0].ndim
    ax = axis % nd if nd else 0
    for x in xs[1:]:
        if x.ndim != nd or any(x.shape[i] != xs[0].shape[i] for i in range(nd) if i != ax):
            raise ShapeError(f"concat: incompatible shapes {xs[0].shape} and {x.shape} on axis {axis}")
    out = np.concatenate([x.data for x in xs], axis=ax)
    bounds = np.cumsum([x.shape[ax] for x in xs])[:-1]

    def _bw(g):
        for x, part in zip(xs, np.split(g, bounds, axis=ax)):
            x._accum(part)

    return Tensor.from_op(out, xs, _bw, "concat")


def stack(xs: Sequence[Tensor], axis: int = 0) -> Tensor:
    xs = [as_tensor(x) for x in xs]
    if not xs:
        raise ValueError("stack: no operands")
    for x in xs[1:]:
        if x.shape != xs[0].shape:
            raise ShapeError(f"stack: incompatible shapes {xs[0].shape} and {x.shape}")
    out = np.stack([x.data for x in xs], axis=axis)

    def _bw(g):
        for i, x in enumerate(xs):
            x._accum(np.take(g, i, axis=axis))

    return Tensor.from_op(out, xs, _bw, "stack")


def _is_basic_index(key) -> bool:
    keys = key if isinstance(key, tuple) else (key,)
    return all(isinstance(k, (int, np.integer, slice)) or k is Ellipsis or k is None for k in keys)


def getitem(x: Tensor, key) -> Tensor:
    x = as_tensor(x)
    out = x.data[key]
    basic = _is_basic_index(key)

    def _bw(g):
        full = np.zeros_like(x.data)
        if basic:
            full[key] += g
        else:
            np.add.at(full, key, g)
        x._accum(full)

    return Tensor.from_op(np.array(out, copy=True) if basic else out, (x,), _bw, "getitem")


def take(x: Tensor, indices, axis: int = 0) -> Tensor:
    """Gather slices along ``axis`` (indices may repeat)."""
    x = as_tensor(x)
    idx = np.asarray(indices, dtype=np.intp)
    out = np.take(x.data, idx, axis=axis)

    def _bw(g):
        full = np.zeros_like(x.data)
        moved = np.moveaxis(full, axis, 0)
        np.add.at(moved, idx, np.moveaxis(g, axis, 0))
        x._accum(full)

    return Tensor.from_op(out, (x,), _bw, "take")


def reshape(x: Tensor, shape) -> Tensor:
    x = as_tensor(x)
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {x.shape} to {tuple(shape)}") from None

    def _bw(g):
        x._accum(g.reshape(x.shape))

    return Tensor.from_op(out, (x,), _bw, "reshape")


def swapaxes(x: Tensor, a: int, b: int) -> Tensor:
    x = as_tensor(x)

    def _bw(g):
        x._accum(np.swapaxes(g, a, b))

    return Tensor.from_op(np.swapaxes(x.data, a, b), (x,), _bw, "swapaxes")


def elementwise(kind: str, *operands, **kw) -> Tensor:
    """Dispatch by name: add, mul, tanh, relu, sigmoid, scale, concat."""
    table = {
        "add": lambda: add(*operands),
        "mul": lambda: mul(*operands),
        "tanh": lambda: tanh(*operands),
        "relu": lambda: relu(*operands),
        "sigmoid": lambda: sigmoid(*operands),
        "scale": lambda: scale(operands[0], kw.get("c", operands[1] if len(operands) > 1 else 1.0)),
        "concat": lambda: concat(operands, axis=kw.get("axis", -1)),
    }
    if kind not in table:
        raise ValueError(f"unknown elementwise kind {kind!r}")
    return table[kind]()


# -- backward ---------------------------------------------------------------

def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack_: list[tuple[Tensor, bool]] = [(root, False)]
    while stack_:
        node, expanded = stack_.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack_.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack_.append((p, False))
    return order


def backward(root: Tensor, leaves: Iterable[Tensor] | None = None):
    """Fill ``.grad`` on every node reachable from ``root``.

    Gradients are recomputed from zero on each call.  If ``leaves`` is given,
    returns their gradients in order; leaves the root does not depend on get
    zeros.
    """
    if root.data.size != 1:
        raise ValueError(f"backward: root must be scalar, got shape {root.shape}")
    leaves = list(leaves) if leaves is not None else None
    if leaves is not None:
        for leaf in leaves:
            leaf.grad = None
    order = _topo_order(root) if root.requires_grad else []
    for node in order:
        node.grad = None
    root.grad = np.ones_like(root.data)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
    if leaves is None:
        return None
    return [leaf.grad if leaf.grad is not None else np.zeros_like(leaf.data) for leaf in leaves]
