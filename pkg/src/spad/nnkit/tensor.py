"""Reverse-mode automatic differentiation over a dynamically recorded graph.

Every operation on a :class:`Tensor` whose inputs require gradients records
a backward closure; :func:`backward` replays them in reverse topological
order and accumulates ``d loss / d tensor`` into ``Tensor.grad``. Gradients
are additive across backward calls until explicitly cleared, so multi-loss
accumulation works without extra machinery.

All arithmetic is float64. Supported primitives: elementwise add/mul (with
broadcasting), matmul, tanh, sigmoid, relu, log, softmax/log-softmax,
embedding lookup, pairwise gather, concat, slicing, reshape/transpose,
sum and mean.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from spad.errors import GraphError, ShapeError


class Tensor:
    """A numpy array plus the graph bookkeeping needed for backward."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        _parents: tuple["Tensor", ...] = (),
        _backward: Callable[[np.ndarray], None] | None = None,
    ):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def accumulate(self, g: np.ndarray):
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g

    def zero_grad(self):
        self.grad = None

    # Operator sugar over the module-level primitives.
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, mul(_as_tensor(other), -1.0))

    def __rsub__(self, other):
        return add(_as_tensor(other), mul(self, -1.0))

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise ShapeError("tensor/tensor division is not a supported primitive")
        return mul(self, 1.0 / float(other))

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return narrow(self, key)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) != 1 else shape[0])

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def sum(self, axis=None):
        return tensor_sum(self, axis)

    def mean(self, axis=None):
        return mean(self, axis)

    def backward(self):
        backward(self)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def constant(data) -> Tensor:
    return Tensor(data)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce a broadcast gradient back to ``shape``."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _make(data: np.ndarray, parents: Sequence[Tensor], backward_fn) -> Tensor:
    if any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=True, _parents=tuple(parents), _backward=backward_fn)
    return Tensor(data)


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out_data = a.data + b.data

    def back(g):
        if a.requires_grad:
            a.accumulate(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(g, b.data.shape))

    return _make(out_data, (a, b), back)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out_data = a.data * b.data

    def back(g):
        if a.requires_grad:
            a.accumulate(_unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(g * a.data, b.data.shape))

    return _make(out_data, (a, b), back)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim not in (1, 2) or b.ndim not in (1, 2):
        raise ShapeError(f"matmul supports 1-D/2-D operands, got {a.shape} @ {b.shape}")
    out_data = a.data @ b.data

    def back(g):
        g = np.asarray(g)
        if a.ndim == 2 and b.ndim == 2:
            if a.requires_grad:
                a.accumulate(g @ b.data.T)
            if b.requires_grad:
                b.accumulate(a.data.T @ g)
        elif a.ndim == 2 and b.ndim == 1:
            if a.requires_grad:
                a.accumulate(np.outer(g, b.data))
            if b.requires_grad:
                b.accumulate(a.data.T @ g)
        elif a.ndim == 1 and b.ndim == 2:
            if a.requires_grad:
                a.accumulate(g @ b.data.T)
            if b.requires_grad:
                b.accumulate(np.outer(a.data, g))
        else:  # 1-D inner product
            if a.requires_grad:
                a.accumulate(g * b.data)
            if b.requires_grad:
                b.accumulate(g * a.data)

    return _make(out_data, (a, b), back)


def tanh(x: Tensor) -> Tensor:
    out_data = np.tanh(x.data)

    def back(g):
        x.accumulate(g * (1.0 - out_data * out_data))

    return _make(out_data, (x,), back)


def sigmoid(x: Tensor) -> Tensor:
    out_data = 1.0 / (1.0 + np.exp(-x.data))

    def back(g):
        x.accumulate(g * out_data * (1.0 - out_data))

    return _make(out_data, (x,), back)


def relu(x: Tensor) -> Tensor:
    out_data = np.maximum(x.data, 0.0)

    def back(g):
        x.accumulate(g * (x.data > 0.0))

    return _make(out_data, (x,), back)


def log(x: Tensor) -> Tensor:
    out_data = np.log(x.data)

    def back(g):
        x.accumulate(g / x.data)

    return _make(out_data, (x,), back)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out_data = e / e.sum(axis=axis, keepdims=True)

    def back(g):
        dot = (g * out_data).sum(axis=axis, keepdims=True)
        x.accumulate((g - dot) * out_data)

    return _make(out_data, (x,), back)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out_data = shifted - log_z

    def back(g):
        soft = np.exp(out_data)
        x.accumulate(g - soft * g.sum(axis=axis, keepdims=True))

    return _make(out_data, (x,), back)


def embedding(table: Tensor, ids) -> Tensor:
    """Row lookup: ids (n,) into table (V, d) -> (n, d)."""
    idx = np.asarray(ids, dtype=np.intp)
    out_data = table.data[idx]

    def back(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, idx, g)
        table.accumulate(gt)

    return _make(out_data, (table,), back)


def gather_pairs(x: Tensor, rows, cols) -> Tensor:
    """Elementwise gather x[rows[i], cols[i]] -> 1-D tensor."""
    r = np.asarray(rows, dtype=np.intp)
    c = np.asarray(cols, dtype=np.intp)
    out_data = x.data[r, c]

    def back(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, (r, c), g)
        x.accumulate(gx)

    return _make(out_data, (x,), back)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def back(g):
        for t, start, stop in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(start, stop)
                t.accumulate(g[tuple(sl)])

    return _make(out_data, tensors, back)


def stack(tensors: Sequence[Tensor]) -> Tensor:
    """Stack equal-shape tensors along a new leading axis."""
    rows = [reshape(t, (1,) + t.data.shape) for t in tensors]
    return concat(rows, axis=0)


def narrow(x: Tensor, key) -> Tensor:
    """Basic slicing/indexing; gradient scatters back into place."""
    out_data = x.data[key]

    def back(g):
        gx = np.zeros_like(x.data)
        gx[key] += g
        x.accumulate(gx)

    return _make(out_data, (x,), back)


def reshape(x: Tensor, shape) -> Tensor:
    out_data = x.data.reshape(shape)

    def back(g):
        x.accumulate(g.reshape(x.data.shape))

    return _make(out_data, (x,), back)


def transpose(x: Tensor) -> Tensor:
    if x.ndim != 2:
        raise ShapeError(f"transpose expects a 2-D tensor, got {x.shape}")
    out_data = x.data.T

    def back(g):
        x.accumulate(g.T)

    return _make(out_data, (x,), back)


def tensor_sum(x: Tensor, axis: int | None = None) -> Tensor:
    out_data = x.data.sum(axis=axis)

    def back(g):
        if axis is None:
            x.accumulate(np.broadcast_to(g, x.data.shape))
        else:
            x.accumulate(np.broadcast_to(np.expand_dims(g, axis), x.data.shape))

    return _make(out_data, (x,), back)


def mean(x: Tensor, axis: int | None = None) -> Tensor:
    count = x.data.size if axis is None else x.data.shape[axis]
    return mul(tensor_sum(x, axis), 1.0 / count)


def backward(loss: Tensor):
    """Accumulate d(loss)/d(tensor) into every reachable tensor's ``grad``.

    ``loss`` must be a scalar connected to at least one tensor that
    requires gradients.
    """
    if loss.data.ndim != 0 and loss.data.size != 1:
        raise ShapeError(f"loss must be scalar, got shape {loss.shape}")
    if not loss.requires_grad:
        raise GraphError("loss is not connected to any recorded computation")
    if not np.isfinite(loss.data):
        raise GraphError(f"loss is not finite: {float(loss.data)}")

    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))

    loss.accumulate(np.ones_like(loss.data))
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
