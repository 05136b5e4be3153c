"""Reverse-mode automatic differentiation over dense numpy arrays.

Tensors wrap ndarrays; every differentiable operation records a Node on an
implicit tape. Nodes may expose several outputs (the fused LSTM gate op
returns hidden and cell state together), so backpropagation walks nodes,
not tensors: gradients for all of a node's outputs are gathered before its
backward rule runs once.

Arithmetic follows numpy broadcasting; backward sums gradients back down
to each input's shape. Arrays are float64 by default, float32 when callers
pass 32-bit data (every rule preserves dtype).
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np

from rephrasekit import kernels


class ShapeError(ValueError):
    """Incompatible operand shapes; the message carries both."""


class GradientError(RuntimeError):
    """Raised for non-finite losses and malformed backward calls."""


_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Disable tape recording inside the block (inference, optimizer math)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def grad_enabled() -> bool:
    return _GRAD_ENABLED


class Node:
    """One recorded operation: inputs, weak list of outputs, backward rule.

    ``backward`` receives one gradient array per output (zeros when an
    output never reached the loss) and returns one array per input, or
    None for inputs that need no gradient.
    """

    __slots__ = ("inputs", "outputs", "backward", "name")

    def __init__(self, inputs: Sequence["Tensor"], name: str):
        self.inputs = tuple(inputs)
        self.outputs: list[Tensor] = []
        self.backward: Callable[..., tuple] | None = None
        self.name = name


class Tensor:
    """A dense array plus optional autodiff bookkeeping."""

    __slots__ = ("data", "requires_grad", "grad", "node")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.node: Node | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        flag = ", grad" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}{flag})"

    # operator sugar -------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, p):
        return power(self, p)

    def __truediv__(self, other):
        if isinstance(other, (int, float)):
            return mul(self, 1.0 / other)
        return mul(self, power(other, -1.0))

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])

    def transpose(self, axes=None):
        return transpose(self, axes)

    def sum(self, axis=None, keepdims: bool = False):
        return tensor_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return mean(self, axis=axis, keepdims=keepdims)

    def backward(self, seed: np.ndarray | None = None) -> None:
        backward(self, seed)


class Parameter(Tensor):
    """A named leaf tensor that always accumulates gradient."""

    __slots__ = ("name",)

    def __init__(self, data, name: str):
        super().__init__(np.asarray(data), requires_grad=True)
        self.name = name

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.shape}, dtype={self.data.dtype})"


def constant(data, dtype=None) -> Tensor:
    arr = np.asarray(data)
    if dtype is not None:
        arr = arr.astype(dtype, copy=False)
    return Tensor(arr)


def _wrap(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.data.dtype if like is not None and np.isscalar(x) else None
    return constant(x, dtype=dtype)


def _record(name: str, inputs: Sequence[Tensor], outputs_data: Sequence[np.ndarray], backward_fn):
    """Create output tensors and, when the tape is live, attach a node."""
    track = _GRAD_ENABLED and any(t.requires_grad or t.node is not None for t in inputs)
    outs = [Tensor(d) for d in outputs_data]
    if track:
        node = Node(inputs, name)
        node.backward = backward_fn
        node.outputs = outs
        for o in outs:
            o.node = node
            o.requires_grad = True
    return outs if len(outs) > 1 else outs[0]


def _sum_to_shape(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Undo numpy broadcasting in the backward direction."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


# ---------------------------------------------------------------------------
# arithmetic


def add(a, b) -> Tensor:
    a = _wrap(a, b if isinstance(b, Tensor) else None)
    b = _wrap(b, a)
    try:
        out = a.data + b.data
    except ValueError:
        raise ShapeError(f"add: cannot broadcast {a.shape} with {b.shape}") from None

    def bw(g):
        return _sum_to_shape(g, a.shape), _sum_to_shape(g, b.shape)

    return _record("add", (a, b), (out,), bw)


def mul(a, b) -> Tensor:
    a = _wrap(a, b if isinstance(b, Tensor) else None)
    b = _wrap(b, a)
    try:
        out = a.data * b.data
    except ValueError:
        raise ShapeError(f"mul: cannot broadcast {a.shape} with {b.shape}") from None

    def bw(g):
        return _sum_to_shape(g * b.data, a.shape), _sum_to_shape(g * a.data, b.shape)

    return _record("mul", (a, b), (out,), bw)


def power(a, p: float) -> Tensor:
    a = _wrap(a)
    out = a.data**p

    def bw(g):
        return (g * p * a.data ** (p - 1.0),)

    return _record("power", (a,), (out,), bw)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product; a 2-D right operand acts as a shared weight."""
    a, b = _wrap(a), _wrap(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs >=2-D operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner dims differ, {a.shape} vs {b.shape}")
    out = a.data @ b.data

    def bw(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _sum_to_shape(ga, a.shape), _sum_to_shape(gb, b.shape)

    return _record("matmul", (a, b), (out,), bw)


# ---------------------------------------------------------------------------
# shape manipulation


def reshape(a: Tensor, shape) -> Tensor:
    a = _wrap(a)
    out = a.data.reshape(shape)

    def bw(g):
        return (g.reshape(a.shape),)

    return _record("reshape", (a,), (out,), bw)


def transpose(a: Tensor, axes=None) -> Tensor:
    a = _wrap(a)
    out = np.transpose(a.data, axes)
    inv = None if axes is None else np.argsort(axes)

    def bw(g):
        return (np.transpose(g, inv),)

    return _record("transpose", (a,), (out,), bw)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [_wrap(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError(
            f"concat along axis {axis}: shapes {[t.shape for t in tensors]}"
        ) from None
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.split(g, splits, axis=axis))

    return _record("concat", tensors, (out,), bw)


def narrow(a: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice [start, start+length) along one axis."""
    a = _wrap(a)
    if not (0 <= start and start + length <= a.shape[axis]):
        raise ShapeError(f"narrow [{start}, {start + length}) outside axis {axis} of {a.shape}")
    index = [slice(None)] * a.ndim
    index[axis] = slice(start, start + length)
    index = tuple(index)
    out = a.data[index]

    def bw(g):
        full = np.zeros_like(a.data)
        full[index] = g
        return (full,)

    return _record("narrow", (a,), (out,), bw)


# ---------------------------------------------------------------------------
# reductions


def tensor_sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    a = _wrap(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).astype(a.data.dtype, copy=False),)

    return _record("sum", (a,), (out,), bw)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    a = _wrap(a)
    if axis is None:
        count = a.size
    elif isinstance(axis, tuple):
        count = int(np.prod([a.shape[ax] for ax in axis]))
    else:
        count = a.shape[axis]
    return mul(tensor_sum(a, axis=axis, keepdims=keepdims), 1.0 / count)


# ---------------------------------------------------------------------------
# nonlinearities


def sigmoid(a: Tensor) -> Tensor:
    a = _wrap(a)
    out = 1.0 / (1.0 + np.exp(-a.data))

    def bw(g):
        return (g * out * (1.0 - out),)

    return _record("sigmoid", (a,), (out,), bw)


def tanh(a: Tensor) -> Tensor:
    a = _wrap(a)
    out = np.tanh(a.data)

    def bw(g):
        return (g * (1.0 - out * out),)

    return _record("tanh", (a,), (out,), bw)


def relu(a: Tensor) -> Tensor:
    a = _wrap(a)
    out = np.maximum(a.data, 0.0)

    def bw(g):
        return (g * (a.data > 0.0),)

    return _record("relu", (a,), (out,), bw)


def exp(a: Tensor) -> Tensor:
    a = _wrap(a)
    out = np.exp(a.data)

    def bw(g):
        return (g * out,)

    return _record("exp", (a,), (out,), bw)


def log(a: Tensor, floor: float = 1e-30) -> Tensor:
    """Natural log with the argument clamped at ``floor`` for stability."""
    a = _wrap(a)
    clamped = np.maximum(a.data, floor)
    out = np.log(clamped)

    def bw(g):
        return (g / clamped * (a.data >= floor),)

    return _record("log", (a,), (out,), bw)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    a = _wrap(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        return (out * (g - dot),)

    return _record("softmax", (a,), (out,), bw)


def logsumexp(a: Tensor, axis: int = -1, keepdims: bool = False) -> Tensor:
    a = _wrap(a)
    m = a.data.max(axis=axis, keepdims=True)
    e = np.exp(a.data - m)
    s = e.sum(axis=axis, keepdims=True)
    out = m + np.log(s)
    soft = e / s
    if not keepdims:
        out = out.squeeze(axis)

    def bw(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (g * soft,)

    return _record("logsumexp", (a,), (out,), bw)


# ---------------------------------------------------------------------------
# indexing


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    """Row lookup: out[..., :] = table[ids[...], :]."""
    table = _wrap(table)
    ids = np.asarray(ids)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ShapeError(
            f"embedding ids in [{ids.min()}, {ids.max()}] outside table of {table.shape[0]} rows"
        )
    out = table.data[ids]

    def bw(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids.reshape(-1), g.reshape(-1, table.shape[1]))
        return (gt,)

    return _record("embedding", (table,), (out,), bw)


def gather_last(a: Tensor, ids: np.ndarray) -> Tensor:
    """out[...] = a[..., ids[...]] where ids matches a's leading shape."""
    a = _wrap(a)
    ids = np.asarray(ids)
    if ids.shape != a.shape[:-1]:
        raise ShapeError(f"gather_last: ids shape {ids.shape} vs leading {a.shape[:-1]}")
    if ids.size and (ids.min() < 0 or ids.max() >= a.shape[-1]):
        raise ShapeError(
            f"gather_last ids in [{ids.min()}, {ids.max()}] outside last dim {a.shape[-1]}"
        )
    out = np.take_along_axis(a.data, ids[..., None], axis=-1)[..., 0]

    def bw(g):
        ga = np.zeros_like(a.data)
        np.put_along_axis(ga, ids[..., None], g[..., None], axis=-1)
        return (ga,)

    return _record("gather_last", (a,), (out,), bw)


def scatter_add_last(base: Tensor, ids: np.ndarray, updates: Tensor) -> Tensor:
    """out = base, with updates[..., j] added at position ids[..., j] of the
    last axis. Duplicate ids accumulate, which is what mixing copy
    probabilities into an output distribution needs."""
    base, updates = _wrap(base), _wrap(updates)
    ids = np.asarray(ids)
    if ids.shape != updates.shape:
        raise ShapeError(f"scatter_add_last: ids {ids.shape} vs updates {updates.shape}")
    if ids.shape[:-1] != base.shape[:-1]:
        raise ShapeError(
            f"scatter_add_last: leading dims {ids.shape[:-1]} vs base {base.shape[:-1]}"
        )
    if ids.size and (ids.min() < 0 or ids.max() >= base.shape[-1]):
        raise ShapeError(
            f"scatter_add_last ids in [{ids.min()}, {ids.max()}] outside last dim {base.shape[-1]}"
        )
    out = base.data.copy()
    flat = out.reshape(-1, out.shape[-1])
    rows = np.repeat(np.arange(flat.shape[0]), ids.shape[-1])
    np.add.at(flat, (rows, ids.reshape(-1)), updates.data.reshape(-1))

    def bw(g):
        gflat = g.reshape(-1, g.shape[-1])
        gupd = gflat[rows, ids.reshape(-1)].reshape(updates.shape)
        return g, gupd

    return _record("scatter_add_last", (base, updates), (out,), bw)


# ---------------------------------------------------------------------------
# regularization and losses


def dropout(a: Tensor, p: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; a no-op when p == 0. Masks come from ``rng``."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {p}")
    a = _wrap(a)
    if p == 0.0:
        return a
    keep = (rng.random(a.shape) >= p).astype(a.data.dtype) / (1.0 - p)
    out = a.data * keep

    def bw(g):
        return (g * keep,)

    return _record("dropout", (a,), (out,), bw)


def cross_entropy(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Per-position negative log-likelihood from raw logits (last axis).

    Computed as logsumexp(logits) - logits[target]; composite of taped
    primitives, so gradients are exact.
    """
    targets = np.asarray(targets)
    return logsumexp(logits, axis=-1) - gather_last(logits, targets)


# ---------------------------------------------------------------------------
# fused recurrence


def lstm_gates(pre: Tensor, c_prev: Tensor):
    """Fused LSTM cell update from pre-activations [i | f | g | o].

    Returns (h, c). The heavy lifting runs in the compiled kernel when
    available; both forward and backward share the saved gate activations.
    """
    pre, c_prev = _wrap(pre), _wrap(c_prev)
    if pre.ndim != 2 or c_prev.ndim != 2 or pre.shape[1] != 4 * c_prev.shape[1]:
        raise ShapeError(f"lstm_gates: pre {pre.shape} must be (B, 4H) with c_prev {c_prev.shape}")
    pre_c = np.ascontiguousarray(pre.data)
    c_prev_c = np.ascontiguousarray(c_prev.data)
    h, c, gates = kernels.lstm_gates_forward(pre_c, c_prev_c)

    def bw(gh, gc):
        dpre, dc_prev = kernels.lstm_gates_backward(
            np.ascontiguousarray(gh), np.ascontiguousarray(gc), gates, c_prev_c, c
        )
        return dpre, dc_prev

    return _record("lstm_gates", (pre, c_prev), (h, c), bw)


# ---------------------------------------------------------------------------
# backpropagation


def _toposort(root_node: Node) -> list[Node]:
    order: list[Node] = []
    seen: set[int] = set()
    stack: list[tuple[Node, bool]] = [(root_node, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for t in node.inputs:
            if t.node is not None and id(t.node) not in seen:
                stack.append((t.node, False))
    return order


def backward(loss: Tensor, seed: np.ndarray | None = None) -> None:
    """Accumulate d(loss)/d(leaf) into every reachable leaf's ``.grad``."""
    if seed is None:
        if loss.size != 1:
            raise GradientError(f"backward needs a scalar loss, got shape {loss.shape}")
        seed = np.ones_like(loss.data)
    if not np.all(np.isfinite(loss.data)):
        raise GradientError("backward called on a non-finite loss")
    grads: dict[int, np.ndarray] = {id(loss): np.asarray(seed, dtype=loss.data.dtype)}
    if loss.node is None:
        if loss.requires_grad:
            loss.grad = grads[id(loss)] if loss.grad is None else loss.grad + grads[id(loss)]
        return
    for node in reversed(_toposort(loss.node)):
        out_grads = [
            grads.get(id(o), np.zeros_like(o.data)) for o in node.outputs
        ]
        in_grads = node.backward(*out_grads)
        if not isinstance(in_grads, tuple):
            in_grads = (in_grads,)
        if len(in_grads) != len(node.inputs):
            raise GradientError(
                f"{node.name}: backward returned {len(in_grads)} grads for "
                f"{len(node.inputs)} inputs"
            )
        for t, g in zip(node.inputs, in_grads):
            if g is None:
                continue
            g = np.asarray(g, dtype=t.data.dtype)
            if t.node is None:
                if t.requires_grad:
                    t.grad = g.copy() if t.grad is None else t.grad + g
            else:
                key = id(t)
                grads[key] = g if key not in grads else grads[key] + g
