"""A small define-by-run reverse-mode autodiff library over float64 numpy arrays.

Every op records its inputs and a backward rule on its output whenever an
input requires a gradient. :func:`backward` orders the recorded graph into a
:class:`Tape` (inputs strictly before outputs) and replays it in reverse.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager
from typing import Callable, Sequence

import numpy as np


class ShapeError(ValueError):
    pass


_state = threading.local()


def grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


@contextmanager
def no_grad():
    """Disable graph recording in the current thread."""
    prev = grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.array(data, dtype=np.float64) if not isinstance(data, np.ndarray) or data.dtype != np.float64 else data
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._parents: tuple = ()
        self._backward: Callable | None = None
        self.name = name

    # -- basics -------------------------------------------------------------
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def __len__(self) -> int:
        return len(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor({self.data!r}{flag})"

    # -- operator sugar -----------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return getitem(self, key)

    def sum(self, axis=None, keepdims=False):
        return sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], tuple) else shape)

    @property
    def T(self):
        return transpose(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: Sequence[Tensor], backward: Callable) -> Tensor:
    out = Tensor(data)
    if grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    if grad.shape == shape:
        return grad
    lead = grad.ndim - len(shape)
    if lead:
        grad = grad.sum(axis=tuple(range(lead)))
    axes = tuple(k for k, n in enumerate(shape) if n == 1 and grad.shape[k] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _check_broadcast(op: str, a: Tensor, b: Tensor):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


# -- elementwise -------------------------------------------------------------
def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("add", a, b)
    return _make(a.data + b.data, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("sub", a, b)
    return _make(a.data - b.data, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("mul", a, b)
    return _make(
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("div", a, b)
    out = a.data / b.data
    return _make(
        out,
        (a, b),
        lambda g: (_unbroadcast(g / b.data, a.shape), _unbroadcast(-g * out / b.data, b.shape)),
    )


def broadcast_to(a, shape) -> Tensor:
    a = as_tensor(a)
    shape = tuple(shape)
    try:
        data = np.broadcast_to(a.data, shape).copy()
    except ValueError:
        raise ShapeError(f"broadcast: cannot broadcast {a.shape} to {shape}") from None
    return _make(data, (a,), lambda g: (_unbroadcast(g, a.shape),))


def square(a) -> Tensor:
    a = as_tensor(a)
    return _make(a.data * a.data, (a,), lambda g: (2.0 * a.data * g,))


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    out = np.sqrt(a.data)
    return _make(out, (a,), lambda g: (0.5 * g / out,))


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return _make(a.data * mask, (a,), lambda g: (g * mask,))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def silu(a) -> Tensor:
    a = as_tensor(a)
    s = _sigmoid(a.data)
    return _make(a.data * s, (a,), lambda g: (g * (s * (1.0 + a.data * (1.0 - s))),))


# -- shape and reductions -------------------------------------------------------
def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} are incompatible")
    return _make(a.data @ b.data, (a, b), lambda g: (g @ b.data.T, a.data.T @ g))


def transpose(a) -> Tensor:
    a = as_tensor(a)
    return _make(a.data.T.copy(), (a,), lambda g: (g.T,))


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    try:
        data = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {a.shape} to {tuple(shape)}") from None
    return _make(data, (a,), lambda g: (g.reshape(a.shape),))


def getitem(a, key) -> Tensor:
    a = as_tensor(a)

    def back(g):
        full = np.zeros_like(a.data)
        np.add.at(full, key, g)
        return (full,)

    return _make(np.array(a.data[key]), (a,), back)


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat: nothing to concatenate")
    ref = tensors[0].shape
    ax = axis % len(ref)
    for t in tensors[1:]:
        if t.ndim != len(ref) or any(s != r for k, (s, r) in enumerate(zip(t.shape, ref)) if k != ax):
            raise ShapeError(f"concat: shapes {ref} and {t.shape} differ off axis {axis}")
    sizes = np.cumsum([t.shape[ax] for t in tensors])[:-1]
    return _make(
        np.concatenate([t.data for t in tensors], axis=ax),
        tensors,
        lambda g: tuple(np.split(g, sizes, axis=ax)),
    )


def sum(a, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _make(np.asarray(out, dtype=np.float64), (a,), back)


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    count = a.data.size if axis is None else a.shape[axis]
    return mul(sum(a, axis, keepdims), 1.0 / count)


# -- graph ops ------------------------------------------------------------------
def _check_index(index, size: int, op: str) -> np.ndarray:
    index = np.asarray(index, dtype=np.int64).reshape(-1)
    if len(index) and (index.min() < 0 or index.max() >= size):
        bad = index[(index < 0) | (index >= size)][0]
        raise IndexError(f"{op}: index {bad} out of range for size {size}")
    return index


def _segment_sum(values: np.ndarray, index: np.ndarray, out_size: int) -> np.ndarray:
    out = np.zeros((out_size,) + values.shape[1:])
    if len(index) == 0:
        return out
    order = np.argsort(index, kind="stable")
    keys = index[order]
    starts = np.flatnonzero(np.r_[True, keys[1:] != keys[:-1]])
    out[keys[starts]] = np.add.reduceat(values[order], starts, axis=0)
    return out


def scatter_sum(src, index, out_size: int) -> Tensor:
    """``out[r] = sum of src[k] over k with index[k] == r``, summed in ascending ``k``."""
    src = as_tensor(src)
    index = _check_index(index, out_size, "scatter_sum")
    if src.shape[0] != len(index):
        raise ShapeError(f"scatter_sum: src has {src.shape[0]} rows but index has {len(index)} entries")
    return _make(_segment_sum(src.data, index, out_size), (src,), lambda g: (g[index],))


def gather(src, index) -> Tensor:
    """``out[k] = src[index[k]]``."""
    src = as_tensor(src)
    index = _check_index(index, src.shape[0], "gather")
    n = src.shape[0]
    return _make(src.data[index], (src,), lambda g: (_segment_sum(g, index, n),))


# -- reverse pass ---------------------------------------------------------------
class Tape:
    """Recorded operations reachable from a root, inputs strictly before outputs."""

    def __init__(self, nodes: list[Tensor]):
        self.nodes = nodes

    @classmethod
    def from_root(cls, root: Tensor) -> "Tape":
        order: list[Tensor] = []
        seen = {id(root)}
        stack = [(root, iter(root._parents))]
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                stack.pop()
                order.append(node)
            elif nxt.requires_grad and id(nxt) not in seen:
                seen.add(id(nxt))
                stack.append((nxt, iter(nxt._parents)))
        return cls(order)

    def __len__(self) -> int:
        return len(self.nodes)

    def leaves(self) -> list[Tensor]:
        return [t for t in self.nodes if not t._parents]


def compute_grads(loss: Tensor) -> dict[int, tuple[Tensor, np.ndarray]]:
    """Gradients of a scalar ``loss`` for every leaf that requires grad, keyed by ``id``."""
    if loss.data.size != 1:
        raise ShapeError(f"backward: loss must be a scalar, got shape {loss.shape}")
    if not loss.requires_grad:
        return {}
    tape = Tape.from_root(loss)
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    leaves = {}
    for node in reversed(tape.nodes):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if not node._parents:
            leaves[id(node)] = (node, g)
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
    return leaves


def backward(loss: Tensor) -> None:
    """Accumulate d loss / d leaf into ``leaf.grad`` for every reachable leaf."""
    for leaf, g in compute_grads(loss).values():
        g = np.asarray(g, dtype=np.float64).reshape(leaf.shape)
        if leaf.grad is None:
            leaf.grad = g.copy()
        else:
            leaf.grad = leaf.grad + g


# -- finite differences -----------------------------------------------------------
def grad_check(f: Callable, point, step: float = 1e-5) -> float:
    """Max over coordinates of |analytic - central difference| / max(1, |analytic|).

    ``point`` is a Tensor or a list of Tensors; ``f`` is called with the same
    object and must return a scalar Tensor.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    points = list(point) if isinstance(point, (list, tuple)) else [point]
    for p in points:
        if not p.data.flags.c_contiguous:
            p.data = np.ascontiguousarray(p.data)
        p.requires_grad = True
        p.grad = None
    loss = f(point)
    if not np.all(np.isfinite(loss.data)):
        raise FloatingPointError("f is not finite at the base point")
    backward(loss)
    worst = 0.0
    with no_grad():
        for p in points:
            analytic = np.zeros_like(p.data) if p.grad is None else p.grad
            flat = p.data.reshape(-1)
            for k in range(flat.size):
                orig = flat[k]
                flat[k] = orig + step
                hi = f(point).item()
                flat[k] = orig - step
                lo = f(point).item()
                flat[k] = orig
                if not (np.isfinite(hi) and np.isfinite(lo)):
                    raise FloatingPointError(f"f is not finite at probe coordinate {k}")
                numeric = (hi - lo) / (2.0 * step)
                a = analytic.reshape(-1)[k]
                worst = max(worst, abs(a - numeric) / max(1.0, abs(a)))
    return worst
