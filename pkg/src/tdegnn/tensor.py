"""Dense float64 tensors with tape-based reverse-mode differentiation.

Operations executed inside a ``with Tape() as tape:`` block are recorded when
at least one operand requires a gradient.  ``backward(tape, loss)`` replays
the records in reverse order and leaves ``.grad`` populated on every tensor
that requires one and contributes to ``loss``.  Outside a tape nothing is
recorded, so inference allocates no graph.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, ShapeError, StateError

MAX_AXES = 3

_local = threading.local()


def _stack() -> list:
    if not hasattr(_local, "tapes"):
        _local.tapes = []
    return _local.tapes


@dataclass
class _Record:
    parents: tuple
    out: "Tensor"
    backward: Callable


class Tape:
    """Ordered record of differentiable primitives.

    Tapes nest; only the innermost active tape records.  A tape can be
    replayed exactly once.
    """

    def __init__(self):
        self.records: list[_Record] = []
        self.consumed = False

    def __enter__(self) -> "Tape":
        if self.consumed:
            raise StateError("cannot record onto a consumed tape")
        _stack().append(self)
        return self

    def __exit__(self, *exc):
        _stack().remove(self)
        return False

    def __len__(self):
        return len(self.records)


def active_tape() -> Tape | None:
    tapes = _stack()
    return tapes[-1] if tapes else None


class Tensor:
    """A float64 array of up to three axes with an optional gradient buffer."""

    __slots__ = ("data", "requires_grad", "grad", "name")
    __array_priority__ = 1000

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim > MAX_AXES:
            raise ShapeError(f"tensors support at most {MAX_AXES} axes, got shape {arr.shape}")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.name = name

    @property
    def shape(self) -> tuple:
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
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def zero_grad(self):
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self):
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"

    def __len__(self):
        return self.data.shape[0]

    __add__ = lambda self, other: add(self, other)
    __radd__ = lambda self, other: add(other, self)
    __sub__ = lambda self, other: sub(self, other)
    __rsub__ = lambda self, other: sub(other, self)
    __mul__ = lambda self, other: mul(self, other)
    __rmul__ = lambda self, other: mul(other, self)
    __truediv__ = lambda self, other: div(self, other)
    __rtruediv__ = lambda self, other: div(other, self)
    __matmul__ = lambda self, other: matmul(self, other)
    __neg__ = lambda self: neg(self)
    __pow__ = lambda self, exponent: power(self, exponent)
    __getitem__ = lambda self, index: getitem(self, index)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data, name: str | None = None) -> Tensor:
    """A leaf tensor that requires a gradient."""
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True, name=name)


def record(data: np.ndarray, parents: Sequence[Tensor], backward: Callable) -> Tensor:
    """Wrap ``data`` as the output of a primitive.

    ``backward(g)`` must return one gradient (or ``None``) per parent.  The
    primitive is recorded only if a tape is active and some parent requires
    a gradient.  Other modules use this to define fused primitives.
    """
    tape = active_tape()
    needs = tape is not None and any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=needs)
    if needs:
        if tape.consumed:
            raise StateError("cannot record onto a consumed tape")
        tape.records.append(_Record(tuple(parents), out, backward))
    return out


def unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (inverse of numpy broadcasting)."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _broadcast_shape(a: Tensor, b: Tensor) -> tuple:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"cannot broadcast shapes {a.shape} and {b.shape}") from None


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b)
    return record(a.data + b.data, (a, b),
                  lambda g: (unbroadcast(g, a.shape), unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b)
    return record(a.data - b.data, (a, b),
                  lambda g: (unbroadcast(g, a.shape), unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b)
    return record(a.data * b.data, (a, b),
                  lambda g: (unbroadcast(g * b.data, a.shape), unbroadcast(g * a.data, b.shape)))


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b)
    out = a.data / b.data

    def backward(g):
        ga = g / b.data
        return unbroadcast(ga, a.shape), unbroadcast(-ga * out, b.shape)

    return record(out, (a, b), backward)


def neg(a) -> Tensor:
    a = as_tensor(a)
    return record(-a.data, (a,), lambda g: (-g,))


def power(a, exponent: float) -> Tensor:
    a = as_tensor(a)
    return record(a.data ** exponent, (a,),
                  lambda g: (g * exponent * a.data ** (exponent - 1),))


def matmul(a, b) -> Tensor:
    """Matrix product over the last two axes; leading axes broadcast."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    if a.ndim == 3 and b.ndim == 3 and a.shape[0] != b.shape[0]:
        raise ShapeError(f"matmul batch mismatch: {a.shape} @ {b.shape}")

    def backward(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return unbroadcast(ga, a.shape), unbroadcast(gb, b.shape)

    return record(np.matmul(a.data, b.data), (a, b), backward)


def relu(x) -> Tensor:
    """Elementwise max(x, 0); the subgradient at 0 is 0."""
    x = as_tensor(x)
    mask = x.data > 0
    return record(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def tsum(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return record(out, (x,), backward)


def mean(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    count = x.data.size if axis is None else np.prod([x.shape[i] for i in np.atleast_1d(axis)])
    return tsum(x, axis, keepdims) * (1.0 / count)


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"cannot reshape {x.shape} into {tuple(shape)}") from None
    if out.ndim > MAX_AXES:
        raise ShapeError(f"reshape target {out.shape} exceeds {MAX_AXES} axes")
    return record(out, (x,), lambda g: (g.reshape(x.shape),))


def swap_last(x) -> Tensor:
    """Transpose of the last two axes."""
    x = as_tensor(x)
    return record(np.swapaxes(x.data, -1, -2), (x,), lambda g: (np.swapaxes(g, -1, -2),))


def getitem(x, index) -> Tensor:
    x = as_tensor(x)
    out = x.data[index]

    def backward(g):
        full = np.zeros_like(x.data)
        np.add.at(full, index, g)
        return (full,)

    return record(np.array(out), (x,), backward)


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError("concat shape mismatch: " + ", ".join(str(t.shape) for t in tensors)) from None
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return record(out, tensors, lambda g: tuple(np.split(g, bounds, axis=axis)))


def stack(tensors: Sequence, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.stack([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError("stack shape mismatch: " + ", ".join(str(t.shape) for t in tensors)) from None
    if out.ndim > MAX_AXES:
        raise ShapeError(f"stack result {out.shape} exceeds {MAX_AXES} axes")
    return record(out, tensors,
                  lambda g: tuple(np.moveaxis(g, axis, 0)[i] for i in range(len(tensors))))


def dropout(x, p: float, training: bool, rng: np.random.Generator | None) -> Tensor:
    """Inverted dropout.  Identity (same object) when ``p == 0`` or not training."""
    if not 0.0 <= p <= 0.9:
        raise ConfigError(f"dropout probability {p} outside [0, 0.9]")
    x = as_tensor(x)
    if not training or p == 0.0:
        return x
    if rng is None:
        raise ConfigError("dropout in training mode needs a random generator")
    mask = (rng.random(x.shape) >= p) / (1.0 - p)
    return record(x.data * mask, (x,), lambda g: (g * mask,))


def backward(tape: Tape, loss: Tensor) -> None:
    """Propagate d(loss)/d(.) through ``tape`` and consume it.

    Gradients accumulate into ``.grad`` of every tensor that requires one,
    so call ``zero_grad`` on leaves between steps.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if tape.consumed:
        raise StateError("tape already consumed by a previous backward pass")
    tape.consumed = True
    pending = {id(loss): np.ones_like(loss.data)}
    owners = {id(loss): loss}
    for rec in reversed(tape.records):
        g = pending.pop(id(rec.out), None)
        if g is None:
            continue
        rec.out.grad = g.copy() if rec.out.grad is None else rec.out.grad + g
        for parent, gp in zip(rec.parents, rec.backward(g)):
            if gp is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in pending:
                pending[key] = pending[key] + gp
            else:
                pending[key] = gp
                owners[key] = parent
    for key, g in pending.items():
        leaf = owners[key]
        if leaf.requires_grad:
            leaf.grad = np.array(g, copy=True) if leaf.grad is None else leaf.grad + g
    tape.records.clear()
