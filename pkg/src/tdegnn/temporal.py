"""Feature history and the learned temporal stencil.

A stencil ``c`` of length ``o`` weighs the ``o`` most recent feature
matrices, newest first, and always sums to one.  Two mechanisms produce it:

* :class:`DirectTemporal` learns a raw vector and divides it by its sum.
* :class:`AttentionTemporal` scores the history with multi-head dot-product
  attention without a softmax, keeps the row of the current state, and
  divides it by its sum, so entries may be negative.

Both recompute the normalization on every call; nothing normalized is ever
stored, which keeps the sum-to-one property structural under training.
"""

from __future__ import annotations

from collections import deque

import numpy as np

from .errors import DegenerateNormalizationError, ShapeError, StateError
from .module import Module
from .tensor import Tensor, getitem, matmul, mean, parameter, stack, swap_last, tsum

NORMALIZATION_THRESHOLD = 1e-8


class HistoryBuffer:
    """Ring of the ``order`` most recent feature matrices."""

    def __init__(self, order: int):
        if order < 1:
            raise ValueError(f"order must be >= 1, got {order}")
        self.order = order
        self._items: deque[Tensor] = deque(maxlen=order)

    def push(self, f: Tensor) -> "HistoryBuffer":
        if self._items and f.shape != self._items[0].shape:
            raise ShapeError(f"history holds {self._items[0].shape} matrices, got {f.shape}")
        self._items.appendleft(f)
        return self

    def replace_newest(self, f: Tensor) -> None:
        if not self._items:
            raise StateError("history buffer is empty")
        if f.shape != self._items[0].shape:
            raise ShapeError(f"history holds {self._items[0].shape} matrices, got {f.shape}")
        self._items[0] = f

    @property
    def warm(self) -> bool:
        return len(self._items) == self.order

    def __len__(self):
        return len(self._items)

    def newest(self) -> Tensor:
        if not self._items:
            raise StateError("history buffer is empty")
        return self._items[0]

    def window(self) -> list[Tensor]:
        """``[F^(l), F^(l-1), ..., F^(l-o+1)]``; raises until ``order`` pushes happened."""
        if not self.warm:
            raise StateError(
                f"history buffer is cold: {len(self._items)} of {self.order} states available"
            )
        return list(self._items)


def normalize(raw: Tensor) -> Tensor:
    """Divide ``raw`` by its sum over the last axis, refusing near-zero sums."""
    total = tsum(raw, axis=-1, keepdims=True)
    worst = np.min(np.abs(total.data))
    if not worst >= NORMALIZATION_THRESHOLD:
        raise DegenerateNormalizationError(float(total.data.reshape(-1)[np.argmin(np.abs(total.data))]),
                                           NORMALIZATION_THRESHOLD)
    return raw / total


class DirectTemporal(Module):
    """A raw learnable vector normalized to sum to one on every read."""

    param_group = "temporal"

    def __init__(self, order: int, init=None):
        if order < 1:
            raise ValueError(f"order must be >= 1, got {order}")
        self.order = order
        if init is None:
            init = np.zeros(order)
            init[0] = 1.0
        init = np.asarray(init, dtype=np.float64)
        if init.shape != (order,):
            raise ShapeError(f"initial stencil must have shape ({order},), got {init.shape}")
        self.raw = parameter(init, name="raw")

    def coefficients(self, buf: HistoryBuffer | None = None) -> Tensor:
        return normalize(self.raw)

    __call__ = coefficients


def pool_tokens(window: list[Tensor]) -> Tensor:
    """Mean over the node axis of each history matrix, stacked oldest first.

    Returns ``(o, k)`` for unbatched ``(n, k)`` states and ``(B, o, k)`` for
    batched ``(B, n, k)`` states.
    """
    tokens = [mean(f, axis=-2) for f in reversed(window)]
    return stack(tokens, axis=-2)


class AttentionTemporal(Module):
    """Softmax-free multi-head attention over the temporal axis of the history."""

    param_group = "temporal"

    def __init__(self, order: int, channels: int, rng: np.random.Generator, heads: int = 4,
                 head_dim: int | None = None):
        if order < 1:
            raise ValueError(f"order must be >= 1, got {order}")
        if heads < 1:
            raise ValueError(f"heads must be >= 1, got {heads}")
        self.order = order
        self.channels = channels
        self.heads = heads
        self.head_dim = head_dim if head_dim is not None else max(channels // heads, 4)
        bound = 1.0 / np.sqrt(channels)
        shape = (channels, self.head_dim)
        self.query = [parameter(rng.uniform(-bound, bound, shape)) for _ in range(heads)]
        self.key = [parameter(rng.uniform(-bound, bound, shape)) for _ in range(heads)]

    def score_map(self, buf: HistoryBuffer) -> Tensor:
        """Head-averaged ``o x o`` scores, rows and columns in chronological order."""
        window = buf.window()
        if window[0].shape[-1] != self.channels:
            raise ShapeError(f"attention expects {self.channels} channels, got {window[0].shape}")
        tokens = pool_tokens(window)
        scale = 1.0 / np.sqrt(self.head_dim)
        total = None
        for wq, wk in zip(self.query, self.key):
            scores = matmul(matmul(tokens, wq), swap_last(matmul(tokens, wk))) * scale
            total = scores if total is None else total + scores
        return total * (1.0 / self.heads)

    def coefficients(self, buf: HistoryBuffer) -> Tensor:
        """Normalized last row of the score map, reordered newest first.

        Shape ``(o,)`` for unbatched history, ``(B, o)`` for batched history.
        """
        scores = self.score_map(buf)
        last = getitem(scores, (Ellipsis, -1, slice(None, None, -1)))
        return normalize(last)

    __call__ = coefficients

