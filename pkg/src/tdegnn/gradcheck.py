"""Central finite-difference checks for tape gradients."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tape, Tensor, backward


def numerical_gradient(fn: Callable[[], Tensor], inputs: Sequence[Tensor], eps: float = 1e-5) -> list[np.ndarray]:
    """Central differences of the scalar ``fn()`` w.r.t. each input, in place."""
    grads = []
    for t in inputs:
        g = np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = fn().item()
            flat[i] = orig - eps
            down = fn().item()
            flat[i] = orig
            gflat[i] = (up - down) / (2 * eps)
        grads.append(g)
    return grads


def analytic_gradient(fn: Callable[[], Tensor], inputs: Sequence[Tensor]) -> list[np.ndarray]:
    for t in inputs:
        t.requires_grad = True
        t.grad = None
    with Tape() as tape:
        loss = fn()
    backward(tape, loss)
    return [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in inputs]


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-7) -> float:
    """Max abs deviation scaled by the larger of the two gradients' max magnitude."""
    scale = max(np.max(np.abs(analytic), initial=0.0), np.max(np.abs(numeric), initial=0.0), floor)
    return float(np.max(np.abs(analytic - numeric), initial=0.0) / scale)


def max_gradient_error(fn: Callable[[], Tensor], inputs: Sequence[Tensor], eps: float = 1e-5) -> float:
    """Worst relative error between tape and finite-difference gradients over ``inputs``."""
    analytic = analytic_gradient(fn, inputs)
    numeric = numerical_gradient(fn, inputs, eps)
    return max(relative_error(a, n) for a, n in zip(analytic, numeric))
