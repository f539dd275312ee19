"""One TDE-GNN layer: graph diffusion with channel mixing, and the multistep update."""

from __future__ import annotations

import numpy as np

from .errors import ShapeError
from .graph import SparseOperator, spmv
from .module import Module
from .temporal import HistoryBuffer
from .tensor import Tensor, as_tensor, getitem, mean, parameter, power, relu, reshape

TIME_FREQUENCIES = 10
TIME_EMBED_WIDTH = 2 * TIME_FREQUENCIES


class SpatialTerm(Module):
    """``relu((F - h L F) W)`` with a bias-free k x k channel mixer ``W``."""

    param_group = "spatial"

    def __init__(self, channels: int, h: float, rng: np.random.Generator, weight=None):
        if not 0.0 <= h <= 1.0:
            raise ValueError(f"step size h={h} outside [0, 1]")
        self.h = float(h)
        if weight is None:
            bound = 1.0 / np.sqrt(channels)
            weight = rng.uniform(-bound, bound, (channels, channels))
        weight = np.asarray(weight, dtype=np.float64)
        if weight.shape != (channels, channels):
            raise ShapeError(f"mixing weight must be {channels}x{channels}, got {weight.shape}")
        self.weight = parameter(weight)

    def __call__(self, f: Tensor, lap: SparseOperator) -> Tensor:
        f = as_tensor(f)
        if f.shape[-1] != self.weight.shape[0]:
            raise ShapeError(f"features {f.shape} do not match mixing weight {self.weight.shape}")
        diffused = f - self.h * spmv(lap, f)
        return relu(diffused @ self.weight)


def spatial_term(st: SpatialTerm, f: Tensor, lap: SparseOperator) -> Tensor:
    return st(f, lap)


class FeatureNorm(Module):
    """Per-channel standardization over all nodes (and batch), with learned affine.

    Statistics always come from the current input, in training and inference
    alike, so a forward pass never depends on earlier passes.
    """

    param_group = "spatial"

    def __init__(self, channels: int, eps: float = 1e-5):
        self.eps = eps
        self.gamma = parameter(np.ones(channels))
        self.beta = parameter(np.zeros(channels))

    def __call__(self, f: Tensor) -> Tensor:
        axes = tuple(range(f.ndim - 1))
        centered = f - mean(f, axis=axes, keepdims=True)
        var = mean(centered * centered, axis=axes, keepdims=True)
        return centered * power(var + self.eps, -0.5) * self.gamma + self.beta


def _coefficient(c: Tensor, p: int, batched: bool) -> Tensor:
    if c.ndim == 1:
        return getitem(c, p)
    cp = getitem(c, (slice(None), p))
    if not batched:
        raise ShapeError(f"per-sample coefficients {c.shape} need batched features")
    return reshape(cp, (cp.shape[0], 1, 1))


def tde_step(buf: HistoryBuffer, c: Tensor, s_out: Tensor, h: float) -> Tensor:
    """``sum_p c_p F^(l-p+1) + h * s_out`` with ``c_1`` weighting the newest state.

    ``c`` has shape ``(o,)``, or ``(B, o)`` for per-sample stencils applied to
    ``(B, n, k)`` states.
    """
    window = buf.window()
    c = as_tensor(c)
    if c.shape[-1] != len(window):
        raise ShapeError(f"stencil length {c.shape[-1]} does not match history order {len(window)}")
    s_out = as_tensor(s_out)
    if s_out.shape != window[0].shape:
        raise ShapeError(f"spatial output {s_out.shape} does not match state {window[0].shape}")
    batched = window[0].ndim == 3
    if c.ndim == 2 and c.shape[0] != window[0].shape[0]:
        raise ShapeError(f"stencil batch {c.shape} does not match states {window[0].shape}")
    out = _coefficient(c, 0, batched) * window[0]
    for p in range(1, len(window)):
        out = out + _coefficient(c, p, batched) * window[p]
    return out + h * s_out


def frequencies() -> np.ndarray:
    """Geometric ladder ``2 pi / 10000^(j/10)`` for j = 0..9."""
    return 2.0 * np.pi / 10000.0 ** (np.arange(TIME_FREQUENCIES) / TIME_FREQUENCIES)


def time_embedding(times, n: int = 1) -> np.ndarray:
    """Sinusoidal features of frame times, replicated for ``n`` nodes.

    ``times`` of shape ``(r,)`` gives ``(n, 20 r)``; shape ``(B, r)`` gives
    ``(B, n, 20 r)``.  Each frame contributes ten sines then ten cosines.
    """
    times = np.asarray(times, dtype=np.float64)
    phase = times[..., None] * frequencies()
    block = np.concatenate([np.sin(phase), np.cos(phase)], axis=-1)
    row = block.reshape(*times.shape[:-1], times.shape[-1] * TIME_EMBED_WIDTH)
    if times.ndim == 1:
        return np.broadcast_to(row, (n, row.shape[-1])).copy()
    return np.broadcast_to(row[:, None, :], (row.shape[0], n, row.shape[-1])).copy()
