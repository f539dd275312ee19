"""Undirected graphs and the symmetric normalized Laplacian."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
import scipy.sparse as sp

from .errors import ShapeError
from .tensor import Tensor, as_tensor, record


@dataclass(frozen=True)
class Graph:
    """``n`` nodes and a deduplicated list of undirected edges (src < dst)."""

    n: int
    edges: tuple[tuple[int, int], ...] = field(default=())

    def __init__(self, n: int, edges: Iterable[tuple[int, int]] = ()):
        if n < 0:
            raise ValueError(f"node count must be non-negative, got {n}")
        seen = set()
        for src, dst in edges:
            src, dst = int(src), int(dst)
            if not (0 <= src < n and 0 <= dst < n):
                raise ValueError(f"edge ({src}, {dst}) references a node outside [0, {n})")
            if src == dst:
                raise ValueError(f"self-loop at node {src} is not allowed")
            seen.add((min(src, dst), max(src, dst)))
        object.__setattr__(self, "n", int(n))
        object.__setattr__(self, "edges", tuple(sorted(seen)))

    @property
    def m(self) -> int:
        return len(self.edges)

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n, dtype=np.int64)
        for src, dst in self.edges:
            deg[src] += 1
            deg[dst] += 1
        return deg

    def disjoint_union(self, copies: int) -> "Graph":
        """``copies`` non-interacting replicas of this graph, node blocks in order."""
        edges = [(src + c * self.n, dst + c * self.n) for c in range(copies) for src, dst in self.edges]
        return Graph(self.n * copies, edges)


class SparseOperator:
    """An immutable symmetric n x n operator in compressed-row layout."""

    def __init__(self, matrix: sp.csr_matrix):
        matrix = sp.csr_matrix(matrix, dtype=np.float64)
        if matrix.shape[0] != matrix.shape[1]:
            raise ShapeError(f"operator must be square, got {matrix.shape}")
        matrix.sort_indices()
        self._m = matrix

    @property
    def n(self) -> int:
        return self._m.shape[0]

    @property
    def indptr(self) -> np.ndarray:
        return self._m.indptr

    @property
    def indices(self) -> np.ndarray:
        return self._m.indices

    @property
    def values(self) -> np.ndarray:
        return self._m.data

    def dense(self) -> np.ndarray:
        return self._m.toarray()

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Product with an array shaped (n, k) or (B, n, k)."""
        if x.ndim == 2:
            if x.shape[0] != self.n:
                raise ShapeError(f"operator is {self.n}x{self.n} but features have shape {x.shape}")
            return np.asarray(self._m @ x)
        if x.ndim == 3:
            b, n, k = x.shape
            if n != self.n:
                raise ShapeError(f"operator is {self.n}x{self.n} but features have shape {x.shape}")
            flat = np.transpose(x, (1, 0, 2)).reshape(n, b * k)
            return np.transpose(np.asarray(self._m @ flat).reshape(n, b, k), (1, 0, 2))
        raise ShapeError(f"features must have 2 or 3 axes, got shape {x.shape}")

    @classmethod
    def zeros(cls, n: int) -> "SparseOperator":
        return cls(sp.csr_matrix((n, n)))


def normalized_laplacian(g: Graph) -> SparseOperator:
    """D^{-1/2} (D - A) D^{-1/2}; rows and columns of isolated nodes are zero."""
    deg = g.degrees().astype(np.float64)
    inv_sqrt = np.zeros_like(deg)
    nz = deg > 0
    inv_sqrt[nz] = 1.0 / np.sqrt(deg[nz])
    rows, cols, vals = [], [], []
    for src, dst in g.edges:
        w = -inv_sqrt[src] * inv_sqrt[dst]
        rows += [src, dst]
        cols += [dst, src]
        vals += [w, w]
    diag = np.flatnonzero(nz)
    rows += diag.tolist()
    cols += diag.tolist()
    vals += [1.0] * diag.size
    return SparseOperator(sp.csr_matrix((vals, (rows, cols)), shape=(g.n, g.n)))


def spmv(op: SparseOperator, f) -> Tensor:
    """Differentiable ``op @ f``; the operator is symmetric so its adjoint is itself."""
    f = as_tensor(f)
    return record(op.apply(f.data), (f,), lambda g: (op.apply(g),))
