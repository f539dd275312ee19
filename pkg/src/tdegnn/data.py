"""CSV ingestion for node-classification graphs and node time series.

Formats (a header row is optional in every file):

* ``edges.csv``    ``src,dst`` integer pairs
* ``features.csv`` ``node_id,f0,f1,...``
* ``labels.csv``   ``node_id,label``
* ``splits.csv``   ``node_id,split`` with split in {train, val, test}
* ``series.csv``   ``node_id,t,f0,f1,...`` on a uniform time grid
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DatasetError
from .graph import Graph

SPLIT_TAGS = ("train", "val", "test")


def _rows(path: Path, min_fields: int, exact: int | None = None):
    """Yield ``(line_number, fields)`` for non-blank rows, skipping a leading header."""
    if not path.is_file():
        raise DatasetError("file not found", path)
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, fields in enumerate(csv.reader(fh), start=1):
            fields = [f.strip() for f in fields]
            if not fields or all(f == "" for f in fields):
                continue
            if lineno == 1 and not _is_int(fields[0]):
                continue
            if len(fields) < min_fields or (exact is not None and len(fields) != exact):
                want = exact if exact is not None else f"at least {min_fields}"
                raise DatasetError(f"expected {want} fields, got {len(fields)}", path, lineno)
            yield lineno, fields


def _is_int(text: str) -> bool:
    try:
        int(text)
    except ValueError:
        return False
    return True


def _int(text: str, what: str, path: Path, lineno: int) -> int:
    try:
        return int(text)
    except ValueError:
        raise DatasetError(f"{what} {text!r} is not an integer", path, lineno) from None


def _floats(fields, path: Path, lineno: int) -> list[float]:
    try:
        values = [float(f) for f in fields]
    except ValueError as exc:
        raise DatasetError(f"non-numeric value ({exc})", path, lineno) from None
    if not np.all(np.isfinite(values)):
        raise DatasetError("non-finite value", path, lineno)
    return values


def _node(text: str, n: int, path: Path, lineno: int) -> int:
    node = _int(text, "node id", path, lineno)
    if not 0 <= node < n:
        raise DatasetError(f"node id {node} is outside [0, {n}) (dangling reference)", path, lineno)
    return node


@dataclass
class NodeDataset:
    graph: Graph
    features: np.ndarray
    labels: np.ndarray
    masks: dict[str, np.ndarray]

    @property
    def num_classes(self) -> int:
        labeled = self.labels[self.labels >= 0]
        return int(labeled.max()) + 1 if labeled.size else 0


def read_features(path: Path) -> np.ndarray:
    rows: dict[int, list[float]] = {}
    width = None
    for lineno, fields in _rows(path, 2):
        node = _int(fields[0], "node id", path, lineno)
        if node < 0:
            raise DatasetError(f"negative node id {node}", path, lineno)
        if node in rows:
            raise DatasetError(f"duplicate feature row for node {node}", path, lineno)
        values = _floats(fields[1:], path, lineno)
        if width is None:
            width = len(values)
        elif len(values) != width:
            raise DatasetError(f"expected {width} features, got {len(values)}", path, lineno)
        rows[node] = values
    if not rows:
        raise DatasetError("no feature rows", path)
    n = len(rows)
    missing = sorted(set(range(n)) - set(rows))
    if missing:
        raise DatasetError(f"node ids must be 0..{n - 1}; missing {missing[:5]}", path)
    return np.array([rows[i] for i in range(n)], dtype=np.float64)


def read_edges(path: Path, n: int) -> Graph:
    edges = []
    for lineno, fields in _rows(path, 2, exact=2):
        u = _node(fields[0], n, path, lineno)
        v = _node(fields[1], n, path, lineno)
        if u == v:
            raise DatasetError(f"self-loop on node {u}", path, lineno)
        edges.append((u, v))
    return Graph(n, edges)


def load_node_dataset(directory) -> NodeDataset:
    """Parse and cross-validate the four node-classification files in ``directory``."""
    root = Path(directory)
    features = read_features(root / "features.csv")
    n = features.shape[0]
    graph = read_edges(root / "edges.csv", n)

    labels = np.full(n, -1, dtype=np.int64)
    path = root / "labels.csv"
    label_line = {}
    for lineno, fields in _rows(path, 2, exact=2):
        node = _node(fields[0], n, path, lineno)
        if labels[node] >= 0:
            raise DatasetError(f"duplicate label for node {node}", path, lineno)
        label = _int(fields[1], "label", path, lineno)
        if label < 0:
            raise DatasetError(f"label {label} must be non-negative", path, lineno)
        labels[node] = label
        label_line[node] = lineno

    masks = {tag: np.zeros(n, dtype=bool) for tag in SPLIT_TAGS}
    path = root / "splits.csv"
    seen = set()
    for lineno, fields in _rows(path, 2, exact=2):
        node = _node(fields[0], n, path, lineno)
        tag = fields[1]
        if tag not in SPLIT_TAGS:
            raise DatasetError(f"unknown split tag {tag!r}; expected one of {', '.join(SPLIT_TAGS)}", path, lineno)
        if node in seen:
            raise DatasetError(f"node {node} assigned to more than one split", path, lineno)
        if labels[node] < 0:
            raise DatasetError(f"node {node} has a split but no label", path, lineno)
        seen.add(node)
        masks[tag][node] = True
    unsplit = sorted(set(label_line) - seen)
    if unsplit:
        node = unsplit[0]
        raise DatasetError(f"labeled node {node} has no split", root / "labels.csv", label_line[node])
    return NodeDataset(graph, features, labels, masks)


@dataclass
class NodeSeries:
    times: np.ndarray
    values: np.ndarray

    @property
    def step(self) -> float:
        return float(self.times[1] - self.times[0]) if self.times.size > 1 else 0.0


def load_node_series(path, n: int | None = None, rtol: float = 1e-6) -> NodeSeries:
    """Read ``node_id,t,f0,...`` rows into ``values[t_index, node, feature]``.

    Every node must have exactly one row per time, and the times must form
    a uniform grid.
    """
    path = Path(path)
    entries: dict[tuple[int, float], list[float]] = {}
    width = None
    for lineno, fields in _rows(path, 3):
        node = _int(fields[0], "node id", path, lineno)
        if node < 0 or (n is not None and node >= n):
            raise DatasetError(f"node id {node} is outside [0, {n}) (dangling reference)", path, lineno)
        t, *values = _floats(fields[1:], path, lineno)
        if width is None:
            width = len(values)
        elif len(values) != width:
            raise DatasetError(f"expected {width} features, got {len(values)}", path, lineno)
        key = (node, t)
        if key in entries:
            raise DatasetError(f"duplicate row for node {node} at t={t!r}", path, lineno)
        entries[key] = values
    if not entries:
        raise DatasetError("no series rows", path)
    nodes = sorted({k[0] for k in entries})
    count = n if n is not None else nodes[-1] + 1
    times = np.array(sorted({k[1] for k in entries}))
    if times.size > 1:
        gaps = np.diff(times)
        if np.max(np.abs(gaps - gaps[0])) > rtol * max(abs(gaps[0]), 1e-300):
            raise DatasetError("times do not form a uniform grid", path)
    values = np.full((times.size, count, width), np.nan)
    index = {t: i for i, t in enumerate(times)}
    for (node, t), row in entries.items():
        values[index[t], node] = row
    holes = np.argwhere(np.isnan(values[..., 0]))
    if holes.size:
        ti, node = holes[0]
        raise DatasetError(f"node {node} has no row at t={times[ti]!r}", path)
    return NodeSeries(times, values)
