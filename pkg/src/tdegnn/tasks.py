"""Objectives pairing a dataset with a model for :func:`tdegnn.train.train_loop`."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import Graph, normalized_laplacian
from .train import accuracy, cross_entropy_loss, mse_loss

SPLITS = ("train", "val", "test")


@dataclass
class Batch:
    indices: np.ndarray | None
    size: int


class NodeClassificationTask:
    """Full-graph cross-entropy on the training nodes; accuracy as the metric."""

    def __init__(self, graph: Graph, features: np.ndarray, labels: np.ndarray, masks: dict[str, np.ndarray]):
        self.graph = graph
        self.lap = normalized_laplacian(graph)
        self.features = np.asarray(features, dtype=np.float64)
        self.labels = np.asarray(labels, dtype=np.int64)
        self.masks = {name: np.asarray(masks[name], dtype=bool) for name in SPLITS}

    def batches(self, rng, batch_size):
        yield Batch(None, 1)

    def loss(self, model, batch, training, rng):
        logits = model(self.lap, self.features, training=training, rng=rng)
        return cross_entropy_loss(logits, self.labels, self.masks["train"])

    def logits(self, model) -> np.ndarray:
        return model(self.lap, self.features).data

    def evaluate(self, model, split: str) -> tuple[float, float]:
        mask = self.masks[split]
        if not mask.any():
            return float("nan"), float("nan")
        logits = model(self.lap, self.features)
        return cross_entropy_loss(logits, self.labels, mask).item(), accuracy(logits, self.labels, mask)


class ForecastTask:
    """Windowed forecasting with MSE as both loss and metric.

    ``inputs`` is ``(W, n, r*k)``, ``targets`` ``(W, n, a*k)`` and ``times``
    ``(W, r)``; ``splits`` maps split names to window indices.
    """

    def __init__(self, graph: Graph, inputs, targets, times, splits: dict[str, np.ndarray]):
        self.graph = graph
        self.lap = normalized_laplacian(graph)
        self.inputs = np.asarray(inputs, dtype=np.float64)
        self.targets = np.asarray(targets, dtype=np.float64)
        self.times = np.asarray(times, dtype=np.float64)
        self.splits = {name: np.asarray(splits[name], dtype=np.int64) for name in SPLITS}

    def batches(self, rng, batch_size):
        idx = self.splits["train"]
        if batch_size is None or batch_size >= idx.size:
            yield Batch(idx, idx.size)
            return
        order = idx[rng.permutation(idx.size)]
        for start in range(0, order.size, batch_size):
            chunk = order[start:start + batch_size]
            yield Batch(chunk, chunk.size)

    def loss(self, model, batch, training, rng):
        idx = batch.indices
        pred = model(self.lap, self.inputs[idx], self.times[idx], training=training, rng=rng)
        return mse_loss(pred, self.targets[idx])

    def predict(self, model, split: str) -> np.ndarray:
        idx = self.splits[split]
        return model(self.lap, self.inputs[idx], self.times[idx]).data

    def evaluate(self, model, split: str) -> tuple[float, float]:
        idx = self.splits[split]
        if idx.size == 0:
            return float("nan"), float("nan")
        err = float(np.mean((self.predict(model, split) - self.targets[idx]) ** 2))
        return err, err
