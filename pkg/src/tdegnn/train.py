"""Losses, Adam with per-group settings, and the shared training loop."""

from __future__ import annotations

import csv
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Protocol

import numpy as np

from .errors import ConfigError, DivergenceError, PreconditionError, ShapeError
from .models import load_checkpoint, save_checkpoint
from .module import GROUPS
from .rng import RngTree
from .tensor import Tape, Tensor, as_tensor, backward, record

LR_RANGE = (1e-4, 1e-1)
WD_RANGE = (0.0, 1e-2)
DROPOUT_RANGE = (0.0, 0.9)
STEP_RANGE = (1e-3, 1.0)
HIDDEN_CHOICES = (8, 16, 32, 64, 128, 256)

BETA1 = 0.9
BETA2 = 0.999
EPS = 1e-8


def mse_loss(pred, target) -> Tensor:
    pred, target = as_tensor(pred), as_tensor(target)
    if pred.shape != target.shape:
        raise ShapeError(f"prediction {pred.shape} and target {target.shape} differ")
    diff = pred.data - target.data
    scale = 2.0 / diff.size
    return record(np.mean(diff * diff), (pred, target),
                  lambda g: (g * scale * diff, -g * scale * diff))


def cross_entropy_loss(logits, labels, mask=None) -> Tensor:
    """Mean over masked nodes of ``-log softmax(logits)[label]``."""
    logits = as_tensor(logits)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeError(f"logits {logits.shape} and labels {labels.shape} do not match")
    mask = np.ones(labels.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    count = int(mask.sum())
    if count == 0:
        raise PreconditionError("cross-entropy mask selects no nodes")
    rows = np.flatnonzero(mask)
    if np.any(labels[rows] < 0) or np.any(labels[rows] >= logits.shape[1]):
        raise PreconditionError(f"labels must lie in [0, {logits.shape[1]})")
    z = logits.data[rows]
    shifted = z - z.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    picked = shifted[np.arange(rows.size), labels[rows]]
    loss = float(np.mean(log_norm - picked))

    def grad(g):
        soft = np.exp(shifted - log_norm[:, None])
        soft[np.arange(rows.size), labels[rows]] -= 1.0
        full = np.zeros_like(logits.data)
        full[rows] = soft * (g / count)
        return (full,)

    return record(np.array(loss), (logits,), grad)


def accuracy(logits, labels, mask) -> float:
    data = logits.data if isinstance(logits, Tensor) else np.asarray(logits)
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        return float("nan")
    return float(np.mean(data[mask].argmax(axis=1) == np.asarray(labels)[mask]))


def _check_range(name: str, value: float, lo: float, hi: float):
    if not (lo <= value <= hi):
        raise ConfigError(f"{name}={value} outside the allowed range [{lo:g}, {hi:g}]")


@dataclass
class TrainConfig:
    lr_embedding: float = 1e-2
    lr_temporal: float = 1e-2
    lr_spatial: float = 1e-2
    wd_embedding: float = 0.0
    wd_temporal: float = 0.0
    wd_spatial: float = 0.0
    dropout_io: float = 0.0
    dropout_hidden: float = 0.0
    epochs: int = 100
    seed: int = 0
    grad_clip: float | None = None
    batchnorm: bool = False
    batch_size: int | None = None
    record_timing: bool = False

    def __post_init__(self):
        self.validate()

    def validate(self):
        for group in GROUPS:
            _check_range(f"lr_{group}", getattr(self, f"lr_{group}"), *LR_RANGE)
            _check_range(f"wd_{group}", getattr(self, f"wd_{group}"), *WD_RANGE)
        _check_range("dropout_io", self.dropout_io, *DROPOUT_RANGE)
        _check_range("dropout_hidden", self.dropout_hidden, *DROPOUT_RANGE)
        if self.epochs < 0:
            raise ConfigError(f"epochs={self.epochs} must be non-negative")
        if self.seed < 0:
            raise ConfigError(f"seed={self.seed} must be non-negative")
        if self.grad_clip is not None and not self.grad_clip > 0:
            raise ConfigError(f"grad_clip={self.grad_clip} must be positive")
        if self.batch_size is not None and self.batch_size < 1:
            raise ConfigError(f"batch_size={self.batch_size} must be positive")

    def group_settings(self) -> dict[str, tuple[float, float]]:
        return {g: (getattr(self, f"lr_{g}"), getattr(self, f"wd_{g}")) for g in GROUPS}

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class AdamState:
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict[str, Tensor], grads: dict[str, np.ndarray], state: AdamState,
              lr: float, weight_decay: float = 0.0) -> None:
    """One bias-corrected Adam update with decoupled weight decay, in place.

    ``state.step`` must already count this step (1 on the first call).
    """
    t = state.step
    if t < 1:
        raise ValueError("AdamState.step must be incremented before adam_step")
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        if g.shape != p.shape:
            raise ShapeError(f"gradient for {name} has shape {g.shape}, parameter {p.shape}")
        if not np.all(np.isfinite(g)):
            raise DivergenceError(f"non-finite gradient for parameter {name}", parameter=name)
        m = state.m.get(name)
        v = state.v.get(name)
        m = (1 - BETA1) * g if m is None else BETA1 * m + (1 - BETA1) * g
        v = (1 - BETA2) * g * g if v is None else BETA2 * v + (1 - BETA2) * g * g
        state.m[name], state.v[name] = m, v
        m_hat = m / (1 - BETA1 ** t)
        v_hat = v / (1 - BETA2 ** t)
        update = m_hat / (np.sqrt(v_hat) + EPS)
        if weight_decay:
            update = update + weight_decay * p.data
        p.data = p.data - lr * update


class Adam:
    """Adam over a model's three parameter groups.

    Every trainable tensor must belong to exactly one of the groups
    ``embedding``, ``temporal`` and ``spatial``.
    """

    def __init__(self, model, settings: dict[str, tuple[float, float]], grad_clip: float | None = None):
        self.groups: dict[str, dict[str, Tensor]] = {g: {} for g in GROUPS}
        for name, tensor, group in model.named_parameters():
            if group not in self.groups:
                raise ConfigError(f"parameter {name} has no optimizer group (got {group!r})")
            self.groups[group][name] = tensor
        covered = sum(len(v) for v in self.groups.values())
        if covered != len(model.parameters()):
            raise ConfigError("parameter groups do not partition the model parameters")
        missing = set(GROUPS) - set(settings)
        if missing:
            raise ConfigError(f"missing optimizer settings for groups {sorted(missing)}")
        self.settings = settings
        self.grad_clip = grad_clip
        self.state = AdamState()

    def params(self) -> dict[str, Tensor]:
        return {name: t for group in self.groups.values() for name, t in group.items()}

    def zero_grad(self):
        for t in self.params().values():
            t.grad = None

    def step(self) -> float:
        """Apply one update from the populated ``.grad`` buffers; returns the gradient norm."""
        params = self.params()
        grads = {name: (t.grad if t.grad is not None else np.zeros_like(t.data)) for name, t in params.items()}
        for name, g in grads.items():
            if not np.all(np.isfinite(g)):
                raise DivergenceError(f"non-finite gradient for parameter {name}", parameter=name)
        norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
        if self.grad_clip is not None and norm > self.grad_clip:
            scale = self.grad_clip / norm
            grads = {name: g * scale for name, g in grads.items()}
        self.state.step += 1
        for group, members in self.groups.items():
            lr, wd = self.settings[group]
            adam_step(members, grads, self.state, lr, wd)
        return norm


class Task(Protocol):
    """What the training loop needs from a dataset/objective pairing."""

    def batches(self, rng: np.random.Generator, batch_size: int | None): ...

    def loss(self, model, batch, training: bool, rng: np.random.Generator | None) -> Tensor: ...

    def evaluate(self, model, split: str) -> tuple[float, float]: ...


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    val_loss: float
    val_metric: float
    test_metric: float
    wall_ms: float


@dataclass
class TrainResult:
    history: list[EpochMetrics]
    best_checkpoint: bytes
    best_epoch: int

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["epoch", "train_loss", "val_loss", "val_metric", "test_metric", "wall_ms"])
            for m in self.history:
                writer.writerow([m.epoch, repr(m.train_loss), repr(m.val_loss), repr(m.val_metric),
                                 repr(m.test_metric), repr(m.wall_ms)])


def train_loop(model, task: Task, cfg: TrainConfig, restore_best: bool = True) -> TrainResult:
    """Full epochs of Adam steps with validation-based checkpoint selection.

    The checkpoint with the lowest validation loss is kept (ties go to the
    earlier epoch).  Randomness (dropout masks, batch order) comes from
    streams of ``cfg.seed``, so a rerun reproduces every metric bit for bit.
    Wall-clock times are recorded only when ``cfg.record_timing`` is set.
    """
    cfg.validate()
    tree = RngTree(cfg.seed)
    shuffle_rng = tree.stream("train/shuffle")
    dropout_rng = tree.stream("train/dropout")
    opt = Adam(model, cfg.group_settings(), cfg.grad_clip)
    history: list[EpochMetrics] = []
    best = save_checkpoint(model)
    best_epoch = 0
    best_val = math.inf
    if cfg.epochs > 0:
        best_val = task.evaluate(model, "val")[0]
    for epoch in range(1, cfg.epochs + 1):
        start = time.perf_counter()
        total, weight = 0.0, 0
        for batch in task.batches(shuffle_rng, cfg.batch_size):
            opt.zero_grad()
            with Tape() as tape:
                loss = task.loss(model, batch, True, dropout_rng)
            value = loss.item()
            if not math.isfinite(value):
                raise DivergenceError(f"non-finite training loss at epoch {epoch}", epoch=epoch)
            backward(tape, loss)
            try:
                opt.step()
            except DivergenceError as exc:
                raise DivergenceError(f"{exc} at epoch {epoch}", parameter=exc.parameter, epoch=epoch) from None
            size = getattr(batch, "size", 1)
            total += value * size
            weight += size
        val_loss, val_metric = task.evaluate(model, "val")
        _, test_metric = task.evaluate(model, "test")
        if not math.isfinite(val_loss):
            raise DivergenceError(f"non-finite validation loss at epoch {epoch}", epoch=epoch)
        wall = (time.perf_counter() - start) * 1e3 if cfg.record_timing else 0.0
        history.append(EpochMetrics(epoch, total / max(weight, 1), val_loss, val_metric, test_metric, wall))
        if val_loss < best_val:
            best_val = val_loss
            best_epoch = epoch
            best = save_checkpoint(model)
    if restore_best and cfg.epochs > 0:
        restored = load_checkpoint(best).state()
        for name, t in model.state().items():
            t.data = restored[name].data
    return TrainResult(history, best, best_epoch)
