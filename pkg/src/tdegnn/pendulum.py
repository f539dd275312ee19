"""Time-varying nonlinear pendulum: simulation, forecasting windows and the order comparison.

The bob obeys ``theta'' = sign * sin(omega(t) * theta)`` with
``omega(t) = base_freq - epsilon * sin(t)``, integrated by kick-drift-kick
leapfrog.  The graph has two nodes: the pivot fixed at the origin and the bob
at ``(l sin theta, -l cos theta)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError, DivergenceError
from .graph import Graph
from .models import TemporalModel
from .tasks import ForecastTask
from .train import TrainConfig, train_loop

COORDS = 2


@dataclass
class PendulumConfig:
    theta0: float = 1.0
    omega_dot0: float = 0.0
    dt: float = 0.1
    steps: int = 500
    base_freq: float = 1.0
    epsilon: float = 0.04
    forcing_sign: int = -1
    length: float = 1.0

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not self.dt > 0:
            raise ConfigError(f"dt={self.dt} must be positive")
        if self.steps < 2:
            raise ConfigError(f"steps={self.steps} must be at least 2")
        if not 0.0 <= self.epsilon < 1.0:
            raise ConfigError(f"epsilon={self.epsilon} outside [0, 1)")
        if self.forcing_sign not in (1, -1):
            raise ConfigError(f"forcing_sign={self.forcing_sign} must be +1 or -1")
        if not self.length > 0:
            raise ConfigError(f"length={self.length} must be positive")

    def frequency(self, t):
        return self.base_freq - self.epsilon * np.sin(t)

    def forcing(self, theta, t):
        return self.forcing_sign * np.sin(self.frequency(t) * theta)


@dataclass
class Trajectory:
    times: np.ndarray
    theta: np.ndarray
    velocity: np.ndarray
    length: float

    @property
    def x1(self) -> np.ndarray:
        return self.length * np.sin(self.theta)

    @property
    def y1(self) -> np.ndarray:
        return -self.length * np.cos(self.theta)

    def positions(self) -> np.ndarray:
        """``(steps, 2 nodes, 2 coords)``; node 0 is the pivot at the origin."""
        pos = np.zeros((self.times.size, 2, COORDS))
        pos[:, 1, 0] = self.x1
        pos[:, 1, 1] = self.y1
        return pos

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["t", "theta", "x1", "y1"])
            for row in zip(self.times, self.theta, self.x1, self.y1):
                writer.writerow([repr(float(v)) for v in row])


def leapfrog(cfg: PendulumConfig, theta0: float, velocity0: float, t0: float, steps: int):
    """``steps`` kick-drift-kick updates; returns angle and velocity arrays of length steps+1."""
    theta = np.empty(steps + 1)
    vel = np.empty(steps + 1)
    theta[0], vel[0] = theta0, velocity0
    half = 0.5 * cfg.dt
    t = t0
    for i in range(steps):
        v_half = vel[i] + half * cfg.forcing(theta[i], t)
        theta[i + 1] = theta[i] + cfg.dt * v_half
        vel[i + 1] = v_half + half * cfg.forcing(theta[i + 1], t + cfg.dt)
        t = t0 + (i + 1) * cfg.dt
    return theta, vel


def simulate(cfg: PendulumConfig) -> Trajectory:
    """``cfg.steps`` samples starting at t = 0 (the initial state included)."""
    cfg.validate()
    theta, vel = leapfrog(cfg, cfg.theta0, cfg.omega_dot0, 0.0, cfg.steps - 1)
    times = cfg.dt * np.arange(cfg.steps)
    return Trajectory(times, theta, vel, cfg.length)


def pendulum_graph() -> Graph:
    return Graph(2, [(0, 1)])


@dataclass
class WindowDataset:
    inputs: np.ndarray
    targets: np.ndarray
    times: np.ndarray
    splits: dict[str, np.ndarray]
    frames: int
    horizon: int
    window_start: np.ndarray = field(repr=False, default=None)

    def __len__(self):
        return self.inputs.shape[0]


def sliding_windows(series: np.ndarray, times: np.ndarray, r: int, a: int):
    """Windows of ``r`` input frames followed by ``a`` target frames.

    ``series`` is ``(T, n, k)``; returns inputs ``(W, n, r*k)``, targets
    ``(W, n, a*k)`` and input times ``(W, r)`` with ``W = T - r - a + 1``.
    """
    total, n, k = series.shape
    count = total - r - a + 1
    if count < 1:
        raise ConfigError(f"{total} time steps cannot hold r={r} inputs plus a={a} targets")
    inputs = np.stack([series[w:w + r].transpose(1, 0, 2).reshape(n, r * k) for w in range(count)])
    targets = np.stack([series[w + r:w + r + a].transpose(1, 0, 2).reshape(n, a * k) for w in range(count)])
    in_times = np.stack([times[w:w + r] for w in range(count)])
    return inputs, targets, in_times


def contiguous_splits(total: int, r: int, a: int, fractions=(0.7, 0.15, 0.15)) -> dict[str, np.ndarray]:
    """Assign each window to the time block holding all of its frames.

    Windows straddling a block boundary are dropped, so no frame seen during
    training appears in validation or test windows.
    """
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or any(f < 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigError(f"split fractions {fractions} must be three non-negative numbers summing to 1")
    b1 = int(round(fractions[0] * total))
    b2 = int(round((fractions[0] + fractions[1]) * total))
    bounds = {"train": (0, b1), "val": (b1, b2), "test": (b2, total)}
    starts = np.arange(total - r - a + 1)
    ends = starts + r + a - 1
    return {name: starts[(starts >= lo) & (ends < hi)] for name, (lo, hi) in bounds.items()}


def make_dataset(traj: Trajectory, r: int = 4, a: int = 1, split=(0.7, 0.15, 0.15)) -> WindowDataset:
    steps = traj.times.size
    if r < 1 or a < 1:
        raise ConfigError("frames and horizon must be positive")
    if r + a > steps:
        raise ConfigError(f"{steps} steps cannot hold r={r} inputs plus a={a} targets")
    inputs, targets, times = sliding_windows(traj.positions(), traj.times, r, a)
    splits = contiguous_splits(steps, r, a, split)
    return WindowDataset(inputs, targets, times, splits, r, a, np.arange(inputs.shape[0]))


def naive_predict(inputs: np.ndarray, k: int = COORDS, a: int = 1) -> np.ndarray:
    """Repeat the newest observed frame ``a`` times."""
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.shape[-1] < k:
        raise ConfigError("window holds no complete frame")
    last = inputs[..., -k:]
    return np.concatenate([last] * a, axis=-1)


@dataclass
class ModelSettings:
    hidden: int = 16
    layers: int = 1
    h: float = 0.1
    temporal: str = "direct"
    heads: int = 4


def default_train_config(seed: int = 0, epochs: int = 300) -> TrainConfig:
    return TrainConfig(lr_embedding=1e-2, lr_temporal=1e-2, lr_spatial=1e-2, epochs=epochs,
                       seed=seed, batch_size=64)


@dataclass
class ExperimentRow:
    model: str
    order: int | None
    test_mse: float
    learned_coefficients: list[float] | None = None
    status: str = "ok"
    error: str | None = None

    def to_json(self) -> dict:
        test = None if not math.isfinite(self.test_mse) else float(self.test_mse)
        return {"model": self.model, "order": self.order, "test_mse": test,
                "learned_coefficients": self.learned_coefficients, "status": self.status,
                "error": self.error}


@dataclass
class ExperimentResult:
    rows: list[ExperimentRow]
    pendulum: PendulumConfig
    settings: ModelSettings
    train: TrainConfig
    models: dict = field(default_factory=dict, repr=False)

    def row(self, model: str, order: int | None = None) -> ExperimentRow:
        for r in self.rows:
            if r.model == model and r.order == order:
                return r
        raise KeyError((model, order))

    def to_json(self) -> dict:
        return {"pendulum": asdict(self.pendulum), "model": asdict(self.settings),
                "train": self.train.to_dict(), "rows": [r.to_json() for r in self.rows]}

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["model", "order", "test_mse", "learned_coefficients"])
            for r in self.rows:
                mse = "failed" if r.status != "ok" else repr(float(r.test_mse))
                coeffs = "" if r.learned_coefficients is None else ";".join(repr(float(c)) for c in r.learned_coefficients)
                writer.writerow([r.model, "" if r.order is None else r.order, mse, coeffs])


def build_task(cfg: PendulumConfig, frames: int = 4, horizon: int = 1, split=(0.7, 0.15, 0.15)):
    data = make_dataset(simulate(cfg), frames, horizon, split)
    task = ForecastTask(pendulum_graph(), data.inputs, data.targets, data.times, data.splits)
    return data, task


def learned_stencil(model: TemporalModel, task: ForecastTask) -> list[float]:
    """Stencil averaged over layers (and over the test windows for attention)."""
    if model.config.temporal == "direct":
        per_layer = model.coefficients()
    else:
        idx = task.splits["test"]
        per_layer = model.trace(task.lap, task.inputs[idx], task.times[idx])
    return [float(v) for v in np.mean(per_layer, axis=0)] if per_layer else []


def run_experiment(orders=(1, 2), cfg: PendulumConfig | None = None, train_cfg: TrainConfig | None = None,
                   settings: ModelSettings | None = None, frames: int = 4, horizon: int = 1,
                   split=(0.7, 0.15, 0.15)) -> ExperimentResult:
    """Naive baseline plus one trained forecaster per order, scored by test MSE."""
    cfg = cfg or PendulumConfig()
    train_cfg = train_cfg or default_train_config()
    settings = settings or ModelSettings()
    data, task = build_task(cfg, frames, horizon, split)
    test_idx = data.splits["test"]
    naive = naive_predict(data.inputs[test_idx], COORDS, horizon)
    rows = [ExperimentRow("naive", None, float(np.mean((naive - data.targets[test_idx]) ** 2)))]
    models = {}
    for order in orders:
        model = TemporalModel(in_channels=COORDS, hidden=settings.hidden, frames=frames, horizon=horizon,
                              layers=settings.layers, order=order, h=settings.h, temporal=settings.temporal,
                              heads=settings.heads, dropout_io=train_cfg.dropout_io,
                              dropout_hidden=train_cfg.dropout_hidden, batchnorm=train_cfg.batchnorm,
                              seed=train_cfg.seed)
        try:
            train_loop(model, task, train_cfg)
            mse = task.evaluate(model, "test")[0]
            if not math.isfinite(mse):
                raise DivergenceError("non-finite test MSE")
            rows.append(ExperimentRow("tde-gnn", order, mse, learned_stencil(model, task)))
            models[order] = model
        except (DivergenceError, ArithmeticError) as exc:
            rows.append(ExperimentRow("tde-gnn", order, float("nan"), None, "failed", str(exc)))
    return ExperimentResult(rows, cfg, settings, train_cfg, models)
