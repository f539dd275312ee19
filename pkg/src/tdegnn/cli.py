"""Command-line entry point ``tdegnn``.

Commands::

    simulate-pendulum   write a trajectory CSV
    train               fit a model; write checkpoint, metrics CSV and report JSON
    eval                score a checkpoint on every split
    analyze stability   root condition of a stencil
    analyze consistency derivative fit of a stencil on sin(2 pi t)
    run-experiment      naive vs. first- vs. second-order pendulum forecasting

Every command accepts ``--seed``, ``--out`` (output directory) and
``--config`` (JSON object whose keys are :class:`RunConfig` field names).
Explicit flags override the config file, which overrides the defaults.

Exit codes: 0 success, 2 invalid input (config, dataset, checkpoint,
precondition), 3 training divergence, 1 any other failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import STABILITY_TOLERANCE, SUM_TOLERANCE, consistency_check, parse_grid, root_condition
from .data import load_node_dataset, load_node_series, read_edges
from .errors import (CheckpointError, ConfigError, DatasetError, DivergenceError, PreconditionError,
                     ShapeError, TdeGnnError)
from .models import TEMPORAL_VARIANTS, StationaryModel, TemporalModel, load_checkpoint
from .pendulum import (COORDS, ModelSettings, PendulumConfig, build_task, contiguous_splits, run_experiment,
                       simulate, sliding_windows)
from .tasks import ForecastTask, NodeClassificationTask
from .train import HIDDEN_CHOICES, STEP_RANGE, TrainConfig, train_loop

TASKS = ("pendulum", "node-classify", "forecast", "analyze-stability", "analyze-consistency")
EXIT_INPUT = 2
EXIT_DIVERGED = 3


@dataclass
class RunConfig:
    task: str = "pendulum"
    # model
    order: int = 2
    layers: int = 1
    temporal: str = "direct"
    hidden: int = 16
    h: float = 0.1
    heads: int = 4
    freeze_c: bool = False
    batchnorm: bool = False
    # optimisation
    lr_embedding: float = 1e-2
    lr_temporal: float = 1e-2
    lr_spatial: float = 1e-2
    wd_embedding: float = 0.0
    wd_temporal: float = 0.0
    wd_spatial: float = 0.0
    dropout_io: float = 0.0
    dropout_hidden: float = 0.0
    epochs: int = 300
    batch_size: int | None = 64
    grad_clip: float | None = None
    record_timing: bool = False
    # data
    data: str | None = None
    frames: int = 4
    horizon: int = 1
    split: list[float] = field(default_factory=lambda: [0.7, 0.15, 0.15])
    # pendulum
    theta0: float = 1.0
    omega_dot0: float = 0.0
    dt: float = 0.1
    steps: int = 500
    epsilon: float = 0.04
    forcing_sign: int = -1
    length: float = 1.0
    orders: list[int] = field(default_factory=lambda: [1, 2])
    # analysis
    coeffs: list[float] | None = None
    ckpt: str | None = None
    layer: int = 0
    tol: float = STABILITY_TOLERANCE
    grid: str = "0:1:0.01"
    # run
    seed: int = 0
    out: str = "out"

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.task not in TASKS:
            raise ConfigError(f"task={self.task!r} is not one of {', '.join(TASKS)}")
        if self.temporal not in TEMPORAL_VARIANTS:
            raise ConfigError(f"temporal={self.temporal!r} is not one of {', '.join(TEMPORAL_VARIANTS)}")
        if self.hidden not in HIDDEN_CHOICES:
            raise ConfigError(f"hidden={self.hidden} is not one of {HIDDEN_CHOICES}")
        if not STEP_RANGE[0] <= self.h <= STEP_RANGE[1]:
            raise ConfigError(f"h={self.h} outside the allowed range [{STEP_RANGE[0]:g}, {STEP_RANGE[1]:g}]")
        for name in ("order", "layers", "heads", "frames", "horizon"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name}={getattr(self, name)} must be >= 1")
        if self.layer < 0:
            raise ConfigError(f"layer={self.layer} must be >= 0")
        if not self.tol >= 0:
            raise ConfigError(f"tol={self.tol} must be non-negative")
        if len(self.split) != 3:
            raise ConfigError(f"split={self.split} must have three fractions")
        if not self.orders or any(o < 1 for o in self.orders):
            raise ConfigError(f"orders={self.orders} must be a non-empty list of positive integers")
        self.train_config()
        self.pendulum_config()

    def train_config(self) -> TrainConfig:
        names = {f.name for f in fields(TrainConfig)}
        return TrainConfig(**{k: v for k, v in asdict(self).items() if k in names})

    def pendulum_config(self) -> PendulumConfig:
        names = {f.name for f in fields(PendulumConfig)}
        return PendulumConfig(**{k: v for k, v in asdict(self).items() if k in names})

    def model_settings(self) -> ModelSettings:
        return ModelSettings(hidden=self.hidden, layers=self.layers, h=self.h, temporal=self.temporal,
                             heads=self.heads)


FIELD_NAMES = tuple(f.name for f in fields(RunConfig))


def _clean(value):
    """JSON-safe copy: numpy scalars/arrays to lists, non-finite floats to null."""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.ndarray):
        return _clean(value.tolist())
    if isinstance(value, (np.floating, float)):
        v = float(value)
        return v if math.isfinite(v) else None
    if isinstance(value, np.integer):
        return int(value)
    return value


def write_json(path: Path, payload) -> None:
    text = json.dumps(_clean(payload), indent=2, sort_keys=True, allow_nan=False)
    path.write_text(text + "\n", encoding="utf-8")


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, help="seed for every random stream (default 0)")
    parser.add_argument("--out", help="output directory (default ./out)")
    parser.add_argument("--config", help="JSON file with RunConfig fields")


def _model_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--order", type=int)
    parser.add_argument("--layers", type=int)
    parser.add_argument("--temporal", choices=TEMPORAL_VARIANTS)
    parser.add_argument("--hidden", type=int)
    parser.add_argument("--h", type=float, help="spatial step size")
    parser.add_argument("--heads", type=int)
    parser.add_argument("--freeze-c", dest="freeze_c", action="store_const", const=True)
    parser.add_argument("--batchnorm", action="store_const", const=True)
    for group in ("embedding", "temporal", "spatial"):
        parser.add_argument(f"--lr-{group}", dest=f"lr_{group}", type=float)
        parser.add_argument(f"--wd-{group}", dest=f"wd_{group}", type=float)
    parser.add_argument("--dropout-io", dest="dropout_io", type=float)
    parser.add_argument("--dropout-hidden", dest="dropout_hidden", type=float)
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--batch-size", dest="batch_size", type=int)
    parser.add_argument("--grad-clip", dest="grad_clip", type=float)
    parser.add_argument("--record-timing", dest="record_timing", action="store_const", const=True,
                        help="record wall-clock epoch times (makes metrics.csv non-reproducible)")


def _pendulum_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--theta0", type=float)
    parser.add_argument("--omega-dot0", dest="omega_dot0", type=float)
    parser.add_argument("--dt", type=float)
    parser.add_argument("--steps", type=int)
    parser.add_argument("--epsilon", type=float)
    parser.add_argument("--forcing-sign", dest="forcing_sign", type=int, choices=(1, -1))
    parser.add_argument("--length", type=float)


def _data_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--data", help="dataset directory")
    parser.add_argument("--frames", type=int, help="observed frames per window (r)")
    parser.add_argument("--horizon", type=int, help="predicted frames per window (a)")
    parser.add_argument("--split", type=_floats, help="train,val,test fractions")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tdegnn", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate-pendulum", help="write a pendulum trajectory CSV")
    _common(p)
    _pendulum_flags(p)

    p = sub.add_parser("train", help="train a model")
    _common(p)
    p.add_argument("--task", choices=TASKS[:3])
    _model_flags(p)
    _data_flags(p)
    _pendulum_flags(p)

    p = sub.add_parser("eval", help="score a checkpoint on every split")
    _common(p)
    p.add_argument("--task", choices=TASKS[:3])
    p.add_argument("--ckpt", required=True)
    _data_flags(p)
    _pendulum_flags(p)

    p = sub.add_parser("analyze", help="stencil stability or consistency")
    analyses = p.add_subparsers(dest="analysis", required=True)
    for name in ("stability", "consistency"):
        q = analyses.add_parser(name)
        _common(q)
        q.add_argument("--coeffs", type=_floats, help='stencil "c1,c2,..." (newest first)')
        q.add_argument("--ckpt", help="take the stencil from a direct-variant checkpoint")
        q.add_argument("--layer", type=int, help="layer index within --ckpt (default 0)")
        if name == "stability":
            q.add_argument("--tol", type=float, help=f"root modulus slack (default {STABILITY_TOLERANCE:g})")
        else:
            q.add_argument("--grid", help="start:stop:step (default 0:1:0.01)")

    p = sub.add_parser("run-experiment", help="pendulum comparison of temporal orders")
    _common(p)
    p.add_argument("--orders", type=_ints, help="comma-separated orders (default 1,2)")
    _model_flags(p)
    _pendulum_flags(p)
    p.add_argument("--frames", type=int)
    p.add_argument("--horizon", type=int)
    p.add_argument("--split", type=_floats)
    return parser


def resolve_config(args: argparse.Namespace, task: str | None = None) -> RunConfig:
    """Defaults, then the ``--config`` file, then explicit flags."""
    values: dict = {}
    if args.config:
        path = Path(args.config)
        try:
            loaded = json.loads(path.read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
        if not isinstance(loaded, dict):
            raise ConfigError(f"{path}: top level must be a JSON object")
        unknown = sorted(set(loaded) - set(FIELD_NAMES))
        if unknown:
            raise ConfigError(f"{path}: unknown config field(s) {', '.join(unknown)}")
        values.update(loaded)
    for name in FIELD_NAMES:
        v = getattr(args, name, None)
        if v is not None:
            values[name] = v
    if task is not None:
        values["task"] = task
    try:
        return RunConfig(**values)
    except TypeError as exc:
        raise ConfigError(f"invalid config: {exc}") from None


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc.strerror}") from None
    return out


def _require_data(cfg: RunConfig) -> Path:
    if not cfg.data:
        raise ConfigError(f"task {cfg.task!r} needs --data DIR")
    path = Path(cfg.data)
    if not path.is_dir():
        raise DatasetError("dataset directory not found", path)
    return path


def build_run(cfg: RunConfig):
    """(model, task, probe) for a training task; ``probe`` feeds attention stencil traces."""
    common = dict(hidden=cfg.hidden, layers=cfg.layers, order=cfg.order, h=cfg.h, temporal=cfg.temporal,
                  heads=cfg.heads, dropout_io=cfg.dropout_io, dropout_hidden=cfg.dropout_hidden,
                  batchnorm=cfg.batchnorm, freeze_c=cfg.freeze_c, seed=cfg.seed)
    if cfg.task == "node-classify":
        ds = load_node_dataset(_require_data(cfg))
        if ds.num_classes < 1:
            raise DatasetError("no labeled nodes", Path(cfg.data) / "labels.csv")
        task = NodeClassificationTask(ds.graph, ds.features, ds.labels, ds.masks)
        model = StationaryModel(in_channels=ds.features.shape[1], out_channels=ds.num_classes, **common)
        return model, task
    if cfg.task == "pendulum":
        _, task = build_task(cfg.pendulum_config(), cfg.frames, cfg.horizon, cfg.split)
        k_in = COORDS
    elif cfg.task == "forecast":
        root = _require_data(cfg)
        series = load_node_series(root / "series.csv")
        n, k_in = series.values.shape[1:]
        graph = read_edges(root / "edges.csv", n)
        inputs, targets, times = sliding_windows(series.values, series.times, cfg.frames, cfg.horizon)
        splits = contiguous_splits(series.times.size, cfg.frames, cfg.horizon, cfg.split)
        task = ForecastTask(graph, inputs, targets, times, splits)
    else:
        raise ConfigError(f"task {cfg.task!r} cannot be trained")
    model = TemporalModel(in_channels=k_in, frames=cfg.frames, horizon=cfg.horizon, **common)
    return model, task


def layer_stencils(model, task) -> list[list[float]]:
    if model.config.temporal == "direct":
        return [c.tolist() for c in model.coefficients()]
    if isinstance(task, NodeClassificationTask):
        return [c.tolist() for c in model.trace(task.lap, task.features)]
    idx = task.splits["test"] if task.splits["test"].size else task.splits["train"]
    return [c.tolist() for c in model.trace(task.lap, task.inputs[idx], task.times[idx])]


def _split_scores(model, task) -> dict:
    scores = {}
    for split in ("train", "val", "test"):
        loss, metric = task.evaluate(model, split)
        scores[split] = {"loss": loss, "metric": metric}
    return scores


def cmd_simulate(cfg: RunConfig) -> int:
    traj = simulate(cfg.pendulum_config())
    path = _out_dir(cfg) / "trajectory.csv"
    traj.write_csv(path)
    print(f"wrote {traj.times.size} rows to {path}")
    return 0


def cmd_train(cfg: RunConfig) -> int:
    model, task = build_run(cfg)
    out = _out_dir(cfg)
    result = train_loop(model, task, cfg.train_config())
    (out / "model.tdeg").write_bytes(result.best_checkpoint)
    result.write_csv(out / "metrics.csv")
    metric = "accuracy" if isinstance(task, NodeClassificationTask) else "mse"
    report = {
        "task": cfg.task,
        "temporal": cfg.temporal,
        "order": cfg.order,
        "layers": cfg.layers,
        "seed": cfg.seed,
        "epochs": cfg.epochs,
        "best_epoch": result.best_epoch,
        "metric": metric,
        "scores": _split_scores(model, task),
        "coefficients": layer_stencils(model, task),
        "config": asdict(cfg),
    }
    write_json(out / "report.json", report)
    test = report["scores"]["test"]["metric"]
    print(f"best epoch {result.best_epoch}; test {metric} {test!r}; outputs in {out}")
    return 0


def cmd_eval(cfg: RunConfig) -> int:
    try:
        blob = Path(cfg.ckpt).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {cfg.ckpt}: {exc.strerror}") from None
    model = load_checkpoint(blob)
    mc = model.config
    names = ["order", "layers", "temporal", "hidden", "h", "heads"]
    if model.kind == "temporal":
        names += ["frames", "horizon"]
    for name in names:
        setattr(cfg, name, getattr(mc, name))
    _, task = build_run(cfg)
    if (model.kind == "stationary") != (cfg.task == "node-classify"):
        raise CheckpointError(f"{model.kind} checkpoint cannot be evaluated on task {cfg.task!r}")
    out = _out_dir(cfg)
    report = {"task": cfg.task, "checkpoint": str(cfg.ckpt), "scores": _split_scores(model, task),
              "coefficients": layer_stencils(model, task)}
    write_json(out / "eval.json", report)
    print(f"test metric {report['scores']['test']['metric']!r}; wrote {out / 'eval.json'}")
    return 0


def _stencil(cfg: RunConfig) -> np.ndarray:
    if (cfg.coeffs is None) == (cfg.ckpt is None):
        raise ConfigError("give exactly one of --coeffs or --ckpt")
    if cfg.coeffs is not None:
        c = np.asarray(cfg.coeffs, dtype=np.float64)
    else:
        try:
            model = load_checkpoint(Path(cfg.ckpt).read_bytes())
        except OSError as exc:
            raise CheckpointError(f"cannot read checkpoint {cfg.ckpt}: {exc.strerror}") from None
        stencils = model.coefficients()
        if not 0 <= cfg.layer < len(stencils):
            raise ConfigError(f"layer={cfg.layer} outside [0, {len(stencils)})")
        c = stencils[cfg.layer]
    if c.size == 0:
        raise PreconditionError("empty stencil")
    total = float(c.sum())
    if abs(total - 1.0) > SUM_TOLERANCE:
        raise PreconditionError(f"coefficients sum to {total!r}; a stencil must sum to 1 "
                                f"(tolerance {SUM_TOLERANCE:g})")
    return c


def cmd_stability(cfg: RunConfig) -> int:
    report = root_condition(_stencil(cfg), tol=cfg.tol)
    out = _out_dir(cfg)
    write_json(out / "stability.json", report.to_json())
    mods = ", ".join(f"{m:.4f}" for m in report.abs_roots)
    verdict = "stable" if report.stable else "UNSTABLE"
    print(f"order {report.order}: |roots| = [{mods}]; max {report.max_abs_root:.6f} -> {verdict}")
    if report.weakly_stable_warning:
        print("warning: repeated root on the unit circle (solutions may grow linearly)")
    return 0


def cmd_consistency(cfg: RunConfig) -> int:
    report = consistency_check(_stencil(cfg), "sin2pi", parse_grid(cfg.grid))
    out = _out_dir(cfg)
    write_json(out / "consistency.json", report.to_json())
    order = report.inferred_order if report.inferred_order is not None else "none"
    print(f"beta {report.beta:.6g}, R^2 {report.r2:.6f} against the second derivative; inferred order {order}")
    return 0


def cmd_experiment(cfg: RunConfig) -> int:
    result = run_experiment(tuple(cfg.orders), cfg.pendulum_config(), cfg.train_config(),
                            cfg.model_settings(), cfg.frames, cfg.horizon, cfg.split)
    out = _out_dir(cfg)
    result.write_csv(out / "experiment.csv")
    write_json(out / "experiment.json", result.to_json())
    for row in result.rows:
        label = row.model if row.order is None else f"{row.model} o={row.order}"
        mse = "failed" if row.status != "ok" else f"{row.test_mse:.6g}"
        print(f"{label:<14} test MSE {mse}")
    return 0


COMMANDS = {
    "simulate-pendulum": ("pendulum", cmd_simulate),
    "train": (None, cmd_train),
    "eval": (None, cmd_eval),
    "stability": ("analyze-stability", cmd_stability),
    "consistency": ("analyze-consistency", cmd_consistency),
    "run-experiment": ("pendulum", cmd_experiment),
}


VALUE_FLAGS = ("--coeffs", "--split", "--orders")


def _glue_values(argv: list[str]) -> list[str]:
    """Join list flags to values starting with '-' (``--coeffs -0.08,1.68``)."""
    out: list[str] = []
    i = 0
    while i < len(argv):
        tok = argv[i]
        if tok in VALUE_FLAGS and i + 1 < len(argv) and argv[i + 1].startswith("-"):
            out.append(f"{tok}={argv[i + 1]}")
            i += 2
            continue
        out.append(tok)
        i += 1
    return out


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(_glue_values(argv))
    key = args.analysis if args.command == "analyze" else args.command
    task, handler = COMMANDS[key]
    try:
        cfg = resolve_config(args, task)
        return handler(cfg)
    except DivergenceError as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (ConfigError, DatasetError, CheckpointError, PreconditionError, ShapeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except TdeGnnError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
