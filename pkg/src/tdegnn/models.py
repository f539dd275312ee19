"""Full TDE-GNN networks for stationary and spatio-temporal tasks, and checkpoints."""

from __future__ import annotations

import io
import json
import struct
from dataclasses import asdict, dataclass, fields

import numpy as np

from .errors import CheckpointError, ConfigError, ShapeError
from .graph import Graph, SparseOperator, normalized_laplacian
from .layers import TIME_EMBED_WIDTH, FeatureNorm, SpatialTerm, tde_step, time_embedding
from .module import Affine, Module
from .rng import RngTree
from .temporal import AttentionTemporal, DirectTemporal, HistoryBuffer
from .tensor import Tensor, as_tensor, concat, dropout, getitem

TEMPORAL_VARIANTS = ("direct", "attention")


def _laplacian(graph) -> SparseOperator:
    if isinstance(graph, SparseOperator):
        return graph
    if isinstance(graph, Graph):
        return normalized_laplacian(graph)
    raise TypeError(f"expected Graph or SparseOperator, got {type(graph).__name__}")


def _temporal(variant: str, order: int, channels: int, heads: int, rng: np.random.Generator):
    if variant == "direct":
        return DirectTemporal(order)
    if variant == "attention":
        return AttentionTemporal(order, channels, rng, heads=heads)
    raise ConfigError(f"unknown temporal variant {variant!r}; expected one of {TEMPORAL_VARIANTS}")


class _TdeBase(Module):
    """Shared layer stack: per layer a spatial term, a temporal mechanism and optional norm."""

    def _build_layers(self, tree: RngTree):
        cfg = self.config
        self.spatial = [SpatialTerm(cfg.hidden, cfg.h, tree.stream(f"init/spatial/{i}"))
                        for i in range(cfg.layers)]
        self.temporal = [_temporal(cfg.temporal, cfg.order, cfg.hidden, cfg.heads,
                                   tree.stream(f"init/temporal/{i}"))
                         for i in range(cfg.layers)]
        self.norms = [FeatureNorm(cfg.hidden) for _ in range(cfg.layers)] if cfg.batchnorm else []
        if cfg.freeze_c:
            for mech in self.temporal:
                for _, t, _ in mech.named_parameters():
                    t.requires_grad = False

    def _layer(self, i: int, buf: HistoryBuffer, lap: SparseOperator, training: bool, rng) -> Tensor:
        """Dropout on the newest state, stencil, spatial term, multistep update, push."""
        cfg = self.config
        state = dropout(buf.newest(), cfg.dropout_hidden, training, rng)
        buf.replace_newest(state)
        c = self.temporal[i](buf)
        s = self.spatial[i](state, lap)
        if self.norms:
            s = self.norms[i](s)
        nxt = tde_step(buf, c, s, cfg.h)
        buf.push(nxt)
        return nxt

    def coefficients(self) -> list[np.ndarray]:
        """Per-layer direct stencils (attention stencils depend on inputs; see ``trace``)."""
        if self.config.temporal != "direct":
            raise ConfigError("attention stencils depend on the input; use trace() on a probe batch")
        return [mech.coefficients().data.copy() for mech in self.temporal]


@dataclass
class StationaryConfig:
    in_channels: int
    hidden: int
    out_channels: int
    layers: int
    order: int
    h: float = 0.5
    temporal: str = "direct"
    heads: int = 4
    dropout_io: float = 0.0
    dropout_hidden: float = 0.0
    batchnorm: bool = False
    freeze_c: bool = False
    seed: int = 0


class StationaryModel(_TdeBase):
    """Node-level predictor from a single input state.

    ``order`` separate affine embeddings turn the input into the ``order``
    initial states, then ``layers`` multistep updates run and an affine
    readout produces per-node outputs.
    """

    kind = "stationary"

    def __init__(self, config: StationaryConfig | None = None, **kwargs):
        cfg = config if config is not None else StationaryConfig(**kwargs)
        if cfg.order < 1:
            raise ConfigError(f"order must be >= 1, got {cfg.order}")
        if cfg.layers < 0:
            raise ConfigError(f"layers must be >= 0, got {cfg.layers}")
        if cfg.order > cfg.layers + 1:
            raise ConfigError(f"order {cfg.order} exceeds layers + 1 = {cfg.layers + 1}")
        self.config = cfg
        tree = RngTree(cfg.seed)
        self.embed = [Affine(cfg.in_channels, cfg.hidden, tree.stream(f"init/embed/{i}"))
                      for i in range(cfg.order)]
        self._build_layers(tree)
        self.readout = Affine(cfg.hidden, cfg.out_channels, tree.stream("init/readout"))

    def init_states(self, x: Tensor) -> HistoryBuffer:
        """History ``[e_o(x), ..., e_1(x)]`` (newest first), warm immediately."""
        x = as_tensor(x)
        if x.shape[-1] != self.config.in_channels:
            raise ShapeError(f"input has {x.shape[-1]} channels, model expects {self.config.in_channels}")
        buf = HistoryBuffer(self.config.order)
        for emb in self.embed:
            buf.push(emb(x))
        return buf

    def forward(self, graph, x, training: bool = False, rng: np.random.Generator | None = None) -> Tensor:
        cfg = self.config
        lap = _laplacian(graph)
        x = dropout(as_tensor(x), cfg.dropout_io, training, rng)
        buf = self.init_states(x)
        for i in range(cfg.layers):
            self._layer(i, buf, lap, training, rng)
        out = dropout(buf.newest(), cfg.dropout_io, training, rng)
        return self.readout(out)

    __call__ = forward

    def trace(self, graph, x) -> list[np.ndarray]:
        """Stencil used at each layer during an inference pass on ``x``."""
        lap = _laplacian(graph)
        buf = self.init_states(as_tensor(x))
        stencils = []
        for i in range(self.config.layers):
            stencils.append(self.temporal[i](buf).data.copy())
            self._layer(i, buf, lap, False, None)
        return stencils


@dataclass
class TemporalConfig:
    in_channels: int
    hidden: int
    frames: int
    horizon: int
    layers: int
    order: int
    h: float = 0.5
    temporal: str = "direct"
    heads: int = 4
    dropout_io: float = 0.0
    dropout_hidden: float = 0.0
    batchnorm: bool = False
    freeze_c: bool = False
    seed: int = 0


class TemporalModel(_TdeBase):
    """Forecaster from ``frames`` observed frames to ``horizon`` future frames.

    Runs two streams: the state stream advanced by the multistep layers, and a
    history stream that re-mixes the embedded observations with each new
    state.  The prediction reads the final state only.
    """

    kind = "temporal"

    def __init__(self, config: TemporalConfig | None = None, **kwargs):
        cfg = config if config is not None else TemporalConfig(**kwargs)
        if not 1 <= cfg.order <= cfg.frames:
            raise ConfigError(f"order {cfg.order} must lie in [1, frames={cfg.frames}]")
        if cfg.layers < 0 or cfg.horizon < 1:
            raise ConfigError("layers must be >= 0 and horizon >= 1")
        self.config = cfg
        tree = RngTree(cfg.seed)
        temb = cfg.frames * TIME_EMBED_WIDTH
        k_in = cfg.in_channels
        self.time_proj = Affine(temb, temb, tree.stream("init/time"))
        self.embed_state = Affine(k_in + temb, cfg.hidden, tree.stream("init/state"))
        self.embed_hist = Affine(cfg.frames * k_in + temb, cfg.hidden, tree.stream("init/hist"))
        self.hist_mixers = [Affine(2 * cfg.hidden + temb, cfg.hidden, tree.stream(f"init/mixer/{i}"))
                            for i in range(cfg.layers)]
        self._build_layers(tree)
        self.readout = Affine(cfg.hidden, cfg.horizon * k_in, tree.stream("init/readout"))

    def _check(self, frames: Tensor, times) -> np.ndarray:
        cfg = self.config
        width = cfg.frames * cfg.in_channels
        if frames.shape[-1] != width:
            raise ShapeError(f"frames have {frames.shape[-1]} columns, expected frames*in_channels = {width}")
        times = np.asarray(times, dtype=np.float64)
        if times.shape[-1] != cfg.frames:
            raise ShapeError(f"got {times.shape[-1]} frame times, expected {cfg.frames}")
        if (frames.ndim == 3) != (times.ndim == 2):
            raise ShapeError("batched frames need one row of times per sample")
        return times

    def _init(self, frames: Tensor, times: np.ndarray):
        """Embedded time features, the warm state history and the initial history stream."""
        cfg = self.config
        n = frames.shape[-2]
        temb = self.time_proj(Tensor(time_embedding(times, n)))
        k_in = cfg.in_channels
        buf = HistoryBuffer(cfg.order)
        for j in range(cfg.frames - cfg.order, cfg.frames):
            frame = getitem(frames, (Ellipsis, slice(j * k_in, (j + 1) * k_in)))
            buf.push(self.embed_state(concat([frame, temb], axis=-1)))
        hist = self.embed_hist(concat([frames, temb], axis=-1))
        return temb, buf, hist

    def forward(self, graph, frames, times, training: bool = False,
                rng: np.random.Generator | None = None, return_streams: bool = False):
        cfg = self.config
        lap = _laplacian(graph)
        frames = as_tensor(frames)
        times = self._check(frames, times)
        frames = dropout(frames, cfg.dropout_io, training, rng)
        temb, buf, hist = self._init(frames, times)
        states = [buf.newest()]
        for i in range(cfg.layers):
            nxt = self._layer(i, buf, lap, training, rng)
            hist = self.hist_mixers[i](concat([hist, nxt, temb], axis=-1))
            states.append(nxt)
        out = self.readout(dropout(buf.newest(), cfg.dropout_io, training, rng))
        if return_streams:
            return out, states, hist
        return out

    __call__ = forward

    def trace(self, graph, frames, times) -> list[np.ndarray]:
        """Stencil used at each layer (mean over a batch) during inference."""
        lap = _laplacian(graph)
        frames = as_tensor(frames)
        times = self._check(frames, times)
        _, buf, _ = self._init(frames, times)
        stencils = []
        for i in range(self.config.layers):
            c = self.temporal[i](buf).data
            stencils.append(c.mean(axis=0) if c.ndim == 2 else c.copy())
            self._layer(i, buf, lap, False, None)
        return stencils


MODEL_KINDS = {StationaryModel.kind: (StationaryModel, StationaryConfig),
               TemporalModel.kind: (TemporalModel, TemporalConfig)}

MAGIC = b"TDEG"
VERSION = 1


def save_checkpoint(model) -> bytes:
    """Serialize config and every parameter, frozen or not, bit-exactly."""
    config = dict(asdict(model.config), kind=model.kind)
    blob = json.dumps(config, sort_keys=True).encode("utf-8")
    state = model.state()
    out = io.BytesIO()
    out.write(MAGIC)
    out.write(struct.pack("<I", VERSION))
    out.write(struct.pack("<Q", len(blob)))
    out.write(blob)
    out.write(struct.pack("<Q", len(state)))
    for name, t in state.items():
        encoded = name.encode("utf-8")
        out.write(struct.pack("<Q", len(encoded)))
        out.write(encoded)
        out.write(struct.pack("<B", t.ndim))
        for d in t.shape:
            out.write(struct.pack("<Q", d))
        out.write(np.ascontiguousarray(t.data, dtype="<f8").tobytes())
    return out.getvalue()


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, count: int, what: str) -> bytes:
        if self.pos + count > len(self.data):
            raise CheckpointError(f"truncated checkpoint: need {count} bytes for {what} at offset {self.pos}, "
                                  f"only {len(self.data) - self.pos} left")
        chunk = self.data[self.pos:self.pos + count]
        self.pos += count
        return chunk

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))[0]


def load_checkpoint(data: bytes):
    """Rebuild a model from :func:`save_checkpoint` output."""
    r = _Reader(bytes(data))
    if r.take(4, "magic") != MAGIC:
        raise CheckpointError("not a TDEG checkpoint (bad magic)")
    version = r.unpack("<I", "version")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}, expected {VERSION}")
    blob = r.take(r.unpack("<Q", "config length"), "config")
    try:
        config = json.loads(blob.decode("utf-8"))
        cls, cfg_cls = MODEL_KINDS[config.pop("kind")]
        cfg = cfg_cls(**{f.name: config[f.name] for f in fields(cfg_cls)})
    except (ValueError, KeyError, TypeError) as exc:
        raise CheckpointError(f"malformed checkpoint config: {exc}") from None
    model = cls(cfg)
    state = model.state()
    count = r.unpack("<Q", "parameter count")
    if count != len(state):
        raise CheckpointError(f"checkpoint has {count} parameters, config implies {len(state)}")
    for _ in range(count):
        name = r.take(r.unpack("<Q", "name length"), "name").decode("utf-8")
        ndim = r.unpack("<B", "ndim")
        dims = tuple(r.unpack("<Q", "dimension") for _ in range(ndim))
        raw = r.take(8 * int(np.prod(dims, dtype=np.int64)), f"data of {name}")
        if name not in state:
            raise CheckpointError(f"unexpected parameter {name!r}")
        target = state[name]
        if dims != target.shape:
            raise CheckpointError(f"parameter {name!r} has shape {dims}, config implies {target.shape}")
        target.data = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(dims)
    if r.pos != len(r.data):
        raise CheckpointError(f"{len(r.data) - r.pos} trailing bytes after checkpoint payload")
    return model
