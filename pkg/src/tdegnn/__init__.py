"""Graph neural networks whose layers are learned multistep time discretizations.

Each layer advances node features with a stencil ``c`` over the last ``o``
states plus a graph diffusion term; the stencil is either a free
normalized vector (direct variant) or produced by attention over the
history.  :mod:`tdegnn.analysis` interprets learned stencils.
"""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # pragma: no cover - source checkout without install
    __version__ = "0.0.0"

from .analysis import basis_decomposition, characteristic_roots, consistency_check, root_condition
from .errors import (CheckpointError, ConfigError, DatasetError, DegenerateNormalizationError,
                     DivergenceError, NumericalError, PreconditionError, ShapeError, StateError,
                     TdeGnnError)
from .graph import Graph, SparseOperator, normalized_laplacian, spmv
from .models import StationaryModel, TemporalModel, load_checkpoint, save_checkpoint
from .tensor import Tape, Tensor, backward, parameter

__all__ = [
    "__version__",
    "Graph", "SparseOperator", "normalized_laplacian", "spmv",
    "Tape", "Tensor", "backward", "parameter",
    "StationaryModel", "TemporalModel", "save_checkpoint", "load_checkpoint",
    "root_condition", "characteristic_roots", "basis_decomposition", "consistency_check",
    "TdeGnnError", "ShapeError", "StateError", "ConfigError", "DegenerateNormalizationError",
    "PreconditionError", "NumericalError", "DivergenceError", "CheckpointError", "DatasetError",
]
