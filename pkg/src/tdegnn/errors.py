"""Exception hierarchy shared by every tdegnn module."""


class TdeGnnError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(TdeGnnError, ValueError):
    """Operand shapes are incompatible."""


class StateError(TdeGnnError, RuntimeError):
    """An object was used in a state that does not allow the operation."""


class ConfigError(TdeGnnError, ValueError):
    """A configuration value is outside its allowed range."""


class DegenerateNormalizationError(TdeGnnError, ArithmeticError):
    """Temporal coefficients could not be normalized because their sum is ~0."""

    def __init__(self, total: float, threshold: float = 1e-8):
        self.total = float(total)
        super().__init__(
            f"coefficient sum {self.total:.3e} has magnitude below {threshold:g}; "
            "the temporal stencil cannot be normalized. Re-initialize the temporal "
            "parameters (or lower the temporal learning rate) and retry."
        )


class PreconditionError(TdeGnnError, ValueError):
    """Input violates an operation's precondition."""


class NumericalError(TdeGnnError, ArithmeticError):
    """An iterative numerical method failed to converge."""

    def __init__(self, message: str, residuals=None):
        self.residuals = residuals
        super().__init__(message)


class DivergenceError(TdeGnnError, FloatingPointError):
    """Training produced a non-finite value."""

    def __init__(self, message: str, parameter: str | None = None, epoch: int | None = None):
        self.parameter = parameter
        self.epoch = epoch
        super().__init__(message)


class CheckpointError(TdeGnnError, ValueError):
    """A checkpoint stream is malformed, truncated or inconsistent."""


class DatasetError(TdeGnnError, ValueError):
    """A dataset file failed to parse or cross-validate."""

    def __init__(self, message: str, path=None, line: int | None = None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)
