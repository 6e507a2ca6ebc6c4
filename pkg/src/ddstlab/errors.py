"""Exception types shared across the library."""


class DimensionError(ValueError):
    """Vector/matrix lengths do not match what an operation requires."""


class FormatError(ValueError):
    """Malformed input data or a corrupt/mismatched serialized file."""


class ConfigError(ValueError):
    """Inconsistent or out-of-range configuration values."""


class IllConditionedPilotError(ValueError):
    """A pilot spectral value is too close to zero for a stable division."""


class CalibrationError(RuntimeError):
    """Drive-level calibration could not reach the requested target."""


class DependencyError(RuntimeError):
    """A required artifact (dataset, checkpoint) is missing."""


class TrainingDivergenceError(RuntimeError):
    """Training produced a non-finite loss or parameter value."""


class UndefinedInputError(ValueError):
    """The requested quantity is undefined for this input (e.g. all-zero signal)."""
