"""Exception types shared across the package."""


class PremigError(Exception):
    """Base class for all package errors."""


class ConfigError(PremigError, ValueError):
    """Invalid experiment configuration."""


class ParameterError(PremigError, ValueError):
    """A numeric argument is out of its legal range."""


class ScheduleError(PremigError, ValueError):
    """A schedule matrix is malformed or references an unknown host."""


class DataError(PremigError, ValueError):
    """Input data is malformed (NaN features, bad trace lines, ...)."""


class CheckpointError(DataError):
    """A checkpoint file cannot be loaded into the target model."""


class ShapeError(PremigError, ValueError):
    """Tensor operands have incompatible shapes."""
