"""Exception types raised across the package."""


class GridLstmError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(GridLstmError, ValueError):
    """Operands have incompatible or invalid dimensions."""


class NumericDomainError(GridLstmError, ValueError):
    """An input contains NaN/Inf where finite values are required."""


class EmptyInputError(GridLstmError, ValueError):
    """A sequence operation received zero time steps."""


class ConfigError(GridLstmError, ValueError):
    """A configuration value is invalid or inconsistent."""


class MappingError(GridLstmError, ValueError):
    """A channel-to-grid mapping is invalid or cannot be applied."""


class FormatError(GridLstmError, ValueError):
    """A binary or text file does not match its documented layout."""


class DivergenceError(GridLstmError, RuntimeError):
    """Training produced a non-finite loss."""


class UndefinedMetricError(GridLstmError, ValueError):
    """A metric has no defined value for the given counts or labels."""
