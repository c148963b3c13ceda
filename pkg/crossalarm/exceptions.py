"""crossalarm - Exceptions"""


class CrossAlarmError(Exception):
    """Base class for every error raised by crossalarm."""

    exit_code = 2


class ConfigError(CrossAlarmError):
    """Invalid or conflicting configuration."""


class DataError(CrossAlarmError):
    """Input data that cannot be processed."""


class DimensionError(CrossAlarmError):
    """Tensor or matrix extents that do not line up."""


class UsageError(CrossAlarmError):
    """An operation called outside its preconditions."""


class AlignmentError(CrossAlarmError):
    """Truth and prediction series that do not share time steps."""


class NumericalError(CrossAlarmError):
    """NaN or Inf produced during computation."""

    exit_code = 3
