"""Exception hierarchy.

Everything raised on purpose by this package derives from ``CoresetError`` so
callers (the benchmark runner, the CLI) can separate expected failures from
programming errors.
"""


class CoresetError(Exception):
    """Base class for all package errors."""


class ConfigError(CoresetError):
    """Invalid configuration: missing columns, bad parameters, empty grids."""


class DataError(CoresetError):
    """Malformed input data (unparseable or non-finite values)."""


class LabelError(DataError):
    """Label column cannot be mapped onto {-1, +1}."""


class UsageError(CoresetError):
    """An operation was called in a state where it does not apply."""


class ShapeError(CoresetError):
    """Array dimensions are incompatible."""


class RankError(CoresetError):
    """Matrix is numerically rank deficient where full rank is required."""


class NumericalError(CoresetError):
    """Non-finite values appeared during a computation."""


class DegenerateLabelsError(CoresetError):
    """Only one class present where both are required."""


class DegeneratePilotError(DegenerateLabelsError):
    """The OSMAC pilot subsample kept drawing a single class."""


class SingularInformationError(NumericalError):
    """The OSMAC information matrix is too ill-conditioned to invert."""
