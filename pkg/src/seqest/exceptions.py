"""Exception hierarchy shared by every module of the package."""


class SeqEstError(Exception):
    """Base class for all errors raised by :mod:`seqest`."""


class ConfigError(SeqEstError, ValueError):
    """Invalid user configuration (bad parameter values, unreadable files)."""


class DimensionMismatch(SeqEstError, ValueError):
    pass


class SingularInformation(SeqEstError, ArithmeticError):
    """The accumulated information matrix is not invertible."""


class NumericalFailure(SeqEstError, RuntimeError):
    """Base for failures of iterative numerical procedures."""


class NotConverged(NumericalFailure):
    pass


class BracketFailure(NumericalFailure):
    """A monotone search could not bracket or attain its target."""


class NoThreshold(NumericalFailure):
    """The F = G crossing is not inside the value-function grid."""


class DegenerateCorrelation(SeqEstError, ValueError):
    """Correlation coefficient at (or numerically at) +-1."""


class OvershootBoundViolated(SeqEstError, RuntimeError):
    """An overshoot exceeded the bound assumed by the delay encoding."""


class HorizonExceeded(SeqEstError, RuntimeError):
    pass


class SingularR(SingularInformation):
    """The coefficient correlation matrix is singular."""


class NonpositiveTarget(SeqEstError, ValueError):
    pass


class InvalidCorrelation(ConfigError):
    """Equicorrelation parameter outside the positive semidefinite range."""
