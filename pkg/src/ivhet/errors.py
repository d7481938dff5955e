"""Exception hierarchy shared across the package.

Two broad families matter to callers. ConfigError means the request itself
was malformed (bad column map, bad option value) and maps to CLI exit code 2.
DataError and its subclasses mean the data refused the computation and map
to exit code 1.
"""


class IvhetError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(IvhetError):
    """The configuration is invalid: unknown column, bad option, bad spec."""


class DataError(IvhetError):
    """The data made the requested computation impossible."""


class DomainError(DataError):
    """A value is outside its contract, e.g. a non-binary treatment."""


class EmptyDataError(DataError):
    """No usable rows remain."""


class RankError(DataError):
    """A design matrix is rank deficient where full rank is required."""


class IdentificationError(DataError):
    """The target quantity is not identified, e.g. a zero first stage."""


class LeverageError(DataError):
    """A leave-one-out step is undefined because a hat value is 1."""


class SeparationError(DataError):
    """A binary-index likelihood has no finite maximizer."""


class ConvergenceError(DataError):
    """An iterative fit exhausted its iteration budget."""


class TrimError(DataError):
    """Trimming removed an entire instrument arm."""


class UndefinedTestError(DataError):
    """Every moment a test would evaluate had to be skipped."""
