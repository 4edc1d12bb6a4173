"""Exception hierarchy shared across the package.

Exit-code mapping (used by the CLI): UsageError -> 2, DataError -> 3,
NumericalError -> 4.
"""


class ModelspaceError(Exception):
    """Base class for all package errors."""


class UsageError(ModelspaceError):
    """Invalid arguments or flag combinations."""


class DataError(ModelspaceError):
    """Bad input data: parse failures, degenerate columns, digest mismatches."""


class NumericalError(ModelspaceError):
    """Numerical failure that is not attributable to the input data."""


class SingularModelError(NumericalError):
    """A requested model is rank-deficient (collinear active columns)."""
