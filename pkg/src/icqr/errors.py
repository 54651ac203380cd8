"""Exception types shared across the package.

The CLI maps these onto exit codes: validation problems (bad rows, bad
flags, bad config) exit with 2, numerical failures (solver, EM) with 3.
"""


class IcqrError(Exception):
    """Base class for package errors."""


class ValidationError(IcqrError, ValueError):
    """Malformed input: data rows, quantile levels, config files, CLI args."""


class NumericalError(IcqrError, RuntimeError):
    """A numerical routine failed: LP infeasibility, kernel underflow, etc."""
