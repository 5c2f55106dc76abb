"""Exception types raised across the package.

Every error raised deliberately by this package derives from
:class:`OdmlError`, so callers can catch one base class. Subclasses also
inherit from the closest builtin (ValueError, ArithmeticError) so generic
handlers keep working.
"""


class OdmlError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(OdmlError, ValueError):
    """An argument failed validation (shape, dtype, finiteness, range)."""


class InvalidBatchError(InvalidInputError):
    """A pair batch is unusable, e.g. one of the two pair sets is empty."""


class InvalidDatasetError(InvalidInputError):
    """A dataset violates a structural requirement (too few classes, ...)."""


class ParseError(OdmlError, ValueError):
    """A data file could not be parsed. Carries the 1-based line number."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NumericalFailureError(OdmlError, ArithmeticError):
    """An iterative routine failed to converge or produced non-finite values."""


class DomainError(OdmlError, ValueError):
    """A mathematically well-formed input lies outside a function's domain."""


class NotPSDError(DomainError):
    """A matrix required to be positive semidefinite has a clearly negative
    eigenvalue."""


class SingularMatrixError(DomainError):
    """A matrix required to be invertible (or strictly positive definite)
    is singular to working precision."""


class EmptySelectionError(InvalidInputError):
    """A filter selected no elements, e.g. an empty query set."""


class DegenerateMeansError(DomainError):
    """Two class means coincide, so a ratio of between-mean distances is
    undefined."""


class BoundInapplicableError(DomainError):
    """A theoretical bound's precondition does not hold for these inputs."""
