"""Exception hierarchy shared by every module of the package."""


class ShmfError(Exception):
    """Base class for all errors raised by :mod:`shmf`."""


class DomainError(ShmfError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class UsageError(ShmfError, ValueError):
    """Objects were combined inconsistently (e.g. fields on different bases)."""


class ValidationError(ShmfError, ValueError):
    """A configuration or parameter block violates a modelling hypothesis."""


class AccuracyError(ShmfError, RuntimeError):
    """A numerical self-test failed (quadrature too coarse, etc.)."""


class BracketingError(ShmfError, RuntimeError):
    """Root bracketing failed while locating Bessel zeros."""


class ContractionError(ShmfError, RuntimeError):
    """Picard iteration did not contract within the sweep budget."""


class StallError(ShmfError, RuntimeError):
    """Time stepping produced non-finite values or could not proceed."""
