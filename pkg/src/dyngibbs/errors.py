"""Exception hierarchy shared across the package."""


class DynGibbsError(Exception):
    """Base class for all package errors."""


class DomainError(DynGibbsError, ValueError):
    """A point lies outside the support, or a density/conditional vanishes there."""


class IntegrationError(DynGibbsError, ArithmeticError):
    """Non-finite velocity met during ODE integration."""

    def __init__(self, message, point=None, step=None):
        super().__init__(message)
        self.point = point
        self.step = step


class UnsupportedModelError(DynGibbsError, TypeError):
    """The model lacks a capability the operation needs (e.g. an inverse CDF)."""


class ConsistencyError(DynGibbsError, RuntimeError):
    """Internal invariant violated; indicates a bug or a malformed target."""


class DegenerateError(DynGibbsError, ValueError):
    """Degenerate input: zero total time, all-zero conditional masses, etc."""


class CapacityError(DynGibbsError, ValueError):
    """State space too large for exact enumeration or a full probability table."""


class ParseError(DynGibbsError, ValueError):
    """Malformed input file. ``offset`` is a byte offset or a row number."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at {offset})"
        super().__init__(message)
        self.offset = offset


class ConfigError(DynGibbsError, ValueError):
    """Invalid experiment configuration."""


class FitError(DynGibbsError, ValueError):
    """Least-squares fit impossible on the given data."""
