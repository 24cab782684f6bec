"""Exception hierarchy shared by every barylab module."""

from __future__ import annotations


class BarylabError(Exception):
    """Base class for all library errors."""


class InputError(BarylabError, ValueError):
    """Malformed arguments: mismatched shapes, spaces, lengths or ranges."""


class DomainError(BarylabError, ValueError):
    """A value lies outside the mathematical domain of an operation."""


class UnsupportedError(BarylabError):
    """The requested operation is not available for this space or map."""


class CapacityError(BarylabError):
    """A problem exceeds the size limits of an exact solver."""


class ConvergenceError(BarylabError):
    """An iterative solver hit its iteration cap.

    Carries the best iterate found and the residual history so callers can
    inspect how far the solve got.
    """

    def __init__(self, message, best=None, residual=None, trace=None):
        super().__init__(message)
        self.best = best
        self.residual = residual
        self.trace = list(trace) if trace is not None else []
