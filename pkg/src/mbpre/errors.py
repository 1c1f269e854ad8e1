"""Exception hierarchy.

The CLI maps each family onto an exit code: ``ModelError`` -> 2,
``NumericalError`` -> 3, ``InsufficientDataError`` -> 4.
"""


class MbpreError(Exception):
    """Base class for all errors raised by this package."""


class ModelError(MbpreError, ValueError):
    """Invalid input: a malformed law, model file, matrix or parameter."""


class DomainError(ModelError):
    """An argument lies outside the domain of the operation."""


class DegenerateError(ModelError):
    """A projection or normalisation divides by zero."""


class NumericalError(MbpreError, RuntimeError):
    """A numerical procedure did not deliver a trustworthy answer."""


class ConvergenceError(NumericalError):
    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history) if history is not None else []


class TruncationError(NumericalError):
    """Mass escaping the truncated state space exceeded the allowed budget."""

    def __init__(self, message, suggested_K=None):
        super().__init__(message)
        self.suggested_K = suggested_K


class ResourceError(NumericalError):
    """A requested computation would exceed a configured size cap."""


class PopulationOverflowError(NumericalError):
    """Particle counts exceeded the configured cap (model likely supercritical)."""


class InsufficientDataError(MbpreError):
    """A Monte Carlo run produced too few usable samples (e.g. no survivors)."""
