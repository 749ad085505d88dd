"""Exception taxonomy shared across the package.

CLI exit codes map onto these: invalid input and insufficient data are
usage-level failures (exit 2), optimization failures are runtime (exit 3),
I/O problems surface as OSError (exit 4).
"""


class RelightError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(RelightError, ValueError):
    """An argument violates a documented precondition (wrong space tag,
    mismatched shapes, non-unit normals, malformed lighting, ...)."""


class InsufficientDataError(RelightError, ValueError):
    """Not enough usable data: empty mask, fewer foreground pixels than
    unknowns, singular system with no regularization."""


class InvalidStateError(RelightError, RuntimeError):
    """An object is used outside its lifecycle (e.g. a consumed or
    eval-mode activation tape passed to backward)."""


class OptimizationFailedError(RelightError, RuntimeError):
    """Gradient descent diverged. Carries the last finite state so callers
    can inspect or checkpoint it."""

    def __init__(self, message, last_state=None):
        super().__init__(message)
        self.last_state = last_state


class DataFormatError(RelightError, ValueError):
    """A manifest, checkpoint or lighting file does not match its schema."""
