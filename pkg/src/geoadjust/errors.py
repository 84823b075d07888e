"""Exception hierarchy shared by every module of the package."""


class GeoadjustError(Exception):
    """Base class for all package errors."""


class InputError(GeoadjustError, ValueError):
    """Non-finite or otherwise malformed input data."""


class ResolutionError(GeoadjustError, ValueError):
    """A grid is too coarse to represent the requested truncation."""


class ShapeError(GeoadjustError, ValueError):
    """Operands do not share a truncation or have the wrong parity."""


class NonPeriodicPrimitiveError(GeoadjustError, ValueError):
    """A vertical antiderivative was requested for a field with a nonzero z-mean."""


class CompatibilityError(NonPeriodicPrimitiveError):
    """The horizontal velocity violates the compatibility condition."""


class ParameterError(GeoadjustError, ValueError):
    """Physical or numerical parameters outside their admissible range."""


class UsageError(GeoadjustError, ValueError):
    """An operation was applied to the wrong kind of object."""


class DivergenceError(GeoadjustError, ArithmeticError):
    """A time step produced a non-finite coefficient.

    ``state`` is the last finite state and ``t`` its time.
    """

    def __init__(self, message, state=None, t=None):
        super().__init__(message)
        self.state = state
        self.t = t


class CheckpointError(GeoadjustError):
    """Base class for checkpoint read/write failures."""


class VersionMismatchError(CheckpointError):
    pass


class CorruptPayloadError(CheckpointError):
    pass


class SymmetryViolationError(CheckpointError):
    pass


class TruncationMismatchError(CheckpointError, ShapeError):
    pass


class ConfigError(GeoadjustError, ValueError):
    """Invalid run configuration (unknown keys, out-of-range values)."""


class IncompatibleCheckpointError(CheckpointError, CompatibilityError):
    """A stored velocity violates the compatibility condition."""
