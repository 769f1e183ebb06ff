"""Exception types shared across the package."""


class LatentLabError(Exception):
    """Base class for all errors raised by latentlab."""


class ShapeError(LatentLabError, ValueError):
    """Array dimensions do not match what an operation requires."""


class ValidationError(LatentLabError, ValueError):
    """An argument value is outside its documented domain."""


class StateError(LatentLabError, RuntimeError):
    """An operation was called before its prerequisite (e.g. backward before forward)."""


class NumericalError(LatentLabError, ArithmeticError):
    """A computation produced a non-finite value."""


class ParseError(LatentLabError, ValueError):
    """A persisted artifact is malformed; the message carries line/record context."""


class EmptyCorpusError(LatentLabError, ValueError):
    """A corpus with zero items was produced or loaded."""


class StaleCodebookError(LatentLabError, RuntimeError):
    """A codebook is structurally incompatible with the supplied model."""


class StaleCodebookWarning(UserWarning):
    """A codebook's stored model checksum does not match the supplied model."""
