"""Exception hierarchy shared by all modules."""


class SGPError(Exception):
    """Base class for library errors."""


class ConfigError(SGPError, ValueError):
    """Invalid user configuration (bad kind, missing anchor, empty input...)."""


class NumericalFailure(SGPError, ArithmeticError):
    """A non-finite value appeared where a finite one is required.

    ``where`` carries a diagnostic (offending point, layer name, iteration).
    """

    def __init__(self, message, where=None):
        super().__init__(message)
        self.where = where


class NoWeakDerivative(SGPError):
    """The measure family has no weak-derivative representation."""


class InvalidMeasure(SGPError, ValueError):
    """A mass function returned a negative or non-finite value."""


class StructureViolation(SGPError):
    """The Jacobian block structure needed for the projected system fails."""
