"""Exception types shared by every module."""


class SviLabError(Exception):
    """Base class for all package errors."""


class InputError(SviLabError, ValueError):
    """Bad input: wrong dimension, out-of-range parameter, malformed config.

    ``field`` names the offending config field or argument when known.
    """

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class UnsupportedError(InputError):
    """Operation is not defined for the requested operator kind."""


class NumericalError(SviLabError, ArithmeticError):
    """An inner iterative solver failed to reach its tolerance."""

    def __init__(self, message, residual=float("nan")):
        super().__init__(f"{message} (residual={residual:.3e})")
        self.residual = float(residual)
