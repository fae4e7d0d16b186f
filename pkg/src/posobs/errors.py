"""Exception hierarchy shared by all posobs modules."""


class PosobsError(Exception):
    """Base class for every error raised by posobs."""


class DimensionError(PosobsError, ValueError):
    """Matrix or vector shapes are inconsistent."""


class SingularMatrixError(PosobsError, ArithmeticError):
    """A linear system has a numerically singular pivot."""


class NumericalFailure(PosobsError, ArithmeticError):
    """An iterative routine failed to converge.

    Parameters
    ----------
    message : str
        Human readable description.
    best : object, optional
        Best iterate available when the routine gave up.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class MissingNoiseModelError(PosobsError, ValueError):
    """An operation needs the noise matrices E and F but they are absent."""


class ScenarioError(PosobsError, ValueError):
    """A scenario file is malformed; ``field`` names the offending entry."""

    def __init__(self, message, field=None):
        if field:
            message = f"{field}: {message}"
        super().__init__(message)
        self.field = field
