"""Exception and warning types shared across the package."""


class MRLError(Exception):
    """Base class for all package errors."""


class ValidationError(MRLError, ValueError):
    """Bad input shape, range, or configuration."""


class EllipticityError(MRLError, ValueError):
    """A coefficient matrix fell below its declared ellipticity constant."""


class ResourceError(MRLError):
    """A requested computation exceeds its configured budget."""


class BlowUpError(MRLError, FloatingPointError):
    """Non-finite state during time stepping."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class NumericalDegradationError(MRLError, ArithmeticError):
    """A quantity that must be PSD / invertible came out visibly wrong."""


class NumericalDegradationWarning(RuntimeWarning):
    """Accuracy monitor tripped; carries the measured defect."""

    def __init__(self, message, defect=float("nan")):
        super().__init__(message)
        self.defect = defect
