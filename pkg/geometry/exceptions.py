# geometry/exceptions.py


class BraneError(Exception):
    """Base class for numerical failures (mapped to exit status 3 by the CLI)."""


class ChartDomainError(BraneError):
    pass


class DegenerateEmbeddingError(BraneError):
    pass


class ShapeMismatchError(BraneError, ValueError):
    pass


class BudgetExceededError(BraneError):
    pass


class SliceError(BraneError):
    pass


class NonConvergenceError(BraneError):
    """Raised when relaxation hits its iteration cap.

    The best iterate and the residual history travel with the exception so
    the caller can still report them.
    """

    def __init__(self, message, best=None, history=None):
        super().__init__(message)
        self.best = best
        self.history = history or []


class AntisymmetryError(BraneError):
    """A pair current changed by more than rounding when its arguments were swapped."""
