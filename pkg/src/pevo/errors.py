"""Exception hierarchy shared by all pevo modules."""


class PevoError(Exception):
    """Base class for every error raised by pevo."""

    module = "pevo"


class ContractError(PevoError, ValueError):
    """An input violates a documented precondition (shape, range, grid match)."""


class SizingError(ContractError):
    """A grid is too short or too coarse for the requested construction."""

    def __init__(self, message, required_length=None, required_points=None):
        super().__init__(message)
        self.required_length = required_length
        self.required_points = required_points


class NumericalError(PevoError, ArithmeticError):
    """Overflow, NaN, or an accuracy guard tripped during a computation."""


class WeightOverflowError(NumericalError):
    """A Gevrey weight exceeded the floating point range."""

    def __init__(self, message, xi=None):
        super().__init__(message)
        self.xi = xi


class StiffnessError(NumericalError):
    """The time step is too large for the lower-order part of the generator."""


class TruncationError(NumericalError):
    """The (alpha, beta) truncation of the energy sum is not certified."""


class ConfigError(PevoError):
    """An experiment configuration is invalid."""
