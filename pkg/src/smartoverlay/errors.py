"""Exception hierarchy shared by every module of the package."""

from __future__ import annotations


class SmartOverlayError(Exception):
    """Base class for all errors raised by smartoverlay."""


class InvalidDimensionError(SmartOverlayError, ValueError):
    pass


class NonConvergenceError(SmartOverlayError, ArithmeticError):
    """The fixed-point iteration hit ``max_iter`` without meeting ``tol``.

    The last iterate and its max-norm residual are kept on the exception so
    callers can report diagnostics.
    """

    def __init__(self, q, residual: float, iterations: int):
        self.q = q
        self.residual = residual
        self.iterations = iterations
        super().__init__(
            f"fixed point did not converge after {iterations} iterations "
            f"(residual {residual:.3e})"
        )


class DegenerateDistributionError(SmartOverlayError, ValueError):
    pass


class DegenerateRowError(SmartOverlayError, ValueError):
    pass


class InvalidMeasurementError(SmartOverlayError, ValueError):
    pass


class UninitializedThresholdError(SmartOverlayError, RuntimeError):
    pass


class InvalidRoundError(SmartOverlayError, ValueError):
    pass


class InvalidPairError(SmartOverlayError, ValueError):
    pass


class HeaderError(SmartOverlayError, ValueError):
    pass


class UnsupportedHeaderError(HeaderError):
    pass


class TruncatedHeaderError(HeaderError):
    pass


class CorruptHeaderError(HeaderError):
    pass


class IncompleteProbeError(SmartOverlayError, ValueError):
    pass


class BudgetViolationError(SmartOverlayError, ValueError):
    pass


class NoPathError(SmartOverlayError, LookupError):
    pass


class MalformedSpecError(SmartOverlayError, ValueError):
    pass


class MalformedRowError(SmartOverlayError, ValueError):
    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}")


class UnknownNodeError(SmartOverlayError, KeyError):
    pass


class InvalidInputError(SmartOverlayError, ValueError):
    pass
