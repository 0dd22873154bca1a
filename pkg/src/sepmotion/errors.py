"""Exception hierarchy.

Input problems derive from :class:`InputError` (CLI exit code 2); numerical
failures derive from :class:`NumericalError` (CLI exit code 3).
"""


class SepmotionError(Exception):
    pass


class InputError(SepmotionError, ValueError):
    pass


class ResourceError(InputError):
    """Requested grid exceeds the configured point cap."""


class NumericalError(SepmotionError, ArithmeticError):
    pass


class NoSolutionError(NumericalError):
    pass


class ConvergenceError(NumericalError):
    """Iteration did not converge. ``trace`` holds the iterates when available."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = list(trace) if trace is not None else []


class PoleError(NumericalError):
    pass


class PhaseTrackingError(NumericalError):
    pass


class SaddleError(NumericalError):
    pass


class DegenerateMinimumError(NumericalError):
    pass


class IllConditionedError(NumericalError):
    pass


class DegenerateBasisError(NumericalError):
    pass


class InsufficientDataError(NumericalError):
    pass


class AccuracyError(NumericalError):
    pass


class ConsistencyError(NumericalError):
    """An assembled operator or result violates an internal invariant."""


class BoundaryWarning(UserWarning):
    """Wavefunction amplitude at the box edge exceeds the validation bound."""


class DegenerateDiagnosticWarning(UserWarning):
    pass
