"""Exception types shared across the library."""


class OscPararealError(Exception):
    """Base class for all library errors."""


class ConfigurationError(OscPararealError):
    """Invalid problem/solver configuration or dimension mismatch."""


class CatalogError(ConfigurationError):
    """Requested benchmark problem is not in the catalog."""


class BlowUpError(OscPararealError):
    """Integration produced a non-finite state.

    Attributes
    ----------
    time : float
        Integration time at which the first non-finite value appeared.
    """

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class StiffnessError(OscPararealError):
    """Adaptive step size underflowed its floor; the problem is too stiff
    for the configured tolerances."""

    def __init__(self, message, time=None, step=None):
        super().__init__(message)
        self.time = time
        self.step = step


class UnsupportedMethodError(OscPararealError):
    """Problem does not support the requested integration method."""


class UnsupportedDiagnosticError(OscPararealError):
    """Slow observables were requested but the problem does not define any."""


class AlignmentFailureError(OscPararealError):
    """Phase alignment scan found no usable interior minimum.

    Attributes
    ----------
    window : float
        Largest half-window that was searched before giving up.
    """

    def __init__(self, message, window=None):
        super().__init__(message)
        self.window = window


class SolverAbortError(OscPararealError):
    """A parareal run aborted mid-iteration. Partial results are retained
    on the ``partial_run`` attribute."""

    def __init__(self, message, partial_run=None, cause=None):
        super().__init__(message)
        self.partial_run = partial_run
        self.cause = cause
