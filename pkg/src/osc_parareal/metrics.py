"""Error measurement on the coarse grid.

All errors are suprema over coarse nodes; nothing here looks inside the
segments. The slow variants apply the problem's diagnostic observables to
both the iterates and the reference before comparing.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .ode import observe_slow


@dataclass(frozen=True)
class ErrorSeries:
    """Sup-norm error per parareal iteration (k=0 is the coarse sweep)."""

    kind: str
    iterations: np.ndarray
    errors: np.ndarray


def state_sup_error(run, reference):
    ref = np.asarray(reference, dtype=np.float64)
    if ref.shape != run.states.shape[1:]:
        raise ConfigurationError(
            "reference shape %s does not match the run's node grid %s"
            % (ref.shape, run.states.shape[1:]))
    errs = np.max(np.linalg.norm(run.states - ref[None, :, :], axis=2),
                  axis=1)
    return ErrorSeries(kind="state",
                       iterations=np.arange(run.states.shape[0]),
                       errors=errs)


def slow_sup_error(problem, run, reference):
    ref = np.asarray(reference, dtype=np.float64)
    if ref.shape != run.states.shape[1:]:
        raise ConfigurationError(
            "reference shape %s does not match the run's node grid %s"
            % (ref.shape, run.states.shape[1:]))
    kmax, nmax, _ = run.states.shape
    ref_slow = np.stack([observe_slow(problem, ref[n]) for n in range(nmax)])
    errs = np.empty(kmax)
    for k in range(kmax):
        worst = 0.0
        for n in range(nmax):
            dev = np.linalg.norm(
                observe_slow(problem, run.states[k, n]) - ref_slow[n])
            if dev > worst:
                worst = dev
        errs[k] = worst
    return ErrorSeries(kind="slow", iterations=np.arange(kmax), errors=errs)


def iterations_to_tolerance(series, tol):
    """Smallest k whose error is below tol, or None."""
    if tol <= 0.0:
        raise ConfigurationError("tolerance must be positive")
    for k, err in zip(series.iterations, series.errors):
        if err < tol:
            return int(k)
    return None


def fit_order(values, errors):
    """Least-squares slope of log(error) against log(value)."""
    x = np.asarray(values, dtype=np.float64)
    y = np.asarray(errors, dtype=np.float64)
    if x.size != y.size or x.size < 2:
        raise ConfigurationError("need at least two (value, error) pairs")
    if np.any(x <= 0.0) or np.any(y <= 0.0):
        raise ConfigurationError("order fit needs positive values and errors")
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])
