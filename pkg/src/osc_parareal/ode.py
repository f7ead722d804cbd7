"""Problem abstraction: stiff split right-hand sides, flow maps, diagnostics.

A problem's vector field is du/dt = eps^-1 f1(u) + f0(t, u). Every problem
supplies one compiled kernel

    rhs(t, u, eps, soft, out)

writing eps^-1 f1(u) + soft * f0(t, u) into out. soft = 1 recovers the full
field, soft = 0 the unperturbed (or modified-unperturbed) field used by
alignment searches, and a kernel weight 0 <= soft <= 1 the filtered field.
"""

import threading
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConfigurationError, UnsupportedDiagnosticError

SOFT_FULL = 1.0
SOFT_OFF = 0.0


@dataclass(frozen=True)
class SlowObservables:
    """Diagnostic slow quantities xi(u).

    These are never consumed by solver logic; they exist for error
    reporting and acceptance checks only. The diagnostic_only flag is
    asserted by the harness before use in any solver-adjacent context.
    """

    fn: Callable[[np.ndarray], np.ndarray]
    m: int
    diagnostic_only: bool = True


@dataclass(frozen=True)
class VerletSplit:
    """Partitioned layout for velocity-Verlet.

    State = [positions (n_pos), velocities (dim - n_pos)] with
    dq/dt = drift(v) (velocity-dependent only, linear scaling allowed) and
    dv/dt = accel(q) (position-dependent only).
    """

    n_pos: int
    drift: Callable  # njit (v, eps, out_qdot)
    accel: Callable  # njit (q, eps, out_vdot)


@dataclass(frozen=True)
class OdeProblem:
    name: str
    dim: int
    epsilon: float
    rhs: Callable  # njit (t, u, eps, soft, out)
    time_horizon: float
    has_alignment_rhs: bool = False
    slow: Optional[SlowObservables] = None
    analytic_solution: Optional[Callable[[float], np.ndarray]] = None
    analytic_flow: Optional[Callable] = None  # (u, t0, dt) -> state
    # closed form of the perturbation-free field, where one exists; phase
    # scans running on that field use it instead of stepping numerically,
    # which keeps the slow content of scanned states exact to roundoff
    alignment_flow: Optional[Callable] = None  # (u, t0, dt) -> state
    verlet_split: Optional[VerletSplit] = None

    def __post_init__(self):
        if not (0.0 < self.epsilon < 1.0):
            raise ConfigurationError(
                "epsilon must lie in (0, 1), got %r" % (self.epsilon,))
        if self.dim <= 0:
            raise ConfigurationError("dim must be positive")
        if self.slow is not None and not (0 < self.slow.m < self.dim):
            raise ConfigurationError(
                "slow observable count must be in (0, dim)")


def _check_state(problem, u):
    u = np.asarray(u, dtype=np.float64)
    if u.shape != (problem.dim,):
        raise ConfigurationError(
            "state has shape %r, problem %s needs (%d,)"
            % (u.shape, problem.name, problem.dim))
    if not np.all(np.isfinite(u)):
        raise ConfigurationError("state contains non-finite entries")
    return u


def eval_full_rhs(problem, t, u):
    """du/dt of the full stiff system at (t, u)."""
    u = _check_state(problem, u)
    out = np.empty(problem.dim)
    problem.rhs(float(t), u, problem.epsilon, SOFT_FULL, out)
    return out


def eval_alignment_rhs(problem, t, u):
    """du/dt of the system used for phase searches.

    Falls back to the full field when the problem declares no separate
    alignment variant.
    """
    u = _check_state(problem, u)
    soft = SOFT_OFF if problem.has_alignment_rhs else SOFT_FULL
    out = np.empty(problem.dim)
    problem.rhs(float(t), u, problem.epsilon, soft, out)
    return out


def observe_slow(problem, u):
    """Diagnostic slow observables xi(u)."""
    if problem.slow is None:
        raise UnsupportedDiagnosticError(
            "problem %s defines no slow observables" % problem.name)
    u = _check_state(problem, u)
    return np.asarray(problem.slow.fn(u), dtype=np.float64)


class StepCounter:
    """Thread-safe micro-step tally shared by concurrent propagations."""

    def __init__(self):
        self._lock = threading.Lock()
        self._count = 0

    def add(self, n):
        with self._lock:
            self._count += int(n)

    def total(self):
        with self._lock:
            return self._count


class FlowMap:
    """Propagator contract: (u, t0, dt) -> state, plus a micro-step ledger.

    Subclasses must be deterministic: identical inputs give bitwise
    identical outputs regardless of call interleaving.
    """

    def __init__(self):
        self.counter = StepCounter()

    def propagate(self, u, t0, dt):
        raise NotImplementedError

    def micro_steps(self):
        return self.counter.total()
