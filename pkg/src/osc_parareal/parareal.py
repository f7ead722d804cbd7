"""Parallel-in-time drivers.

Three correction schemes over the same skeleton: a serial coarse sweep,
then iterations that propagate all segments finely in parallel and sweep a
sequential corrector. The corrector is always evaluated difference-first
(fine value plus a difference of coarse terms), so segments whose inputs
have converged reproduce the fine value bitwise and the first k nodes of
iteration k are exact by construction.

run_naive   classic correction, coarse plus fine-minus-coarse.
run_slow    coarse terms are phase-aligned to the fine value first; the
            slow content converges even when the coarse map has O(1)
            phase error.
run_full    additionally transports phase corrections forward along each
            segment, so the full state converges, not only the slow part.
"""

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .alignment import (AlignmentConfig, forward_align_basic,
                        forward_align_improved, local_align)
from .errors import (AlignmentFailureError, BlowUpError, ConfigurationError,
                     SolverAbortError, StiffnessError)
from .integrators import FineConfig, FineFlow
from .ode import FlowMap, StepCounter
from .poincare import PoincareConfig, PoincareFlow

_MODES = ("naive", "slow_only", "full_state")
_FORWARD_VARIANTS = ("basic", "improved")


@dataclass(frozen=True, eq=False)
class PararealConfig:
    """Time slab layout plus the coarse/fine/alignment machinery."""

    T: float
    H: float
    K: int
    mode: str
    coarse: object
    fine: FineConfig
    alignment: AlignmentConfig = None
    forward_variant: str = "improved"
    resonance_windows: tuple = ()
    stop_tolerance: float = None

    def __post_init__(self):
        if self.T <= 0.0 or self.H <= 0.0:
            raise ConfigurationError("T and H must be positive")
        n = int(round(self.T / self.H))
        if n < 1 or abs(n * self.H - self.T) > 1e-9 * max(self.T, 1.0):
            raise ConfigurationError(
                "T=%g is not an integer number of coarse segments of H=%g"
                % (self.T, self.H))
        if not 0 <= self.K <= n:
            raise ConfigurationError(
                "iteration count K=%d must lie in [0, N=%d]" % (self.K, n))
        if self.mode not in _MODES:
            raise ConfigurationError("mode must be one of %s" % (_MODES,))
        if self.forward_variant not in _FORWARD_VARIANTS:
            raise ConfigurationError(
                "forward_variant must be one of %s" % (_FORWARD_VARIANTS,))
        if not isinstance(self.coarse, (PoincareConfig, FlowMap)):
            raise ConfigurationError(
                "coarse must be a PoincareConfig or a FlowMap")
        if not isinstance(self.fine, FineConfig):
            raise ConfigurationError("fine must be a FineConfig")
        if self.mode != "naive" and not isinstance(self.alignment,
                                                   AlignmentConfig):
            raise ConfigurationError(
                "mode %r needs an AlignmentConfig" % self.mode)
        for w in self.resonance_windows:
            if len(w) != 2 or not w[0] < w[1]:
                raise ConfigurationError(
                    "resonance windows must be (lo, hi) pairs with lo < hi")
        if self.stop_tolerance is not None and self.stop_tolerance <= 0.0:
            raise ConfigurationError("stop_tolerance must be positive")

    @property
    def N(self):
        return int(round(self.T / self.H))


@dataclass(eq=False)
class PararealRun:
    """All iterates on the coarse grid plus bookkeeping.

    states[k][n] is the value at node n after iteration k (k=0 is the
    serial coarse sweep). fine_cache[k][n] holds the fine propagation
    used by iteration k where one was computed, NaN elsewhere.
    """

    config: PararealConfig
    states: np.ndarray
    fine_cache: np.ndarray
    iteration_metrics: list
    cost: dict
    converged_at: int = None

    @property
    def iterations(self):
        return self.states.shape[0] - 1


def _coarse_flow(problem, config):
    if isinstance(config.coarse, PoincareConfig):
        return PoincareFlow(problem, config.coarse)
    return config.coarse


def _segment_bypassed(n, H, windows):
    t_lo = (n - 1) * H
    t_hi = n * H
    for lo, hi in windows:
        if t_lo < hi and t_hi > lo:
            return True
    return False


def run_naive(problem, config, u0, workers=None):
    if config.mode != "naive":
        raise ConfigurationError("run_naive got a config with mode %r"
                                 % config.mode)
    return _drive(problem, config, u0, workers)


def run_slow(problem, config, u0, workers=None):
    if config.mode != "slow_only":
        raise ConfigurationError("run_slow got a config with mode %r"
                                 % config.mode)
    return _drive(problem, config, u0, workers)


def run_full(problem, config, u0, workers=None):
    if config.mode != "full_state":
        raise ConfigurationError("run_full got a config with mode %r"
                                 % config.mode)
    return _drive(problem, config, u0, workers)


def _drive(problem, config, u0, workers):
    u0 = np.asarray(u0, dtype=np.float64)
    if u0.shape != (problem.dim,):
        raise ConfigurationError("initial state has shape %s, expected (%d,)"
                                 % (u0.shape, problem.dim))
    N = config.N
    H = config.H
    K = config.K
    d = problem.dim
    coarse = _coarse_flow(problem, config)
    fine = FineFlow(problem, config.fine)
    align_steps = StepCounter()
    nworkers = workers if workers else (os.cpu_count() or 1)

    states = np.empty((K + 1, N + 1, d))
    fine_cache = np.full((K + 1, N + 1, d), np.nan)
    metrics = []
    converged_at = None
    k_done = 0

    def _partial():
        return PararealRun(
            config=config, states=states[:k_done + 1].copy(),
            fine_cache=fine_cache[:k_done + 1].copy(),
            iteration_metrics=metrics,
            cost=_cost(fine, coarse, align_steps, metrics),
            converged_at=converged_at)

    try:
        states[0, 0] = u0
        for n in range(1, N + 1):
            states[0, n] = coarse.propagate(states[0, n - 1], (n - 1) * H, H)

        with ThreadPoolExecutor(max_workers=nworkers) as ex:
            for k in range(1, K + 1):
                tick = time.perf_counter()
                prev = states[k - 1]

                def _task(n, prev=prev):
                    return fine.propagate(prev[n - 1], (n - 1) * H, H)

                vals = list(ex.map(_task, range(k, N + 1)))
                fine_cache[k, k:] = np.asarray(vals)

                states[k, :k] = states[k - 1, :k]
                states[k, k] = fine_cache[k, k]
                if config.mode == "naive":
                    _sweep_naive(states, fine_cache, coarse, k, N, H)
                elif config.mode == "slow_only":
                    _sweep_slow(problem, config, states, fine_cache, coarse,
                                k, N, H, align_steps)
                else:
                    _sweep_full(problem, config, states, fine_cache, coarse,
                                k, N, H, align_steps)
                k_done = k

                update = float(np.max(np.linalg.norm(
                    states[k] - states[k - 1], axis=1)))
                metrics.append({
                    "iteration": k,
                    "max_update": update,
                    "fine_calls": N - k + 1,
                    "wall_seconds": time.perf_counter() - tick,
                })
                if config.stop_tolerance is not None \
                        and update < config.stop_tolerance:
                    converged_at = k
                    states = states[:k + 1]
                    fine_cache = fine_cache[:k + 1]
                    break
    except (BlowUpError, StiffnessError, AlignmentFailureError) as exc:
        raise SolverAbortError(
            "parareal run aborted during iteration %d: %s"
            % (k_done + 1, exc), partial_run=_partial(), cause=exc) from exc

    return PararealRun(
        config=config, states=states, fine_cache=fine_cache,
        iteration_metrics=metrics,
        cost=_cost(fine, coarse, align_steps, metrics),
        converged_at=converged_at)


def _cost(fine, coarse, align_steps, metrics):
    return {
        "fine_steps": fine.micro_steps(),
        "coarse_steps": coarse.micro_steps(),
        "alignment_steps": align_steps.total(),
        "fine_calls": sum(m["fine_calls"] for m in metrics),
    }


def _sweep_naive(states, fine_cache, coarse, k, N, H):
    for n in range(k + 1, N + 1):
        t_prev = (n - 1) * H
        cnew = coarse.propagate(states[k, n - 1], t_prev, H)
        cold = coarse.propagate(states[k - 1, n - 1], t_prev, H)
        states[k, n] = fine_cache[k, n] + (cnew - cold)


def _sweep_slow(problem, config, states, fine_cache, coarse, k, N, H,
                align_steps):
    acfg = config.alignment
    for n in range(k + 1, N + 1):
        t_prev = (n - 1) * H
        t_node = n * H
        cnew = coarse.propagate(states[k, n - 1], t_prev, H)
        cold = coarse.propagate(states[k - 1, n - 1], t_prev, H)
        target = fine_cache[k, n]
        if _segment_bypassed(n, H, config.resonance_windows):
            states[k, n] = target + (cnew - cold)
            continue
        anew = local_align(problem, acfg, cnew, target, t0=t_node,
                           counter=align_steps).aligned_state
        aold = local_align(problem, acfg, cold, target, t0=t_node,
                           counter=align_steps).aligned_state
        states[k, n] = target + (anew - aold)


def _sweep_full(problem, config, states, fine_cache, coarse, k, N, H,
                align_steps):
    acfg = config.alignment
    forward = forward_align_improved \
        if config.forward_variant == "improved" else forward_align_basic
    u_star = states[k, k].copy()
    for n in range(k + 1, N + 1):
        t_prev = (n - 1) * H
        t_node = n * H
        cnew = coarse.propagate(states[k, n - 1], t_prev, H)
        if _segment_bypassed(n, H, config.resonance_windows):
            cold = coarse.propagate(states[k - 1, n - 1], t_prev, H)
            states[k, n] = fine_cache[k, n] + (cnew - cold)
        else:
            anchor = local_align(problem, acfg, states[k - 1, n - 1],
                                 u_star, t0=t_prev, counter=align_steps)
            fine_shifted = forward(problem, acfg, fine_cache[k, n],
                                   t1=t_node, anchor=anchor,
                                   counter=align_steps)
            cold = coarse.propagate(anchor.aligned_state, t_prev, H)
            anew = local_align(problem, acfg, cnew, fine_shifted,
                               t0=t_node,
                               counter=align_steps).aligned_state
            aold = local_align(problem, acfg, cold, fine_shifted,
                               t0=t_node,
                               counter=align_steps).aligned_state
            states[k, n] = fine_shifted + (anew - aold)
        u_star = states[k, n].copy()


def effective_segment(config):
    """Cost of one iteration expressed as an equivalent length of fine
    integration: the segment itself plus the per-segment micro work of the
    coarse stencil (four windows) and one alignment scan."""
    if not isinstance(config.coarse, PoincareConfig):
        raise ConfigurationError(
            "the cost model applies to the multiscale coarse integrator")
    if config.fine.h <= 0.0 or config.coarse.micro.h <= 0.0:
        raise ConfigurationError(
            "the cost model needs explicit fine and micro step sizes")
    if config.alignment is None:
        raise ConfigurationError("the cost model needs an AlignmentConfig")
    eta = config.coarse.eta
    per_segment = eta * (4.0 / config.coarse.micro.h
                         + 1.0 / config.alignment.h_phase)
    return config.H + config.fine.h * per_segment \
        * (1.0 + config.T / config.H)


def speedup_estimate(config, iterations=None):
    """Ideal parallel speedup over one sequential fine integration."""
    k = config.K if iterations is None else iterations
    if k < 1:
        raise ConfigurationError("speedup needs at least one iteration")
    return config.T / (k * effective_segment(config))
