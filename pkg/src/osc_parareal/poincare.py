"""Coarse propagation that samples the slow flow without slow variables.

One macro step advances the smooth path that threads the fast oscillation.
Samples of that path are produced by short filtered micro-integrations of
the full system, pulled back (or baselined) by the unperturbed flow so the
fast phase cancels and only the slow drift survives.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .integrators import (FineConfig, propagate_adaptive, propagate_filtered,
                          propagate_fixed)
from .kernels import FilterKernel
from .ode import FlowMap

_ESTIMATORS = ("fe_chord", "z_symmetric")
_MACROS = ("forward_euler", "midpoint", "verlet")


@dataclass(frozen=True)
class PoincareConfig:
    """Window size, micro integrator, filter kernel, and stencil choices."""

    eta: float
    micro: FineConfig
    kernel: FilterKernel
    estimator: str = "z_symmetric"
    macro: str = "midpoint"

    def __post_init__(self):
        if self.eta <= 0.0:
            raise ConfigurationError("window eta must be positive")
        if not isinstance(self.micro, FineConfig):
            raise ConfigurationError("micro must be a FineConfig")
        if self.micro.method not in ("rk4", "adaptive54"):
            raise ConfigurationError(
                "micro integrator must be rk4 or adaptive54")
        if not isinstance(self.kernel, FilterKernel):
            raise ConfigurationError("kernel must be a FilterKernel")
        if self.estimator not in _ESTIMATORS:
            raise ConfigurationError(
                "estimator must be one of %s" % (_ESTIMATORS,))
        if self.macro not in _MACROS:
            raise ConfigurationError("macro must be one of %s" % (_MACROS,))


def _require_unperturbed(problem):
    if not problem.has_alignment_rhs:
        raise ConfigurationError(
            "problem %r has no unperturbed system; the coarse integrator "
            "needs one to cancel the fast phase" % problem.name)


def _unperturbed(problem, cfg, u, t0, dt, counter):
    m = cfg.micro
    if m.method == "rk4":
        return propagate_fixed(problem, "alignment", u, t0, dt, m.h,
                               counter=counter)
    return propagate_adaptive(problem, "alignment", u, t0, dt, m.rtol,
                              m.atol, h0=m.h if m.h > 0.0 else None,
                              counter=counter)


def _filtered(problem, cfg, u, tstar, eta, counter):
    return propagate_filtered(problem, cfg.kernel, u, tstar, eta,
                              cfg.micro, counter=counter)


def force_fe_chord(problem, cfg, u, t=0.0, counter=None):
    """Slow force from a single forward window: filtered minus unperturbed,
    divided by the window length. The result carries the fast phase of the
    window end, so it pairs with the forward_euler macro stencil."""
    _require_unperturbed(problem)
    w = _filtered(problem, cfg, u, t, cfg.eta, counter)
    w0 = _unperturbed(problem, cfg, u, t, cfg.eta, counter)
    return (w - w0) / cfg.eta


def symmetric_samples(problem, cfg, u, t=0.0, counter=None):
    """The two slow-path samples behind the symmetric estimator: filtered
    windows in both directions, each pulled back to u's fast phase by the
    unperturbed flow. Ideally the pair differs only in slow content."""
    _require_unperturbed(problem)
    fwd = _filtered(problem, cfg, u, t, cfg.eta, counter)
    fwd = _unperturbed(problem, cfg, fwd, t + cfg.eta, -cfg.eta, counter)
    bwd = _filtered(problem, cfg, u, t, -cfg.eta, counter)
    bwd = _unperturbed(problem, cfg, bwd, t - cfg.eta, cfg.eta, counter)
    return fwd, bwd


def force_z_symmetric(problem, cfg, u, t=0.0, counter=None):
    """Slow force from two opposite windows, each pulled back to u's phase
    by the unperturbed flow; the centered difference suppresses the fast
    component to higher order in eta."""
    fwd, bwd = symmetric_samples(problem, cfg, u, t, counter)
    return (fwd - bwd) / (2.0 * cfg.eta)


def slow_force(problem, cfg, u, t=0.0, counter=None):
    if cfg.estimator == "fe_chord":
        return force_fe_chord(problem, cfg, u, t, counter)
    return force_z_symmetric(problem, cfg, u, t, counter)


def poincare_step(problem, cfg, u, t=0.0, H=None, counter=None):
    """One macro step of size H along the slow path through u."""
    if H is None:
        raise ConfigurationError("macro step size H is required")
    if H <= 2.0 * cfg.eta:
        raise ConfigurationError(
            "macro step H=%g must exceed twice the window eta=%g"
            % (H, cfg.eta))
    _require_unperturbed(problem)
    u = np.asarray(u, dtype=np.float64)
    if cfg.macro == "midpoint":
        mid = u + 0.5 * H * slow_force(problem, cfg, u, t, counter)
        return u + H * slow_force(problem, cfg, mid, t + 0.5 * H, counter)
    if cfg.macro == "verlet":
        # kick-drift-kick on the estimated slow field; keeps the slow
        # Hamiltonian structure well enough that the macro march stays
        # bounded over thousands of steps, where one-sided stencils pump
        # the soft degrees of freedom
        split = problem.verlet_split
        if split is None:
            raise ConfigurationError(
                "macro verlet needs the problem's position/velocity split")
        npos = split.n_pos
        w = u.copy()
        f = slow_force(problem, cfg, w, t, counter)
        w[npos:] += 0.5 * H * f[npos:]
        f = slow_force(problem, cfg, w, t + 0.5 * H, counter)
        w[:npos] += H * f[:npos]
        f = slow_force(problem, cfg, w, t + H, counter)
        w[npos:] += 0.5 * H * f[npos:]
        return w
    # forward_euler: anchor at the near slow-path sample and extrapolate
    # along the estimator's chord.
    if cfg.estimator == "fe_chord":
        w = _filtered(problem, cfg, u, t, cfg.eta, counter)
        w0 = _unperturbed(problem, cfg, u, t, cfg.eta, counter)
        return w + (H / cfg.eta) * (w - w0)
    near = _unperturbed(problem, cfg, u, t, cfg.eta, counter)
    far = _filtered(problem, cfg, u, t, cfg.eta, counter)
    far = _filtered(problem, cfg, far, t + cfg.eta, cfg.eta, counter)
    far = _unperturbed(problem, cfg, far, t + 2.0 * cfg.eta, -cfg.eta,
                       counter)
    return near + (H / (2.0 * cfg.eta)) * (far - near)


def poincare_propagate(problem, cfg, u, t0=0.0, dt=None, counter=None):
    """Single macro step over dt; the parareal drivers call this once per
    coarse segment."""
    return poincare_step(problem, cfg, u, t=t0, H=dt, counter=counter)


class PoincareFlow(FlowMap):
    """FlowMap facade so the coarse integrator plugs into parareal."""

    def __init__(self, problem, cfg):
        super().__init__()
        self.problem = problem
        self.cfg = cfg

    def propagate(self, u, t0, dt):
        return poincare_step(self.problem, self.cfg, u, t=t0, H=dt,
                             counter=self.counter)
