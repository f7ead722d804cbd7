"""Fine-scale propagators.

All stepping loops are compiled per problem with numba (nogil) so that the
parallel phases of the solver get real concurrency from threads. One loop
family serves the full, unperturbed and filtered right-hand sides through a
mode switch:

    mode 0: soft = 1         (full field)
    mode 1: soft = 0         (unperturbed / modified field)
    mode 2: soft = k(|t - tstar| / |eta|)   (filtered field)
"""

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import (BlowUpError, ConfigurationError, StiffnessError,
                     UnsupportedMethodError)
from .ode import FlowMap

_MODE_FULL = 0
_MODE_ALIGN = 1
_MODE_FILTER = 2

_NO_KERNEL = np.array([1.0])

# Dormand-Prince 5(4) tableau
_DP_C = (0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0)
_DP_E = (71.0 / 57600.0, 0.0, -71.0 / 16695.0, 71.0 / 1920.0,
         -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0)

_MACH_EPS = float(np.finfo(np.float64).eps)


@dataclass(frozen=True)
class FineConfig:
    """Fine integrator selection.

    method: one of rk4, adaptive54, verlet, exact.
    h: fixed step (rk4, verlet) or initial trial step (adaptive54).
    rtol, atol: adaptive54 tolerances.
    """

    method: str
    h: float = 0.0
    rtol: float = 0.0
    atol: float = 0.0

    def __post_init__(self):
        if self.method not in ("rk4", "adaptive54", "verlet", "exact"):
            raise ConfigurationError("unknown fine method %r" % self.method)
        if self.method in ("rk4", "verlet") and not self.h > 0.0:
            raise ConfigurationError("%s needs a positive step h" % self.method)
        if self.method == "adaptive54":
            if not (self.rtol > 0.0 and self.atol > 0.0):
                raise ConfigurationError("adaptive54 needs rtol, atol > 0")


def _build_loops(rhs):
    """Compile the stepping loops around one rhs kernel."""

    @njit(nogil=True)
    def soft_factor(mode, t, tstar, inv_eta, kc):
        if mode == 0:
            return 1.0
        if mode == 1:
            return 0.0
        s = abs(t - tstar) * inv_eta
        if s < 0.0 or s > 1.0:
            return 0.0
        acc = 0.0
        for i in range(kc.shape[0] - 1, -1, -1):
            acc = acc * s + kc[i]
        return acc

    @njit(nogil=True)
    def rk4_step(t, u, hs, eps, mode, tstar, inv_eta, kc,
                 k1, k2, k3, k4, tmp):
        d = u.shape[0]
        rhs(t, u, eps, soft_factor(mode, t, tstar, inv_eta, kc), k1)
        for i in range(d):
            tmp[i] = u[i] + 0.5 * hs * k1[i]
        th = t + 0.5 * hs
        rhs(th, tmp, eps, soft_factor(mode, th, tstar, inv_eta, kc), k2)
        for i in range(d):
            tmp[i] = u[i] + 0.5 * hs * k2[i]
        rhs(th, tmp, eps, soft_factor(mode, th, tstar, inv_eta, kc), k3)
        for i in range(d):
            tmp[i] = u[i] + hs * k3[i]
        te = t + hs
        rhs(te, tmp, eps, soft_factor(mode, te, tstar, inv_eta, kc), k4)
        for i in range(d):
            u[i] += hs / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])

    @njit(nogil=True)
    def rk4_final(u0, t0, dt, h, eps, mode, tstar, inv_eta, kc):
        d = u0.shape[0]
        u = u0.copy()
        k1 = np.empty(d); k2 = np.empty(d); k3 = np.empty(d)
        k4 = np.empty(d); tmp = np.empty(d)
        adt = abs(dt)
        nfull = int(math.floor(adt / h + 1e-9))
        rem = adt - nfull * h
        sgn = 1.0 if dt >= 0.0 else -1.0
        hs = sgn * h
        steps = nfull
        for i in range(nfull):
            t = t0 + i * hs
            rk4_step(t, u, hs, eps, mode, tstar, inv_eta, kc,
                     k1, k2, k3, k4, tmp)
            for j in range(d):
                if not np.isfinite(u[j]):
                    return u, steps, t + hs
        if rem > 1e-9 * h:
            t = t0 + nfull * hs
            rk4_step(t, u, sgn * rem, eps, mode, tstar, inv_eta, kc,
                     k1, k2, k3, k4, tmp)
            steps += 1
            for j in range(d):
                if not np.isfinite(u[j]):
                    return u, steps, t0 + dt
        return u, steps, np.nan

    @njit(nogil=True)
    def rk4_record(u0, t0, nsteps, hs, eps, mode, tstar, inv_eta, kc, out):
        """nsteps whole steps of signed size hs, states written to out."""
        d = u0.shape[0]
        u = u0.copy()
        k1 = np.empty(d); k2 = np.empty(d); k3 = np.empty(d)
        k4 = np.empty(d); tmp = np.empty(d)
        for j in range(d):
            out[0, j] = u[j]
        for i in range(nsteps):
            t = t0 + i * hs
            rk4_step(t, u, hs, eps, mode, tstar, inv_eta, kc,
                     k1, k2, k3, k4, tmp)
            for j in range(d):
                out[i + 1, j] = u[j]
                if not np.isfinite(u[j]):
                    return i + 1, t + hs
        return nsteps, np.nan

    @njit(nogil=True)
    def dp54(u0, t0, dt, rtol, atol, h0, eps, mode, tstar, inv_eta, kc):
        """Embedded 5(4) pair, PI step control, FSAL.

        Returns (state, attempted_steps, fail_time, code) with code
        0 = ok, 1 = non-finite state, 2 = step underflow.
        """
        d = u0.shape[0]
        y = u0.copy()
        ynew = np.empty(d)
        k = np.empty((7, d))
        tmp = np.empty(d)
        if dt == 0.0:
            return y, 0, np.nan, 0
        sgn = 1.0 if dt > 0.0 else -1.0
        tend = t0 + dt
        t = t0
        h = sgn * min(abs(h0), abs(dt))
        hmin = 1e-3 * eps * math.sqrt(_MACH_EPS)
        errold = 1e-4
        steps = 0
        rhs(t, y, eps, soft_factor(mode, t, tstar, inv_eta, kc), k[0])
        while sgn * (tend - t) > 1e-14 * max(1.0, abs(t), abs(tend)):
            if sgn * (t + h) > sgn * tend:
                h = tend - t
            last = sgn * (tend - (t + h)) <= 1e-14 * max(1.0, abs(tend))
            # stages 2..6
            for i in range(d):
                tmp[i] = y[i] + h * 0.2 * k[0, i]
            ts = t + _DP_C[0] * h
            rhs(ts, tmp, eps, soft_factor(mode, ts, tstar, inv_eta, kc), k[1])
            for i in range(d):
                tmp[i] = y[i] + h * (3.0 / 40.0 * k[0, i] + 9.0 / 40.0 * k[1, i])
            ts = t + _DP_C[1] * h
            rhs(ts, tmp, eps, soft_factor(mode, ts, tstar, inv_eta, kc), k[2])
            for i in range(d):
                tmp[i] = y[i] + h * (44.0 / 45.0 * k[0, i]
                                     - 56.0 / 15.0 * k[1, i]
                                     + 32.0 / 9.0 * k[2, i])
            ts = t + _DP_C[2] * h
            rhs(ts, tmp, eps, soft_factor(mode, ts, tstar, inv_eta, kc), k[3])
            for i in range(d):
                tmp[i] = y[i] + h * (19372.0 / 6561.0 * k[0, i]
                                     - 25360.0 / 2187.0 * k[1, i]
                                     + 64448.0 / 6561.0 * k[2, i]
                                     - 212.0 / 729.0 * k[3, i])
            ts = t + _DP_C[3] * h
            rhs(ts, tmp, eps, soft_factor(mode, ts, tstar, inv_eta, kc), k[4])
            for i in range(d):
                tmp[i] = y[i] + h * (9017.0 / 3168.0 * k[0, i]
                                     - 355.0 / 33.0 * k[1, i]
                                     + 46732.0 / 5247.0 * k[2, i]
                                     + 49.0 / 176.0 * k[3, i]
                                     - 5103.0 / 18656.0 * k[4, i])
            ts = t + h
            rhs(ts, tmp, eps, soft_factor(mode, ts, tstar, inv_eta, kc), k[5])
            for i in range(d):
                ynew[i] = y[i] + h * (35.0 / 384.0 * k[0, i]
                                      + 500.0 / 1113.0 * k[2, i]
                                      + 125.0 / 192.0 * k[3, i]
                                      - 2187.0 / 6784.0 * k[4, i]
                                      + 11.0 / 84.0 * k[5, i])
            rhs(ts, ynew, eps, soft_factor(mode, ts, tstar, inv_eta, kc), k[6])
            steps += 1
            # scaled error norm (max over components)
            err = 0.0
            bad = False
            for i in range(d):
                ei = h * (_DP_E[0] * k[0, i] + _DP_E[2] * k[2, i]
                          + _DP_E[3] * k[3, i] + _DP_E[4] * k[4, i]
                          + _DP_E[5] * k[5, i] + _DP_E[6] * k[6, i])
                if not np.isfinite(ynew[i]) or not np.isfinite(ei):
                    bad = True
                    break
                sc = atol + rtol * max(abs(y[i]), abs(ynew[i]))
                e = abs(ei) / sc
                if e > err:
                    err = e
            if bad:
                err = 1e10
            if err <= 1.0:
                t = tend if last else t + h
                for i in range(d):
                    y[i] = ynew[i]
                    k[0, i] = k[6, i]
                if err == 0.0:
                    fac = 5.0
                else:
                    fac = 0.9 * err ** (-0.14) * errold ** 0.08
                    if fac > 5.0:
                        fac = 5.0
                    elif fac < 0.2:
                        fac = 0.2
                errold = max(err, 1e-4)
                h *= fac
            else:
                fac = 0.9 * err ** (-0.2)
                if fac < 0.2:
                    fac = 0.2
                elif fac > 1.0:
                    fac = 1.0
                h *= fac
            if abs(h) < hmin and sgn * (tend - t) > 1e-14 * max(1.0, abs(tend)):
                return y, steps, t, 2
        return y, steps, np.nan, 0

    return rk4_final, rk4_record, dp54


def _build_verlet(drift, accel, n_pos):
    @njit(nogil=True)
    def verlet_final(u0, t0, dt, h, eps):
        d = u0.shape[0]
        nv = d - n_pos
        q = u0[:n_pos].copy()
        v = u0[n_pos:].copy()
        a = np.empty(nv)
        qd = np.empty(n_pos)
        adt = abs(dt)
        nfull = int(math.floor(adt / h + 1e-9))
        rem = adt - nfull * h
        sgn = 1.0 if dt >= 0.0 else -1.0
        use_rem = rem > 1e-9 * h
        accel(q, eps, a)
        steps = 0
        for i in range(nfull + (1 if use_rem else 0)):
            hs = sgn * (h if i < nfull else rem)
            for j in range(nv):
                v[j] += 0.5 * hs * a[j]
            drift(v, eps, qd)
            for j in range(n_pos):
                q[j] += hs * qd[j]
            accel(q, eps, a)
            for j in range(nv):
                v[j] += 0.5 * hs * a[j]
            steps += 1
        out = np.empty(d)
        for j in range(n_pos):
            out[j] = q[j]
        for j in range(nv):
            out[n_pos + j] = v[j]
        fail = np.nan
        for j in range(d):
            if not np.isfinite(out[j]):
                fail = t0 + dt
        return out, steps, fail

    return verlet_final


_LOOP_CACHE = {}
_VERLET_CACHE = {}


def loops_for(problem):
    key = problem.rhs
    if key not in _LOOP_CACHE:
        _LOOP_CACHE[key] = _build_loops(problem.rhs)
    return _LOOP_CACHE[key]


def verlet_for(problem):
    if problem.verlet_split is None:
        raise UnsupportedMethodError(
            "problem %s has no position/velocity split" % problem.name)
    sp = problem.verlet_split
    key = (sp.drift, sp.accel, sp.n_pos)
    if key not in _VERLET_CACHE:
        _VERLET_CACHE[key] = _build_verlet(sp.drift, sp.accel, sp.n_pos)
    return _VERLET_CACHE[key]


def _mode_for(problem, rhs_selector):
    if rhs_selector == "full":
        return _MODE_FULL
    if rhs_selector == "alignment":
        return _MODE_ALIGN if problem.has_alignment_rhs else _MODE_FULL
    raise ConfigurationError("rhs_selector must be 'full' or 'alignment'")


def propagate_fixed(problem, rhs_selector, u, t0, dt, h, counter=None):
    """RK4 composition over ceil(|dt|/h) steps, final step shortened to
    land exactly on t0+dt; the sign of dt sets the direction."""
    if not h > 0.0:
        raise ConfigurationError("step h must be positive")
    u = np.asarray(u, dtype=np.float64)
    if dt == 0.0:
        return u.copy()
    rk4_final, _, _ = loops_for(problem)
    mode = _mode_for(problem, rhs_selector)
    out, steps, fail = rk4_final(u, float(t0), float(dt), float(h),
                                 problem.epsilon, mode, 0.0, 0.0, _NO_KERNEL)
    if counter is not None:
        counter.add(steps)
    if not math.isnan(fail):
        raise BlowUpError("non-finite state in %s at t=%g"
                          % (problem.name, fail), time=fail)
    return out


def propagate_adaptive(problem, rhs_selector, u, t0, dt, rtol, atol,
                       h0=None, counter=None):
    """Embedded 5(4) propagation with PI step control."""
    if not (rtol > 0.0 and atol > 0.0):
        raise ConfigurationError("tolerances must be positive")
    u = np.asarray(u, dtype=np.float64)
    if dt == 0.0:
        return u.copy()
    _, _, dp54 = loops_for(problem)
    mode = _mode_for(problem, rhs_selector)
    if h0 is None or h0 <= 0.0:
        h0 = abs(dt) / 100.0
    out, steps, fail, code = dp54(u, float(t0), float(dt), float(rtol),
                                  float(atol), float(h0), problem.epsilon,
                                  mode, 0.0, 0.0, _NO_KERNEL)
    if counter is not None:
        counter.add(steps)
    if code == 2:
        raise StiffnessError("adaptive step underflow in %s at t=%g"
                             % (problem.name, fail), time=fail)
    if code != 0 or not math.isnan(fail):
        raise BlowUpError("non-finite state in %s at t=%g"
                          % (problem.name, fail), time=fail)
    return out


def propagate_verlet(problem, u, t0, dt, h, counter=None):
    """Velocity-Verlet for problems with a declared partitioned split."""
    if not h > 0.0:
        raise ConfigurationError("step h must be positive")
    u = np.asarray(u, dtype=np.float64)
    if dt == 0.0:
        return u.copy()
    verlet_final = verlet_for(problem)
    out, steps, fail = verlet_final(u, float(t0), float(dt), float(h),
                                    problem.epsilon)
    if counter is not None:
        counter.add(steps)
    if not math.isnan(fail):
        raise BlowUpError("non-finite state in %s at t=%g"
                          % (problem.name, fail), time=fail)
    return out


def propagate_filtered(problem, kernel, u, tstar, eta, micro, counter=None):
    """Integrate the filtered field over [tstar, tstar+eta].

    Only the order-one part of the field is multiplied by the kernel
    weight k(|t - tstar| / |eta|); eta < 0 integrates backward over
    [tstar+eta, tstar]. micro selects the underlying stepper.
    """
    if eta == 0.0:
        return np.asarray(u, dtype=np.float64).copy()
    u = np.asarray(u, dtype=np.float64)
    rk4_final, _, dp54 = loops_for(problem)
    inv_eta = 1.0 / abs(eta)
    kc = np.ascontiguousarray(kernel.coeffs)
    # the micro step must resolve the kernel bump, not just the fast
    # period; a handful of RK4 steps across a degree-eleven polynomial
    # window biases the effective weight by percents
    if micro.method == "rk4":
        h = min(float(micro.h), abs(eta) / 24.0)
        out, steps, fail = rk4_final(u, float(tstar), float(eta),
                                     h, problem.epsilon,
                                     _MODE_FILTER, float(tstar), inv_eta, kc)
        code = 0
    elif micro.method == "adaptive54":
        h0 = micro.h if micro.h > 0.0 else abs(eta) / 100.0
        h0 = min(h0, abs(eta) / 8.0)
        out, steps, fail, code = dp54(u, float(tstar), float(eta),
                                      micro.rtol, micro.atol, float(h0),
                                      problem.epsilon, _MODE_FILTER,
                                      float(tstar), inv_eta, kc)
    else:
        raise UnsupportedMethodError(
            "filtered propagation needs rk4 or adaptive54, got %r"
            % micro.method)
    if counter is not None:
        counter.add(steps)
    if code == 2:
        raise StiffnessError("adaptive step underflow in %s at t=%g"
                             % (problem.name, fail), time=fail)
    if not math.isnan(fail):
        raise BlowUpError("non-finite state in %s at t=%g"
                          % (problem.name, fail), time=fail)
    return out


def record_trajectory(problem, rhs_selector, u, t0, nsteps, hs, counter=None):
    """nsteps RK4 steps of signed size hs; returns the (nsteps+1, d) grid
    of states including the start point."""
    u = np.asarray(u, dtype=np.float64)
    _, rk4_record, _ = loops_for(problem)
    mode = _mode_for(problem, rhs_selector)
    out = np.empty((nsteps + 1, problem.dim))
    done, fail = rk4_record(u, float(t0), int(nsteps), float(hs),
                            problem.epsilon, mode, 0.0, 0.0, _NO_KERNEL, out)
    if counter is not None:
        counter.add(done)
    if not math.isnan(fail):
        raise BlowUpError("non-finite state in %s at t=%g"
                          % (problem.name, fail), time=fail)
    return out


class FineFlow(FlowMap):
    """FlowMap adapter over the fine integrators."""

    def __init__(self, problem, cfg, rhs_selector="full"):
        super().__init__()
        self.problem = problem
        self.cfg = cfg
        self.rhs_selector = rhs_selector
        if cfg.method == "exact" and problem.analytic_flow is None:
            raise UnsupportedMethodError(
                "problem %s has no analytic flow" % problem.name)
        if cfg.method == "verlet" and problem.verlet_split is None:
            raise UnsupportedMethodError(
                "problem %s has no position/velocity split" % problem.name)

    def propagate(self, u, t0, dt):
        m = self.cfg.method
        if m == "rk4":
            return propagate_fixed(self.problem, self.rhs_selector, u, t0,
                                   dt, self.cfg.h, counter=self.counter)
        if m == "adaptive54":
            return propagate_adaptive(self.problem, self.rhs_selector, u,
                                      t0, dt, self.cfg.rtol, self.cfg.atol,
                                      h0=self.cfg.h or None,
                                      counter=self.counter)
        if m == "verlet":
            return propagate_verlet(self.problem, u, t0, dt, self.cfg.h,
                                    counter=self.counter)
        return np.asarray(self.problem.analytic_flow(
            np.asarray(u, dtype=np.float64), float(t0), float(dt)),
            dtype=np.float64)
