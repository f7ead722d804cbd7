"""Phase alignment between nearby oscillatory states.

Aligning a state u0 to a target v0 means finding the small time shifts
(one forward, one backward) that bring the trajectory through u0 closest
to v0, then forming the convex combination of the two shifted states whose
weights cancel the leading phase error. The same shifts can be transported
to the end of a coarse segment, which is what the forward variants do.
"""

import logging
from collections import namedtuple
from dataclasses import dataclass

import numpy as np

from .errors import AlignmentFailureError, ConfigurationError
from .integrators import propagate_fixed, record_trajectory
from .ode import StepCounter, eval_alignment_rhs, eval_full_rhs

logger = logging.getLogger(__name__)

_SELECTORS = ("full", "alignment")

_seen_fallbacks = set()


def _warn_once(key, msg, *args):
    """First occurrence per process at warning level, the rest at debug;
    a run that falls back on most segments would otherwise flood the log."""
    if key in _seen_fallbacks:
        logger.debug(msg, *args)
        return
    _seen_fallbacks.add(key)
    logger.warning(msg + " (further occurrences logged at debug level)",
                   *args)

_Minimum = namedtuple("_Minimum", "t state j")


@dataclass(frozen=True)
class AlignmentConfig:
    """Scan parameters for the phase-mismatch minimization."""

    h_phase: float
    rhs_selector: str = "full"
    initial_eta: float = 0.0
    tol_factor: float = 0.0
    max_window: float = 0.0
    max_refinements: int = 3
    scan_substeps: int = 16

    def __post_init__(self):
        if self.h_phase <= 0.0:
            raise ConfigurationError("h_phase must be positive")
        if self.scan_substeps < 1:
            raise ConfigurationError("scan_substeps must be >= 1")
        if self.rhs_selector not in _SELECTORS:
            raise ConfigurationError(
                "rhs_selector must be one of %s" % (_SELECTORS,))
        if self.initial_eta <= 0.0 or self.tol_factor <= 0.0:
            raise ConfigurationError(
                "initial_eta and tol_factor must be positive")
        if self.max_window < self.initial_eta:
            raise ConfigurationError("max_window must cover initial_eta")
        if self.max_refinements < 0:
            raise ConfigurationError("max_refinements must be >= 0")

    @classmethod
    def for_epsilon(cls, eps, h_phase=None, rhs_selector="full",
                    max_refinements=3):
        """defaults scaled by the problem's fast time: window starts at eps,
        may grow to 64 eps, movement tolerance eps/100, grid eps/10."""
        return cls(h_phase=eps / 10.0 if h_phase is None else h_phase,
                   rhs_selector=rhs_selector, initial_eta=eps,
                   tol_factor=eps / 100.0, max_window=64.0 * eps,
                   max_refinements=max_refinements)


@dataclass(frozen=True)
class AlignmentResult:
    t_plus: float
    t_minus: float
    lambda_plus: float
    lambda_minus: float
    aligned_state: np.ndarray
    scan_cost: int


def _quad_refine(w3, t_center, dt, v0):
    """Refine a discrete minimizer by the quadratic through the three
    bracketing trajectory points; returns the minimizing time and state."""
    c = w3[1]
    b = 0.5 * (w3[2] - w3[0])
    a = 0.5 * (w3[2] - 2.0 * w3[1] + w3[0])
    d = c - v0
    poly = np.array([4.0 * a.dot(a), 6.0 * a.dot(b),
                     2.0 * (b.dot(b) + 2.0 * a.dot(d)), 2.0 * b.dot(d)])
    cands = [-1.0, 0.0, 1.0]
    scale = np.max(np.abs(poly))
    if scale > 0.0 and np.isfinite(scale):
        for r in np.roots(poly / scale):
            if abs(r.imag) <= 1e-9 * (1.0 + abs(r.real)) and abs(r.real) <= 1.0:
                cands.append(float(r.real))
    best_t = None
    best_j = np.inf
    best_w = None
    for th in cands:
        w = c + th * b + th * th * a
        j = float(np.sum((w - v0) ** 2))
        if j < best_j:
            best_j = j
            best_t = th
            best_w = w
    return _Minimum(t_center + best_t * dt, best_w, best_j)


def _scan_flow(problem, cfg):
    """Closed-form flow for the scan's field, when the problem has one."""
    if cfg.rhs_selector == "alignment":
        return problem.alignment_flow
    return None


def _record(problem, cfg, u0, t0, n, h, counter):
    flow = _scan_flow(problem, cfg)
    if flow is None:
        return record_trajectory(problem, cfg.rhs_selector, u0, t0, n, h,
                                 counter=counter)
    return np.stack([np.asarray(flow(u0, t0, i * h), dtype=np.float64)
                     for i in range(n + 1)])


def _subgrid_minimum(problem, cfg, u0, v0, t0, h, sign, jv, counter):
    """Mismatch minimum hiding inside the first grid cell, or None.

    When the two states are already nearly in phase the nearest basin
    bottom sits closer to zero than one sample spacing, so no sampled
    value dips below the start and the interior detector walks right
    past it (and then settles on a full-period return, which transports
    the wrong shift when the period itself drifts). The stationary
    point is estimated by projecting the mismatch on the velocity and
    validated against the actual flow before it counts."""
    vel = eval_alignment_rhs if cfg.rhs_selector == "alignment" \
        else eval_full_rhs
    du = vel(problem, t0, u0)
    denom = float(np.dot(du, du))
    if denom <= 0.0 or not np.isfinite(denom):
        return None
    t_hat = float(np.dot(v0 - u0, du)) / denom
    if sign * t_hat < 0.0 or abs(t_hat) >= 0.75 * h:
        return None
    w = _flow_to(problem, cfg, u0, t0, t_hat, counter)
    j = float(np.sum((w - v0) ** 2))
    if not np.isfinite(j) or j > min(jv[0], jv[1]) * (1.0 + 1e-9):
        return None
    return _Minimum(t_hat, w, j)


def _side_scan(problem, cfg, u0, v0, t0, eta, sign, counter):
    """One pass over [0, sign*eta]; returns (candidate minima in distance
    order, max sampled mismatch).

    The trajectory is sampled on a grid scan_substeps times finer than
    h_phase so the stepping stays accurate well past the fast period.
    Candidates carry their interpolated basin bottoms."""
    h = cfg.h_phase / cfg.scan_substeps
    n = max(int(np.ceil(eta / h - 1e-9)), 4)
    traj = _record(problem, cfg, u0, t0, n, sign * h, counter)
    diff = traj - v0[None, :]
    jv = np.einsum("ij,ij->i", diff, diff)
    interior = np.flatnonzero((jv[1:n] < jv[:n - 1])
                              & (jv[1:n] <= jv[2:n + 1])) + 1
    cands = [_quad_refine(traj[i - 1:i + 2], sign * h * i, sign * h, v0)
             for i in interior]
    if jv[1] >= jv[0]:
        near = _subgrid_minimum(problem, cfg, u0, v0, t0, h, sign, jv,
                                counter)
        if near is not None:
            cands.insert(0, near)
    return cands, float(jv.max())


def _refine_minimum(problem, cfg, u0, v0, t0, first, counter):
    """Halve the grid around a found minimum until the refined minimizing
    state settles (movement below tol_factor) or the pass budget runs out,
    then polish the shift against the mismatch derivative."""
    h = cfg.h_phase / cfg.scan_substeps
    cur = first
    for _ in range(cfg.max_refinements):
        h *= 0.5
        start = cur.t - 4.0 * h
        base = _flow_to(problem, cfg, u0, t0, start, counter)
        traj = _record(problem, cfg, base, t0 + start, 8, h, counter)
        diff = traj - v0[None, :]
        jv = np.einsum("ij,ij->i", diff, diff)
        i = int(np.argmin(jv[1:8])) + 1
        new = _quad_refine(traj[i - 1:i + 2], start + i * h, h, v0)
        moved = float(np.linalg.norm(new.state - cur.state))
        cur = new
        if moved < cfg.tol_factor:
            break
    return _phase_polish(problem, cfg, u0, v0, t0, cur, h, counter)


def _phase_polish(problem, cfg, u0, v0, t0, cur, h, counter):
    """Secant root of g(t) = (flow(t) - v0) . velocity inside the basin.

    Quadratic fits of the mismatch stall once its variation across the
    grid sinks into roundoff, which leaves the shift no better than the
    square root of machine precision. The mismatch derivative is linear
    through the bottom with slope about |velocity|^2, so its root locates
    the same point several orders more sharply."""
    vel = eval_alignment_rhs if cfg.rhs_selector == "alignment" \
        else eval_full_rhs

    def g_at(t):
        w = _flow_to(problem, cfg, u0, t0, t, counter)
        return float(np.dot(w - v0, vel(problem, t0 + t, w))), w

    ta = cur.t
    ga, _ = g_at(ta)
    tb = cur.t + 0.25 * h
    gb, wb = g_at(tb)
    best = cur
    for _ in range(12):
        if gb == ga or not np.isfinite(gb):
            break
        tn = tb - gb * (tb - ta) / (gb - ga)
        if abs(tn - cur.t) > 2.0 * h:
            break
        ta, ga = tb, gb
        tb = tn
        gb, wb = g_at(tb)
        j = float(np.sum((wb - v0) ** 2))
        if j <= best.j:
            best = _Minimum(tb, wb, j)
        if abs(tb - ta) <= 1e-15 * (abs(tb) + 1e-3 * h):
            break
    return best


# a basin counts as a genuine phase match only when its bottom sits well
# below the sampled mismatch range; shallow dips (a resonant sub-harmonic
# matching one oscillator while another is anti-phased) ride high on the
# landscape and picking one would cancel part of the state
_DEPTH = 0.05


def _first_fair(cands):
    """First basin within reach of the side's own deepest one."""
    if not cands:
        return None
    side_cut = 4.0 * min(c.j for c in cands) + 1e-300
    return next(c for c in cands if c.j <= side_cut)


def _scan(problem, cfg, u0, v0, t0, sides, counter):
    """Pick the nearest genuine mismatch minimum on each requested side.

    Genuine means the basin bottom sits well below the sampled mismatch
    range; how deep the basins are relative to EACH OTHER carries no
    information (drift can make a later return much deeper than the
    nearest one, and a resonant sub-harmonic can dent the landscape
    without matching the phase at all). The window doubles until every
    requested side holds a genuine basin; if the budget runs out first,
    each side settles for its first basin within 4x of its own deepest."""
    want_minus = sides in ("both", "minus")
    want_plus = sides in ("both", "plus")
    eta = cfg.initial_eta
    mn_c, pl_c = [], []
    jmax = 0.0
    while True:
        if want_minus:
            mn_c, jm = _side_scan(problem, cfg, u0, v0, t0, eta, -1, counter)
            jmax = max(jmax, jm)
        if want_plus:
            pl_c, jp = _side_scan(problem, cfg, u0, v0, t0, eta, +1, counter)
            jmax = max(jmax, jp)
        cut = _DEPTH * jmax
        mn = next((c for c in mn_c if c.j <= cut), None)
        pl = next((c for c in pl_c if c.j <= cut), None)
        if (mn is not None or not want_minus) and \
                (pl is not None or not want_plus):
            break
        if eta >= cfg.max_window * (1.0 - 1e-12):
            # window budget spent; settle for what is there
            mn = _first_fair(mn_c)
            pl = _first_fair(pl_c)
            if (mn is None and want_minus) or (pl is None and want_plus):
                raise AlignmentFailureError(
                    "no interior phase-mismatch minimum within a window "
                    "of %g" % eta, window=eta)
            break
        eta = min(2.0 * eta, cfg.max_window)
    if mn is not None:
        mn = _refine_minimum(problem, cfg, u0, v0, t0, mn, counter)
    if pl is not None:
        pl = _refine_minimum(problem, cfg, u0, v0, t0, pl, counter)
    return mn, pl


def scan_first_minima(problem, cfg, u0, v0, t0=0.0, counter=None):
    """Times of the first forward and first backward mismatch minima."""
    mn, pl = _scan(problem, cfg, np.asarray(u0, dtype=np.float64),
                   np.asarray(v0, dtype=np.float64), t0, "both", counter)
    return pl.t, mn.t


def local_align(problem, cfg, u0, v0, t0=0.0, counter=None):
    """Combination of the two nearest phase-matched states on the
    trajectory through u0 that best reproduces v0's phase while keeping
    u0's slow content."""
    u0 = np.asarray(u0, dtype=np.float64)
    v0 = np.asarray(v0, dtype=np.float64)
    cnt = StepCounter()
    mn, pl = _scan(problem, cfg, u0, v0, t0, "both", cnt)
    tp, tm = pl.t, mn.t
    if abs(tp - tm) < 1e-3 * cfg.h_phase:
        lp, lm = 1.0, 0.0
        aligned = pl.state.copy()
    else:
        lp = -tm / (tp - tm)
        lm = tp / (tp - tm)
        aligned = lp * pl.state + lm * mn.state
    if counter is not None:
        counter.add(cnt.total())
    return AlignmentResult(t_plus=tp, t_minus=tm, lambda_plus=lp,
                           lambda_minus=lm, aligned_state=aligned,
                           scan_cost=cnt.total())


def _flow_to(problem, cfg, u, t0, dt, counter):
    if dt == 0.0:
        return np.array(u, dtype=np.float64)
    flow = _scan_flow(problem, cfg)
    if flow is not None:
        return np.asarray(flow(u, t0, dt), dtype=np.float64)
    return propagate_fixed(problem, cfg.rhs_selector, u, t0, dt,
                           cfg.h_phase / cfg.scan_substeps, counter=counter)


def _anchor_for(problem, cfg, u0, v0, t_pair, counter):
    if u0 is None or v0 is None:
        raise ConfigurationError(
            "forward alignment needs the (u0, v0) pair or a precomputed "
            "anchor")
    return local_align(problem, cfg, u0, v0, t0=t_pair, counter=counter)


def forward_align_basic(problem, cfg, u1, u0=None, v0=None, t1=0.0,
                        t_pair=None, anchor=None, counter=None):
    """Transport the (u0 -> v0) phase shifts to the segment end u1:
    the convex combination of u1 flowed by t_plus and t_minus."""
    u1 = np.asarray(u1, dtype=np.float64)
    cnt = StepCounter()
    if anchor is None:
        anchor = _anchor_for(problem, cfg, u0, v0,
                             t1 if t_pair is None else t_pair, cnt)
    wp = _flow_to(problem, cfg, u1, t1, anchor.t_plus, cnt)
    if anchor.lambda_minus == 0.0:
        out = wp
    else:
        wm = _flow_to(problem, cfg, u1, t1, anchor.t_minus, cnt)
        out = anchor.lambda_plus * wp + anchor.lambda_minus * wm
    if counter is not None:
        counter.add(cnt.total())
    return out


def forward_align_improved(problem, cfg, u1, u0=None, v0=None, t1=0.0,
                           t_pair=None, anchor=None, counter=None):
    """Refined transport: replace the straight convex combination by the
    matching point on an actual trajectory between the two shifted states.

    Two sub-scans locate, on both orientations, the shifts that equalize
    the phases of the plus- and minus-side states; the combination built
    from whichever orientation lands closer to the basic one is returned.
    Falls back to the basic combination if a sub-scan fails.
    """
    u1 = np.asarray(u1, dtype=np.float64)
    cnt = StepCounter()
    if anchor is None:
        anchor = _anchor_for(problem, cfg, u0, v0,
                             t1 if t_pair is None else t_pair, cnt)
    tp, tm = anchor.t_plus, anchor.t_minus
    wp = _flow_to(problem, cfg, u1, t1, tp, cnt)
    if anchor.lambda_minus == 0.0:
        if counter is not None:
            counter.add(cnt.total())
        return wp
    wm = _flow_to(problem, cfg, u1, t1, tm, cnt)
    base = anchor.lambda_plus * wp + anchor.lambda_minus * wm
    try:
        gm, gp = _scan(problem, cfg, wp, wm, t1 + tp, "both", cnt)
        tpp = tp + anchor.lambda_minus * gp.t
        tpm = tp + anchor.lambda_minus * gm.t
        wpp = _flow_to(problem, cfg, u1, t1, tpp, cnt)
        wpm = _flow_to(problem, cfg, u1, t1, tpm, cnt)
        sm, _ = _scan(problem, cfg, wm, wpp, t1 + tm, "minus", cnt)
        _, sp = _scan(problem, cfg, wm, wpm, t1 + tm, "plus", cnt)
        tmm = tm + sm.t
        tmp = tm + sp.t
        d1 = tpp - tmm
        d2 = tpm - tmp
        floor = 1e-12 * max(cfg.h_phase, abs(tp - tm))
        picks = []
        if abs(d1) >= floor:
            picks.append((-tmm / d1) * wpp + (tpp / d1) * sm.state)
        if abs(d2) >= floor:
            picks.append((-tmp / d2) * wpm + (tpm / d2) * sp.state)
        if not picks:
            _warn_once("degenerate", "degenerate forward-alignment "
                       "weights; keeping the basic combination")
            out = base
        else:
            # an orientation whose pair collapsed in time carries no
            # interpolation information; judge the survivors by how far
            # they land from the straight combination
            errs = [float(np.linalg.norm(s - base)) for s in picks]
            e1 = min(errs)
            e2 = max(errs)
            out = picks[int(np.argmin(errs))]
            # the refinement corrects the combination by less than its own
            # spread; landing further away means a sub-scan latched onto
            # the wrong basin and the straight combination is safer
            spread = float(np.linalg.norm(wp - wm))
            if min(e1, e2) > 0.5 * spread + 1e-12:
                _warn_once("drift", "forward-alignment refinement "
                           "drifted off the combination; keeping the "
                           "basic one")
                out = base
    except AlignmentFailureError as exc:
        _warn_once("subscan", "forward-alignment sub-scan failed (%s); "
                   "keeping the basic combination", exc)
        out = base
    if counter is not None:
        counter.add(cnt.total())
    return out
