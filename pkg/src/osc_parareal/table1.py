"""Iteration counts on the linear expanding spiral.

Conventional coarse maps are handled through the exact one-step error
recurrence e[k][n] = c e[k][n-1] + (f - c) e[k-1][n-1], evaluated in units
of f^n with power-of-two rescaling so stiff rows neither overflow nor
underflow. The multiscale row runs the actual slow-aligned driver.
"""

import numpy as np
from numba import njit

from .errors import ConfigurationError
from .metrics import iterations_to_tolerance, slow_sup_error
from .parareal import PararealConfig, run_slow
from .problems import SIMPLE_ALPHA, LinearSpiralCoarse, make_problem, \
    reference_trajectory

DEFAULT_EPSILONS = (0.2, 0.1, 0.05, 0.02, 0.01, 0.001)
COARSE_KINDS = ("explicit_euler", "implicit_euler", "trapezoidal")

_BIG = 2.0 ** 200
_SMALL = 2.0 ** -56
_SHRINK = 2.0 ** -256
_GROW = 2.0 ** 256


@njit(cache=True)
def _count_iterations(r, log_f, n, tol, kmax):
    # v[i] is the node-i error divided by f^i, times 2^(-256*escale).
    v = np.zeros(n + 1, dtype=np.complex128)
    w = np.empty(n + 1)
    for i in range(n + 1):
        w[i] = np.exp(log_f * i)
    escale = 0
    # zeroth sweep: errors of the pure coarse march, v[i] = r^i - 1
    for i in range(1, n + 1):
        v[i] = r * v[i - 1] + (r - 1.0) * 2.0 ** (-256.0 * escale)
        if max(abs(v[i].real), abs(v[i].imag)) > _BIG:
            for j in range(n + 1):
                v[j] *= _SHRINK
            escale += 1
    if escale == 0:
        sup = 0.0
        for i in range(1, n + 1):
            m = w[i] * abs(v[i])
            if m > sup:
                sup = m
        if sup < tol:
            return 0
    for k in range(1, kmax + 1):
        # nodes up to k are exact; sweep the rest in place
        old_prev = v[k]
        v[k] = 0.0
        for i in range(k + 1, n + 1):
            cur_old = v[i]
            v[i] = r * v[i - 1] + (1.0 - r) * old_prev
            old_prev = cur_old
            if max(abs(v[i].real), abs(v[i].imag)) > _BIG:
                for j in range(n + 1):
                    v[j] *= _SHRINK
                old_prev *= _SHRINK
                escale += 1
        mx = 0.0
        for i in range(k + 1, n + 1):
            a = abs(v[i])
            if a > mx:
                mx = a
        if escale > 0 and mx < _SMALL:
            for j in range(n + 1):
                v[j] *= _GROW
            escale -= 1
        if escale == 0:
            sup = 0.0
            for i in range(k + 1, n + 1):
                m = w[i] * abs(v[i])
                if m > sup:
                    sup = m
            if sup < tol:
                return k
    return kmax


def conventional_iterations(kind, epsilon, H, tol=0.1, T=10.0,
                            alpha=SIMPLE_ALPHA):
    """Iterations until the sup node error of classic parareal with the
    given conventional coarse map drops below tol; capped at N = T/H."""
    n = int(round(T / H))
    if n < 1 or abs(n * H - T) > 1e-9 * T:
        raise ConfigurationError("T must be an integer multiple of H")
    z = alpha + 1j / epsilon
    f = np.exp(z * H)
    c = LinearSpiralCoarse(kind, epsilon, alpha).factor(H)
    return int(_count_iterations(c / f, alpha * H, n, tol, n))


def proposed_iterations(epsilon, tol=0.1, workers=None, kmax=3):
    """Iterations of the slow-aligned multiscale driver until the sup slow
    error drops below tol. A zeroth sweep below tol still counts as one,
    since one parareal iteration is the minimum the scheme performs."""
    spec = make_problem("simple_spiral", epsilon)
    config = PararealConfig(
        T=spec.T, H=spec.H, K=min(kmax, spec.N), mode="slow_only",
        coarse=spec.poincare, fine=spec.fine, alignment=spec.alignment)
    run = run_slow(spec.problem, config, spec.u0, workers=workers)
    ref = reference_trajectory(spec, spec.grid())
    series = slow_sup_error(spec.problem, run, ref)
    k = iterations_to_tolerance(series, tol)
    if k is None:
        return None
    return max(k, 1)


def build_table(epsilons=DEFAULT_EPSILONS, tol=0.1, include_proposed=True,
                workers=None):
    rows = []
    for kind in COARSE_KINDS:
        for h_rule, h_of in (("eps/5", lambda e: e / 5.0),
                             ("1/10", lambda e: 0.1)):
            counts = [conventional_iterations(kind, e, h_of(e), tol)
                      for e in epsilons]
            rows.append({"method": kind, "H": h_rule, "counts": counts})
    if include_proposed:
        counts = [proposed_iterations(e, tol, workers=workers)
                  for e in epsilons]
        rows.append({"method": "multiscale_aligned", "H": "1/10",
                     "counts": counts})
    return {"epsilons": list(epsilons), "tol": tol, "rows": rows}


def format_table(table):
    eps = table["epsilons"]
    head = ["method", "H"] + ["eps=%g" % e for e in eps]
    lines = [head]
    for row in table["rows"]:
        cells = [row["method"], row["H"]]
        cells += ["-" if c is None else str(c) for c in row["counts"]]
        lines.append(cells)
    widths = [max(len(line[i]) for line in lines) for i in range(len(head))]
    out = []
    for j, line in enumerate(lines):
        out.append("  ".join(c.ljust(w) for c, w in zip(line, widths)))
        if j == 0:
            out.append("  ".join("-" * w for w in widths))
    return "\n".join(out)


def table_csv_rows(table):
    eps = table["epsilons"]
    yield ["method", "H"] + ["%r" % e for e in eps]
    for row in table["rows"]:
        yield [row["method"], row["H"]] + \
            ["" if c is None else str(c) for c in row["counts"]]
