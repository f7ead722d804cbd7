"""Compactly supported polynomial averaging kernels.

A kernel k lives on [0,1], vanishes together with its first q derivatives
at both endpoints, and reproduces polynomial moments up to degree p:

    integral_0^1 k(1-s) s^j ds = 1/(j+1),   j = 0..p.

The family used here is k(x) = x^(q+1) (1-x)^(q+1) Q(x) with Q a degree-p
polynomial. The moment conditions become a small linear system with
rational entries, which is solved exactly.
"""

from dataclasses import dataclass, field
from fractions import Fraction
from math import factorial

import numpy as np

from .errors import ConfigurationError


def _beta_int(a, b):
    """Exact Beta(a, b) for positive integers a, b."""
    return Fraction(factorial(a - 1) * factorial(b - 1), factorial(a + b - 1))


def _solve_fraction_system(mat, rhs):
    """Gaussian elimination over Fractions. mat is a list of rows."""
    n = len(rhs)
    a = [row[:] + [rhs[i]] for i, row in enumerate(mat)]
    for col in range(n):
        piv = None
        for r in range(col, n):
            if a[r][col] != 0:
                piv = r
                break
        if piv is None:
            raise ConfigurationError("singular moment system")
        a[col], a[piv] = a[piv], a[col]
        inv = Fraction(1, 1) / a[col][col]
        a[col] = [x * inv for x in a[col]]
        for r in range(n):
            if r != col and a[r][col] != 0:
                f = a[r][col]
                a[r] = [x - f * y for x, y in zip(a[r], a[col])]
    return [a[r][n] for r in range(n)]


@dataclass(frozen=True)
class FilterKernel:
    """Polynomial kernel on [0,1].

    q: smoothness order at the support boundary (q = -1 marks the constant
       kernel, which has no boundary vanishing).
    p: moment order.
    coeffs: ascending polynomial coefficients of k on [0,1], float64.
    """

    q: int
    p: int
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        arr = np.asarray(self.coeffs, dtype=np.float64)
        arr.setflags(write=False)
        object.__setattr__(self, "coeffs", arr)

    def __call__(self, s):
        return eval_kernel(self, s)


def make_kernel(q, p):
    """Build the C^q kernel with moment order p.

    Solves sum_m a_m * B(q+m+2, q+j+2) = 1/(j+1) for j = 0..p exactly in
    rational arithmetic, then expands x^(q+1)(1-x)^(q+1)(sum a_m x^m) to
    monomial coefficients.
    """
    if q < 0 or p < 0:
        raise ConfigurationError("kernel orders must satisfy q >= 0, p >= 0")
    mat = [[_beta_int(q + m + 2, q + j + 2) for m in range(p + 1)]
           for j in range(p + 1)]
    rhs = [Fraction(1, j + 1) for j in range(p + 1)]
    a = _solve_fraction_system(mat, rhs)

    # (1-x)^(q+1) expanded, ascending
    binom = [Fraction((-1) ** i * factorial(q + 1),
                      factorial(i) * factorial(q + 1 - i))
             for i in range(q + 2)]
    # multiply by Q(x)
    prod = [Fraction(0)] * (q + 1 + p + 1)
    for i, bi in enumerate(binom):
        for m, am in enumerate(a):
            prod[i + m] += bi * am
    # shift by x^(q+1)
    coeffs = [Fraction(0)] * (q + 1) + prod
    return FilterKernel(q=q, p=p,
                        coeffs=np.array([float(c) for c in coeffs]))


def make_constant_kernel():
    """The identity filter k = 1 on [0,1]; satisfies every moment order."""
    return FilterKernel(q=-1, p=0, coeffs=np.array([1.0]))


def eval_kernel(kernel, s):
    """Evaluate k(s); zero outside [0,1]. Accepts scalars or arrays."""
    c = kernel.coeffs
    if np.isscalar(s) or np.ndim(s) == 0:
        s = float(s)
        if s < 0.0 or s > 1.0:
            return 0.0
        acc = 0.0
        for ck in c[::-1]:
            acc = acc * s + ck
        return acc
    s = np.asarray(s, dtype=np.float64)
    vals = np.polynomial.polynomial.polyval(s, c)
    return np.where((s >= 0.0) & (s <= 1.0), vals, 0.0)


def moment_integral(kernel, j):
    """Exact integral_0^1 k(1-s) s^j ds for the stored float coefficients.

    Rational arithmetic over the (exactly represented) float64 coefficients,
    so the only deviation from the ideal value 1/(j+1) is coefficient
    rounding.
    """
    # integral_0^1 k(x) (1-x)^j dx, expand (1-x)^j
    total = Fraction(0)
    for i in range(j + 1):
        w = Fraction((-1) ** i * factorial(j),
                     factorial(i) * factorial(j - i))
        for m, cm in enumerate(kernel.coeffs):
            total += w * Fraction(float(cm)) * Fraction(1, m + i + 1)
    return float(total)
