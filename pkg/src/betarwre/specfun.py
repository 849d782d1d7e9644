"""Scalar special functions used by the analytic formulas.

Thin, validated wrappers around :mod:`scipy.special` plus an exact-capable
Pochhammer symbol. Everything here is pure and thread-safe.
"""

from __future__ import annotations

import math
from fractions import Fraction
from numbers import Integral, Rational

import numpy as np
from scipy import special

__all__ = [
    "log_gamma",
    "polygamma",
    "bessel_j",
    "regularized_gamma_p",
    "pochhammer",
    "log_pochhammer",
]

# Past this length the rising product is evaluated through log-gamma.
_POCH_DIRECT_MAX = 20


def _is_nonpositive_integer(z) -> np.ndarray:
    z = np.asarray(z, dtype=complex)
    return (z.imag == 0) & (z.real <= 0) & (z.real == np.round(z.real))


def log_gamma(z):
    """Principal branch of log Gamma(z) for complex z (scalar or array)."""
    if np.any(_is_nonpositive_integer(z)):
        raise ValueError("log_gamma has poles at the nonpositive integers")
    out = special.loggamma(np.asarray(z, dtype=complex))
    return out[()] if out.ndim == 0 else out


def polygamma(n: int, x):
    """psi_n(x) = d^{n+1}/dx^{n+1} log Gamma(x) for n in 0..3 and x > 0."""
    if n not in (0, 1, 2, 3):
        raise ValueError("polygamma order must be in 0..3")
    xa = np.asarray(x, dtype=float)
    if np.any(xa <= 0):
        raise ValueError("polygamma requires x > 0")
    out = special.polygamma(n, xa)
    return float(out) if out.ndim == 0 else out


def bessel_j(order: float, x):
    """Bessel function of the first kind J_order(x) for x >= 0."""
    xa = np.asarray(x, dtype=float)
    if np.any(xa < 0):
        raise ValueError("bessel_j is only exposed for x >= 0")
    if order < -0.5:
        raise ValueError("order must be >= -1/2")
    out = special.jv(order, xa)
    return float(out) if out.ndim == 0 else out


def regularized_gamma_p(shape: float, x):
    """Lower regularized incomplete gamma P(shape, x), the Gamma(shape) CDF."""
    if shape <= 0:
        raise ValueError("shape must be positive")
    xa = np.asarray(x, dtype=float)
    out = special.gammainc(shape, np.clip(xa, 0.0, None))
    return float(out) if out.ndim == 0 else out


def pochhammer(a, k: int):
    """Rising factorial (a)_k = a (a+1) ... (a+k-1).

    Exact for int and Fraction arguments. Floats and complex numbers use a
    direct product for short lengths and log-gamma beyond that.
    """
    if k < 0:
        raise ValueError("k must be nonnegative")
    if isinstance(a, (Integral, Rational)) and not isinstance(a, bool):
        out = Fraction(1) if isinstance(a, Fraction) else 1
        for j in range(k):
            out *= a + j
        return out
    if k <= _POCH_DIRECT_MAX:
        out = 1.0
        for j in range(k):
            out = out * (a + j)
        return out
    if isinstance(a, complex) or np.iscomplexobj(a):
        return np.exp(log_gamma(a + k) - log_gamma(a))
    if a > 0:
        return math.exp(math.lgamma(a + k) - math.lgamma(a))
    out = 1.0
    for j in range(k):
        out *= a + j
    return out


def log_pochhammer(a, k: int):
    """log (a)_k, complex principal value."""
    return log_gamma(a + k) - log_gamma(a)
