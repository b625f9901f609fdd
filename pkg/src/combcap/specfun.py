"""Special functions used by the bound and entropy computations.

Thin, domain-checked wrappers over :mod:`scipy.special`. Every function
accepts scalars or arrays and raises ``ValueError`` outside its domain
instead of silently returning ``nan``.
"""

from __future__ import annotations

import numpy as np
from numpy.typing import ArrayLike
from scipy import special as sp

EULER_GAMMA = float(np.euler_gamma)


def _as_array(x: ArrayLike) -> np.ndarray:
    return np.asarray(x, dtype=float)


def _out(x: np.ndarray):
    return float(x) if x.ndim == 0 else x


def log_gamma(a: ArrayLike):
    """Natural log of the gamma function for positive arguments."""
    a = _as_array(a)
    if np.any(a <= 0):
        raise ValueError("log_gamma requires a > 0")
    return _out(sp.gammaln(a))


def upper_incomplete_gamma(a: ArrayLike, d: ArrayLike):
    """Non-regularized upper incomplete gamma ``Gamma(a, d)``.

    ``a = 0`` is allowed when ``d > 0`` (it reduces to ``E1(d)``).
    """
    a, d = np.broadcast_arrays(_as_array(a), _as_array(d))
    if np.any(a < 0) or np.any(d < 0) or np.any((a == 0) & (d == 0)):
        raise ValueError("upper_incomplete_gamma requires a >= 0, d >= 0, not both zero")
    out = np.empty(a.shape)
    pos = a > 0
    out[pos] = sp.gammaincc(a[pos], d[pos]) * sp.gamma(a[pos])
    out[~pos] = sp.exp1(d[~pos])
    return _out(out)


def log_upper_incomplete_gamma(a: ArrayLike, d: ArrayLike):
    """``ln Gamma(a, d)`` without overflow for large ``a``."""
    a, d = np.broadcast_arrays(_as_array(a), _as_array(d))
    if np.any(a <= 0) or np.any(d < 0):
        raise ValueError("log_upper_incomplete_gamma requires a > 0, d >= 0")
    return _out(np.log(sp.gammaincc(a, d)) + sp.gammaln(a))


def exp_integral_e1(x: ArrayLike):
    """Exponential integral ``E1(x) = int_x^inf e^-t / t dt`` for ``x > 0``."""
    x = _as_array(x)
    if np.any(x <= 0):
        raise ValueError("exp_integral_e1 requires x > 0")
    return _out(sp.exp1(x))


def lambert_w0(x: ArrayLike):
    """Principal branch of the Lambert W function on ``[-1/e, inf)``."""
    x = _as_array(x)
    # tolerate rounding right at the branch point
    if np.any(x < -np.exp(-1.0) - 1e-15):
        raise ValueError("lambert_w0 requires x >= -1/e")
    x = np.maximum(x, -np.exp(-1.0))
    out = np.array(np.real(sp.lambertw(x, 0)), dtype=float)
    # branch-point series; the library returns nan within rounding of -1/e
    q = np.maximum(2.0 * (np.e * x + 1.0), 0.0)
    near = q < 2e-6
    if np.any(near):
        pp = np.sqrt(q[near])
        out[near] = -1.0 + pp - pp ** 2 / 3.0 + 11.0 / 72.0 * pp ** 3
    return _out(out)


def digamma(a: ArrayLike):
    a = _as_array(a)
    if np.any(a <= 0):
        raise ValueError("digamma requires a > 0")
    return _out(sp.digamma(a))


def bessel_i0(x: ArrayLike):
    x = _as_array(x)
    if np.any(x < 0):
        raise ValueError("bessel_i0 requires x >= 0")
    return _out(sp.i0(x))


def bessel_i1(x: ArrayLike):
    x = _as_array(x)
    if np.any(x < 0):
        raise ValueError("bessel_i1 requires x >= 0")
    return _out(sp.i1(x))


def log_bessel_i0(x: ArrayLike):
    """``ln I0(x)`` computed from the exponentially scaled form (no overflow)."""
    x = _as_array(x)
    if np.any(x < 0):
        raise ValueError("log_bessel_i0 requires x >= 0")
    return _out(np.log(sp.i0e(x)) + x)


def bessel_ratio(order: ArrayLike, x: ArrayLike):
    """``I_order(x) / I_0(x)`` for real ``order >= 0`` and ``x >= 0``.

    At integer orders this is the circular moment of a von Mises law with
    concentration ``x``.
    """
    order, x = np.broadcast_arrays(np.abs(_as_array(order)), _as_array(x))
    if np.any(x < 0):
        raise ValueError("bessel_ratio requires x >= 0")
    out = np.where(order == 0, 1.0, 0.0)
    live = x > 0
    if np.any(live):
        with np.errstate(under="ignore"):
            out = out.astype(float)
            out[live] = sp.ive(order[live], x[live]) / sp.i0e(x[live])
    return _out(out)
