"""Distributions: truncated gamma family, wrapped normal, von Mises.

Samplers draw from an explicit :class:`RngStream` so Monte Carlo runs are
reproducible and parallel streams never share state. Entropies are in bits.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.typing import ArrayLike
from scipy import integrate
from scipy import special as sp

from . import specfun

LOG2E = 1.0 / np.log(2.0)
TWO_PI = 2.0 * np.pi


# ---------------------------------------------------------------------------
# random streams
# ---------------------------------------------------------------------------

@dataclass
class RngStream:
    """Seeded random stream; ``(seed, stream_id)`` fully determines its draws."""

    seed: int
    stream_id: int = 0
    gen: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        ss = np.random.SeedSequence(int(self.seed), spawn_key=(int(self.stream_id),))
        self.gen = np.random.Generator(np.random.PCG64(ss))

    def child(self, stream_id: int) -> "RngStream":
        """Independent stream derived from the same seed."""
        return RngStream(self.seed, self.stream_id * 1_000_003 + 1 + int(stream_id))


def as_stream(rng: RngStream | int | None) -> RngStream:
    if isinstance(rng, RngStream):
        return rng
    return RngStream(0 if rng is None else int(rng))


# ---------------------------------------------------------------------------
# circular helpers
# ---------------------------------------------------------------------------

def wrap(theta: ArrayLike):
    """Reduce angles to ``[-pi, pi)``."""
    t = np.asarray(theta, dtype=float)
    out = np.mod(t + np.pi, TWO_PI) - np.pi
    out = np.where(out >= np.pi, -np.pi, out)
    # leave in-range values untouched rather than round-tripping them
    out = np.where((t >= -np.pi) & (t < np.pi), t, out)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# truncated gamma family
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TruncatedGammaParams:
    """Product of gamma laws with scale ``mu`` and shapes ``alpha``,
    each restricted to values above ``mu * gamma``."""

    mu: float
    alpha: tuple[float, ...]
    gamma: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "alpha", tuple(float(a) for a in np.atleast_1d(self.alpha)))
        if not self.mu > 0:
            raise ValueError("mu must be positive")
        if self.gamma < 0:
            raise ValueError("gamma must be nonnegative")
        if any(a < 0 for a in self.alpha):
            raise ValueError("alpha must be nonnegative")
        if self.gamma == 0 and any(a == 0 for a in self.alpha):
            raise ValueError("alpha must be positive when gamma = 0")

    @property
    def M(self) -> int:
        return len(self.alpha)


def j_factor(alpha: ArrayLike, gamma: float):
    """Mean of a unit-scale gamma(alpha) law truncated to values above ``gamma``.

    Equals ``Gamma(alpha+1, gamma) / Gamma(alpha, gamma)``.
    """
    a = np.asarray(alpha, dtype=float)
    if gamma < 0 or np.any(a < 0):
        raise ValueError("j_factor requires alpha >= 0, gamma >= 0")
    out = np.empty(a.shape)
    pos = a > 0
    # Gamma(a+1,g)/Gamma(a,g) = a * Q(a+1,g) / Q(a,g) with regularized Q
    out[pos] = a[pos] * sp.gammaincc(a[pos] + 1.0, gamma) / sp.gammaincc(a[pos], gamma)
    if np.any(~pos):
        if gamma == 0:
            raise ValueError("alpha = 0 needs gamma > 0")
        out[~pos] = np.exp(-gamma) / sp.exp1(gamma)
    return float(out) if out.ndim == 0 else out


def _log_gtr_element(t: np.ndarray, a: float, gamma: float) -> np.ndarray:
    """Log density of one unit-scale truncated gamma element."""
    with np.errstate(divide="ignore", invalid="ignore"):
        lg = np.log(specfun.upper_incomplete_gamma(a, gamma))
        val = -t + (a - 1.0) * np.log(t) - lg
    return np.where(t > gamma, val, -np.inf)


def gtr_logpdf(p: TruncatedGammaParams, r: ArrayLike):
    r = np.atleast_2d(np.asarray(r, dtype=float))
    if r.shape[-1] != p.M:
        raise ValueError("last axis must have length M")
    out = np.zeros(r.shape[:-1])
    for m, a in enumerate(p.alpha):
        out = out + _log_gtr_element(r[..., m] / p.mu, a, p.gamma) - np.log(p.mu)
    return out


def gtr_pdf(p: TruncatedGammaParams, r: ArrayLike):
    """Joint density at ``r`` (shape ``(M,)`` or ``(n, M)``)."""
    out = np.exp(gtr_logpdf(p, r))
    return float(out[0]) if np.ndim(r) == 1 else out


def _inv_e1(q: np.ndarray) -> np.ndarray:
    """Solve ``E1(t) = q`` by bisection in log t."""
    lo = np.full(q.shape, -40.0)
    hi = np.full(q.shape, 6.0)
    for _ in range(120):
        mid = 0.5 * (lo + hi)
        big = sp.exp1(np.exp(mid)) > q
        lo = np.where(big, mid, lo)
        hi = np.where(big, hi, mid)
    return np.exp(0.5 * (lo + hi))


def gtr_quantile(p: TruncatedGammaParams, v: ArrayLike) -> np.ndarray:
    """Map uniforms ``v`` of shape ``(n, M)`` to truncated-gamma draws.

    Inverse-CDF sampling keeps draws smooth in the parameters, which the
    optimizers rely on when they reuse the same uniforms.
    """
    v = np.atleast_2d(np.asarray(v, dtype=float))
    out = np.empty(v.shape)
    for m, a in enumerate(p.alpha):
        if a > 0:
            tail = sp.gammaincc(a, p.gamma) * (1.0 - v[:, m])
            t = sp.gammainccinv(a, tail)
        else:
            t = _inv_e1(sp.exp1(p.gamma) * (1.0 - v[:, m]))
        out[:, m] = p.mu * np.maximum(t, p.gamma)
    return out


def gtr_sample(p: TruncatedGammaParams, rng: RngStream, n: int) -> np.ndarray:
    """``n`` i.i.d. draws, shape ``(n, M)``."""
    return gtr_quantile(p, rng.gen.random((n, p.M)))


def sgtr_sample(p: TruncatedGammaParams, rng: RngStream, n: int) -> np.ndarray:
    """Magnitudes whose squares follow the truncated gamma law."""
    return np.sqrt(gtr_sample(p, rng, n))


def csgtr_sample(p: TruncatedGammaParams, rng: RngStream, n: int) -> np.ndarray:
    """Circularly symmetric complex vectors with truncated-gamma squared magnitudes."""
    mag = sgtr_sample(p, rng, n)
    return mag * np.exp(1j * rng.gen.uniform(-np.pi, np.pi, mag.shape))


def gtr_expect(func: Callable[[np.ndarray], np.ndarray], mu: float, alpha: float,
               gamma: float) -> float:
    """``E[func(X)]`` for one truncated gamma element, by quadrature.

    Substituting ``w = t**alpha`` removes the integrable singularity of
    the density at the origin when ``alpha < 1``.
    """
    if alpha <= 0:
        norm = sp.exp1(gamma)
        val, _ = integrate.quad(lambda t: func(mu * t) * np.exp(-t) / t, gamma, np.inf,
                                limit=200, epsabs=1e-13, epsrel=1e-11)
        return val / norm
    lnorm = np.log(sp.gammaincc(alpha, gamma)) + sp.gammaln(alpha + 1.0)

    def integrand(w):
        with np.errstate(over="ignore"):
            t = np.exp(np.log(w) / alpha) if w > 0 else 0.0
        if not np.isfinite(t):
            return 0.0
        return func(mu * t) * np.exp(-t - lnorm)

    lo = gamma ** alpha
    # split at the bulk so quad does not miss it for small alpha
    mid = max(lo, (alpha + 5.0) ** alpha)
    v1, _ = integrate.quad(integrand, lo, mid, limit=200, epsabs=1e-13, epsrel=1e-11)
    v2, _ = integrate.quad(integrand, mid, np.inf, limit=200, epsabs=1e-13, epsrel=1e-11)
    return v1 + v2


def gtr_element_entropy(mu: float, alpha: float, gamma: float) -> float:
    """Differential entropy (bits) of one truncated gamma element.

    Uses ``h = ln(mu Gamma(a, g)) + J - (a - 1) E[ln(X/mu)]`` in nats;
    the log-moment comes from quadrature when ``gamma > 0``.
    """
    if gamma == 0:
        elog = sp.digamma(alpha)
        lg = sp.gammaln(alpha)
    else:
        elog = gtr_expect(np.log, 1.0, alpha, gamma)
        lg = (np.log(sp.gammaincc(alpha, gamma)) + sp.gammaln(alpha)) if alpha > 0 \
            else np.log(sp.exp1(gamma))
    h_nats = np.log(mu) + lg + j_factor(alpha, gamma) - (alpha - 1.0) * elog
    return float(h_nats * LOG2E)


# ---------------------------------------------------------------------------
# wrapped normal
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WrappedNormalParams:
    sigma2: float

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise ValueError("sigma2 must be positive")


def _sigma2(p) -> float:
    return p.sigma2 if isinstance(p, WrappedNormalParams) else float(p)


def wrapped_normal_sample(p: WrappedNormalParams | float, rng: RngStream, n) -> np.ndarray:
    s2 = _sigma2(p)
    return wrap(rng.gen.normal(0.0, np.sqrt(s2), n))


def wrapped_normal_pdf(theta: ArrayLike, p: WrappedNormalParams | float):
    """Density on ``[-pi, pi)``; image sum when narrow, Fourier series when wide."""
    s2 = _sigma2(p)
    t = wrap(np.asarray(theta, dtype=float))
    if s2 < 4.0:
        k = np.arange(-4, 5)[:, None] if np.ndim(t) else np.arange(-4, 5)
        arg = (np.asarray(t) + TWO_PI * k)
        out = np.sum(np.exp(-arg ** 2 / (2 * s2)), axis=0) / np.sqrt(TWO_PI * s2)
    else:
        n = np.arange(1, 60)[:, None] if np.ndim(t) else np.arange(1, 60)
        out = (1.0 + 2.0 * np.sum(np.exp(-n ** 2 * s2 / 2) * np.cos(n * np.asarray(t)), axis=0)) / TWO_PI
    return float(out) if np.ndim(out) == 0 else out


def wrapped_normal_entropy(p: WrappedNormalParams | float) -> float:
    """Differential entropy in bits, by quadrature of ``-f log f``."""
    s2 = _sigma2(p)
    half = min(np.pi, 14.0 * np.sqrt(s2))

    def integrand(t):
        f = wrapped_normal_pdf(t, s2)
        return -f * np.log(f) if f > 0 else 0.0

    val, _ = integrate.quad(integrand, -half, half, limit=400, epsabs=1e-12, epsrel=1e-12,
                            points=[0.0])
    return float(val * LOG2E)


# ---------------------------------------------------------------------------
# von Mises
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VonMisesParams:
    mu: float = 0.0
    kappa: float = 0.0

    def __post_init__(self):
        if self.kappa < 0:
            raise ValueError("kappa must be nonnegative")


def von_mises_pdf(p: VonMisesParams, phi: ArrayLike):
    phi = np.asarray(phi, dtype=float)
    # e^{k cos} / (2 pi I0(k)) written with the scaled Bessel to avoid overflow
    out = np.exp(p.kappa * (np.cos(phi - p.mu) - 1.0)) / (TWO_PI * sp.i0e(p.kappa))
    return float(out) if out.ndim == 0 else out


def von_mises_entropy(kappa: ArrayLike):
    """Entropy in bits of a von Mises law with concentration ``kappa``."""
    k = np.asarray(kappa, dtype=float)
    if np.any(k < 0):
        raise ValueError("kappa must be nonnegative")
    i0e = sp.i0e(k)
    h = np.log(TWO_PI * i0e) + k * (1.0 - sp.i1e(k) / i0e)
    out = h * LOG2E
    return float(out) if out.ndim == 0 else out


def von_mises_sample(p: VonMisesParams, rng: RngStream, n) -> np.ndarray:
    return wrap(rng.gen.vonmises(p.mu, p.kappa, n))

