"""High-SNR asymptotes of the capacity bounds.

The asymptotic upper bound is affine in ``log rho`` with pre-log ``M - 1``.
The asymptotic lower bound subtracts one nonnegative gap term per
subchannel beyond the first two; the gap terms are expectations over
independent gamma-distributed energies and are estimated by Monte Carlo.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .rngdist import RngStream, j_factor, wrapped_normal_entropy
from .specfun import lambert_w0


def _bisect(f, lo: float, hi: float, tol: float = 1e-12) -> float:
    flo = f(lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
        if hi - lo < tol:
            break
    return 0.5 * (lo + hi)


def _solve_x_max() -> float:
    # small root of sqrt(x) ln x = -1/e; the minimum of the left side sits at e^-2
    return _bisect(lambda x: math.sqrt(x) * math.log(x) + 1.0 / math.e, 1e-12, math.exp(-2.0))


def _solve_x0() -> float:
    return _bisect(lambda x: (2 + x) * math.log(2 + x) - x * math.log(x) - 2.0, 1e-6, 1.0)


# largest truncation level for which the shape correction exists at shape 1/2
X_MAX = 0.00471
# root of (2 + x) ln(2 + x) - x ln x = 2
X0 = 0.1770

if abs(_solve_x_max() - X_MAX) > 1e-5 or abs(_solve_x0() - X0) > 1e-4:
    raise RuntimeError("hard-coded high-SNR constants disagree with their defining equations")


def alpha_star(m: int, M: int) -> float:
    """Asymptotically optimal gamma shape of subchannel ``m``."""
    if not 0 <= m < M:
        raise IndexError("subchannel index out of range")
    return 0.5 if m < 2 else 1.0


def c_factor(m: int, gamma: float, M: int | None = None) -> float:
    """Shape reduction that keeps the truncated-gamma power within budget.

    Solves ``gamma**c = gamma**a / c`` for ``a = alpha_star(m)``.
    """
    if not 0.0 < gamma <= X_MAX:
        raise ValueError("gamma must lie in (0, X_MAX]")
    a = alpha_star(m, M if M is not None else max(m + 1, 3))
    lg = math.log(gamma)
    return float(lambert_w0(gamma ** a * lg)) / lg


def alpha_prime(m: int, gamma: float, M: int | None = None) -> float:
    a = alpha_star(m, M if M is not None else max(m + 1, 3))
    return a - c_factor(m, gamma, M)


def gamma_schedule(rho: float) -> float:
    """Truncation level shrinking like ``1/sqrt(rho)`` at high SNR."""
    if rho <= 0:
        raise ValueError("rho must be positive")
    return X_MAX / math.sqrt(rho) if rho >= 1.0 else X_MAX * rho


def power_feasible(rho: float, M: int) -> tuple[float, float]:
    """Return ``(energy, rho)`` for the scheduled input; energy never exceeds rho."""
    gamma = gamma_schedule(rho)
    mu = rho / (M - 1)
    shapes = np.array([alpha_prime(m, gamma, M) for m in range(M)])
    return float(mu * np.sum(j_factor(shapes, gamma))), rho


@dataclass(frozen=True)
class HsnrConfig:
    M: int
    sigma2_c: float
    sigma2_r: float
    mc_samples: int = 1_000_000
    seed: int = 0

    def __post_init__(self):
        if self.M < 2:
            raise ValueError("M must be at least 2")
        if not (self.sigma2_c > 0 and self.sigma2_r > 0):
            raise ValueError("phase-noise variances must be positive")
        if self.mc_samples < 1:
            raise ValueError("mc_samples must be positive")


@dataclass
class GapTerm:
    m: int
    bits: float
    stderr: float


@dataclass
class AsymptoteResult:
    M: int
    rho: float
    u_hsnr: float
    l_hsnr: float
    gap: float
    gap_stderr: float
    terms: list = field(default_factory=list)

    @property
    def u_per_sub(self) -> float:
        return self.u_hsnr / self.M

    @property
    def l_per_sub(self) -> float:
        return self.l_hsnr / self.M

    @property
    def gap_per_sub(self) -> float:
        return self.gap / self.M


def u_hsnr(rho: float, cfg: HsnrConfig) -> float:
    """Asymptotic upper bound in total bits per channel use."""
    if rho <= 0:
        raise ValueError("rho must be positive")
    h_pair = wrapped_normal_entropy(cfg.sigma2_c) + wrapped_normal_entropy(cfg.sigma2_r)
    return (cfg.M - 1) * math.log2(rho / (cfg.M - 1)) + 2.0 * math.log2(math.pi) - h_pair


def _energy_draws(M: int, rng: RngStream, n: int) -> np.ndarray:
    shapes = np.array([alpha_star(m, M) for m in range(M)])
    return rng.gen.standard_gamma(shapes, size=(n, M))


def _gap_samples(m: int, e: np.ndarray) -> np.ndarray:
    """Per-draw ``0.5 * log2(1 + ...)`` for gap term ``m`` given energies ``e``.

    The factor one half matches the deterministic high-SNR limit of the
    finite-SNR penalty term.
    """
    if m == 2:
        ratio = 4.0 * e[:, 2] / e[:, 1] + e[:, 2] / e[:, 0]
    else:
        ratio = e[:, m] * (1.0 / e[:, m - 1] + 1.0 / e[:, m - 2] + 1.0 / e[:, m - 3])
    return 0.5 * np.log1p(ratio) / math.log(2.0)


def g_hsnr_term(m: int, M: int, n: int = 1_000_000, rng: RngStream | None = None,
                chunk: int = 250_000) -> GapTerm:
    """Monte Carlo estimate of one gap term with its standard error."""
    if not 2 <= m < M:
        raise IndexError("gap terms exist for 2 <= m < M")
    rng = rng or RngStream(0, 7)
    s1 = s2 = 0.0
    done = 0
    while done < n:
        k = min(chunk, n - done)
        v = _gap_samples(m, _energy_draws(m + 1, rng, k))
        s1 += float(v.sum())
        s2 += float(np.dot(v, v))
        done += k
    mean = s1 / n
    var = max(s2 / n - mean * mean, 0.0)
    return GapTerm(m, mean, math.sqrt(var / n))


def gap_terms(cfg: HsnrConfig) -> list[GapTerm]:
    """All gap terms sharing common random numbers per chunk."""
    M, n = cfg.M, cfg.mc_samples
    if M < 3:
        return []
    rng = RngStream(cfg.seed, 7)
    acc = np.zeros((M, 2))
    done = 0
    chunk = 200_000
    while done < n:
        k = min(chunk, n - done)
        e = _energy_draws(M, rng, k)
        for m in range(2, M):
            v = _gap_samples(m, e)
            acc[m, 0] += v.sum()
            acc[m, 1] += np.dot(v, v)
        done += k
    out = []
    for m in range(2, M):
        mean = acc[m, 0] / n
        var = max(acc[m, 1] / n - mean * mean, 0.0)
        out.append(GapTerm(m, float(mean), math.sqrt(var / n)))
    return out


def l_hsnr(rho: float, cfg: HsnrConfig, terms: list[GapTerm] | None = None) -> float:
    """Asymptotic lower bound: the upper asymptote minus the summed gap terms."""
    terms = gap_terms(cfg) if terms is None else terms
    return u_hsnr(rho, cfg) - sum(t.bits for t in terms)


def asymptotes(rho: float, cfg: HsnrConfig, terms: list[GapTerm] | None = None) -> AsymptoteResult:
    terms = gap_terms(cfg) if terms is None else terms
    gap = sum(t.bits for t in terms)
    # terms share draws, so the sum's error is bounded by the summed errors
    err = sum(t.stderr for t in terms)
    u = u_hsnr(rho, cfg)
    return AsymptoteResult(cfg.M, rho, u, u - gap, gap, err, terms)
