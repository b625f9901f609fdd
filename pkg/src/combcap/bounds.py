"""Finite-SNR capacity bounds for the comb phase-noise channel.

The upper bound is a duality bound: a min over ``(lam, alpha)`` of a
closed-form part plus a max over a deterministic amplitude vector ``s``
of two functionals (``r_functional``, ``f_functional``). The lower bound
evaluates the mutual information of a truncated-gamma amplitude input
and is maximized over its shapes and truncation point.

All values are in bits per channel use (total over the ``M`` subchannels)
unless a name says ``per_sub``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from numpy.polynomial.legendre import leggauss
from scipy import special as sp

from . import entropy as ent
from .channel import ChannelParams
from .optim import OptimSpec, constrained_maximize, multistart, nelder_mead
from .rngdist import (LOG2E, TWO_PI, RngStream, TruncatedGammaParams, gtr_element_entropy,
                      gtr_expect, gtr_quantile, j_factor, von_mises_entropy,
                      wrapped_normal_entropy, wrap)

LOG2_2PI = math.log2(TWO_PI)


@dataclass(frozen=True)
class McConfig:
    """Sample sizes and quadrature orders for the bound evaluations."""

    n_samples: int = 200_000     # sample-based estimates (kNN route, penalty terms)
    seed: int = 0
    k_nn: int = 4
    n_penalty: int = 20_000      # draws for the M > 2 lower-bound penalty terms
    noise_nodes: int = 12        # Gauss-Hermite order per real noise dimension
    amp_nodes: int = 64          # Gauss-Legendre order over amplitude quantiles


@dataclass(frozen=True)
class UpperBoundParams:
    lam: float
    alpha: tuple[float, ...]
    s: tuple[float, ...] = ()

    def __post_init__(self):
        if self.lam < 0 or any(a <= 0 for a in self.alpha) or any(v < 0 for v in self.s):
            raise ValueError("invalid upper-bound parameters")


@dataclass(frozen=True)
class LowerBoundParams:
    mu: float
    alpha: tuple[float, ...]
    gamma: float

    def __post_init__(self):
        if self.mu <= 0 or self.gamma < 0 or any(a <= 0 for a in self.alpha):
            raise ValueError("invalid lower-bound parameters")


@dataclass
class BoundResult:
    bits_total: float
    M: int
    params: dict
    converged: bool
    evals: int
    stderr: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def bits_per_sub(self) -> float:
        return self.bits_total / self.M


# ---------------------------------------------------------------------------
# shared pieces
# ---------------------------------------------------------------------------


def awgn_capacity(rho: float, M: int) -> float:
    """Capacity of ``M`` parallel AWGN subchannels sharing total power ``rho``."""
    if rho < 0:
        raise ValueError("rho must be nonnegative")
    return float(M * math.log2(1.0 + rho / M))


def phase_entropy_pair(params: ChannelParams) -> float:
    """Joint entropy of the two phase increments (independent, so a sum)."""
    return _increment_entropy(params.sigma2_c) + _increment_entropy(params.sigma2_r)


@lru_cache(maxsize=64)
def _increment_entropy(sigma2: float) -> float:
    return wrapped_normal_entropy(sigma2)


@lru_cache(maxsize=1)
def _ncx2_table() -> ent.Ncx2EntropyTable:
    return ent.Ncx2EntropyTable()


def _ncx2_h(beta):
    return _ncx2_table()(beta)


@lru_cache(maxsize=8)
def _noise_nodes(n: int):
    """Radial offsets of ``z ~ CN(0,1)``: nodes ``(a, b)`` and weights."""
    x, w = hermegauss(n)
    w = w / w.sum()
    a, b = np.meshgrid(x / math.sqrt(2.0), x / math.sqrt(2.0), indexing="ij")
    ww = np.outer(w, w)
    keep = ww.ravel() > 1e-14
    return a.ravel()[keep], b.ravel()[keep], ww.ravel()[keep] / ww.ravel()[keep].sum()


def _magnitudes(s: np.ndarray, nq: int):
    """``|s + z|`` at quadrature nodes; returns shape ``s.shape + (n_nodes,)``."""
    a, b, w = _noise_nodes(nq)
    s = np.asarray(s, float)[..., None]
    return np.sqrt((s + a) ** 2 + b ** 2), w


# ---------------------------------------------------------------------------
# upper bound
# ---------------------------------------------------------------------------


def r_functional(rho: float, lam: float, alpha: Sequence[float], s: Sequence[float],
                 mc: Optional[McConfig] = None) -> float:
    """Amplitude part of the upper-bound objective at a fixed amplitude vector."""
    alpha = np.asarray(alpha, float)
    s = np.asarray(s, float)
    M = alpha.size
    if s.shape[-1] != M:
        raise ValueError("s and alpha must have the same length")
    return _r_batch(rho, lam, alpha, s[None, :])[0]


def _r_batch(rho, lam, alpha, s):
    """Vectorized ``r_functional`` over rows of ``s``."""
    M = alpha.size
    coef = alpha.sum() * LOG2E - lam
    energy = np.sum(s * s, axis=-1)
    first = coef * (energy + M) / (rho + M)
    shape_term = np.sum((1.0 - alpha) * ent.elog_ncx2(s), axis=-1)
    return first + shape_term - _ncx2_h(s[..., 0]) - _ncx2_h(s[..., 1])


def _f_spectral(M: int, s: np.ndarray, params: ChannelParams, nq: int) -> np.ndarray:
    s = np.atleast_2d(np.asarray(s, float))
    if M == 2:
        table = ent.PhasePairTable.get(params.sigma2_c, params.sigma2_r)
        r0, w = _magnitudes(s[:, 0], nq)
        r1, _ = _magnitudes(s[:, 1], nq)
        k0 = 2.0 * s[:, :1] * r0
        k1 = 2.0 * s[:, 1:2] * r1
        return -table.expect_independent(k0, w, k1, w)
    table1 = ent.PhaseSingleTable.get(params.sigma2_c)
    norm = np.sqrt(np.sum(s * s, axis=-1))
    r, w = _magnitudes(norm, nq)
    h = np.sum(table1(2.0 * norm[:, None] * r) * w, axis=-1)
    return -_increment_entropy(params.sigma2_r) - h


def _f_knn(M: int, s: np.ndarray, params: ChannelParams, mc: McConfig) -> float:
    rng = RngStream(mc.seed, 101).gen
    n = mc.n_samples
    dc = rng.normal(0.0, math.sqrt(params.sigma2_c), n)
    z = (rng.normal(size=(n, 2)) + 1j * rng.normal(size=(n, 2))) / math.sqrt(2.0)
    if M == 2:
        dr = rng.normal(0.0, math.sqrt(params.sigma2_r), n)
        y = s[:2] + z
        a0 = wrap(dc + np.angle(y[:, 0]))
        a1 = wrap(dc + dr + np.angle(y[:, 1]))
        joint = np.column_stack([a0, a1, np.abs(y[:, 0]), np.abs(y[:, 1])])
        return -ent.conditional_entropy_mc(joint, [2, 3], mc.k_nn, circular=[0, 1])
    y = np.linalg.norm(s) + z[:, 0]
    joint = np.column_stack([wrap(dc + np.angle(y)), np.abs(y)])
    h = ent.conditional_entropy_mc(joint, [1], mc.k_nn, circular=[0])
    return -_increment_entropy(params.sigma2_r) - h


def f_functional(M: int, s: Sequence[float], params: ChannelParams,
                 mc: Optional[McConfig] = None, method: str = "spectral") -> float:
    """Phase part of the upper-bound objective at a fixed amplitude vector.

    ``method="spectral"`` integrates the exact conditional phase densities;
    ``method="knn"`` estimates the same conditional entropy from samples.
    """
    mc = mc or McConfig()
    s = np.asarray(s, float)
    if s.size != M:
        raise ValueError("s must have length M")
    if method == "spectral":
        return float(_f_spectral(M, s[None, :], params, mc.noise_nodes)[0])
    if method == "knn":
        return _f_knn(M, s, params, mc)
    raise ValueError(f"unknown method {method!r}")


def _expand_alpha(x: np.ndarray, M: int) -> np.ndarray:
    """Free shapes ``(a0, a1[, a_rest])`` to the full length-``M`` vector."""
    return np.concatenate([x[:2], np.full(M - 2, x[2])]) if M > 2 else np.asarray(x[:2])


def _expand_s(u: np.ndarray, M: int) -> np.ndarray:
    """Log-energies ``(u0, u1[, u_rest])`` to amplitude rows of length ``M``."""
    s = np.sqrt(np.exp(u))
    if M > 2:
        return np.concatenate([s[..., :2], np.repeat(s[..., 2:3], M - 2, axis=-1)], axis=-1)
    return s


def upper_bound_constant(rho: float, lam: float, alpha: np.ndarray) -> float:
    """Part of the upper bound that does not depend on the amplitude vector."""
    M = alpha.size
    a_sum = alpha.sum()
    return float(a_sum * math.log2((rho + M) / a_sum) + 2.0 * LOG2_2PI + lam
                 - (M - 2) * LOG2E + np.sum(sp.gammaln(alpha)) * LOG2E)


U_LOG_ENERGY_MIN = -14.0


def inner_maximum(rho: float, lam: float, alpha: Sequence[float], params: ChannelParams,
                  mc: Optional[McConfig] = None, grid: int = 25):
    """``max_s [R + F]`` over the reduced amplitude vector ``(s0, s1, t, .., t)``.

    Returns ``(value, s_opt)``; ``value`` is ``inf`` when the penalty on
    the amplitude energy does not make the supremum finite.
    """
    mc = mc or McConfig()
    alpha = np.asarray(alpha, float)
    M = alpha.size
    coef = lam - alpha.sum() * LOG2E
    if coef <= 1e-12:
        return math.inf, None
    # beyond this energy the quadratic penalty outweighs every growing term
    span = 200.0 + 2.0 * np.sum(np.abs(1.0 - alpha)) * 40.0
    u_max = math.log((rho + M) * span / coef)
    dim = 2 if M == 2 else 3

    def batch(u):
        s = _expand_s(u, M)
        return _r_batch(rho, lam, alpha, s) + _f_spectral(M, s, params, mc.noise_nodes)

    axes = np.linspace(U_LOG_ENERGY_MIN, u_max, grid)
    mesh = np.stack(np.meshgrid(*([axes] * dim), indexing="ij"), axis=-1).reshape(-1, dim)
    vals = batch(mesh)
    start = mesh[int(np.argmax(vals))]
    spec = OptimSpec(lambda u: -float(batch(u[None, :])[0]),
                     [(U_LOG_ENERGY_MIN, u_max)] * dim, max_evals=600, xtol=1e-7, ftol=1e-11,
                     step=[(u_max - U_LOG_ENERGY_MIN) / (grid - 1)] * dim)
    res = nelder_mead(spec, start)
    best = max(-res.f, float(vals.max()))
    u_best = res.x if -res.f >= vals.max() else start
    return best, _expand_s(u_best, M)


def upper_bound_value(rho: float, lam: float, alpha: Sequence[float], params: ChannelParams,
                      mc: Optional[McConfig] = None) -> tuple[float, Optional[np.ndarray]]:
    """Upper bound (total bits) at fixed ``(lam, alpha)``; valid for any such pair."""
    alpha = np.asarray(alpha, float)
    inner, s_opt = inner_maximum(rho, lam, alpha, params, mc)
    if not math.isfinite(inner):
        return math.inf, None
    return upper_bound_constant(rho, lam, alpha) + inner, s_opt


def upper_bound_at(rho: float, M: int, params: ChannelParams,
                   ub: Optional[UpperBoundParams] = None, mc: Optional[McConfig] = None,
                   starts: int = 5, max_evals: int = 400) -> BoundResult:
    """Upper bound minimized over ``(lam, alpha)`` in the search box."""
    if M != params.M:
        raise ValueError("M disagrees with channel parameters")
    mc = mc or McConfig()
    n_alpha = 2 if M == 2 else 3
    if ub is None:
        a0 = np.array([0.5, 0.5, 1.0][:n_alpha])
        lam0 = _expand_alpha(a0, M).sum() * LOG2E + 0.5
    else:
        a0 = np.array(list(ub.alpha[:2]) + ([ub.alpha[2]] if M > 2 else []))
        lam0 = ub.lam

    def objective(x):
        alpha = _expand_alpha(x[1:], M)
        if x[0] > 2 * M * alpha.sum():
            return math.inf
        return upper_bound_value(rho, x[0], alpha, params, mc)[0]

    box = [(0.0, 2.0 * M * 10.0 * M)] + [(1e-3, 10.0)] * n_alpha
    spec = OptimSpec(objective, box, max_evals=max_evals, xtol=1e-5, ftol=1e-6,
                     step=[0.5] + [0.1] * n_alpha, seed=mc.seed)
    res = multistart(spec, np.concatenate([[lam0], a0]), starts=starts, spread=0.05)
    alpha = _expand_alpha(res.x[1:], M)
    value, s_opt = upper_bound_value(rho, res.x[0], alpha, params, mc)
    if not res.converged:
        warnings.warn("upper-bound optimizer did not converge; reporting best iterate")
    return BoundResult(value, M, {"lam": float(res.x[0]), "alpha": alpha.tolist(),
                                  "s": None if s_opt is None else s_opt.tolist()},
                       res.converged, res.evals)


# ---------------------------------------------------------------------------
# lower bound
# ---------------------------------------------------------------------------


def phi_functional(m: int, s: Sequence[float]) -> np.ndarray:
    """Variance proxy of the phase combination that isolates subchannel ``m``."""
    s = np.asarray(s, float)
    if m < 2 or s.shape[-1] <= m:
        raise ValueError("need 2 <= m < len(s)")
    with np.errstate(divide="ignore"):
        inv = 1.0 / (s * s)
    if m == 2:
        out = inv[..., 2] + 4.0 * inv[..., 1] + inv[..., 0]
    else:
        out = np.sum(inv[..., m - 3:m + 1], axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def _clamped_phase_bound(phi):
    """``min(log2 2pi, 0.5 log2(pi e phi))`` with ``phi = inf`` mapping to the cap."""
    with np.errstate(divide="ignore", over="ignore"):
        return np.minimum(LOG2_2PI, 0.5 * np.log2(np.pi * np.e * phi))


def _vm_conditional(s_m, nq: int):
    """``E_r h_VM(2 s r)`` with ``r = |s + z|``, for an array of amplitudes."""
    r, w = _magnitudes(s_m, nq)
    return np.sum(von_mises_entropy(2.0 * np.asarray(s_m, float)[..., None] * r) * w, axis=-1)


def g_penalty(m: int, s: Sequence[float], mc: Optional[McConfig] = None) -> float:
    """Loss incurred by subchannel ``m >= 2`` in the lower bound at amplitudes ``s``."""
    mc = mc or McConfig()
    s = np.asarray(s, float)
    cap = _clamped_phase_bound(phi_functional(m, s))
    return float(cap - _vm_conditional(s[m], mc.noise_nodes))


def _amp_nodes(n: int):
    x, w = leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def _gtr_nodes(mu: float, alpha: float, gamma: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Amplitude quadrature: energies at Gauss-Legendre quantile nodes."""
    v, w = _amp_nodes(n)
    e = gtr_quantile(TruncatedGammaParams(mu, (alpha,), gamma), v[:, None])[:, 0]
    return np.sqrt(e), w


def lower_bound_gamma_max(M: int) -> float:
    """Upper end of the truncation search interval."""
    if M == 2:
        # the usual expression degenerates to zero at M = 2; use its large-M limit
        return 2.0 / (math.e ** 2 - 1.0)
    return 2.0 / (math.exp(2.0 * M / (M - 2)) - 1.0)


def lower_bound_value(rho: float, M: int, params: ChannelParams, alpha: Sequence[float],
                      gamma: float, mc: Optional[McConfig] = None,
                      detail: bool = False):
    """Lower bound (total bits) for one truncated-gamma input law."""
    mc = mc or McConfig()
    alpha = np.asarray(alpha, float)
    mu = rho / (M - 1)
    nq = mc.noise_nodes

    h_amp = 0.0
    for a in np.unique(alpha):
        h_amp += np.sum(alpha == a) * gtr_element_entropy(mu, float(a), gamma)
    elog = [gtr_expect(lambda x: np.log2(1.0 + 2.0 * x), mu, float(alpha[m]), gamma)
            for m in (0, 1)]

    # joint phase entropy of the first two subchannels, conditioned on amplitudes
    pair = ent.PhasePairTable.get(params.sigma2_c, params.sigma2_r)
    nodes = []
    for m in (0, 1):
        s_m, w_s = _gtr_nodes(mu, float(alpha[m]), gamma, mc.amp_nodes)
        r, w_r = _magnitudes(s_m, nq)
        nodes.append(((2.0 * s_m[:, None] * r).ravel(), np.outer(w_s, w_r).ravel()))
    h_pair = float(pair.expect_independent(nodes[0][0], nodes[0][1], nodes[1][0], nodes[1][1]))

    penalty, pen_err = 0.0, 0.0
    if M > 2:
        penalty, pen_err = _penalty_terms(mu, alpha, gamma, mc)

    value = (LOG2_2PI - (M - 1) * LOG2E + phase_entropy_pair(params) - 2.0 * h_pair
             + h_amp - 0.5 * (elog[0] + elog[1]) - penalty)
    if detail:
        return value, {"h_pair": h_pair, "h_amp": h_amp, "elog": elog, "penalty": penalty,
                       "penalty_stderr": pen_err}
    return value


def _penalty_terms(mu: float, alpha: np.ndarray, gamma: float, mc: McConfig):
    """Sum of expected per-subchannel losses for ``m = 2 .. M-1``."""
    M = alpha.size
    rng = RngStream(mc.seed, 202).gen
    v = rng.random((mc.n_penalty, M))
    energy = gtr_quantile(TruncatedGammaParams(mu, tuple(alpha), gamma), v)
    s = np.sqrt(energy)
    caps = np.stack([_clamped_phase_bound(phi_functional(m, s)) for m in range(2, M)], axis=1)
    per_draw = caps.sum(axis=1)
    total_cap = float(per_draw.mean())
    err = float(per_draw.std(ddof=1) / math.sqrt(per_draw.size))
    vm = 0.0
    for m in range(2, M):
        s_m, w_s = _gtr_nodes(mu, float(alpha[m]), gamma, mc.amp_nodes)
        vm += float(np.sum(w_s * _vm_conditional(s_m, mc.noise_nodes)))
    return total_cap - vm, err


def power_usage(mu: float, alpha: Sequence[float], gamma: float) -> float:
    """Mean input energy ``E||s||^2`` of the truncated-gamma input."""
    return float(mu * np.sum(j_factor(np.asarray(alpha, float), gamma)))


def lower_bound_at(rho: float, M: int, params: ChannelParams,
                   lb: Optional[LowerBoundParams] = None, mc: Optional[McConfig] = None,
                   starts: int = 5, max_evals: int = 400) -> BoundResult:
    """Lower bound maximized over shapes and truncation under the power budget."""
    if M != params.M:
        raise ValueError("M disagrees with channel parameters")
    mc = mc or McConfig()
    mu = rho / (M - 1)
    n_alpha = 2 if M == 2 else 3
    g_hi = lower_bound_gamma_max(M)
    if lb is not None:
        if power_usage(lb.mu, lb.alpha, lb.gamma) > rho * (1 + 1e-9):
            raise ValueError("initial lower-bound parameters violate the power budget")
        x0 = np.array(list(lb.alpha[:2]) + ([lb.alpha[2]] if M > 2 else []) + [lb.gamma])
    else:
        x0 = np.array([0.5, 0.5, 1.0][:n_alpha] + [0.0])
        x0[:n_alpha] = _shrink_to_budget(x0[:n_alpha], 0.0, mu, M, rho)

    def alphas(x):
        return _expand_alpha(x[:n_alpha], M)

    def objective(x):
        return lower_bound_value(rho, M, params, alphas(x), x[-1], mc)

    def constraint(x):
        return power_usage(mu, alphas(x), x[-1])

    def project(x):
        x = x.copy()
        x[:n_alpha] = _shrink_to_budget(x[:n_alpha], x[-1], mu, M, rho)
        return x

    box = [(1e-3, 5.0)] * n_alpha + [(0.0, g_hi)]
    spec = OptimSpec(objective, box, max_evals=max_evals, xtol=1e-5, ftol=1e-6,
                     step=[0.05] * n_alpha + [0.05 * g_hi], seed=mc.seed)
    res = constrained_maximize(spec, constraint, rho, x0, starts=starts, project=project)
    value, info = lower_bound_value(rho, M, params, alphas(res.x), res.x[-1], mc, detail=True)
    return BoundResult(value, M, {"mu": mu, "alpha": alphas(res.x).tolist(),
                                  "gamma": float(res.x[-1]), "power": res.constraint,
                                  "constraint_active": res.active},
                       res.converged, res.evals, stderr=info["penalty_stderr"], extra=info)


def _shrink_to_budget(a: np.ndarray, gamma: float, mu: float, M: int, rho: float) -> np.ndarray:
    """Scale the free shapes down until the power budget holds."""
    def usage(scale):
        return power_usage(mu, _expand_alpha(a * scale, M), gamma)

    if usage(1.0) <= rho:
        return a
    lo, hi = 0.0, 1.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if usage(mid) <= rho:
            lo = mid
        else:
            hi = mid
    return np.maximum(a * lo, 1e-3)


def params_dict(p) -> dict:
    return asdict(p)
