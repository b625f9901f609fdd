"""Differential entropy machinery (all results in bits).

Two independent routes are provided for the phase entropies that the
bounds need:

* sample based: Kozachenko-Leonenko k-nearest-neighbour estimates with a
  wrapped metric on circular columns;
* spectral: the density of a sum of independent circular variables is
  rebuilt from its exact Fourier coefficients on an FFT grid and
  integrated directly. These are smooth in their arguments and are
  tabulated for fast interpolation inside the optimizers.
"""

from __future__ import annotations

import hashlib
import os
from pathlib import Path
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike
from scipy import integrate
from scipy import special as sp
from scipy.interpolate import BSpline, CubicSpline, RectBivariateSpline
from scipy.spatial import cKDTree

from .rngdist import LOG2E, TWO_PI

# ---------------------------------------------------------------------------
# k-nearest-neighbour estimator
# ---------------------------------------------------------------------------


def knn_entropy(samples: ArrayLike, k: int = 4, circular: Sequence[int] = ()) -> float:
    """Kozachenko-Leonenko entropy estimate in bits.

    ``circular`` lists columns holding angles; distances along them use
    ``min(|a-b|, 2pi-|a-b|)``.
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n, d = x.shape
    if n < 2 * d + 2 or n <= k:
        raise ValueError("too few samples for the requested dimension")
    if not np.all(np.isfinite(x)):
        raise ValueError("samples must be finite")
    circ = set(int(c) for c in circular)
    data = np.empty_like(x)
    box = np.empty(d)
    for j in range(d):
        col = x[:, j]
        if j in circ:
            data[:, j] = np.mod(col, TWO_PI)
            data[:, j][data[:, j] >= TWO_PI] = 0.0
            box[j] = TWO_PI
        else:
            lo, hi = col.min(), col.max()
            data[:, j] = col - lo
            # a box far wider than the data range behaves as a plain line
            box[j] = 4.0 * (hi - lo) + 1.0
    tree = cKDTree(data, boxsize=box)
    dist, _ = tree.query(data, k=k + 1)
    eps = dist[:, -1]
    if np.any(eps <= 0):
        raise ValueError("degenerate samples: zero nearest-neighbour distance")
    log_ball = 0.5 * d * np.log(np.pi) - sp.gammaln(0.5 * d + 1.0)
    h = sp.digamma(n) - sp.digamma(k) + log_ball + d * np.mean(np.log(eps))
    return float(h * LOG2E)


def _check_distinct_columns(x: np.ndarray, circ: set) -> None:
    """Reject joints with a repeated column; their entropy is minus infinity."""
    d = x.shape[1]
    for i in range(d):
        for j in range(i + 1, d):
            diff = x[:, i] - x[:, j]
            if i in circ and j in circ:
                diff = np.angle(np.exp(1j * diff))
            if np.all(np.abs(diff) < 1e-12):
                raise ValueError(f"degenerate joint: columns {i} and {j} coincide")


def conditional_entropy_mc(joint: ArrayLike, cond_cols: Sequence[int], k: int = 4,
                           circular: Sequence[int] = ()) -> float:
    """``h(rest | cond_cols)`` as joint entropy minus conditioning entropy."""
    joint = np.asarray(joint, dtype=float)
    cond_cols = list(cond_cols)
    _check_distinct_columns(joint, set(int(c) for c in circular))
    circ_cond = [cond_cols.index(c) for c in circular if c in cond_cols]
    return knn_entropy(joint, k, circular) - knn_entropy(joint[:, cond_cols], k, circ_cond)


# ---------------------------------------------------------------------------
# noncentral chi-square terms
# ---------------------------------------------------------------------------


def _ncx2_logpdf_u(u: np.ndarray, beta: float) -> np.ndarray:
    """Log density of ``|beta + z|^2`` evaluated at ``t = u^2``."""
    return -(u - beta) ** 2 + np.log(sp.i0e(2.0 * beta * u))


def ncx2_entropy(beta: float) -> float:
    """Exact ``h(|beta + z|^2)`` for ``z ~ CN(0, 1)``, by quadrature."""
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    if beta == 0:
        return float(LOG2E)

    # t = u^2 turns the integrand into a bump of unit width around u = beta
    def integrand(u):
        lf = _ncx2_logpdf_u(u, beta)
        return -np.exp(lf) * lf * 2.0 * u

    lo, hi = max(0.0, beta - 14.0), beta + 14.0
    pts = [p for p in (beta - 3.0, beta, beta + 3.0) if lo < p < hi]
    val, err = integrate.quad(integrand, lo, hi, points=pts or None, limit=400,
                              epsabs=1e-12, epsrel=1e-12)
    if not np.isfinite(val) or err > 1e-7:
        raise RuntimeError("ncx2_entropy quadrature did not converge")
    return float(val * LOG2E)


def elog_ncx2(beta: ArrayLike):
    """``E[log2 |beta + z|^2]``; finite at ``beta = 0``."""
    b = np.asarray(beta, dtype=float)
    x = b * b
    out = np.empty(x.shape)
    small = x < 1e-2
    # ln x + E1(x) = -gamma - sum_k (-x)^k / (k k!)
    xs = x[small]
    series = np.zeros_like(xs)
    term = np.ones_like(xs)
    for j in range(1, 12):
        term = term * (-xs) / j
        series = series + term / j
    out[small] = -np.euler_gamma - series
    xb = x[~small]
    out[~small] = np.log(xb) + sp.exp1(xb)
    out = out * LOG2E
    return float(out) if out.ndim == 0 else out


class Ncx2EntropyTable:
    """Cubic interpolant of :func:`ncx2_entropy` over ``beta``.

    Small ``beta`` is tabulated directly; above ``beta = 4`` the residual
    against the asymptote ``0.5 log2(beta^2) + 0.5 log2(4 pi e)`` is
    tabulated instead, and it is held constant beyond ``beta_max``.
    """

    SPLIT = 4.0

    def __init__(self, beta_max: float = 400.0, n: int = 400):
        b_lo = np.linspace(0.0, self.SPLIT, 161)
        b_hi = np.geomspace(self.SPLIT, beta_max, n)
        self._lo = CubicSpline(b_lo, [ncx2_entropy(v) for v in b_lo])
        resid = np.array([ncx2_entropy(v) - self._asym(v) for v in b_hi])
        self._hi = CubicSpline(np.log(b_hi), resid)
        self._tail = resid[-1]
        self._bmax = beta_max

    @staticmethod
    def _asym(b):
        return 0.5 * np.log2(b * b) + 0.5 * np.log2(4 * np.pi * np.e)

    def __call__(self, beta: ArrayLike):
        b = np.asarray(beta, dtype=float)
        out = np.empty(b.shape)
        low = b < self.SPLIT
        out[low] = self._lo(b[low])
        bh = b[~low]
        resid = np.where(bh <= self._bmax, self._hi(np.log(np.minimum(bh, self._bmax))),
                         self._tail)
        out[~low] = resid + self._asym(bh)
        return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# spectral entropies of sums of circular variables
# ---------------------------------------------------------------------------

_COEF_TOL = 1e-13
_MAX_POINTS = 1 << 23
_NARROW = np.pi / 10.0  # std below which an axis is treated on a line segment


def _vm_equiv_var(kappa: float) -> float:
    """Wrapped-normal-equivalent variance ``-2 ln(I1/I0)`` of a von Mises law."""
    if kappa <= 0:
        return 1e6
    r = sp.ive(1, kappa) / sp.i0e(kappa)
    return float(min(-2.0 * np.log(r), 1e6)) if r > 0 else 1e6


class _Source:
    """Independent circular variable: Gaussian (wrapped) or von Mises."""

    def __init__(self, kind: str, param: float):
        self.kind = kind
        self.param = float(param)
        self.var = self.param if kind == "gauss" else _vm_equiv_var(self.param)

    def cf(self, t: np.ndarray) -> np.ndarray:
        if self.kind == "gauss":
            return np.exp(-0.5 * self.var * t * t)
        k = self.param
        if k <= 0:
            return (t == 0).astype(float)
        a = np.abs(t)
        out = np.zeros(a.shape)
        with np.errstate(under="ignore"):
            if np.all(a == np.round(a)) and a.size > 64:
                top = int(a.max())
                orders = np.arange(top + 1)
                table = sp.ive(orders, k) / sp.i0e(k)
                out = table[a.astype(np.int64)]
            else:
                out = sp.ive(a, k) / sp.i0e(k)
        return np.nan_to_num(out)


def _grid_size(need: float) -> int:
    return int(max(32, 1 << int(np.ceil(np.log2(max(need, 2.0))))))


def _spectral_entropy(sources: list[_Source], rows: np.ndarray) -> float:
    """Entropy (nats) of the 1D or 2D variable ``rows @ sources`` on the torus."""
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    dim = rows.shape[0]
    var = np.array([s.var for s in sources])
    cov = (rows * np.minimum(var, 100.0)) @ rows.T
    std = np.sqrt(np.diag(cov))
    narrow = std < _NARROW

    if dim == 2 and narrow.all():
        # whiten: on a line the transform only shifts the entropy by log|det|
        chol = np.linalg.cholesky(cov)
        inv_t = np.linalg.inv(chol).T
        periods = np.array([20.0, 20.0])
        # resolve unit-width features
        n_axis = [_grid_size(1.3 * 20.0 * 8.3 / np.pi)] * 2
        to_source = rows.T @ inv_t          # frequency map omega -> source args
        log_jac = float(np.log(np.abs(np.linalg.det(chol))))
    else:
        log_jac = 0.0
        to_source = rows.T
        periods = np.where(narrow, 20.0 * std, TWO_PI)
        if dim == 2:
            cond = np.array([cov[0, 0] - cov[0, 1] ** 2 / cov[1, 1],
                             cov[1, 1] - cov[0, 1] ** 2 / cov[0, 0]])
            cond = np.sqrt(np.maximum(cond, 1e-30))
        else:
            cond = std
        tmax = 8.3 / cond
        n_axis = [_grid_size(1.3 * periods[i] * tmax[i] / np.pi) for i in range(dim)]

    while True:
        freqs = [np.fft.fftfreq(n_axis[i], d=1.0 / n_axis[i]) * TWO_PI / periods[i]
                 for i in range(dim)]
        mesh = np.meshgrid(*freqs, indexing="ij")
        coef = np.ones(mesh[0].shape)
        for j, src in enumerate(sources):
            arg = sum(to_source[j, i] * mesh[i] for i in range(dim))
            if not (narrow.any() or log_jac):
                arg = np.round(arg)
            coef = coef * src.cf(arg)
        edge = max(np.abs(np.take(coef, n_axis[i] // 2, axis=i)).max() for i in range(dim))
        if edge < _COEF_TOL or np.prod(n_axis) * 2 > _MAX_POINTS:
            break
        worst = int(np.argmax([np.abs(np.take(coef, n_axis[i] // 2, axis=i)).max()
                               for i in range(dim)]))
        n_axis[worst] *= 2

    dens = np.real(np.fft.fftn(coef)) / np.prod(periods)
    cell = np.prod(periods / np.array(n_axis))
    pos = dens > 0
    h = -np.sum(dens[pos] * np.log(dens[pos])) * cell
    return float(h + log_jac)


# rows over sources (dc, dr, phi0, phi1)
_PAIR_ROWS = {
    "a0_d": np.array([[1, 0, 1, 0], [0, 1, -1, 1]]),
    "a0_a1": np.array([[1, 0, 1, 0], [1, 1, 0, 1]]),
    "a1_d": np.array([[1, 1, 0, 1], [0, 1, -1, 1]]),
}


def phase_pair_entropy(kappa0: float, kappa1: float, sigma2_c: float, sigma2_r: float) -> float:
    """Entropy in bits of ``(dc + p0, dc + dr + p1)`` on the torus.

    ``dc``, ``dr`` are wrapped normal with variances ``sigma2_c``,
    ``sigma2_r``; ``p0``, ``p1`` are von Mises with concentrations
    ``kappa0``, ``kappa1``. All four are independent.
    """
    sources = [_Source("gauss", sigma2_c), _Source("gauss", sigma2_r),
               _Source("vm", kappa0), _Source("vm", kappa1)]
    var = np.minimum([s.var for s in sources], 100.0)
    best, best_rows = np.inf, None
    for rows in _PAIR_ROWS.values():
        cov = (rows * var) @ rows.T
        corr2 = cov[0, 1] ** 2 / (cov[0, 0] * cov[1, 1])
        if corr2 < best:
            best, best_rows = corr2, rows
    # unimodular integer changes of coordinates keep the entropy unchanged
    return _spectral_entropy(sources, best_rows) * LOG2E


def phase_single_entropy(kappa: float, sigma2: float) -> float:
    """Entropy in bits of ``d + p`` with ``d`` wrapped normal, ``p`` von Mises."""
    sources = [_Source("gauss", sigma2), _Source("vm", kappa)]
    return _spectral_entropy(sources, np.array([[1.0, 1.0]])) * LOG2E


def _cache_dir() -> Path | None:
    root = os.environ.get("COMBCAP_CACHE_DIR", str(Path.home() / ".cache" / "combcap"))
    if root.lower() in ("", "0", "off", "none"):
        return None
    path = Path(root)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError:
        return None
    return path


def _cached(tag: str, build):
    folder = _cache_dir()
    key = hashlib.sha1(tag.encode()).hexdigest()[:16]
    if folder is not None:
        f = folder / f"{key}.npy"
        if f.exists():
            try:
                return np.load(f)
            except (OSError, ValueError):
                pass
    values = build()
    if folder is not None:
        try:
            np.save(folder / f"{key}.npy", values)
        except OSError:
            pass
    return values


def _log_kappa_grid(sigma2_min: float, step: float) -> np.ndarray:
    lo = np.log(1e-3)
    hi = np.log(1e4 / sigma2_min)
    n = int(np.ceil((hi - lo) / step)) + 1
    return np.linspace(lo, lo + (n - 1) * step, n)


_TABLES: dict = {}


class PhasePairTable:
    """Bicubic interpolant of :func:`phase_pair_entropy` over log-concentrations.

    Outside the grid the entropy is flat to within the tabulation
    tolerance, so arguments are clamped.
    """

    STEP = 0.5

    def __init__(self, sigma2_c: float, sigma2_r: float):
        self.sigma2_c = float(sigma2_c)
        self.sigma2_r = float(sigma2_r)
        g = _log_kappa_grid(min(sigma2_c, sigma2_r), self.STEP)
        tag = f"pair|{self.sigma2_c!r}|{self.sigma2_r!r}|{g[0]!r}|{g[-1]!r}|{len(g)}|v1"

        def build():
            k = np.exp(g)
            return np.array([[phase_pair_entropy(a, b, self.sigma2_c, self.sigma2_r)
                              for b in k] for a in k])

        self.grid = g
        self.values = _cached(tag, build)
        self._spline = RectBivariateSpline(g, g, self.values, kx=3, ky=3)

    @classmethod
    def get(cls, sigma2_c: float, sigma2_r: float) -> "PhasePairTable":
        key = ("pair", float(sigma2_c), float(sigma2_r))
        if key not in _TABLES:
            _TABLES[key] = cls(sigma2_c, sigma2_r)
        return _TABLES[key]

    def _clip_log(self, kappa) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.clip(np.log(np.asarray(kappa, float)), self.grid[0], self.grid[-1])

    def __call__(self, kappa0: ArrayLike, kappa1: ArrayLike) -> np.ndarray:
        k0, k1 = np.broadcast_arrays(np.asarray(kappa0, float), np.asarray(kappa1, float))
        return self._spline.ev(self._clip_log(k0), self._clip_log(k1))

    def _basis_mean(self, knots: np.ndarray, kappa: np.ndarray, w: np.ndarray) -> np.ndarray:
        x = self._clip_log(kappa)
        lead = x.shape[:-1]
        dm = BSpline.design_matrix(x.ravel(), knots, 3).toarray()
        dm = dm.reshape(lead + (x.shape[-1], -1))
        return np.einsum("...n,...nb->...b", np.broadcast_to(w, x.shape), dm)

    def expect_independent(self, kappa0: ArrayLike, w0: ArrayLike,
                           kappa1: ArrayLike, w1: ArrayLike) -> np.ndarray:
        """``E[H(k0, k1)]`` for independent ``k0``, ``k1`` given as weighted nodes.

        Node arrays have shape ``(..., n)``; weights broadcast against them
        and should sum to one along the last axis. The tensor-spline
        structure turns the double sum into a bilinear form.
        """
        tx, ty = self._spline.get_knots()
        coef = self._spline.get_coeffs().reshape(len(tx) - 4, len(ty) - 4)
        e0 = self._basis_mean(tx, np.asarray(kappa0, float), np.asarray(w0, float))
        e1 = self._basis_mean(ty, np.asarray(kappa1, float), np.asarray(w1, float))
        return np.einsum("...i,ij,...j->...", e0, coef, e1)


class PhaseSingleTable:
    """Cubic interpolant of :func:`phase_single_entropy` over log-concentration."""

    STEP = 0.25

    def __init__(self, sigma2: float):
        self.sigma2 = float(sigma2)
        g = _log_kappa_grid(sigma2, self.STEP)
        tag = f"single|{self.sigma2!r}|{g[0]!r}|{g[-1]!r}|{len(g)}|v1"
        self.grid = g
        self.values = _cached(tag, lambda: np.array(
            [phase_single_entropy(k, self.sigma2) for k in np.exp(g)]))
        self._spline = CubicSpline(g, self.values)

    @classmethod
    def get(cls, sigma2: float) -> "PhaseSingleTable":
        key = ("single", float(sigma2))
        if key not in _TABLES:
            _TABLES[key] = cls(sigma2)
        return _TABLES[key]

    def __call__(self, kappa: ArrayLike) -> np.ndarray:
        with np.errstate(divide="ignore"):
            a = np.clip(np.log(np.asarray(kappa, float)), self.grid[0], self.grid[-1])
        return self._spline(a)
