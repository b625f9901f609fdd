"""Achievable information rates of uniform QAM over the comb channel.

The decoder metric is a finite-state auxiliary channel: the phases are
quantized onto a circular grid, the grid follows a discretized Wiener
walk, and the output given input and state is circular Gaussian. A
forward recursion yields ``log q(y | x)`` and ``log q(y)`` for simulated
blocks; their difference per use lower-bounds the mutual information.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfcx, logsumexp
from scipy.stats import norm

from . import kernels
from .channel import ChannelParams, simulate
from .rngdist import RngStream

SUPPORTED_ORDERS = (4, 16, 64, 256, 1024)
MODES = ("per_subchannel", "joint")
MAX_STATES = 1 << 16


@dataclass(frozen=True)
class Constellation:
    points: np.ndarray   # complex, unit average energy

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=complex)
        if pts.ndim != 1 or pts.size < 2:
            raise ValueError("need at least two points")
        if np.unique(np.round(pts, 12)).size != pts.size:
            raise ValueError("points must be distinct")
        object.__setattr__(self, "points", pts)

    @property
    def order(self) -> int:
        return self.points.size

    @property
    def side(self) -> int:
        return int(round(math.sqrt(self.order)))

    @property
    def is_square_grid(self) -> bool:
        """Points laid out as ``make_qam`` produces them (row-major square grid)."""
        side = self.side
        if side * side != self.order:
            return False
        lev = np.sort(np.unique(np.round(self.points.real, 12)))
        if lev.size != side:
            return False
        grid = (lev[:, None] + 1j * lev[None, :]).ravel()
        return bool(np.allclose(grid, self.points, atol=1e-12))

    @property
    def pitch(self) -> float:
        """Spacing of the square grid at unit average energy."""
        return float(np.min(np.abs(np.diff(np.unique(self.points.real)))))


def make_qam(order: int) -> Constellation:
    """Square QAM with unit average energy."""
    if order not in SUPPORTED_ORDERS:
        raise ValueError(f"order must be one of {SUPPORTED_ORDERS}")
    side = int(round(math.sqrt(order)))
    levels = np.arange(side) * 2.0 - (side - 1)
    grid = (levels[:, None] + 1j * levels[None, :]).ravel()
    return Constellation(grid / math.sqrt(np.mean(np.abs(grid) ** 2)))


@dataclass(frozen=True)
class TrellisConfig:
    levels_c: int = 64
    levels_r: int = 16
    block_len: int = 500
    n_blocks: int = 20
    mode: str = "per_subchannel"
    # add the variance of the in-bin phase error to the decoder's noise level
    inflate: bool = True

    def __post_init__(self):
        if self.levels_c < 4 or self.levels_r < 4:
            raise ValueError("levels must be at least 4")
        if self.block_len < 100:
            raise ValueError("block_len must be at least 100")
        if self.n_blocks < 1:
            raise ValueError("n_blocks must be positive")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.mode == "joint":
            if self.levels_c % self.levels_r:
                raise ValueError("joint mode needs levels_r to divide levels_c")
            if self.levels_c * self.levels_r > MAX_STATES:
                raise ValueError(f"joint state space exceeds {MAX_STATES}; reduce levels_c or levels_r")


@dataclass
class AirResult:
    bits: float          # per subchannel
    stderr: float
    per_block: np.ndarray
    config: TrellisConfig


def transition_kernel(sigma2: float, levels: int, tol: float = 1e-15) -> tuple[np.ndarray, int]:
    """Bin-to-bin probabilities of a Wiener increment on a circular grid.

    The phase is uniform inside its bin, so the offset between source and
    destination positions is triangular; the Gaussian is integrated against
    it in closed form using ``int Phi = x Phi + phi``. Returns ``(taps,
    offset)`` with tap ``t`` moving ``t - offset`` bins.
    """
    width = 2.0 * math.pi / levels
    sd = math.sqrt(sigma2)
    reach = int(math.ceil((40.0 * sd) / width)) + 1

    def tail(y):
        # y * Phi(y) + phi(y) for y <= 0, free of cancellation via erfcx
        return norm.pdf(y) * (1.0 + y * math.sqrt(math.pi / 2.0) * erfcx(-y / math.sqrt(2.0)))

    def bin_prob(d):
        x = np.stack([(d + 1.0) * width, d * width, (d - 1.0) * width]) / sd
        coef = np.array([1.0, -2.0, 1.0])[:, None]
        # psi(x) = max(x, 0) + tail(-|x|); the linear part cancels unless signs differ
        lin = np.where((x.min(axis=0) < 0) & (x.max(axis=0) > 0),
                       np.sum(coef * np.maximum(x, 0.0), axis=0), 0.0)
        return (sd / width) * (lin + np.sum(coef * tail(-np.abs(x)), axis=0))

    d = np.arange(-reach, reach + 1)
    p = bin_prob(d.astype(float))
    folded = np.zeros(levels)
    np.add.at(folded, d % levels, p)
    folded = np.clip(folded, 0.0, None)
    folded /= folded.sum()
    # re-centre so the taps are contiguous around zero shift
    shifts = (np.arange(levels) + levels // 2) % levels - levels // 2
    order = np.argsort(shifts)
    shifts, probs = shifts[order], folded[order]
    keep = np.nonzero(probs > tol * probs.max())[0]
    lo, hi = keep[0], keep[-1]
    taps = probs[lo:hi + 1] / probs[lo:hi + 1].sum()
    return np.ascontiguousarray(taps), int(-shifts[lo])


def _grid(levels: int) -> np.ndarray:
    return -math.pi + (np.arange(levels) + 0.5) * 2.0 * math.pi / levels


def _noise_level(amp2: np.ndarray, bin_var: float, inflate: bool) -> np.ndarray:
    return 1.0 + np.asarray(amp2) * (bin_var if inflate else 0.0)


def _cond_loglik(y: np.ndarray, x: np.ndarray, phases: np.ndarray, bin_var: float,
                 inflate: bool) -> np.ndarray:
    """``ln q(y | x, phase)`` with shape ``(..., n, levels)``."""
    n0 = _noise_level(np.abs(x) ** 2, bin_var, inflate)[..., None]
    rot = np.exp(1j * phases)
    d2 = np.abs(y[..., None] - rot * x[..., None]) ** 2
    return -d2 / n0 - np.log(math.pi * n0)


def _window(c: Constellation, scale: float, n0_max: float) -> int:
    """Neighbourhood half-width beyond which point terms fall below e^-40 relative."""
    reach = math.sqrt((40.0 + math.log(c.order)) * n0_max) / (c.pitch * scale)
    return int(min(c.side - 1, math.ceil(reach) + 1))


def _full_mixture(derot: np.ndarray, points: np.ndarray, n0: np.ndarray) -> np.ndarray:
    out = np.empty(derot.size)
    step = max(1, 4_000_000 // points.size)
    for s in range(0, derot.size, step):
        d2 = np.abs(derot[s:s + step, None] - points[None, :]) ** 2
        out[s:s + step] = logsumexp(-d2 / n0 - np.log(math.pi * n0), axis=1)
    return out


def _marg_loglik(y: np.ndarray, c: Constellation, scale: float, phases: np.ndarray,
                 bin_var: float, inflate: bool) -> np.ndarray:
    """``ln sum_x p(x) q(y | x, phase)`` with shape ``(..., n, levels)``."""
    points = c.points * scale
    n0 = _noise_level(np.abs(points) ** 2, bin_var, inflate) * np.ones(points.size)
    derot = (y[..., None] * np.exp(-1j * phases)).reshape(-1)
    if not c.is_square_grid:
        return _full_mixture(derot, points, n0).reshape(y.shape + (phases.size,)) - math.log(c.order)
    lev0 = float(points.real.min())
    out = kernels.mixture_loglik(np.ascontiguousarray(derot.real), np.ascontiguousarray(derot.imag),
                                 lev0, c.pitch * scale, c.side, np.ascontiguousarray(n0),
                                 _window(c, scale, float(n0.max())))
    return np.asarray(out).reshape(y.shape + (phases.size,)) - math.log(c.order)


def _block_inputs(c: Constellation, M: int, rho: float, t: TrellisConfig, rng: RngStream):
    idx = rng.gen.integers(0, c.order, size=(t.n_blocks, t.block_len, M))
    return c.points[idx] * math.sqrt(rho / M)


def _per_subchannel(traj, c: Constellation, scale: float, p: ChannelParams, t: TrellisConfig) -> np.ndarray:
    L = t.levels_c
    phases = _grid(L)
    bin_var = (2.0 * math.pi / L) ** 2 / 12.0
    total = np.zeros(t.n_blocks)
    for m in range(p.M):
        taps, off = transition_kernel(p.sigma2_c + m * m * p.sigma2_r, L)
        one, zero = np.ones(1), 0
        y, x = traj.y[..., m], traj.x[..., m]
        ll_c = _cond_loglik(y, x, phases, bin_var, t.inflate)[..., None]
        ll_m = _marg_loglik(y, c, scale, phases, bin_var, t.inflate)[..., None]
        total += kernels.forward_logz(ll_c, taps, off, one, zero)
        total -= kernels.forward_logz(ll_m, taps, off, one, zero)
    return total


def _joint(traj, c: Constellation, scale: float, p: ChannelParams, t: TrellisConfig) -> np.ndarray:
    Lc, Lr = t.levels_c, t.levels_r
    width = 2.0 * math.pi / Lc
    phases_c, phases_r = _grid(Lc), _grid(Lr)
    tc, off_c = transition_kernel(p.sigma2_c, Lc)
    tr, off_r = transition_kernel(p.sigma2_r, Lr)
    shape = (t.n_blocks, t.block_len, Lc, Lr)
    ll_c = np.zeros(shape)
    ll_m = np.zeros(shape)
    bin_var_c = width ** 2 / 12.0
    bin_var_r = (2.0 * math.pi / Lr) ** 2 / 12.0
    rows = np.arange(Lc)
    for m in range(p.M):
        bin_var = bin_var_c + m * m * bin_var_r
        y, x = traj.y[..., m], traj.x[..., m]
        # composite phase of state (i, j) is the fine grid shifted by a whole
        # number of bins plus a fraction shared by every i
        shift = m * phases_r / width
        whole = np.floor(shift + 1e-9)
        frac = np.round(shift - whole, 9)
        for f in np.unique(frac):
            cols = np.nonzero(frac == f)[0]
            ph = phases_c + f * width
            tab_c = _cond_loglik(y, x, ph, bin_var, t.inflate)
            tab_m = _marg_loglik(y, c, scale, ph, bin_var, t.inflate)
            for jj in cols:
                src = (rows + int(whole[jj])) % Lc
                ll_c[..., jj] += tab_c[..., src]
                ll_m[..., jj] += tab_m[..., src]
    return (kernels.forward_logz(ll_c, tc, off_c, tr, off_r)
            - kernels.forward_logz(ll_m, tc, off_c, tr, off_r))


def air_estimate(c: Constellation, p: ChannelParams, rho: float, t: TrellisConfig,
                 rng: RngStream | int | None = None) -> AirResult:
    """AIR in bits per subchannel use, with the standard error over blocks."""
    if rho <= 0:
        raise ValueError("rho must be positive")
    rng = rng if isinstance(rng, RngStream) else RngStream(0 if rng is None else int(rng), 303)
    x = _block_inputs(c, p.M, rho, t, rng)
    traj = simulate(x, p, rng.child(1))
    scale = math.sqrt(rho / p.M)
    route = _per_subchannel if t.mode == "per_subchannel" else _joint
    nats = route(traj, c, scale, p, t)
    per_block = nats / (t.block_len * p.M * math.log(2.0))
    err = float(per_block.std(ddof=1) / math.sqrt(t.n_blocks)) if t.n_blocks > 1 else math.nan
    return AirResult(float(per_block.mean()), err, per_block, t)
