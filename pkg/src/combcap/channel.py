"""Simulator for the comb phase-noise channel.

Every subchannel ``m`` sees the phase ``wrap(theta_c + m * theta_r)``, where
``theta_c`` (optical source) and ``theta_r`` (RF source) are independent
Wiener processes with wrapped-normal increments. Noise is unit-variance
circular complex Gaussian, so the SNR equals the input power.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.typing import ArrayLike

from .rngdist import RngStream, wrap

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class ChannelParams:
    M: int
    sigma2_c: float
    sigma2_r: float
    noiseless: bool = False       # test hook: additive noise forced to zero
    frozen_phase: bool = False    # test hook: phase increments forced to zero

    def __post_init__(self):
        if self.M < 2:
            raise ValueError("M must be at least 2")
        if not (self.sigma2_c > 0 and self.sigma2_r > 0):
            raise ValueError("phase-noise variances must be positive")

    @classmethod
    def from_linewidths(cls, M: int, v_c: float, v_r: float, **kw) -> "ChannelParams":
        """Build from linewidths normalized by the symbol rate (variance = 2 pi v)."""
        return cls(M, TWO_PI * v_c, TWO_PI * v_r, **kw)


@dataclass(frozen=True)
class PhaseState:
    theta_c: float
    theta_r: float

    def __post_init__(self):
        for t in (self.theta_c, self.theta_r):
            if not -np.pi <= t < np.pi:
                raise ValueError("phases must lie in [-pi, pi)")


def init_state(rng: RngStream) -> PhaseState:
    """Stationary start: both phases uniform on the circle."""
    tc, tr = rng.gen.uniform(-np.pi, np.pi, 2)
    return PhaseState(float(wrap(tc)), float(wrap(tr)))


def step_state(s: PhaseState, p: ChannelParams, rng: RngStream) -> PhaseState:
    dc, dr = rng.gen.normal(0.0, 1.0, 2) * np.sqrt([p.sigma2_c, p.sigma2_r])
    if p.frozen_phase:
        dc = dr = 0.0
    return PhaseState(float(wrap(s.theta_c + dc)), float(wrap(s.theta_r + dr)))


def subchannel_phases(s: PhaseState | tuple[ArrayLike, ArrayLike], M: int) -> np.ndarray:
    """Per-subchannel phases; vectorizes over leading axes of array inputs."""
    tc, tr = (s.theta_c, s.theta_r) if isinstance(s, PhaseState) else s
    tc = np.asarray(tc, dtype=float)[..., None]
    tr = np.asarray(tr, dtype=float)[..., None]
    return wrap(tc + np.arange(M) * tr)


def _noise(rng: RngStream, shape) -> np.ndarray:
    return (rng.gen.normal(size=shape) + 1j * rng.gen.normal(size=shape)) / np.sqrt(2.0)


def transmit(x: ArrayLike, s: PhaseState, p: ChannelParams, rng: RngStream) -> np.ndarray:
    """One channel use: rotate each input by its subchannel phase and add noise."""
    x = np.asarray(x, dtype=complex)
    if x.shape[-1] != p.M:
        raise ValueError("input length must equal M")
    y = np.exp(1j * subchannel_phases(s, p.M)) * x
    if not p.noiseless:
        y = y + _noise(rng, x.shape)
    return y


@dataclass
class Trajectory:
    theta_c: np.ndarray   # (..., n)
    theta_r: np.ndarray
    x: np.ndarray         # (..., n, M)
    y: np.ndarray

    @property
    def phases(self) -> np.ndarray:
        return subchannel_phases((self.theta_c, self.theta_r), self.x.shape[-1])


def phase_paths(p: ChannelParams, rng: RngStream, n: int, batch: int | None = None):
    """Vectorized phase trajectories of length ``n`` (optionally ``batch`` of them)."""
    shape = (n,) if batch is None else (batch, n)
    start = rng.gen.uniform(-np.pi, np.pi, shape[:-1] + (2,))
    inc = rng.gen.normal(size=shape + (2,)) * np.sqrt([p.sigma2_c, p.sigma2_r])
    if p.frozen_phase:
        inc[:] = 0.0
    inc[..., 0, :] = 0.0
    paths = wrap(start[..., None, :] + np.cumsum(inc, axis=-2))
    return paths[..., 0], paths[..., 1]


def simulate(x: ArrayLike, p: ChannelParams, rng: RngStream) -> Trajectory:
    """Send the input block ``x`` of shape ``(..., n, M)`` through the channel."""
    x = np.asarray(x, dtype=complex)
    n = x.shape[-2]
    batch = None if x.ndim == 2 else int(np.prod(x.shape[:-2]))
    tc, tr = phase_paths(p, rng, n, batch)
    tc = tc.reshape(x.shape[:-1])
    tr = tr.reshape(x.shape[:-1])
    y = np.exp(1j * subchannel_phases((tc, tr), p.M)) * x
    if not p.noiseless:
        y = y + _noise(rng, x.shape)
    return Trajectory(tc, tr, x, y)


def export_csv(traj: Trajectory, path: str | Path) -> None:
    """Write a single trajectory as ``k, theta_c, theta_r, I_m, Q_m...`` rows."""
    M = traj.y.shape[-1]
    header = ["k", "theta_c", "theta_r"]
    for m in range(M):
        header += [f"i{m}", f"q{m}"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for k in range(traj.y.shape[-2]):
            row = [k, repr(float(traj.theta_c[k])), repr(float(traj.theta_r[k]))]
            for m in range(M):
                row += [repr(float(traj.y[k, m].real)), repr(float(traj.y[k, m].imag))]
            w.writerow(row)
