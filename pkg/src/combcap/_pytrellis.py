"""Pure-numpy forward recursion; same contract as the compiled kernel."""

from __future__ import annotations

import numpy as np


def _shift_index(L: int, taps: int, off: int) -> np.ndarray:
    # column t of row j holds the source bin feeding bin j through tap t
    return (np.arange(L)[:, None] - (np.arange(taps)[None, :] - off)) % L


def forward_logz(loglik: np.ndarray, kc: np.ndarray, off_c: int,
                 kr: np.ndarray, off_r: int) -> np.ndarray:
    """Log-normalizer of the forward recursion for each block.

    ``loglik`` has shape ``(blocks, n, Lc, Lr)`` in natural log; blocks
    are processed together.
    """
    loglik = np.asarray(loglik, dtype=float)
    B, n, Lc, Lr = loglik.shape
    kc = np.asarray(kc, dtype=float)
    kr = np.asarray(kr, dtype=float)
    idx_c = _shift_index(Lc, kc.size, off_c)
    idx_r = _shift_index(Lr, kr.size, off_r)
    a = np.full((B, Lc, Lr), 1.0 / (Lc * Lr))
    logz = np.zeros(B)
    for k in range(n):
        if k > 0:
            if kr.size > 1:
                a = a[:, :, idx_r] @ kr
            else:
                a = a * kr[0]
            a = np.einsum("bitj,t->bij", a[:, idx_c, :], kc)
        ll = loglik[:, k]
        mx = ll.max(axis=(1, 2))
        a = a * np.exp(ll - mx[:, None, None])
        s = a.sum(axis=(1, 2))
        a /= s[:, None, None]
        logz += np.log(s) + mx
    return logz


def mixture_loglik(re: np.ndarray, im: np.ndarray, lev0: float, pitch: float, side: int,
                   n0: np.ndarray, w: int) -> np.ndarray:
    """``ln sum q(y | x)`` over square-QAM points near each derotated output."""
    re = np.asarray(re, dtype=float)
    im = np.asarray(im, dtype=float)
    n0 = np.asarray(n0, dtype=float)
    lognorm = np.log(np.pi * n0)
    ca = np.clip(np.floor((re - lev0) / pitch + 0.5), 0, side - 1).astype(int)
    cb = np.clip(np.floor((im - lev0) / pitch + 0.5), 0, side - 1).astype(int)
    off = np.arange(-w, w + 1)
    out = np.empty(re.size)
    step = max(1, 2_000_000 // off.size ** 2)
    for s in range(0, re.size, step):
        sl = slice(s, s + step)
        a = ca[sl, None, None] + off[None, :, None]
        b = cb[sl, None, None] + off[None, None, :]
        valid = (a >= 0) & (a < side) & (b >= 0) & (b < side)
        a = np.clip(a, 0, side - 1)
        b = np.clip(b, 0, side - 1)
        idx = a * side + b
        dx = re[sl, None, None] - (lev0 + pitch * a)
        dy = im[sl, None, None] - (lev0 + pitch * b)
        v = -(dx * dx + dy * dy) / n0[idx] - lognorm[idx]
        v = np.where(valid, v, -np.inf).reshape(v.shape[0], -1)
        mx = v.max(axis=1)
        out[sl] = mx + np.log(np.exp(v - mx[:, None]).sum(axis=1))
    return out
