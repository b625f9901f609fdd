# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled forward recursion over a separable circular phase trellis."""

import numpy as np
from libc.math cimport exp, log


cdef inline Py_ssize_t _wrap_index(Py_ssize_t j, Py_ssize_t L) nogil:
    if j < 0:
        return j + L
    if j >= L:
        return j - L
    return j


def forward_logz(const double[:, :, :, ::1] loglik, const double[::1] kc, Py_ssize_t off_c,
                 const double[::1] kr, Py_ssize_t off_r):
    """Log-normalizer of the forward recursion for each block.

    ``loglik`` has shape ``(blocks, n, Lc, Lr)`` in natural log. The state
    starts uniform; between steps it is convolved circularly with ``kc``
    along the first state axis and ``kr`` along the second, where tap ``t``
    moves probability by ``t - off`` bins.
    """
    cdef Py_ssize_t B = loglik.shape[0], n = loglik.shape[1]
    cdef Py_ssize_t Lc = loglik.shape[2], Lr = loglik.shape[3]
    cdef Py_ssize_t nc = kc.shape[0], nr = kr.shape[0]
    cdef Py_ssize_t b, k, i, j, t, src
    cdef double acc, mx, s, logz, v
    out_arr = np.empty(B)
    cdef double[::1] out = out_arr
    a_arr = np.empty((Lc, Lr))
    tmp_arr = np.empty((Lc, Lr))
    cdef double[:, ::1] a = a_arr
    cdef double[:, ::1] tmp = tmp_arr
    with nogil:
        for b in range(B):
            for i in range(Lc):
                for j in range(Lr):
                    a[i, j] = 1.0 / (Lc * Lr)
            logz = 0.0
            for k in range(n):
                if k > 0:
                    if nr > 1:
                        for i in range(Lc):
                            for j in range(Lr):
                                acc = 0.0
                                for t in range(nr):
                                    src = _wrap_index(j - (t - off_r), Lr)
                                    acc = acc + kr[t] * a[i, src]
                                tmp[i, j] = acc
                    else:
                        for i in range(Lc):
                            for j in range(Lr):
                                tmp[i, j] = a[i, j] * kr[0]
                    for i in range(Lc):
                        for j in range(Lr):
                            acc = 0.0
                            for t in range(nc):
                                src = _wrap_index(i - (t - off_c), Lc)
                                acc = acc + kc[t] * tmp[src, j]
                            a[i, j] = acc
                mx = loglik[b, k, 0, 0]
                for i in range(Lc):
                    for j in range(Lr):
                        if loglik[b, k, i, j] > mx:
                            mx = loglik[b, k, i, j]
                s = 0.0
                for i in range(Lc):
                    for j in range(Lr):
                        a[i, j] = a[i, j] * exp(loglik[b, k, i, j] - mx)
                        s = s + a[i, j]
                for i in range(Lc):
                    for j in range(Lr):
                        a[i, j] = a[i, j] / s
                logz = logz + log(s) + mx
            out[b] = logz
    return out_arr


def mixture_loglik(const double[::1] re, const double[::1] im, double lev0, double pitch,
                   Py_ssize_t side, const double[::1] n0, Py_ssize_t w):
    """``ln sum q(y | x)`` over square-QAM points near each derotated output.

    Point ``(a, b)`` sits at ``lev0 + pitch * (a + 1j * b)`` with noise level
    ``n0[a * side + b]``; only the ``(2w+1)^2`` points around the nearest one
    contribute.
    """
    cdef Py_ssize_t N = re.shape[0], k, a, b, a0, a1, b0, b1, ca, cb, q
    cdef double dx, dy, v, mx, s, px, py
    out_arr = np.empty(N)
    cdef double[::1] out = out_arr
    cdef double[::1] lognorm = np.log(np.pi * np.asarray(n0))
    buf_arr = np.empty((2 * w + 1) * (2 * w + 1))
    cdef double[::1] buf = buf_arr
    with nogil:
        for k in range(N):
            ca = <Py_ssize_t>((re[k] - lev0) / pitch + 0.5)
            cb = <Py_ssize_t>((im[k] - lev0) / pitch + 0.5)
            if (re[k] - lev0) / pitch + 0.5 < 0:
                ca = 0
            if (im[k] - lev0) / pitch + 0.5 < 0:
                cb = 0
            if ca > side - 1:
                ca = side - 1
            if cb > side - 1:
                cb = side - 1
            a0 = ca - w if ca - w > 0 else 0
            a1 = ca + w if ca + w < side - 1 else side - 1
            b0 = cb - w if cb - w > 0 else 0
            b1 = cb + w if cb + w < side - 1 else side - 1
            q = 0
            mx = -1e300
            for a in range(a0, a1 + 1):
                px = lev0 + pitch * a
                dx = re[k] - px
                for b in range(b0, b1 + 1):
                    py = lev0 + pitch * b
                    dy = im[k] - py
                    v = -(dx * dx + dy * dy) / n0[a * side + b] - lognorm[a * side + b]
                    buf[q] = v
                    if v > mx:
                        mx = v
                    q = q + 1
            s = 0.0
            for a in range(q):
                s = s + exp(buf[a] - mx)
            out[k] = mx + log(s)
    return out_arr
