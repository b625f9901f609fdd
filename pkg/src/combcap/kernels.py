"""Hot-loop kernels: the compiled extension when available, numpy otherwise.

Set ``COMBCAP_PURE=1`` to force the numpy implementation.
"""

from __future__ import annotations

import os

from . import _pytrellis

try:
    if os.environ.get("COMBCAP_PURE"):
        raise ImportError("pure backend requested")
    from . import _ctrellis as _backend
    BACKEND = "cython"
except ImportError:
    _backend = _pytrellis
    BACKEND = "numpy"


def forward_logz(loglik, kc, off_c, kr, off_r):
    return _backend.forward_logz(loglik, kc, off_c, kr, off_r)


def forward_logz_pure(loglik, kc, off_c, kr, off_r):
    return _pytrellis.forward_logz(loglik, kc, off_c, kr, off_r)


def mixture_loglik(re, im, lev0, pitch, side, n0, w):
    return _backend.mixture_loglik(re, im, lev0, pitch, side, n0, w)


def mixture_loglik_pure(re, im, lev0, pitch, side, n0, w):
    return _pytrellis.mixture_loglik(re, im, lev0, pitch, side, n0, w)
