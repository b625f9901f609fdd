"""Compare the compiled and numpy trellis kernels on AIR-sized inputs.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from combcap import _pytrellis, kernels
from combcap.air import transition_kernel

try:
    from combcap import _ctrellis
except ImportError:
    _ctrellis = None


def _time(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def cases(rng):
    one = np.ones(1)
    tc, oc = transition_kernel(np.pi * 1e-2, 64)
    tr, orr = transition_kernel(np.pi * 1e-4, 16)
    tc5, oc5 = transition_kernel(np.pi * 1e-2, 512)
    ll64 = rng.normal(size=(20, 500, 64, 1)) * 3
    ll512 = rng.normal(size=(4, 500, 512, 1)) * 3
    lljoint = rng.normal(size=(4, 200, 64, 16)) * 3
    yield ("recursion 1-D 64 levels, 20x500", lambda m: m.forward_logz(ll64, tc, oc, one, 0))
    yield ("recursion 1-D 512 levels, 4x500", lambda m: m.forward_logz(ll512, tc5, oc5, one, 0))
    yield ("recursion joint 64x16, 4x200", lambda m: m.forward_logz(lljoint, tc, oc, tr, orr))
    side = 32
    n0 = 1.0 + rng.uniform(0, 0.5, side * side)
    re = rng.uniform(-40, 40, 200_000)
    im = rng.uniform(-40, 40, 200_000)
    yield ("mixture 1024-QAM window 2, 2e5 outputs",
           lambda m: m.mixture_loglik(re, im, -31.0, 2.0, side, n0, 2))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    print(f"selected backend: {kernels.BACKEND}")
    if _ctrellis is None:
        print("compiled extension not built; only numpy timings shown")
    print(f"{'case':44s} {'numpy s':>10s} {'cython s':>10s} {'speedup':>8s} {'max |diff|':>11s}")
    for name, call in cases(np.random.default_rng(0)):
        t_py, out_py = _time(lambda: call(_pytrellis), args.repeat)
        if _ctrellis is None:
            print(f"{name:44s} {t_py:10.4f}")
            continue
        t_c, out_c = _time(lambda: call(_ctrellis), args.repeat)
        diff = float(np.max(np.abs(np.asarray(out_py) - np.asarray(out_c))))
        print(f"{name:44s} {t_py:10.4f} {t_c:10.4f} {t_py / t_c:8.1f} {diff:11.2e}")


if __name__ == "__main__":
    main()
