"""Derivative-free optimization: box-clipped Nelder-Mead with multistart,
plus a penalty wrapper for a single inequality budget constraint."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

Objective = Callable[[np.ndarray], float]

# reflection, expansion, contraction, shrink
NM_COEFFS = (1.0, 2.0, 0.5, 0.5)


@dataclass
class OptimSpec:
    objective: Objective
    box: Sequence[tuple[float, float]]
    max_evals: int = 2000
    xtol: float = 1e-8
    ftol: float = 1e-10
    step: Optional[Sequence[float]] = None   # initial simplex edge per dimension
    seed: int = 0

    def __post_init__(self):
        self.box = [(float(lo), float(hi)) for lo, hi in self.box]
        for lo, hi in self.box:
            if not lo < hi:
                raise ValueError("box requires lo < hi in every dimension")

    @property
    def lo(self) -> np.ndarray:
        return np.array([b[0] for b in self.box])

    @property
    def hi(self) -> np.ndarray:
        return np.array([b[1] for b in self.box])


@dataclass
class OptimResult:
    x: np.ndarray
    f: float
    evals: int
    converged: bool
    history: list = field(default_factory=list, repr=False)


def nelder_mead(spec: OptimSpec, x0: Sequence[float]) -> OptimResult:
    """Minimize ``spec.objective`` from ``x0``; trial points are clipped to the box."""
    lo, hi = spec.lo, spec.hi
    x0 = np.asarray(x0, dtype=float)
    if np.any(x0 < lo) or np.any(x0 > hi):
        raise ValueError("x0 must lie inside the box")
    n = x0.size
    a_r, a_e, a_c, a_s = NM_COEFFS
    evals = 0

    def f(x):
        nonlocal evals
        evals += 1
        v = float(spec.objective(x))
        return v if np.isfinite(v) else np.inf

    step = np.asarray(spec.step, float) if spec.step is not None else 0.1 * (hi - lo)
    simplex = [x0.copy()]
    for i in range(n):
        v = x0.copy()
        v[i] = v[i] + step[i] if v[i] + step[i] <= hi[i] else v[i] - step[i]
        simplex.append(np.clip(v, lo, hi))
    simplex = np.array(simplex)
    fvals = np.array([f(v) for v in simplex])
    converged = False

    while evals < spec.max_evals:
        order = np.argsort(fvals, kind="stable")
        simplex, fvals = simplex[order], fvals[order]
        diam = np.max(np.abs(simplex[1:] - simplex[0]))
        spread = fvals[-1] - fvals[0] if np.isfinite(fvals[-1]) else np.inf
        if diam < spec.xtol or spread < spec.ftol:
            converged = True
            break
        centroid = simplex[:-1].mean(axis=0)
        worst = simplex[-1]
        xr = np.clip(centroid + a_r * (centroid - worst), lo, hi)
        fr = f(xr)
        if fr < fvals[0]:
            xe = np.clip(centroid + a_e * (xr - centroid), lo, hi)
            fe = f(xe)
            if fe < fr:
                simplex[-1], fvals[-1] = xe, fe
            else:
                simplex[-1], fvals[-1] = xr, fr
            continue
        if fr < fvals[-2]:
            simplex[-1], fvals[-1] = xr, fr
            continue
        if fr < fvals[-1]:
            xc = np.clip(centroid + a_c * (xr - centroid), lo, hi)
        else:
            xc = np.clip(centroid + a_c * (worst - centroid), lo, hi)
        fc = f(xc)
        if fc < min(fr, fvals[-1]):
            simplex[-1], fvals[-1] = xc, fc
            continue
        for i in range(1, n + 1):
            simplex[i] = np.clip(simplex[0] + a_s * (simplex[i] - simplex[0]), lo, hi)
            fvals[i] = f(simplex[i])

    best = int(np.argmin(fvals))
    return OptimResult(simplex[best].copy(), float(fvals[best]), evals, converged)


def multistart(spec: OptimSpec, x0: Sequence[float], starts: int = 5,
               spread: float = 0.25) -> OptimResult:
    """Run Nelder-Mead from ``x0`` and from ``starts - 1`` seeded perturbations.

    The first start is always ``x0`` itself, so the result is never worse
    than a single run.
    """
    rng = np.random.default_rng(spec.seed)
    lo, hi = spec.lo, spec.hi
    x0 = np.asarray(x0, dtype=float)
    best: Optional[OptimResult] = None
    total = 0
    for i in range(max(1, starts)):
        start = x0 if i == 0 else np.clip(
            x0 + spread * (hi - lo) * rng.uniform(-1, 1, x0.size), lo, hi)
        res = nelder_mead(spec, start)
        total += res.evals
        if best is None or res.f < best.f:
            best = res
    best.evals = total
    return best


@dataclass
class ConstrainedResult:
    x: np.ndarray
    f: float                 # objective (not penalized) at x
    constraint: float        # constraint functional at x
    budget: float
    evals: int
    converged: bool
    active: bool             # budget binds at the optimum
    weight: float            # final penalty weight

    @property
    def violation(self) -> float:
        return max(0.0, self.constraint - self.budget)


def constrained_maximize(spec: OptimSpec, constraint: Callable[[np.ndarray], float],
                         budget: float, x0: Sequence[float], *, starts: int = 5,
                         weight0: float = 10.0, max_rounds: int = 8,
                         project: Optional[Callable[[np.ndarray], np.ndarray]] = None,
                         rel_tol: float = 1e-4) -> ConstrainedResult:
    """Maximize ``spec.objective`` subject to ``constraint(x) <= budget``.

    A quadratic penalty on the relative excess is escalated tenfold per
    round until the excess falls below ``rel_tol * budget``. If it never
    does, ``project`` (when given) maps the best point onto the feasible
    set.
    """
    if budget <= 0:
        raise ValueError("budget must be positive")
    x = np.asarray(x0, dtype=float)
    weight = weight0
    total = 0
    res = None
    for _ in range(max_rounds):
        w = weight

        def penalized(v, w=w):
            excess = max(0.0, (constraint(v) - budget) / budget)
            return -spec.objective(v) + w * excess * excess

        sub = OptimSpec(penalized, spec.box, spec.max_evals, spec.xtol, spec.ftol,
                        spec.step, spec.seed)
        res = multistart(sub, x, starts)
        total += res.evals
        x = res.x
        if constraint(x) - budget <= rel_tol * budget:
            break
        weight *= 10.0
    c = constraint(x)
    if c - budget > rel_tol * budget:
        if project is None:
            raise RuntimeError("no feasible point found")
        x = np.asarray(project(x), dtype=float)
        c = constraint(x)
        if c - budget > rel_tol * budget:
            raise RuntimeError("projection did not reach the feasible set")
    fval = float(spec.objective(x))
    return ConstrainedResult(x, fval, float(c), float(budget), total, bool(res.converged),
                             active=bool(c > budget * (1 - 1e-3)), weight=weight)
