"""Nelder-Mead downhill simplex with the standard coefficients.

Deterministic and budgeted by iteration count, so a run with a larger budget
repeats a shorter run exactly before continuing.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

REFLECT = 1.0
EXPAND = 2.0
CONTRACT = 0.5
SHRINK = 0.5


@dataclass
class SimplexResult:
    x: np.ndarray
    fun: float
    iterations: int
    evaluations: int
    history: list[float] = field(default_factory=list)
    restarts: int = 0


# full step, then half steps of both signs, then the mirrored full step
RESTART_SCALES = (1.0, -0.5, 0.5, -1.0)


def restarted_nelder_mead(f: Callable[[np.ndarray], float], x0: Sequence[float],
                          max_iter: int, step: float = 0.1, stall_iter: int = 30,
                          stall_rtol: float = 1e-2, xtol: float = 1e-9,
                          step_scales: Sequence[float] = RESTART_SCALES) -> SimplexResult:
    """Nelder-Mead that rebuilds the simplex around the best point on stalls.

    Piecewise-constant objectives trap a plain simplex on plateaus; restart
    ``k`` builds a fresh simplex with step ``step * step_scales[k % len]``, so
    successive simplices flip orientation and size.  ``max_iter`` bounds the
    total iteration count across restarts.
    """
    x = np.asarray(x0, dtype=float)
    history: list[float] = []
    n_eval = 0
    restarts = 0
    best = None
    while True:
        scale = step_scales[restarts % len(step_scales)]
        res = nelder_mead(f, x, max_iter - len(history), step=scale * step,
                          xtol=xtol, stall_iter=stall_iter, stall_rtol=stall_rtol)
        n_eval += res.evaluations
        floor = math.inf if best is None else best.fun
        history.extend(min(h, floor) for h in res.history)
        if best is None or res.fun < best.fun:
            best = res
        x = best.x
        if len(history) >= max_iter or res.iterations == 0:
            break
        restarts += 1
    return SimplexResult(best.x.copy(), best.fun, len(history), n_eval, history, restarts)


def nelder_mead(f: Callable[[np.ndarray], float], x0: Sequence[float], max_iter: int,
                step: float | Sequence[float] = 0.1, ftol: float = 0.0,
                xtol: float = 0.0, stall_iter: int = 0,
                stall_rtol: float = 0.0) -> SimplexResult:
    """Minimize ``f`` starting from ``x0``.

    The initial simplex is ``x0`` plus one vertex per axis displaced by
    ``step``.  Iteration stops after ``max_iter`` iterations, or earlier once
    both the spread of function values is <= ``ftol`` and the simplex
    diameter is <= ``xtol`` (both default to 0, i.e. budget only).  With
    ``stall_iter > 0`` it also stops when the best value has decreased by
    no more than the fraction ``stall_rtol`` over that many iterations.  ``history`` records the best value after
    each iteration.
    """
    x0 = np.asarray(x0, dtype=float)
    n = len(x0)
    steps = np.broadcast_to(np.asarray(step, dtype=float), (n,))
    n_eval = 0

    def call(x):
        nonlocal n_eval
        n_eval += 1
        return float(f(x))

    fx0 = call(x0)
    if max_iter <= 0:
        return SimplexResult(x0.copy(), fx0, 0, n_eval, [])

    sim = np.empty((n + 1, n))
    sim[0] = x0
    for k in range(n):
        sim[k + 1] = x0
        sim[k + 1, k] += steps[k]
    fs = np.empty(n + 1)
    fs[0] = fx0
    for k in range(1, n + 1):
        fs[k] = call(sim[k])

    history = []
    it = 0
    while it < max_iter:
        # stable sort keeps tie order, and hence the whole run, deterministic
        order = np.argsort(fs, kind="stable")
        sim, fs = sim[order], fs[order]
        if (fs[-1] - fs[0] <= ftol and np.max(np.abs(sim[1:] - sim[0])) <= xtol):
            break
        it += 1
        centroid = sim[:-1].mean(axis=0)
        worst = sim[-1]
        xr = centroid + REFLECT * (centroid - worst)
        fr = call(xr)
        if fr < fs[0]:
            xe = centroid + EXPAND * (centroid - worst)
            fe = call(xe)
            if fe < fr:
                sim[-1], fs[-1] = xe, fe
            else:
                sim[-1], fs[-1] = xr, fr
        elif fr < fs[-2]:
            sim[-1], fs[-1] = xr, fr
        else:
            if fr < fs[-1]:
                xc = centroid + CONTRACT * (xr - centroid)
                fc = call(xc)
                accept = fc <= fr
            else:
                xc = centroid + CONTRACT * (worst - centroid)
                fc = call(xc)
                accept = fc < fs[-1]
            if accept:
                sim[-1], fs[-1] = xc, fc
            else:
                for k in range(1, n + 1):
                    sim[k] = sim[0] + SHRINK * (sim[k] - sim[0])
                    fs[k] = call(sim[k])
        history.append(float(fs.min()))
        if (stall_iter and len(history) > stall_iter
                and history[-1] >= (1.0 - stall_rtol) * history[-1 - stall_iter]):
            break

    best = int(np.argmin(fs))
    return SimplexResult(sim[best].copy(), float(fs[best]), it, n_eval, history)
