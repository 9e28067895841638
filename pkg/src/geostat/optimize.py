"""Derivative-free maximization under box constraints.

A Nelder-Mead simplex search whose trial points are projected onto the box.
Coordinates whose lower and upper bounds coincide are held fixed. The search
stops when every simplex vertex agrees with the best vertex to a relative
tolerance ``xtol_rel`` in each coordinate, or when the evaluation budget is
spent.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

REFLECT = 1.0
EXPAND = 2.0
CONTRACT = 0.5
SHRINK = 0.5
INIT_STEP = 0.1


class _Budget(Exception):
    pass


def maximize_box(f: Callable[[np.ndarray], float], x0, lower, upper, *, xtol_rel: float = 1e-5,
                 max_evals: int = 500, callback: Callable[[np.ndarray, float], None] | None = None):
    """Maximize ``f`` over the box ``[lower, upper]`` starting from ``x0``.

    ``f`` may return ``-inf`` for infeasible points; the simplex retreats
    from them.

    Returns
    -------
    x_best : ndarray
    f_best : float
    nevals : int
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    x0 = np.clip(np.asarray(x0, dtype=float), lower, upper)
    if np.any(lower > upper):
        raise ValueError("lower bound exceeds upper bound")
    if max_evals < 1:
        raise ValueError("max_evals must be >= 1")
    free = np.flatnonzero(upper > lower)
    nevals = 0
    best = [x0.copy(), -math.inf]

    def full(y):
        x = x0.copy()
        x[free] = np.clip(y, lower[free], upper[free])
        return x

    def cost(y):
        # minimize -f; raises _Budget once max_evals evaluations were made
        nonlocal nevals
        if nevals >= max_evals:
            raise _Budget
        x = full(y)
        v = float(f(x))
        nevals += 1
        if math.isnan(v):
            v = -math.inf
        if callback is not None:
            callback(x, v)
        if v > best[1] or nevals == 1:
            best[0], best[1] = x, v
        return -v

    try:
        y0 = x0[free]
        c0 = cost(y0)
        if free.size == 0:
            return best[0], best[1], nevals
        span = upper[free] - lower[free]
        simplex = [y0]
        values = [c0]
        for k in range(free.size):
            y = y0.copy()
            step = INIT_STEP * span[k]
            y[k] = y0[k] + step if y0[k] + step <= upper[free][k] else y0[k] - step
            simplex.append(y)
            values.append(cost(y))
        simplex = np.array(simplex)
        values = np.array(values)
        lo_b, hi_b = lower[free], upper[free]

        while True:
            order = np.argsort(values, kind="stable")
            simplex, values = simplex[order], values[order]
            xb = simplex[0]
            scale = np.maximum(np.abs(xb), 1e-300)
            if np.all(np.abs(simplex[1:] - xb) <= xtol_rel * scale):
                break
            centroid = simplex[:-1].mean(axis=0)
            worst = simplex[-1]
            xr = np.clip(centroid + REFLECT * (centroid - worst), lo_b, hi_b)
            fr = cost(xr)
            if fr < values[0]:
                xe = np.clip(centroid + EXPAND * (xr - centroid), lo_b, hi_b)
                fe = cost(xe)
                if fe < fr:
                    simplex[-1], values[-1] = xe, fe
                else:
                    simplex[-1], values[-1] = xr, fr
                continue
            if fr < values[-2]:
                simplex[-1], values[-1] = xr, fr
                continue
            if fr < values[-1]:
                xc = np.clip(centroid + CONTRACT * (xr - centroid), lo_b, hi_b)
                fc = cost(xc)
                if fc <= fr:
                    simplex[-1], values[-1] = xc, fc
                    continue
            else:
                xc = np.clip(centroid + CONTRACT * (worst - centroid), lo_b, hi_b)
                fc = cost(xc)
                if fc < values[-1]:
                    simplex[-1], values[-1] = xc, fc
                    continue
            for k in range(1, len(simplex)):
                simplex[k] = simplex[0] + SHRINK * (simplex[k] - simplex[0])
                values[k] = cost(simplex[k])
    except _Budget:
        pass
    return best[0], best[1], nevals
