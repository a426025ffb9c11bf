"""Quadrature rules used across the package."""

import math
from functools import lru_cache

import numpy as np


def adaptive_simpson(f, a, b, tol=1e-12, max_depth=48):
    """Integrate a scalar function on ``[a, b]`` by adaptive Simpson.

    The local acceptance test is the classical ``|S2 - S1| <= 15 tol`` with
    Richardson correction; the tolerance is halved on every bisection.
    """
    if a == b:
        return 0.0
    fa, fb = f(a), f(b)
    m = 0.5 * (a + b)
    fm = f(m)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    return _simpson_rec(f, a, b, fa, fm, fb, whole, tol, max_depth)


def _simpson_rec(f, a, b, fa, fm, fb, whole, tol, depth):
    m = 0.5 * (a + b)
    lm = 0.5 * (a + m)
    rm = 0.5 * (m + b)
    flm = f(lm)
    frm = f(rm)
    left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
    right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
    delta = left + right - whole
    if depth <= 0 or abs(delta) <= 15.0 * tol:
        return left + right + delta / 15.0
    return _simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + _simpson_rec(
        f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1
    )


@lru_cache(maxsize=64)
def _legendre(n):
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_legendre(a, b, n):
    """Nodes and weights of the ``n``-point Gauss-Legendre rule on ``[a, b]``."""
    x, w = _legendre(int(n))
    half = 0.5 * (b - a)
    return 0.5 * (a + b) + half * x, half * w


def periodic_nodes(period, n):
    """Nodes ``k * period / n`` of the periodic trapezoid rule (weights ``1/n``)."""
    return np.arange(n) * (period / n)


def period_average(values, axis=-1):
    """Mean over periodic-trapezoid samples; spectrally accurate for smooth data."""
    return np.mean(values, axis=axis)


def linear_cell_weights(n_cells, step, origin, a, b):
    """Weights ``w`` with ``w @ v`` equal to the exact integral over ``[a, b]``
    of the piecewise-linear interpolant of nodal values ``v`` on the grid
    ``origin + k * step``, ``k = 0..n_cells``.
    """
    w = np.zeros(n_cells + 1)
    if b <= a:
        return w
    lo = max(int(math.floor((a - origin) / step)), 0)
    hi = min(int(math.ceil((b - origin) / step)), n_cells)
    for k in range(lo, hi):
        uk = origin + k * step
        p = max(a, uk)
        q = min(b, uk + step)
        if q <= p:
            continue
        # integral of lam(u) = (u - uk) / step over [p, q]
        lam_int = ((q - uk) ** 2 - (p - uk) ** 2) / (2.0 * step)
        w[k] += (q - p) - lam_int
        w[k + 1] += lam_int
    return w
