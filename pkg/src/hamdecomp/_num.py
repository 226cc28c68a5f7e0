"""Shared numerics: Gauss quadrature, cumulative Simpson, vectorized bisection.

Internal module. Public entry points re-export through the feature modules.
"""

from __future__ import annotations

import functools

import numpy as np

__all__ = [
    "gauss_nodes",
    "gauss_integrate",
    "adaptive_gauss",
    "cumulative_simpson",
    "bisect_monotone",
    "brentq_vec",
]


@functools.lru_cache(maxsize=32)
def gauss_nodes(order):
    """Gauss-Legendre nodes/weights on [-1, 1], cached per order."""
    x, w = np.polynomial.legendre.leggauss(order)
    return x, w


def gauss_integrate(fn, a, b, order=64, pieces=1):
    """Integrate fn over [a, b] with composite Gauss-Legendre.

    a, b may be scalars or broadcastable arrays (per-point intervals); fn must
    accept arrays. Returns an array shaped like the broadcast of a and b.
    """
    x, w = gauss_nodes(order)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    shape = np.broadcast(a, b).shape
    a = np.broadcast_to(a, shape)
    b = np.broadcast_to(b, shape)
    total = np.zeros(shape)
    nodes = x.reshape((-1,) + (1,) * len(shape))
    edges = np.linspace(0.0, 1.0, pieces + 1)
    for lo, hi in zip(edges[:-1], edges[1:]):
        pa = a + (b - a) * lo
        pb = a + (b - a) * hi
        half = 0.5 * (pb - pa)
        mid = 0.5 * (pa + pb)
        # nodes axis is prepended so per-point intervals broadcast cleanly
        vals = fn(mid[None, ...] + half[None, ...] * nodes)
        total = total + half * np.tensordot(w, vals, axes=(0, 0))
    if total.ndim == 0:
        return float(total)
    return total


def adaptive_gauss(fn, a, b, tol=1e-12, order=32, max_depth=24):
    """Scalar adaptive Gauss-Legendre by interval halving.

    Compares order and 2*order estimates; recurses until the difference is
    below tol (absolute, scaled by accumulated magnitude).
    """

    def one(lo, hi, depth):
        coarse = gauss_integrate(fn, lo, hi, order=order)
        fine = gauss_integrate(fn, lo, hi, order=order, pieces=2)
        if depth >= max_depth or abs(fine - coarse) <= tol * max(1.0, abs(fine)):
            return fine
        mid = 0.5 * (lo + hi)
        return one(lo, mid, depth + 1) + one(mid, hi, depth + 1)

    return float(one(float(a), float(b), 0))


def cumulative_simpson(y, x):
    """Cumulative integral of sampled y over x (composite Simpson on pairs).

    x must be uniformly spaced with an even number of intervals preferred;
    falls back to trapezoid on the final interval when odd. Returns an array
    of the same length with out[0] = 0.
    """
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    n = len(x)
    out = np.zeros_like(y)
    h = x[1] - x[0]
    # Simpson over consecutive interval pairs, trapezoid correction at odd cut
    for i in range(2, n, 2):
        out[i] = out[i - 2] + (h / 3.0) * (y[i - 2] + 4.0 * y[i - 1] + y[i])
    for i in range(1, n, 2):
        if i + 1 < n:
            # midpoint value via local Simpson split keeps O(h^4) at odd nodes
            out[i] = out[i - 1] + (h / 12.0) * (5.0 * y[i - 1] + 8.0 * y[i] - y[i + 1])
        else:
            out[i] = out[i - 1] + 0.5 * h * (y[i - 1] + y[i])
    return out


def bisect_monotone(fn, lo, hi, tol=1e-12, maxit=200):
    """Vectorized bisection for fn increasing in its argument.

    fn maps arrays to arrays elementwise; lo, hi are bracket arrays with
    fn(lo) <= 0 <= fn(hi). Returns the root array at absolute x-tolerance tol.
    """
    lo = np.array(lo, dtype=float, copy=True)
    hi = np.array(hi, dtype=float, copy=True)
    for _ in range(maxit):
        mid = 0.5 * (lo + hi)
        val = fn(mid)
        neg = val < 0.0
        lo = np.where(neg, mid, lo)
        hi = np.where(neg, hi, mid)
        if np.max(hi - lo) <= tol:
            break
    return 0.5 * (lo + hi)


def brentq_vec(fn, lo, hi, tol=1e-13, maxit=100):
    """Vectorized secant-accelerated bisection (regula falsi with bisection
    safeguard). Same contract as bisect_monotone but typically ~3x fewer
    function calls for smooth fn."""
    lo = np.array(lo, dtype=float, copy=True)
    hi = np.array(hi, dtype=float, copy=True)
    flo = fn(lo)
    fhi = fn(hi)
    for it in range(maxit):
        denom = fhi - flo
        safe = np.abs(denom) > 1e-300
        mid = np.where(safe, hi - fhi * (hi - lo) / np.where(safe, denom, 1.0), 0.5 * (lo + hi))
        # keep the secant point strictly inside, else bisect
        inside = (mid > lo) & (mid < hi)
        mid = np.where(inside, mid, 0.5 * (lo + hi))
        if it % 2 == 1:
            mid = 0.5 * (lo + hi)  # forced bisection step guarantees bracket shrink
        val = fn(mid)
        neg = val < 0.0
        lo = np.where(neg, mid, lo)
        flo = np.where(neg, val, flo)
        hi = np.where(neg, hi, mid)
        fhi = np.where(neg, fhi, val)
        if np.max(hi - lo) <= tol:
            break
    return 0.5 * (lo + hi)
