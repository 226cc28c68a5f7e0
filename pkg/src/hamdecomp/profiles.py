"""One-dimensional smooth profile toolkit.

Profiles are functions of one variable with exact (or quadrature-exact)
derivatives up to moderate order. All the compactly supported cutoffs,
plateaus and integral profiles used by the map and atom constructions are
assembled from these. Everything evaluates vectorized over numpy arrays.
"""

from __future__ import annotations

import numpy as np

from ._num import cumulative_simpson, gauss_integrate
from .expr import ExprFn, parse_expr

__all__ = [
    "Profile",
    "ExprProfile",
    "PiecewiseProfile",
    "SumProfile",
    "ProductProfile",
    "AffineProfile",
    "CumulativeProfile",
    "SplineProfile",
    "ConstProfile",
    "FuncProfile",
    "smoothstep_expr",
    "step",
    "dstep",
    "plateau",
    "as_profile",
]


class Profile:
    """Base class: callable, differentiable, with an optional support interval.

    support is a closed interval outside of which the profile vanishes, or
    None when it does not have compact support.
    """

    support = None

    def __call__(self, x):
        raise NotImplementedError

    def deriv(self, k=1):
        raise NotImplementedError

    def scaled(self, amplitude):
        return SumProfile([self], [amplitude])

    def shifted_scaled(self, shift=0.0, scale=1.0):
        """Profile of (x - shift)/scale (argument reparametrization)."""
        return AffineProfile(self, shift, scale)


class ConstProfile(Profile):
    def __init__(self, v):
        self.v = float(v)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.full(x.shape, self.v)
        return out if out.ndim else float(self.v)

    def deriv(self, k=1):
        return ConstProfile(0.0) if k >= 1 else self


class FuncProfile(Profile):
    """Profile wrapping a plain vectorized callable.

    derivs optionally supplies analytic derivative callables in order; when
    they run out, differentiation falls back to an order-4 central difference
    with step h. Used for profiles defined by numeric reductions (angular
    averages, tabulated densities) where no expression tree exists.
    """

    def __init__(self, fn, derivs=(), support=None, h=1e-5):
        self.fn = fn
        self.derivs = tuple(derivs)
        self.support = support
        self.h = float(h)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.asarray(self.fn(x), dtype=float)
        return out if x.ndim else float(out)

    def deriv(self, k=1):
        if k == 0:
            return self
        if self.derivs:
            head = FuncProfile(self.derivs[0], self.derivs[1:], self.support, self.h)
        else:
            f, h = self.fn, self.h

            def dfn(x, f=f, h=h):
                x = np.asarray(x, dtype=float)
                return (f(x - 2 * h) - 8 * f(x - h) + 8 * f(x + h) - f(x + 2 * h)) / (12 * h)

            head = FuncProfile(dfn, (), self.support, self.h)
        return head.deriv(k - 1)


class ExprProfile(Profile):
    """Wraps a one-variable ExprFn; derivatives are exact trees."""

    def __init__(self, fn, support=None):
        if isinstance(fn, str):
            fn = parse_expr(fn, nvars=1)
        if fn.nvars != 1:
            raise ValueError("profile expressions must use a single variable")
        self.fn = fn
        self.support = support

    def __call__(self, x):
        return self.fn(np.asarray(x, dtype=float))

    def deriv(self, k=1):
        if k == 0:
            return self
        return ExprProfile(self.fn.partial(0, k), support=self.support)


class AffineProfile(Profile):
    """p((x - shift)/scale), with exact chain-rule derivatives."""

    def __init__(self, base, shift=0.0, scale=1.0):
        self.base = base
        self.shift = float(shift)
        self.scale = float(scale)
        if base.support is not None:
            lo, hi = base.support
            pts = sorted((lo * self.scale + self.shift, hi * self.scale + self.shift))
            self.support = tuple(pts)

    def __call__(self, x):
        return self.base((np.asarray(x, dtype=float) - self.shift) / self.scale)

    def deriv(self, k=1):
        if k == 0:
            return self
        inner = AffineProfile(self.base.deriv(k), self.shift, self.scale)
        return SumProfile([inner], [self.scale ** (-k)])


class SumProfile(Profile):
    def __init__(self, parts, coeffs=None):
        self.parts = list(parts)
        self.coeffs = [1.0] * len(self.parts) if coeffs is None else [float(c) for c in coeffs]
        sups = [p.support for p in self.parts]
        if all(s is not None for s in sups) and sups:
            self.support = (min(s[0] for s in sups), max(s[1] for s in sups))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        for c, p in zip(self.coeffs, self.parts):
            out = out + c * p(x)
        return out if out.ndim else float(out)

    def deriv(self, k=1):
        if k == 0:
            return self
        return SumProfile([p.deriv(k) for p in self.parts], self.coeffs)


class ProductProfile(Profile):
    def __init__(self, a, b):
        self.a, self.b = a, b
        if a.support is not None and b.support is not None:
            lo = max(a.support[0], b.support[0])
            hi = min(a.support[1], b.support[1])
            self.support = (lo, min(hi, max(lo, hi)))
        elif a.support is not None:
            self.support = a.support
        elif b.support is not None:
            self.support = b.support

    def __call__(self, x):
        return self.a(x) * self.b(x)

    def deriv(self, k=1):
        if k == 0:
            return self
        d = SumProfile([ProductProfile(self.a.deriv(1), self.b), ProductProfile(self.a, self.b.deriv(1))])
        return d.deriv(k - 1)


class PiecewiseProfile(Profile):
    """Branch profiles on consecutive intervals, a constant value outside.

    breaks is an increasing sequence b_0 < ... < b_m; branch i applies on
    [b_i, b_{i+1}). Branches must agree smoothly at the seams (the caller's
    responsibility; constructions here only join along flat contact), so the
    derivative is the piecewise profile of branch derivatives.
    """

    def __init__(self, breaks, branches, outside=0.0, support=None):
        self.breaks = np.asarray(breaks, dtype=float)
        self.branches = list(branches)
        self.outside = float(outside)
        if len(self.branches) != len(self.breaks) - 1:
            raise ValueError("need one branch per interval")
        if support is None and outside == 0.0:
            support = (float(self.breaks[0]), float(self.breaks[-1]))
        self.support = support

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        flat = np.atleast_1d(x).ravel()
        out = np.full(flat.shape, self.outside)
        idx = np.searchsorted(self.breaks, flat, side="right") - 1
        # close the final interval on the right
        idx[flat == self.breaks[-1]] = len(self.branches) - 1
        for i, br in enumerate(self.branches):
            m = idx == i
            if np.any(m):
                out[m] = br(flat[m])
        out = out.reshape(np.atleast_1d(x).shape)
        return out if x.ndim else float(out[()] if out.ndim == 0 else out.reshape(-1)[0])

    def deriv(self, k=1):
        if k == 0:
            return self
        return PiecewiseProfile(
            self.breaks,
            [br.deriv(k) for br in self.branches],
            outside=0.0,
            support=self.support,
        )


class CumulativeProfile(Profile):
    """F(x) = f0 + int_{x0}^x g, evaluated quadrature-exactly.

    A dense cumulative table over [x0, x1] anchors the values; between nodes
    the remainder integral is done per point with Gauss-Legendre, so the
    evaluation has quadrature accuracy rather than interpolation accuracy.
    Outside [x0, x1] the profile continues with the same formula (g is
    integrated from the nearest anchor).
    """

    def __init__(self, integrand, x0, x1, f0=0.0, n=2049, order=24):
        self.g = integrand
        self.x0 = float(x0)
        self.x1 = float(x1)
        self.order = order
        self.grid = np.linspace(self.x0, self.x1, n)
        vals = np.array([0.0] + [
            gauss_integrate(integrand, a, b, order=order)
            for a, b in zip(self.grid[:-1], self.grid[1:])
        ])
        self.cum = f0 + np.cumsum(vals)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        flat = np.atleast_1d(x).astype(float).ravel()
        idx = np.clip(np.searchsorted(self.grid, flat, side="right") - 1, 0, len(self.grid) - 1)
        anchor_x = self.grid[idx]
        anchor_f = self.cum[idx]
        out = anchor_f + gauss_integrate(self.g, anchor_x, flat, order=self.order)
        out = np.asarray(out).reshape(np.atleast_1d(x).shape)
        return out if x.ndim else float(out.reshape(-1)[0])

    def deriv(self, k=1):
        if k == 0:
            return self
        return self.g.deriv(k - 1) if k > 1 else self.g


class SplineProfile(Profile):
    """Cubic-spline profile over samples; for numerically tabulated data."""

    def __init__(self, x, y, support=None, monotone=False):
        from scipy.interpolate import CubicSpline, PchipInterpolator

        self.x = np.asarray(x, dtype=float)
        self.y = np.asarray(y, dtype=float)
        self._sp = PchipInterpolator(self.x, self.y) if monotone else CubicSpline(self.x, self.y)
        self.support = support

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = self._sp(x)
        return out if x.ndim else float(out)

    def deriv(self, k=1):
        if k == 0:
            return self
        d = SplineProfile.__new__(SplineProfile)
        d.x, d.y = self.x, None
        d._sp = self._sp.derivative(k)
        d.support = self.support
        return d


_SMOOTHSTEP_TEXT = "expflat(x1)/(expflat(x1) + expflat(1 - x1))"


def smoothstep_expr():
    """The canonical C-infinity step: 0 for x <= 0, 1 for x >= 1."""
    return parse_expr(_SMOOTHSTEP_TEXT, nvars=1)


def step(a, b):
    """Smooth monotone step: 0 for x <= a, 1 for x >= b (a < b). Exact ExprFn."""
    if not b > a:
        raise ValueError("step needs a < b")
    w = b - a
    text = _SMOOTHSTEP_TEXT.replace("x1", f"((x1 - {a!r})/{w!r})")
    return ExprProfile(parse_expr(text, nvars=1))


def dstep(a, b):
    """Smooth monotone descent: 1 for x <= a, 0 for x >= b (a < b).

    Equals 1 - step(a, b) by the identity s(t) + s(1-t) = 1, but evaluates
    the small tail values near b directly instead of cancelling against 1.
    """
    if not b > a:
        raise ValueError("dstep needs a < b")
    w = b - a
    text = _SMOOTHSTEP_TEXT.replace("x1", f"(({b!r} - x1)/{w!r})")
    return ExprProfile(parse_expr(text, nvars=1))


def plateau(a1, a2, b2, b1):
    """Smooth plateau: 0 outside (a1, b1), 1 on [a2, b2], monotone in between.

    Implemented as step(a1,a2) * dstep(b2,b1); the transition intervals are
    disjoint, so the product is exactly 1 on the plateau and each tail is a
    bare step value (representable down to underflow).
    """
    if not (a1 < a2 <= b2 < b1):
        raise ValueError("need a1 < a2 <= b2 < b1")
    out = ProductProfile(step(a1, a2), dstep(b2, b1))
    out.support = (a1, b1)
    return out


def as_profile(obj):
    if isinstance(obj, Profile):
        return obj
    if isinstance(obj, ExprFn):
        return ExprProfile(obj)
    if isinstance(obj, str):
        return ExprProfile(obj)
    if np.isscalar(obj):
        return ConstProfile(float(obj))
    raise TypeError(f"cannot interpret {type(obj)!r} as a 1-D profile")
