"""Plane-map algebra: exact area-preserving primitives, chains, inverses.

Maps act pointwise on numpy arrays of coordinates. The primitives are
closed-form wherever the construction allows (twist rotations, sector
maps, shears); inverses exploit the structural monotonicity each
primitive has by construction and reduce to one-dimensional monotone
root-finds. A MapChain composes right to left, like function
composition. Every map is immutable and evaluation is pure.

Exactness conventions used throughout:
  - cutoff rotations are rigid (angle exactly theta) on the inner disc and
    exactly the identity outside the outer disc, because the flat smooth
    step saturates to 0/1 in floating point;
  - translations are realized as pairs of cutoff half-turn rotations, so
    points of the translated rectangle move by exact arithmetic;
  - maps with an annulus support short-circuit to the identity outside it,
    so "identity outside support" holds to the last bit.
"""

from __future__ import annotations

import json
import math

import numpy as np

from ._num import bisect_monotone, brentq_vec, gauss_integrate
from .profiles import FuncProfile, SplineProfile, as_profile, dstep, plateau

__all__ = [
    "MapError",
    "PlaneMap",
    "IdentityMap",
    "CutoffRotation",
    "RadialReparam",
    "AngularShear",
    "MomentMap",
    "PolarRect",
    "GraphX",
    "RayRadializer",
    "NumericInverse",
    "MapChain",
    "ProductMap",
    "GatedSwap",
    "cutoff_rotation",
    "reparametrize",
    "to_area_preserving",
    "translation_flow",
    "grid_swap",
    "compose",
    "inverse",
    "jacobian_check",
    "jacobian_check_nd",
    "fd_det",
    "fd_vol_det",
    "circle_mass",
    "quasirandom_points",
    "support_hull_box",
    "map_to_json",
    "map_from_json",
]

TWO_PI = 2.0 * math.pi


class MapError(ValueError):
    pass


def _flat_xy(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    shape = np.broadcast_shapes(x.shape, y.shape)
    xf = np.broadcast_to(x, shape).reshape(-1).astype(float)
    yf = np.broadcast_to(y, shape).reshape(-1).astype(float)
    return xf.copy(), yf.copy(), shape


# ---------------------------------------------------------------------------
# finite-difference Jacobians (the generic oracle; primitives carry exact dets)

_FD4_OFF = (-2.0, -1.0, 1.0, 2.0)
_FD4_W = (1.0 / 12.0, -8.0 / 12.0, 8.0 / 12.0, -1.0 / 12.0)


def fd_jacobian(apply_fn, x, y, h):
    """Order-4 central-difference Jacobian entries (Xx, Xy, Yx, Yy)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    Xx = Xy = Yx = Yy = 0.0
    for off, w in zip(_FD4_OFF, _FD4_W):
        X, Y = apply_fn(x + off * h, y)
        Xx = Xx + w * X
        Yx = Yx + w * Y
        X, Y = apply_fn(x, y + off * h)
        Xy = Xy + w * X
        Yy = Yy + w * Y
    return Xx / h, Xy / h, Yx / h, Yy / h


def fd_det(apply_fn, x, y, h):
    Xx, Xy, Yx, Yy = fd_jacobian(apply_fn, x, y, h)
    return Xx * Yy - Xy * Yx


def fd_vol_det(apply_fn, Z, h):
    """FD volume Jacobian determinant for a map of R^d, Z of shape (N, d)."""
    Z = np.asarray(Z, dtype=float)
    n, d = Z.shape
    J = np.zeros((n, d, d))
    for j in range(d):
        col = 0.0
        for off, w in zip(_FD4_OFF, _FD4_W):
            Zp = Z.copy()
            Zp[:, j] += off * h
            col = col + w * apply_fn(Zp)
        J[:, :, j] = col / h
    return np.linalg.det(J)


# ---------------------------------------------------------------------------
# base class


class PlaneMap:
    """A smooth map of the plane with forward/inverse evaluation.

    support declares the region outside of which the map is the identity:
    {"kind": "disc", "center", "radius"}, {"kind": "annulus", "center",
    "inner", "outer"} (identity outside the outer disc and inside the inner
    one), {"kind": "box", "x", "y"}, or None when no identity region is
    claimed (pure coordinate maps). sample_box gives a default domain for
    Jacobian sampling when support is None.
    """

    variant = "abstract"
    support = None
    sample_box = None
    area_preserving = False
    feature_scale = 1.0
    has_exact_det = False

    def apply(self, x, y):
        raise NotImplementedError

    def apply_inverse(self, x, y):
        raise NotImplementedError

    def inverse(self):
        return NumericInverse(self)

    def det(self, x, y):
        return fd_det(self.apply, x, y, 4e-4 * self.feature_scale)

    def describe(self):
        raise NotImplementedError(f"describe not implemented for {self.variant}")


def support_hull_box(m):
    """Bounding box ((x0,x1),(y0,y1)) of the declared support, or sample_box."""
    s = m.support
    if s is None:
        return m.sample_box
    if s["kind"] == "box":
        return tuple(map(tuple, (s["x"], s["y"])))
    cx, cy = s["center"]
    R = s["radius"] if s["kind"] == "disc" else s["outer"]
    return ((cx - R, cx + R), (cy - R, cy + R))


# ---------------------------------------------------------------------------
# primitives


class IdentityMap(PlaneMap):
    variant = "identity"
    area_preserving = True
    has_exact_det = True

    def apply(self, x, y):
        return np.asarray(x, dtype=float), np.asarray(y, dtype=float)

    def apply_inverse(self, x, y):
        return self.apply(x, y)

    def inverse(self):
        return self

    def det(self, x, y):
        return np.ones(np.broadcast_shapes(np.shape(x), np.shape(y)))

    def describe(self):
        return {"variant": "identity"}


class CutoffRotation(PlaneMap):
    """Rotation by a radial angle profile about a center.

    The angle equals `angle` exactly for r <= rigid and is exactly 0 for
    r >= outer; in between it falls along the flat smooth step. A twist map
    preserves radii, hence the area form, exactly.
    """

    variant = "cutoff_rotation"
    area_preserving = True
    has_exact_det = True

    def __init__(self, angle, rigid, outer, center=(0.0, 0.0)):
        if not (0.0 < rigid < outer):
            raise MapError(f"need 0 < rigid < outer, got {rigid}, {outer}")
        self.angle = float(angle)
        self.rigid = float(rigid)
        self.outer = float(outer)
        self.center = (float(center[0]), float(center[1]))
        self.prof = dstep(self.rigid, self.outer)
        self.feature_scale = self.outer - self.rigid
        self.support = {"kind": "disc", "center": self.center, "radius": self.outer}

    def _alpha(self, r, scale):
        return (self.angle * scale) * self.prof(r)

    def apply(self, x, y, scale=1.0):
        xf, yf, shape = _flat_xy(x, y)
        sc = np.broadcast_to(np.asarray(scale, dtype=float), shape).reshape(-1)
        dx = xf - self.center[0]
        dy = yf - self.center[1]
        al = self._alpha(np.hypot(dx, dy), sc)
        # zero angle returns the input coordinates verbatim: identity outside
        # the outer disc holds to the last bit, and long chains stay cheap
        m = al != 0.0
        X, Y = xf, yf
        if np.any(m):
            c, s = np.cos(al[m]), np.sin(al[m])
            X[m] = self.center[0] + c * dx[m] - s * dy[m]
            Y[m] = self.center[1] + s * dx[m] + c * dy[m]
        return X.reshape(shape), Y.reshape(shape)

    def apply_inverse(self, x, y, scale=1.0):
        return self.inverse().apply(x, y, scale=scale)

    def inverse(self):
        return CutoffRotation(-self.angle, self.rigid, self.outer, self.center)

    def det(self, x, y):
        return np.ones(np.broadcast_shapes(np.shape(x), np.shape(y)))

    def describe(self):
        return {
            "variant": "cutoff_rotation",
            "angle": self.angle,
            "rigid": self.rigid,
            "outer": self.outer,
            "center": list(self.center),
        }


def _profile_table(profile, lo, hi, n=2049):
    grid = np.linspace(lo, hi, n)
    return {"lo": float(lo), "hi": float(hi), "vals": [float(v) for v in profile(grid)]}


def _profile_from_table(d, monotone=False):
    grid = np.linspace(d["lo"], d["hi"], len(d["vals"]))
    return SplineProfile(grid, np.asarray(d["vals"]), monotone=monotone)


class RadialReparam(PlaneMap):
    """Radial rescale r -> sqrt(S(r)/pi) on an annulus (a, A).

    S is the disc-mass profile of a density (S increasing, S(r) = pi r^2 at
    and outside the annulus ends). Points with r outside (a, A) are returned
    unchanged. Not area-preserving on its own: det = S'(r)/(2 pi r).
    """

    variant = "radial_reparam"

    def __init__(self, S, a, A, S_deriv=None):
        self.S = as_profile(S)
        self.a = float(a)
        self.A = float(A)
        self.S_deriv = S_deriv
        if self.S_deriv is not None:
            self.has_exact_det = True
        self.feature_scale = self.A - self.a
        self.support = {"kind": "annulus", "center": (0.0, 0.0), "inner": self.a, "outer": self.A}

    def radial_forward(self, r):
        r = np.asarray(r, dtype=float)
        out = r.copy()
        m = (r > self.a) & (r < self.A)
        if np.any(m):
            out[m] = np.sqrt(np.maximum(self.S(r[m]), 0.0) / math.pi)
        return out

    def radial_inverse(self, rho):
        rho = np.asarray(rho, dtype=float)
        out = rho.copy()
        m = (rho > self.a) & (rho < self.A)
        if np.any(m):
            target = math.pi * rho[m] ** 2
            out[m] = brentq_vec(lambda r: self.S(r) - target, np.full(m.sum(), self.a),
                                np.full(m.sum(), self.A), tol=1e-14, maxit=120)
        return out

    def _radial_map(self, x, y, radial):
        xf, yf, shape = _flat_xy(x, y)
        r = np.hypot(xf, yf)
        rr = radial(r)
        ratio = np.ones_like(r)
        m = r > 0.0
        ratio[m] = rr[m] / r[m]
        return (xf * ratio).reshape(shape), (yf * ratio).reshape(shape)

    def apply(self, x, y):
        return self._radial_map(x, y, self.radial_forward)

    def apply_inverse(self, x, y):
        return self._radial_map(x, y, self.radial_inverse)

    def det(self, x, y):
        xf, yf, shape = _flat_xy(x, y)
        r = np.hypot(xf, yf)
        out = np.ones_like(r)
        m = (r > self.a) & (r < self.A)
        if np.any(m):
            if self.S_deriv is not None:
                sp = np.asarray(self.S_deriv(r[m]), dtype=float)
            else:
                sp = np.asarray(self.S.deriv(1)(r[m]), dtype=float)
            out[m] = sp / (TWO_PI * r[m])
        return out.reshape(shape)

    def describe(self):
        return {
            "variant": "radial_reparam",
            "a": self.a,
            "A": self.A,
            "S": _profile_table(self.S, self.a, self.A),
        }


class AngularShear(PlaneMap):
    """Angle redistribution (r, theta) -> (r, F(r, theta)) on an annulus.

    F is the normalized cumulative of a positive density: F(r, theta) =
    2 pi * C(r, theta) / C(r, 2 pi) with C(r, theta) = int_0^theta
    dens(r, s) ds, so F(r, .) is a circle diffeomorphism for every r and the
    angular derivative of F equals the normalized density. cum may supply a
    closed-form antiderivative; otherwise C is computed by Gauss quadrature
    with per-point upper limits. radius_map transforms the evaluation radius
    before the density is read (used when the shear acts after a radial
    reparametrization and the density lives at the pre-image radius).

    amp marks the single-harmonic case dens = 1 + g(r) cos(s) by its radial
    amplitude samples (rgrid, gvals); such shears serialize as the amplitude
    table alone and rebuild to the same spline, instead of round-tripping
    through a lossy two-dimensional density table.
    """

    variant = "angular_shear"

    def __init__(self, a, A, dens, cum=None, radius_map=None, order=32, pieces=4,
                 amp=None):
        self.a = float(a)
        self.A = float(A)
        self.dens = dens
        self.cum = cum
        self.radius_map = radius_map
        self.order = int(order)
        self.pieces = int(pieces)
        self.amp = None
        if amp is not None:
            self.amp = (np.asarray(amp[0], dtype=float), np.asarray(amp[1], dtype=float))
        self.has_exact_det = True
        self.feature_scale = self.A - self.a
        self.support = {"kind": "annulus", "center": (0.0, 0.0), "inner": self.a, "outer": self.A}

    def _dens_radius(self, rho):
        if self.radius_map is None:
            return rho
        return np.asarray(self.radius_map(rho), dtype=float)

    def _cum(self, r, theta):
        if self.cum is not None:
            return np.asarray(self.cum(r, theta), dtype=float)
        theta = np.asarray(theta, dtype=float)
        return gauss_integrate(lambda s: self.dens(r, s), np.zeros_like(theta), theta,
                               order=self.order, pieces=self.pieces)

    def _F(self, r, theta):
        total = self._cum(r, np.full_like(np.asarray(r, dtype=float), TWO_PI))
        return TWO_PI * self._cum(r, theta) / total

    def apply(self, x, y):
        xf, yf, shape = _flat_xy(x, y)
        rho = np.hypot(xf, yf)
        X, Y = xf.copy(), yf.copy()
        m = (rho > self.a) & (rho < self.A)
        if np.any(m):
            r = rho[m]
            th = np.mod(np.arctan2(yf[m], xf[m]), TWO_PI)
            F = self._F(self._dens_radius(r), th)
            X[m] = r * np.cos(F)
            Y[m] = r * np.sin(F)
        return X.reshape(shape), Y.reshape(shape)

    def angle_inverse(self, rd, theta):
        """Solve F(rd, phi) = theta for phi in [0, 2 pi], per point.

        rd is the density-side radius (callers pass _dens_radius output).
        F is strictly increasing in the angle with the analytic derivative
        2 pi dens / total, so bracketed Newton converges in a handful of
        steps; iterates that leave the shrinking bracket fall back to its
        midpoint, which keeps the solve safe for spiky densities.
        """
        rd = np.asarray(rd, dtype=float)
        theta = np.asarray(theta, dtype=float)
        total = self._cum(rd, np.full_like(rd, TWO_PI))
        lo = np.zeros_like(theta)
        hi = np.full_like(theta, TWO_PI)
        x = theta.copy()
        for _ in range(90):
            val = TWO_PI * self._cum(rd, x) / total - theta
            pos = val > 0.0
            hi = np.where(pos, np.minimum(hi, x), hi)
            lo = np.where(pos, lo, np.maximum(lo, x))
            if float(np.max(np.abs(val))) < 1e-14:
                break
            der = TWO_PI * np.asarray(self.dens(rd, x), dtype=float) / total
            safe = der > 1e-12
            xn = x - val / np.where(safe, der, 1.0)
            bad = ~safe | (xn <= lo) | (xn >= hi) | ~np.isfinite(xn)
            x = np.where(bad, 0.5 * (lo + hi), xn)
        return x

    def apply_inverse(self, x, y):
        xf, yf, shape = _flat_xy(x, y)
        rho = np.hypot(xf, yf)
        X, Y = xf.copy(), yf.copy()
        m = (rho > self.a) & (rho < self.A)
        if np.any(m):
            r = rho[m]
            th = np.mod(np.arctan2(yf[m], xf[m]), TWO_PI)
            phi = self.angle_inverse(self._dens_radius(r), th)
            X[m] = r * np.cos(phi)
            Y[m] = r * np.sin(phi)
        return X.reshape(shape), Y.reshape(shape)

    def det(self, x, y):
        xf, yf, shape = _flat_xy(x, y)
        rho = np.hypot(xf, yf)
        out = np.ones_like(rho)
        m = (rho > self.a) & (rho < self.A)
        if np.any(m):
            r = self._dens_radius(rho[m])
            th = np.mod(np.arctan2(yf[m], xf[m]), TWO_PI)
            total = self._cum(r, np.full_like(r, TWO_PI))
            out[m] = TWO_PI * np.asarray(self.dens(r, th), dtype=float) / total
        return out.reshape(shape)

    def describe(self):
        if self.amp is not None:
            return {
                "variant": "angular_shear",
                "a": self.a,
                "A": self.A,
                "amp_r": [float(v) for v in self.amp[0]],
                "amp_g": [float(v) for v in self.amp[1]],
            }
        nr, ns = 129, 256
        rg = np.linspace(self.a, self.A, nr)
        sg = np.linspace(0.0, TWO_PI, ns, endpoint=False)
        vals = np.asarray(self.dens(self._dens_radius(rg)[:, None], sg[None, :]))
        return {
            "variant": "angular_shear",
            "a": self.a,
            "A": self.A,
            "dens_r": [float(v) for v in rg],
            "dens_s": [float(v) for v in sg],
            "dens": [[float(v) for v in row] for row in vals],
        }


class MomentMap(PlaneMap):
    """Per-ray radial rescale R(r, theta) = sqrt(u mu + v nu) on an annulus.

    mu = (1+cos theta)/2, nu = 1 - mu; u, v are increasing profiles equal to
    r^2 at and outside the annulus ends, so the map is the identity there.
    Computed as R = sqrt(v + (u - v) mu): when u == v the moved radius equals
    r to the last bit.
    """

    variant = "moment_map"

    def __init__(self, u, v, a, A):
        self.u = as_profile(u)
        self.v = as_profile(v)
        self.a = float(a)
        self.A = float(A)
        self.has_exact_det = True
        self.feature_scale = self.A - self.a
        self.support = {"kind": "annulus", "center": (0.0, 0.0), "inner": self.a, "outer": self.A}

    def apply(self, x, y):
        xf, yf, shape = _flat_xy(x, y)
        r = np.hypot(xf, yf)
        X, Y = xf.copy(), yf.copy()
        m = (r > self.a) & (r < self.A)
        if np.any(m):
            rm = r[m]
            mu = 0.5 * (1.0 + xf[m] / rm)
            R2 = self.v(rm) + (self.u(rm) - self.v(rm)) * mu
            ratio = np.sqrt(np.maximum(R2, 0.0)) / rm
            X[m] = xf[m] * ratio
            Y[m] = yf[m] * ratio
        return X.reshape(shape), Y.reshape(shape)

    def apply_inverse(self, x, y):
        xf, yf, shape = _flat_xy(x, y)
        rho = np.hypot(xf, yf)
        X, Y = xf.copy(), yf.copy()
        m = (rho > self.a) & (rho < self.A)
        if np.any(m):
            rm = rho[m]
            mu = 0.5 * (1.0 + xf[m] / rm)
            target = rm ** 2

            def fn(r):
                return self.v(r) + (self.u(r) - self.v(r)) * mu - target

            r = brentq_vec(fn, np.full_like(rm, self.a), np.full_like(rm, self.A),
                           tol=1e-14, maxit=120)
            ratio = r / rm
            X[m] = xf[m] * ratio
            Y[m] = yf[m] * ratio
        return X.reshape(shape), Y.reshape(shape)

    def det(self, x, y):
        xf, yf, shape = _flat_xy(x, y)
        r = np.hypot(xf, yf)
        out = np.ones_like(r)
        m = (r > self.a) & (r < self.A)
        if np.any(m):
            rm = r[m]
            mu = 0.5 * (1.0 + xf[m] / rm)
            up = self.u.deriv(1)(rm)
            vp = self.v.deriv(1)(rm)
            out[m] = (vp + (up - vp) * mu) / (2.0 * rm)
        return out.reshape(shape)

    def describe(self):
        return {
            "variant": "moment_map",
            "a": self.a,
            "A": self.A,
            "u": _profile_table(self.u, self.a, self.A),
            "v": _profile_table(self.v, self.a, self.A),
        }


class PolarRect(PlaneMap):
    """Rectangle-to-sector coordinate map (x, y) -> r1(x) e^{i theta1(y)}.

    theta1(y) = theta_off + kappa (y - y0) and r1(x) = sqrt(a^2 + 2(x - x0)/
    kappa), so the Jacobian determinant is exactly 1. Defined for x >= x0 -
    kappa a^2 / 2; no identity region is claimed (pure coordinate map).
    """

    variant = "polar_rect"
    area_preserving = True
    has_exact_det = True

    def __init__(self, kappa, a, rect, theta_off=0.0):
        (x0, x1), (y0, y1) = rect
        if kappa <= 0.0 or a < 0.0:
            raise MapError("need kappa > 0 and a >= 0")
        if kappa * (y1 - y0) > TWO_PI + 1e-12:
            raise MapError("angular span exceeds a full turn")
        self.kappa = float(kappa)
        self.a = float(a)
        self.rect = ((float(x0), float(x1)), (float(y0), float(y1)))
        self.theta_off = float(theta_off)
        self.sample_box = self.rect
        self.feature_scale = 0.25 * min(x1 - x0, y1 - y0)

    def r1(self, x):
        x = np.asarray(x, dtype=float)
        return np.sqrt(self.a ** 2 + 2.0 * (x - self.rect[0][0]) / self.kappa)

    def theta1(self, y):
        y = np.asarray(y, dtype=float)
        return self.theta_off + self.kappa * (y - self.rect[1][0])

    def apply(self, x, y):
        xf, yf, shape = _flat_xy(x, y)
        r = self.r1(xf)
        t = self.theta1(yf)
        return (r * np.cos(t)).reshape(shape), (r * np.sin(t)).reshape(shape)

    def apply_inverse(self, x, y):
        xf, yf, shape = _flat_xy(x, y)
        r2 = xf ** 2 + yf ** 2
        t = np.mod(np.arctan2(yf, xf) - self.theta_off, TWO_PI)
        X = self.rect[0][0] + 0.5 * self.kappa * (r2 - self.a ** 2)
        Y = self.rect[1][0] + t / self.kappa
        return X.reshape(shape), Y.reshape(shape)

    def det(self, x, y):
        return np.ones(np.broadcast_shapes(np.shape(x), np.shape(y)))

    def describe(self):
        return {
            "variant": "polar_rect",
            "kappa": self.kappa,
            "a": self.a,
            "rect": [list(self.rect[0]), list(self.rect[1])],
            "theta_off": self.theta_off,
        }


class GraphX(PlaneMap):
    """Fiber map (x, y) -> (w(x, y), y) (or the y-fiber analogue, axis=1).

    w must be strictly increasing in the moved coordinate; the inverse is a
    per-point monotone root-find over the strip. Outside the strip box the
    map is the identity (w is expected to agree there).
    """

    variant = "graph_x"

    def __init__(self, w, strip, w_x=None, axis=0, area_preserving=False,
                 feature_scale=None):
        self.w = w
        self.strip = tuple(map(tuple, strip))
        self.w_x = w_x
        self.axis = int(axis)
        self.area_preserving = bool(area_preserving)
        self.has_exact_det = w_x is not None
        (x0, x1), (y0, y1) = self.strip
        self.support = {"kind": "box", "x": (x0, x1), "y": (y0, y1)}
        self.feature_scale = feature_scale if feature_scale is not None else \
            0.25 * ((x1 - x0) if self.axis == 0 else (y1 - y0))

    def _inside(self, xf, yf):
        (x0, x1), (y0, y1) = self.strip
        return (xf > x0) & (xf < x1) & (yf > y0) & (yf < y1)

    def apply(self, x, y):
        xf, yf, shape = _flat_xy(x, y)
        m = self._inside(xf, yf)
        X, Y = xf.copy(), yf.copy()
        if np.any(m):
            if self.axis == 0:
                X[m] = np.asarray(self.w(xf[m], yf[m]), dtype=float)
            else:
                Y[m] = np.asarray(self.w(xf[m], yf[m]), dtype=float)
        return X.reshape(shape), Y.reshape(shape)

    def apply_inverse(self, x, y):
        xf, yf, shape = _flat_xy(x, y)
        m = self._inside(xf, yf)
        X, Y = xf.copy(), yf.copy()
        if np.any(m):
            (x0, x1), (y0, y1) = self.strip
            if self.axis == 0:
                target, fixed = xf[m], yf[m]
                lo, hi = np.full_like(target, x0), np.full_like(target, x1)
                sol = brentq_vec(lambda t: np.asarray(self.w(t, fixed), dtype=float) - target,
                                 lo, hi, tol=1e-14, maxit=120)
                X[m] = sol
            else:
                target, fixed = yf[m], xf[m]
                lo, hi = np.full_like(target, y0), np.full_like(target, y1)
                sol = brentq_vec(lambda t: np.asarray(self.w(fixed, t), dtype=float) - target,
                                 lo, hi, tol=1e-14, maxit=120)
                Y[m] = sol
        return X.reshape(shape), Y.reshape(shape)

    def det(self, x, y):
        if self.w_x is None:
            return super().det(x, y)
        xf, yf, shape = _flat_xy(x, y)
        m = self._inside(xf, yf)
        out = np.ones_like(xf)
        if np.any(m):
            out[m] = np.asarray(self.w_x(xf[m], yf[m]), dtype=float)
        return out.reshape(shape)

    def describe(self):
        (x0, x1), (y0, y1) = self.strip
        nx = ny = 257
        gx = np.linspace(x0, x1, nx)
        gy = np.linspace(y0, y1, ny)
        W = np.asarray(self.w(gx[:, None], gy[None, :]))
        return {
            "variant": "graph_x",
            "strip": [list(self.strip[0]), list(self.strip[1])],
            "axis": self.axis,
            "area_preserving": self.area_preserving,
            "w": [[float(v) for v in row] for row in W],
        }


class RayRadializer(PlaneMap):
    """Per-ray level matching: send z = rho e^{i theta} to the point of the
    same ray where H equals f1(rho).

    H(r, theta) must be strictly decreasing in r on (0, A) and agree with the
    strictly decreasing radial profile f1 outside the perturbed region; the
    pullback of H under this map is exactly the radial function f1. Where
    H(rho, theta) == f1(rho) holds to the last bit the point is returned
    unchanged, so the map is exactly the identity outside the perturbation.
    """

    variant = "ray_radializer"

    def __init__(self, H, f1, A, inner=0.0, feature_scale=None):
        self.H = H
        self.f1 = f1
        self.A = float(A)
        self.inner = float(inner)
        self.support = {"kind": "annulus", "center": (0.0, 0.0),
                        "inner": self.inner, "outer": self.A}
        self.feature_scale = feature_scale if feature_scale is not None else 0.1 * self.A

    def apply(self, x, y):
        xf, yf, shape = _flat_xy(x, y)
        rho = np.hypot(xf, yf)
        X, Y = xf.copy(), yf.copy()
        th = np.arctan2(yf, xf)
        inside = (rho > 0.0) & (rho < self.A)
        target = np.zeros_like(rho)
        target[inside] = np.asarray(self.f1(rho[inside]), dtype=float)
        hval = np.zeros_like(rho)
        hval[inside] = np.asarray(self.H(rho[inside], th[inside]), dtype=float)
        m = inside & (hval != target)
        if np.any(m):
            tt, tth = target[m], th[m]
            r = bisect_monotone(lambda r_: tt - np.asarray(self.H(r_, tth), dtype=float),
                                np.zeros_like(tt), np.full_like(tt, self.A), tol=1e-15)
            ratio = r / rho[m]
            X[m] = xf[m] * ratio
            Y[m] = yf[m] * ratio
        return X.reshape(shape), Y.reshape(shape)

    def apply_inverse(self, x, y):
        xf, yf, shape = _flat_xy(x, y)
        r = np.hypot(xf, yf)
        X, Y = xf.copy(), yf.copy()
        th = np.arctan2(yf, xf)
        inside = (r > 0.0) & (r < self.A)
        hval = np.zeros_like(r)
        hval[inside] = np.asarray(self.H(r[inside], th[inside]), dtype=float)
        fval = np.zeros_like(r)
        fval[inside] = np.asarray(self.f1(r[inside]), dtype=float)
        m = inside & (hval != fval)
        if np.any(m):
            tt = hval[m]
            rho = bisect_monotone(lambda p: tt - np.asarray(self.f1(p), dtype=float),
                                  np.zeros_like(tt), np.full_like(tt, self.A), tol=1e-15)
            ratio = rho / r[m]
            X[m] = xf[m] * ratio
            Y[m] = yf[m] * ratio
        return X.reshape(shape), Y.reshape(shape)

    def describe(self):
        nr, ns = 513, 256
        rg = np.linspace(0.0, self.A, nr)[1:]
        sg = np.linspace(-math.pi, math.pi, ns, endpoint=False)
        Hv = np.asarray(self.H(rg[:, None], sg[None, :]))
        return {
            "variant": "ray_radializer",
            "A": self.A,
            "inner": self.inner,
            "H_r": [float(v) for v in rg],
            "H_s": [float(v) for v in sg],
            "H": [[float(v) for v in row] for row in Hv],
            "f1": _profile_table(self.f1 if not hasattr(self.f1, "profile")
                                 else self.f1.profile, 0.0, self.A),
        }


class NumericInverse(PlaneMap):
    """The inverse of another map, evaluated by swapping its directions."""

    variant = "numeric_inverse"

    def __init__(self, base):
        self.base = base
        self.support = base.support
        self.sample_box = base.sample_box
        self.area_preserving = base.area_preserving
        self.feature_scale = base.feature_scale
        self.has_exact_det = base.has_exact_det

    def apply(self, x, y):
        return self.base.apply_inverse(x, y)

    def apply_inverse(self, x, y):
        return self.base.apply(x, y)

    def inverse(self):
        return self.base

    def det(self, x, y):
        bx, by = self.base.apply_inverse(x, y)
        return 1.0 / self.base.det(bx, by)

    def describe(self):
        return {"variant": "numeric_inverse", "of": self.base.describe()}


# ---------------------------------------------------------------------------
# composition


class MapChain(PlaneMap):
    """Composition of plane maps, applied right to left.

    MapChain([f, g]) evaluates g first, then f, matching f o g. An empty
    chain is the identity. area_preserving may be asserted explicitly for
    chains whose determinant is 1 by construction even though individual
    members distort (conversion maps Psi o Lambda^{-1}).
    """

    variant = "chain"

    def __init__(self, maps, area_preserving=None):
        self.maps = list(maps)
        if area_preserving is None:
            area_preserving = all(m.area_preserving for m in self.maps)
        self.area_preserving = bool(area_preserving)
        self.has_exact_det = all(m.has_exact_det for m in self.maps)
        self.feature_scale = min([m.feature_scale for m in self.maps], default=1.0)
        self.support = self._hull_support()
        self.sample_box = self._hull_box()

    @classmethod
    def in_application_order(cls, maps, **kw):
        return cls(list(reversed(list(maps))), **kw)

    def _hull_box(self):
        boxes = [support_hull_box(m) for m in self.maps]
        if not boxes or any(b is None for b in boxes):
            return None
        xs = [b[0] for b in boxes]
        ys = [b[1] for b in boxes]
        return ((min(x[0] for x in xs), max(x[1] for x in xs)),
                (min(y[0] for y in ys), max(y[1] for y in ys)))

    def _hull_support(self):
        if not self.maps or any(m.support is None for m in self.maps):
            return None
        box = self._hull_box()
        return {"kind": "box", "x": box[0], "y": box[1]} if box else None

    def apply(self, x, y):
        X = np.asarray(x, dtype=float)
        Y = np.asarray(y, dtype=float)
        for m in reversed(self.maps):
            X, Y = m.apply(X, Y)
        return X, Y

    def apply_inverse(self, x, y):
        X = np.asarray(x, dtype=float)
        Y = np.asarray(y, dtype=float)
        for m in self.maps:
            X, Y = m.apply_inverse(X, Y)
        return X, Y

    def inverse(self):
        return MapChain([m.inverse() for m in reversed(self.maps)],
                        area_preserving=self.area_preserving)

    def det(self, x, y):
        X = np.asarray(x, dtype=float)
        Y = np.asarray(y, dtype=float)
        D = np.ones(np.broadcast_shapes(X.shape, Y.shape))
        for m in reversed(self.maps):
            D = D * m.det(X, Y)
            X, Y = m.apply(X, Y)
        return D

    def describe(self):
        return {"variant": "chain", "area_preserving": self.area_preserving,
                "maps": [m.describe() for m in self.maps]}


def compose(*maps):
    """Flatten maps (and chains) into one chain, composition order."""
    flat = []
    for m in maps:
        if isinstance(m, MapChain):
            flat.extend(m.maps)
        else:
            flat.append(m)
    return MapChain(flat)


def inverse(m):
    return m.inverse()


# ---------------------------------------------------------------------------
# product maps and the gated cube swap (maps of R^{2n})


class ProductMap:
    """Factor-wise map of R^{2n}: factor i acts on coordinates (2i, 2i+1)."""

    variant = "product"

    def __init__(self, factors):
        self.factors = list(factors)
        self.n = len(self.factors)
        self.area_preserving = all(f.area_preserving for f in self.factors)

    def _run(self, Z, forward):
        Z = np.asarray(Z, dtype=float)
        single = Z.ndim == 1
        Z = np.atleast_2d(Z).astype(float).copy()
        for i, f in enumerate(self.factors):
            fn = f.apply if forward else f.apply_inverse
            X, Y = fn(Z[:, 2 * i], Z[:, 2 * i + 1])
            Z[:, 2 * i], Z[:, 2 * i + 1] = X, Y
        return Z[0] if single else Z

    def apply(self, Z):
        return self._run(Z, True)

    def apply_inverse(self, Z):
        return self._run(Z, False)

    def inverse(self):
        return ProductMap([f.inverse() for f in self.factors])

    def vol_det(self, Z):
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        D = np.ones(Z.shape[0])
        for i, f in enumerate(self.factors):
            D = D * f.det(Z[:, 2 * i], Z[:, 2 * i + 1])
        return D

    def describe(self):
        return {"variant": "product", "factors": [f.describe() for f in self.factors]}


class GatedSwap:
    """Exchange of two cubes of an epsilon-grid in R^{2n}.

    The two grid cubes differ only in plane k, offset by 4 eps along one
    coordinate. In plane k the exchange is a closed chain of cutoff
    half-turn rotations (a two-lane bypass inside the rectangle free of
    other grid cubes); in every other plane a plateau gate scales all
    rotation angles: gamma = 1 on the cubes' columns, gamma = 0 two cells
    away. Scaling the angles keeps each rotation an exact twist, so the
    full volume Jacobian is exactly 1 (block-triangular with an
    area-preserving diagonal block), and every grid cube sees either the
    exact swap translation or the exact identity.
    """

    variant = "gated_swap"
    area_preserving = True

    def __init__(self, vp, vpp, eps, rotations, k):
        self.vp = np.asarray(vp, dtype=float)
        self.vpp = np.asarray(vpp, dtype=float)
        self.eps = float(eps)
        self.rotations = list(rotations)   # application order
        self.k = int(k)
        self.n = self.vp.size // 2
        self.gate = plateau(-2.0 * self.eps, -self.eps, self.eps, 2.0 * self.eps)
        self.feature_scale = self.eps

    def gamma(self, Z):
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        g = np.ones(Z.shape[0])
        for j in range(self.n):
            if j == self.k:
                continue
            g = g * self.gate(Z[:, 2 * j] - self.vp[2 * j])
            g = g * self.gate(Z[:, 2 * j + 1] - self.vp[2 * j + 1])
        return g

    def _run(self, Z, forward):
        Z = np.asarray(Z, dtype=float)
        single = Z.ndim == 1
        Z = np.atleast_2d(Z).astype(float).copy()
        g = self.gamma(Z)
        X, Y = Z[:, 2 * self.k], Z[:, 2 * self.k + 1]
        rots = self.rotations if forward else reversed(self.rotations)
        for rot in rots:
            if forward:
                X, Y = rot.apply(X, Y, scale=g)
            else:
                X, Y = rot.apply_inverse(X, Y, scale=g)
        Z[:, 2 * self.k], Z[:, 2 * self.k + 1] = X, Y
        return Z[0] if single else Z

    def apply(self, Z):
        return self._run(Z, True)

    def apply_inverse(self, Z):
        return self._run(Z, False)

    def vol_det(self, Z):
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        return np.ones(Z.shape[0])

    def describe(self):
        return {
            "variant": "gated_swap",
            "vp": [float(v) for v in self.vp],
            "vpp": [float(v) for v in self.vpp],
            "eps": self.eps,
            "k": self.k,
            "rotations": [r.describe() for r in self.rotations],
        }


# ---------------------------------------------------------------------------
# constructors


def cutoff_rotation(A, theta, L, A_outer=None, center=(0.0, 0.0)):
    """Rotation by theta on D_A, identity outside D_{A_outer}, A_outer < L."""
    if A >= L:
        raise MapError(f"rotation disc radius {A} must be below the box radius {L}")
    if A_outer is None:
        A_outer = 0.5 * (A + L)
    if not (A < A_outer < L):
        raise MapError(f"need A < A_outer < L, got {A}, {A_outer}, {L}")
    if theta == 0.0:
        return IdentityMap()
    return CutoffRotation(theta, A, A_outer, center=center)


def _theta_total(G, r, n_theta=2048):
    """int_0^{2pi} G(r cos s, r sin s) ds by the periodic trapezoid rule."""
    r = np.asarray(r, dtype=float)
    s = np.linspace(0.0, TWO_PI, n_theta, endpoint=False)
    pts = r[..., None]
    vals = np.asarray(G(pts * np.cos(s), pts * np.sin(s)), dtype=float)
    return vals.mean(axis=-1) * TWO_PI


def reparametrize(G, a, A, L, tol_total=1e-8, n_theta=512, n_anchor=1025):
    """Map Lambda with det D(Lambda) = G, circles to circles, on the annulus.

    G is a positive density (vectorized callable of x, y), equal to 1
    outside the annulus (a, A), with int G dA = pi L^2 over the disc D_L.
    Lambda = shear o radial: the radial factor sends S_r to the circle whose
    disc has mass S(r) = int_{D_r} G dA; the shear redistributes the angle
    with the normalized cumulative of G along the pre-image circle. The
    pushforward factor in the shear density cancels in the normalization, so
    the determinant identity holds pointwise up to quadrature noise.
    """
    from .profiles import CumulativeProfile

    def q(r):
        return _theta_total(G, r, n_theta=n_theta)

    total = gauss_integrate(lambda r: q(r) * r, 0.0, L, order=64, pieces=16)
    target = math.pi * L ** 2
    if abs(total - target) > tol_total * target:
        raise MapError(f"total mass {total} differs from pi L^2 = {target}")

    rg = np.linspace(1e-6 * L, 0.999 * L, 97)
    sg = np.linspace(0.0, TWO_PI, 64, endpoint=False)
    gv = np.asarray(G(rg[:, None] * np.cos(sg), rg[:, None] * np.sin(sg)))
    if np.min(gv) <= 0.0:
        raise MapError(f"density must be positive, min sample {np.min(gv)}")

    mass_integrand = FuncProfile(lambda r: q(r) * r)
    raw = CumulativeProfile(mass_integrand, a, A, f0=math.pi * a ** 2,
                            n=n_anchor, order=16)
    # remove the quadrature-level mass defect with a bump so S(A) = pi A^2
    # exactly and the radial factor is seamless at the outer edge
    defect = raw(A) - math.pi * A ** 2
    mid, half = 0.5 * (a + A), 0.5 * (A - a)
    bump = as_profile(f"bump01((x1 - {mid}) / {half})")
    bump_cum = CumulativeProfile(bump, a, A, n=513, order=24)

    def S_deriv(r):
        r = np.asarray(r, dtype=float)
        return q(r) * r - (defect / bump_cum(A)) * bump(r)

    # cache the (expensive) exact cumulative on a dense spline; the nodes
    # carry the exact endpoint values pi a^2 and pi A^2, and the determinant
    # keeps using the exact integrand
    rg = np.linspace(a, A, 2049)
    S = SplineProfile(rg, raw(rg) - (defect / bump_cum(A)) * bump_cum(rg))

    d1 = RadialReparam(S, a, A, S_deriv=S_deriv)

    def dens(r, s):
        return np.asarray(G(r * np.cos(s), r * np.sin(s)), dtype=float)

    d2 = AngularShear(a, A, dens, radius_map=d1.radial_inverse)
    lam = MapChain([d2, d1])
    lam.density = G
    lam.mass_profile = S
    lam.delta1, lam.delta2 = d1, d2
    return lam


def circle_mass(m, r, n=4096):
    """Area enclosed by the image of the circle of radius r (Green's theorem).

    The image curve is sampled at n uniform angles and differentiated
    spectrally, so smooth maps give near machine-accurate areas.
    """
    s = np.linspace(0.0, TWO_PI, n, endpoint=False)
    X, Y = m.apply(r * np.cos(s), r * np.sin(s))
    k = np.fft.fftfreq(n, d=1.0 / n) * 1j
    Xp = np.real(np.fft.ifft(k * np.fft.fft(X)))
    Yp = np.real(np.fft.ifft(k * np.fft.fft(Y)))
    return 0.5 * float(np.mean(X * Yp - Y * Xp)) * TWO_PI


def to_area_preserving(psi, a, A, L, det_fn=None, n_radii=64, tol_circle=1e-6,
                       reparam=None):
    """Convert a disc-image-preserving map to an area-preserving one.

    psi must map each disc D_r onto a region of area pi r^2 (checked at
    n_radii radii via Green's theorem). The result is the chain
    psi o Lambda^{-1} with Lambda = reparametrize(det D(psi)); its Jacobian
    is 1 pointwise by cancellation, and psi o Lambda^{-1}(D_r) = psi(D_r).
    reparam may supply a prebuilt Lambda whose determinant equals det D(psi)
    by construction (closed-form angular shears skip the quadrature build).
    """
    radii = np.linspace(a, A, n_radii)
    resid = 0.0
    for r in radii:
        resid = max(resid, abs(circle_mass(psi, r) / (math.pi * r ** 2) - 1.0))
    if resid > tol_circle:
        raise MapError(f"disc mass condition fails: residual {resid}")
    if reparam is not None:
        lam = reparam
    else:
        G = det_fn if det_fn is not None else (lambda x, y: psi.det(x, y))
        lam = reparametrize(G, a, A, L)
    phi = MapChain([psi, lam.inverse()], area_preserving=True)
    phi.circle_residual = resid
    phi.reparam = lam
    return phi


# ---------------------------------------------------------------------------
# translations from paired half-turn rotations, and the cube swap


def _plan_hops(rect, offset, corridor, taper_frac=0.25):
    """Rotation pairs realizing the translation of rect by offset.

    Each hop reflects the rectangle through its center (half-turn about
    c1) and back through the advanced center (half-turn about c1 + hop/2):
    the composite translates the rigid zone by hop exactly. The first
    rotation of a hop needs a disc of radius rho + taper; the second,
    centered mid-hop, needs rho + hop/2 + taper, which along the motion
    never reaches past the endpoint discs, so only the clearance
    perpendicular to the motion limits the hop length while the endpoint
    clearance limits the taper. Returns the rotations in application order.
    """
    (x0, x1), (y0, y1) = rect
    off = np.asarray(offset, dtype=float)
    dist = float(np.hypot(off[0], off[1]))
    if dist == 0.0:
        return []
    c0 = np.array([0.5 * (x0 + x1), 0.5 * (y0 + y1)])
    c1 = c0 + off
    rho = float(np.hypot(0.5 * (x1 - x0), 0.5 * (y1 - y0)))
    e = off / dist
    (X0, X1), (Y0, Y1) = corridor
    # per corridor face: inward distance at both path endpoints and the
    # motion component toward the face (+1 straight at it, -1 straight away)
    faces = [
        (c0[0] - X0, c1[0] - X0, -e[0]),
        (X1 - c0[0], X1 - c1[0], e[0]),
        (c0[1] - Y0, c1[1] - Y0, -e[1]),
        (Y1 - c0[1], Y1 - c1[1], e[1]),
    ]
    slack = min(min(d0, d1) for d0, d1, _ in faces) - rho
    if slack <= 0.0:
        raise MapError(f"corridor too narrow: clearance {slack + rho} vs rectangle radius {rho}")
    taper = taper_frac * slack
    # mid-hop discs sit at c0 + (i + 1/2) hop; face distance there is
    # d0 - (hop/2) g shrinking toward... solve d >= rho + hop/2 + taper at
    # the extreme mid-disc centers on each side of the path
    hop_max = dist
    for d0, d1, g in faces:
        if 1.0 + g > 1e-12:
            hop_max = min(hop_max, 2.0 * (d0 - rho - taper) / (1.0 + g))
        if 1.0 - g > 1e-12:
            hop_max = min(hop_max, 2.0 * (d1 - rho - taper) / (1.0 - g))
    if hop_max <= 0.0:
        raise MapError("no room for the rotation taper inside the corridor")
    k = max(1, int(math.ceil(dist / hop_max - 1e-12)))
    hop = off / k
    half = dist / k / 2.0
    rots = []
    for i in range(k):
        a = c0 + i * hop
        b = a + 0.5 * hop
        rots.append(CutoffRotation(math.pi, rho, rho + taper, center=tuple(a)))
        rots.append(CutoffRotation(math.pi, rho + half, rho + half + taper, center=tuple(b)))
    return rots


def _box_contains(outer, inner):
    (X0, X1), (Y0, Y1) = outer
    (x0, x1), (y0, y1) = inner
    return X0 <= x0 and x1 <= X1 and Y0 <= y0 and y1 <= Y1


def translation_flow(rect, target_offset, corridor, taper_frac=0.25):
    """Translation by target_offset on rect, identity outside corridor.

    Realized as a chain of cutoff half-turn rotations about centers along
    the straight path, each of which is an exact twist; the rectangle's
    points are translated by exact arithmetic, and every rotation disc
    stays inside the corridor.
    """
    (x0, x1), (y0, y1) = rect
    off = np.asarray(target_offset, dtype=float)
    shifted = ((x0 + off[0], x1 + off[0]), (y0 + off[1], y1 + off[1]))
    if not (_box_contains(corridor, rect) and _box_contains(corridor, shifted)):
        raise MapError("rect (or its translate) leaves the corridor")
    rots = _plan_hops(rect, off, corridor, taper_frac=taper_frac)
    chain = MapChain.in_application_order(rots, area_preserving=True)
    chain.support = {"kind": "box", "x": tuple(corridor[0]), "y": tuple(corridor[1])}
    chain.sample_box = tuple(map(tuple, corridor))
    return chain


# two-lane bypass geometry for the cube swap, in units of eps relative to
# the first cube's center, with the partner cube at (+4, 0). Corridors keep
# every rotation disc clear of the other row-0 cubes (edges at |t| = 3, t = 7)
# and of the rows above and below (edges at |u| = 3) by a 0.02 margin, and
# clear of the parked partner cube's lane face by the same margin. The lane
# depth 4/3 balances the two binding gaps of the long passes: lane to wall
# (3 - l) against lane to parked cube (2l - 1), so the tapers come out as
# wide as the lattice permits. Vertical legs have generous perpendicular
# room and run as a single hop with a wide taper (frac 0.75 of the slack).
_SWAP_LANE = 4.0 / 3.0
_SWAP_PHASES = [
    # (rect center, offset, corridor, taper_frac) per phase
    ((0.0, 0.0), (0.0, _SWAP_LANE), ((-2.98, 2.98), (-2.98, 2.98)), 0.75),
    ((4.0, 0.0), (0.0, -_SWAP_LANE), ((1.02, 6.98), (-2.98, 2.98)), 0.75),
    ((0.0, _SWAP_LANE), (4.0, 0.0),
     ((-2.98, 6.98), (1.02 - _SWAP_LANE, 2.98)), 0.5),
    ((4.0, -_SWAP_LANE), (-4.0, 0.0),
     ((-2.98, 6.98), (-2.98, _SWAP_LANE - 1.02)), 0.5),
    ((4.0, _SWAP_LANE), (0.0, -_SWAP_LANE), ((1.02, 6.98), (-2.98, 2.98)), 0.75),
    ((0.0, -_SWAP_LANE), (0.0, _SWAP_LANE), ((-2.98, 2.98), (-2.98, 2.98)), 0.75),
]


def grid_swap(vp, vpp, eps, dim):
    """Volume-preserving exchange of the grid cubes at vp and vpp.

    vp and vpp must be neighboring cube centers: equal in all coordinates
    but one, where they differ by 4 eps. Returns a GatedSwap; see its
    docstring for the exactness guarantees.
    """
    vp = np.asarray(vp, dtype=float)
    vpp = np.asarray(vpp, dtype=float)
    if dim % 2 or vp.size != dim or vpp.size != dim:
        raise MapError("dim must be 2n and match the point length")
    diff = vpp - vp
    nz = np.nonzero(np.abs(diff) > 1e-12 * eps)[0]
    if len(nz) != 1 or abs(abs(diff[nz[0]]) - 4.0 * eps) > 1e-9 * eps:
        raise MapError("cubes must be neighbors: one coordinate apart by 4 eps")
    c = int(nz[0])
    k, axis = divmod(c, 2)
    sign = 1.0 if diff[c] > 0 else -1.0
    base = np.array([vp[2 * k], vp[2 * k + 1]])

    def to_abs(t, u):
        rel = (sign * t, u) if axis == 0 else (u, sign * t)
        return base + eps * np.asarray(rel)

    rots = []
    for (ct, cu), (ot, ou), ((t0, t1), (u0, u1)), frac in _SWAP_PHASES:
        center = to_abs(ct, cu)
        rect = ((center[0] - eps, center[0] + eps), (center[1] - eps, center[1] + eps))
        p0 = to_abs(t0, u0)
        p1 = to_abs(t1, u1)
        corridor = ((min(p0[0], p1[0]), max(p0[0], p1[0])),
                    (min(p0[1], p1[1]), max(p0[1], p1[1])))
        off_abs = to_abs(ot, ou) - base
        chain = translation_flow(rect, off_abs, corridor, taper_frac=frac)
        rots.extend(reversed(chain.maps))
    return GatedSwap(vp, vpp, eps, rots, k)


# ---------------------------------------------------------------------------
# verification


def quasirandom_points(box, n, seed=0, dim=None):
    from scipy.stats import qmc

    if dim is None:
        dim = len(box)
    sampler = qmc.Halton(d=dim, scramble=True, seed=seed)
    u = sampler.random(n)
    lo = np.array([b[0] for b in box])
    hi = np.array([b[1] for b in box])
    return lo + u * (hi - lo)


def jacobian_check(m, samples=10_000, box=None, seed=0, target=None, mode="auto",
                   h=None, interior_margin=None):
    """Max |det D(map) - target| over quasi-random interior samples.

    target defaults to 1 (area preservation); pass a callable G(x, y) to
    check a prescribed density. mode "auto" uses the map's exact determinant
    when it has one, "fd" forces the order-4 finite-difference oracle.
    Raises MapError with the location if a sampled Jacobian is degenerate.
    """
    if box is None:
        box = support_hull_box(m)
    if box is None:
        raise MapError("no sampling box: pass box= for maps without support")
    if h is None:
        h = 4e-4 * m.feature_scale
    if interior_margin is None:
        interior_margin = 2.5 * h
    (x0, x1), (y0, y1) = box
    mx = min(interior_margin, 0.25 * (x1 - x0))
    my = min(interior_margin, 0.25 * (y1 - y0))
    pts = quasirandom_points(((x0 + mx, x1 - mx), (y0 + my, y1 - my)),
                             samples, seed=seed)
    x, y = pts[:, 0], pts[:, 1]
    if mode == "auto" and m.has_exact_det:
        D = np.asarray(m.det(x, y), dtype=float)
    else:
        D = fd_det(m.apply, x, y, h)
    bad = np.abs(D) < 1e-8
    if np.any(bad):
        i = int(np.argmax(bad))
        raise MapError(f"degenerate Jacobian {D[i]} at ({x[i]}, {y[i]})")
    tgt = 1.0 if target is None else np.asarray(target(x, y), dtype=float)
    return float(np.max(np.abs(D - tgt)))


def jacobian_check_nd(m, samples=2000, box=None, seed=0, h=None):
    """FD volume-Jacobian residual |det - 1| for a map of R^{2n}."""
    if box is None:
        raise MapError("pass box=[(lo,hi)] * 2n")
    if h is None:
        h = 1e-3 * getattr(m, "feature_scale", 1.0)
    Z = quasirandom_points(box, samples, seed=seed, dim=len(box))
    D = fd_vol_det(m.apply, Z, h)
    return float(np.max(np.abs(D - 1.0)))


# ---------------------------------------------------------------------------
# serialization


def map_to_json(m):
    return json.dumps(m.describe())


def _grid_interp2(xg, yg, vals, wrap_y=None):
    from scipy.interpolate import RegularGridInterpolator

    xg = np.asarray(xg, dtype=float)
    yg = np.asarray(yg, dtype=float)
    vals = np.asarray(vals, dtype=float)
    if wrap_y is not None:
        pad = 3
        yg = np.concatenate([yg, yg[:pad] + wrap_y])
        vals = np.concatenate([vals, vals[:, :pad]], axis=1)
    rgi = RegularGridInterpolator((xg, yg), vals, method="cubic",
                                  bounds_error=False, fill_value=None)

    def fn(a, b):
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        shape = np.broadcast_shapes(a.shape, b.shape)
        pts = np.stack([np.broadcast_to(a, shape).ravel(),
                        np.broadcast_to(b, shape).ravel()], axis=-1)
        return rgi(pts).reshape(shape)

    return fn


def _build_map(d):
    v = d["variant"]
    if v == "identity":
        return IdentityMap()
    if v == "cutoff_rotation":
        return CutoffRotation(d["angle"], d["rigid"], d["outer"], center=tuple(d["center"]))
    if v == "radial_reparam":
        return RadialReparam(_profile_from_table(d["S"], monotone=True), d["a"], d["A"])
    if v == "angular_shear":
        if "amp_r" in d:
            g = SplineProfile(np.asarray(d["amp_r"]), np.asarray(d["amp_g"]))
            return AngularShear(
                d["a"], d["A"],
                lambda r, s: 1.0 + g(r) * np.cos(s),
                cum=lambda r, th: th + g(r) * np.sin(th),
                amp=(d["amp_r"], d["amp_g"]),
            )
        dens = _grid_interp2(d["dens_r"], d["dens_s"], d["dens"], wrap_y=TWO_PI)
        return AngularShear(d["a"], d["A"], lambda r, s: dens(r, np.mod(s, TWO_PI)))
    if v == "moment_map":
        return MomentMap(_profile_from_table(d["u"], monotone=True),
                         _profile_from_table(d["v"], monotone=True), d["a"], d["A"])
    if v == "polar_rect":
        return PolarRect(d["kappa"], d["a"], tuple(map(tuple, d["rect"])),
                         theta_off=d["theta_off"])
    if v == "graph_x":
        strip = tuple(map(tuple, d["strip"]))
        W = np.asarray(d["w"])
        gx = np.linspace(strip[0][0], strip[0][1], W.shape[0])
        gy = np.linspace(strip[1][0], strip[1][1], W.shape[1])
        return GraphX(_grid_interp2(gx, gy, W), strip, axis=d["axis"],
                      area_preserving=d["area_preserving"])
    if v == "ray_radializer":
        H = _grid_interp2(d["H_r"], d["H_s"], d["H"], wrap_y=TWO_PI)
        f1 = _profile_from_table(d["f1"])
        return RayRadializer(lambda r, s: H(r, np.mod(s + math.pi, TWO_PI) - math.pi),
                             f1, d["A"], inner=d["inner"])
    if v == "numeric_inverse":
        return NumericInverse(_build_map(d["of"]))
    if v == "chain":
        return MapChain([_build_map(x) for x in d["maps"]],
                        area_preserving=d["area_preserving"])
    if v == "product":
        return ProductMap([_build_map(x) for x in d["factors"]])
    if v == "gated_swap":
        return GatedSwap(d["vp"], d["vpp"], d["eps"],
                         [_build_map(x) for x in d["rotations"]], d["k"])
    raise MapError(f"unknown map variant {v!r}")


def map_from_json(s):
    """Rebuild a map from its JSON description.

    Closed-form variants (rotations, sector maps, chains, swaps) rebuild
    exactly; profile- and field-backed variants rebuild from dense sample
    tables with spline accuracy, which is what a replayed witness needs.
    """
    return _build_map(json.loads(s))
