"""Scalar fields on grids and the analytic field algebra.

Closed-form sources (expression functions, radial profiles, products, sums,
pullbacks by plane maps) are first-class: a grid is a rendering of a field,
not the source of truth. Norm and support queries run on a declared grid,
derivatives are exact whenever the source supports them and fall back to
order-4 finite differences otherwise.
"""

from __future__ import annotations

import base64
import json
import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from ._num import gauss_integrate
from .expr import ExprFn, parse_expr
from .profiles import Profile, SplineProfile, as_profile

__all__ = [
    "GridSpec",
    "ScalarField",
    "RadialProfile",
    "FieldND",
    "ExprField",
    "LambdaField",
    "SumField",
    "ProductField2",
    "ProductFieldND",
    "RadialField",
    "TranslateScaleField",
    "PolyField",
    "PullbackField",
    "cknorm",
    "supnorm",
    "support_box",
    "angular_average",
    "taylor_poly",
    "pullback",
    "save_field",
    "load_field",
]


# ---------------------------------------------------------------------------
# grids


@dataclass(frozen=True)
class GridSpec:
    """Uniform rectangular grid over a box, open ('box') or periodic ('torus')."""

    dim: int
    box: tuple
    resolution: tuple
    topology: str = "box"

    def __post_init__(self):
        if len(self.box) != self.dim or len(self.resolution) != self.dim:
            raise ValueError("box and resolution must have one entry per axis")
        if self.topology not in ("box", "torus"):
            raise ValueError("topology must be 'box' or 'torus'")

    @staticmethod
    def square(halfwidth, n, dim=2, topology="box"):
        return GridSpec(dim, tuple((-halfwidth, halfwidth) for _ in range(dim)), tuple(n for _ in range(dim)), topology)

    def axes(self):
        out = []
        for (lo, hi), n in zip(self.box, self.resolution):
            if self.topology == "torus":
                out.append(np.linspace(lo, hi, n, endpoint=False))
            else:
                out.append(np.linspace(lo, hi, n))
        return out

    def spacing(self):
        return tuple(
            (hi - lo) / (n if self.topology == "torus" else n - 1)
            for (lo, hi), n in zip(self.box, self.resolution)
        )

    def meshgrid(self):
        return np.meshgrid(*self.axes(), indexing="ij")

    def cell_volume(self):
        return float(np.prod(self.spacing()))


# ---------------------------------------------------------------------------
# analytic fields


class FieldND:
    """Callable on coordinate arrays; partial() exact where available."""

    nvars = None
    support_box = None  # tuple of (lo, hi) per axis, or None

    def __call__(self, *coords):
        raise NotImplementedError

    def partial(self, axis, order=1):
        raise NotImplementedError("no exact derivative for this field")

    def has_exact_partials(self):
        return True


class ExprField(FieldND):
    def __init__(self, fn, support_box=None):
        if isinstance(fn, str):
            fn = parse_expr(fn)
        self.fn = fn
        self.nvars = fn.nvars
        self.support_box = support_box

    def __call__(self, *coords):
        return self.fn(*coords)

    def partial(self, axis, order=1):
        return ExprField(self.fn.partial(axis, order), support_box=self.support_box)


class LambdaField(FieldND):
    """Ad-hoc field from a vectorized callable; optional partial factory."""

    def __init__(self, fn, nvars, partial_factory=None, support_box=None):
        self.fn = fn
        self.nvars = nvars
        self._partial_factory = partial_factory
        self.support_box = support_box

    def __call__(self, *coords):
        return self.fn(*coords)

    def partial(self, axis, order=1):
        if self._partial_factory is None:
            raise NotImplementedError("no exact derivative for this field")
        f = self
        for _ in range(order):
            f = f._partial_factory(f, axis)
        return f

    def has_exact_partials(self):
        return self._partial_factory is not None


class SumField(FieldND):
    def __init__(self, fields, coeffs=None):
        self.fields = list(fields)
        self.coeffs = [1.0] * len(self.fields) if coeffs is None else [float(c) for c in coeffs]
        self.nvars = self.fields[0].nvars
        boxes = [f.support_box for f in self.fields]
        if boxes and all(b is not None for b in boxes):
            self.support_box = tuple(
                (min(b[ax][0] for b in boxes), max(b[ax][1] for b in boxes)) for ax in range(self.nvars)
            )

    def __call__(self, *coords):
        out = None
        for c, f in zip(self.coeffs, self.fields):
            term = c * f(*coords)
            out = term if out is None else out + term
        return out

    def partial(self, axis, order=1):
        return SumField([f.partial(axis, order) for f in self.fields], self.coeffs)

    def has_exact_partials(self):
        return all(f.has_exact_partials() for f in self.fields)


class ProductField2(FieldND):
    """Separable 2-D field u(x) v(y) from two 1-D profiles."""

    nvars = 2

    def __init__(self, u, v):
        self.u = as_profile(u)
        self.v = as_profile(v)
        if self.u.support is not None and self.v.support is not None:
            self.support_box = (tuple(self.u.support), tuple(self.v.support))

    def __call__(self, x, y):
        return self.u(np.asarray(x, dtype=float)) * self.v(np.asarray(y, dtype=float))

    def partial(self, axis, order=1):
        if axis == 0:
            return ProductField2(self.u.deriv(order), self.v)
        return ProductField2(self.u, self.v.deriv(order))


class ProductFieldND(FieldND):
    """Product over symplectic planes: f(z) = prod_k g_k(q_k, p_k)."""

    def __init__(self, factors):
        self.factors = list(factors)
        self.nvars = 2 * len(self.factors)
        boxes = [g.support_box for g in self.factors]
        if all(b is not None for b in boxes):
            self.support_box = tuple(b[i] for b in boxes for i in range(2))

    def __call__(self, *coords):
        out = None
        for k, g in enumerate(self.factors):
            term = g(coords[2 * k], coords[2 * k + 1])
            out = term if out is None else out * term
        return out

    def partial(self, axis, order=1):
        k, i = divmod(axis, 2)
        new = list(self.factors)
        new[k] = new[k].partial(i, order)
        return ProductFieldND(new)

    def has_exact_partials(self):
        return all(g.has_exact_partials() for g in self.factors)


class RadialField(FieldND):
    """2-D field p(|z - center|) from a radial profile."""

    nvars = 2

    def __init__(self, profile, center=(0.0, 0.0)):
        self.profile = as_profile(profile)
        self.center = (float(center[0]), float(center[1]))
        if self.profile.support is not None:
            r1 = self.profile.support[1]
            cx, cy = self.center
            self.support_box = ((cx - r1, cx + r1), (cy - r1, cy + r1))

    def radius(self, x, y):
        return np.hypot(np.asarray(x, dtype=float) - self.center[0], np.asarray(y, dtype=float) - self.center[1])

    def __call__(self, x, y):
        return self.profile(self.radius(x, y))

    def partial(self, axis, order=1):
        if order == 0:
            return self
        # d/dx p(r) = (x/r) p'(r); the ratio p'(r)/r extends by p''(0) at 0
        dp = self.profile.deriv(1)
        ddp0 = None

        def ratio(r):
            nonlocal ddp0
            r = np.asarray(r, dtype=float)
            out = np.empty(r.shape)
            m = r > 1e-9
            out[m] = dp(r[m]) / r[m]
            if np.any(~m):
                if ddp0 is None:
                    ddp0 = float(self.profile.deriv(2)(np.array([1e-7]))[0])
                out[~m] = ddp0
            return out

        def fn(x, y):
            dx = np.asarray(x, dtype=float) - self.center[0]
            dy = np.asarray(y, dtype=float) - self.center[1]
            r = np.hypot(dx, dy)
            component = dx if axis == 0 else dy
            return component * ratio(r)

        out = LambdaField(fn, 2, support_box=self.support_box)
        if order > 1:
            # higher Cartesian orders fall back to finite differences; radial
            # norms should be taken on the profile instead
            raise NotImplementedError("RadialField exact partials available to first order only")
        return out

    def has_exact_partials(self):
        return False  # only first order; norm code treats radial fields specially


class TranslateScaleField(FieldND):
    """f((x - v)/s) for a base field, per-axis shift and common scale."""

    def __init__(self, base, shift, scale=1.0):
        self.base = base
        self.shift = tuple(float(s) for s in shift)
        self.scale = float(scale)
        self.nvars = base.nvars
        if base.support_box is not None:
            self.support_box = tuple(
                (lo * self.scale + sh, hi * self.scale + sh)
                for (lo, hi), sh in zip(base.support_box, self.shift)
            )

    def __call__(self, *coords):
        mapped = [(np.asarray(c, dtype=float) - s) / self.scale for c, s in zip(coords, self.shift)]
        return self.base(*mapped)

    def partial(self, axis, order=1):
        inner = TranslateScaleField(self.base.partial(axis, order), self.shift, self.scale)
        return SumField([inner], [self.scale ** (-order)])

    def has_exact_partials(self):
        return self.base.has_exact_partials()


class PolyField(FieldND):
    """Polynomial sum_alpha c_alpha (x - center)^alpha with exact partials."""

    def __init__(self, coeffs, center, nvars):
        self.coeffs = {tuple(int(i) for i in a): float(c) for a, c in coeffs.items()}
        self.center = tuple(float(c) for c in center)
        self.nvars = nvars

    def __call__(self, *coords):
        coords = [np.asarray(c, dtype=float) - ctr for c, ctr in zip(coords, self.center)]
        out = np.zeros(np.broadcast(*coords).shape) if coords else 0.0
        for alpha, c in self.coeffs.items():
            term = c
            for ax, a in enumerate(alpha):
                if a:
                    term = term * coords[ax] ** a
            out = out + term
        return out

    def partial(self, axis, order=1):
        new = {}
        for alpha, c in self.coeffs.items():
            a = alpha[axis]
            if a >= order:
                fac = 1.0
                for j in range(order):
                    fac *= a - j
                na = list(alpha)
                na[axis] = a - order
                new[tuple(na)] = new.get(tuple(na), 0.0) + c * fac
        return PolyField(new, self.center, self.nvars)


class PullbackField(FieldND):
    """f composed with a plane map (or map chain): (Phi)^* f = f o Phi."""

    def __init__(self, base, plane_map, support_box=None):
        self.base = base
        self.map = plane_map
        self.nvars = base.nvars
        self.support_box = support_box

    def __call__(self, *coords):
        mapped = self.map.apply(*coords)
        return self.base(*mapped)

    def has_exact_partials(self):
        return False


# ---------------------------------------------------------------------------
# radial profiles with integral helpers


class RadialProfile:
    """Radial function on r >= 0 with a declared support [0, r1] or [r0, r1]."""

    def __init__(self, profile, support=None):
        self.profile = as_profile(profile)
        self.support = support if support is not None else self.profile.support

    def __call__(self, r):
        return self.profile(np.asarray(r, dtype=float))

    def deriv(self, k=1):
        return RadialProfile(self.profile.deriv(k), support=self.support)

    def field2d(self, center=(0.0, 0.0)):
        prof = self.profile
        if self.support is not None and prof.support is None:
            prof = _Supported(prof, self.support)
        return RadialField(prof, center=center)

    def disc_integral(self, r, order=64, pieces=8):
        """int_{D_r} p dA = 2 pi int_0^r p(s) s ds."""
        fn = lambda s: self.profile(s) * s
        return 2.0 * math.pi * gauss_integrate(fn, 0.0, r, order=order, pieces=pieces)

    def total_integral(self, order=64, pieces=16):
        hi = self.support[1] if self.support else 1.0
        return self.disc_integral(hi, order=order, pieces=pieces)

    def sup(self, n=4096):
        hi = self.support[1] if self.support else 1.0
        lo = self.support[0] if self.support else 0.0
        r = np.linspace(lo, hi, n)
        return float(np.max(np.abs(self(r))))


class _Supported(Profile):
    def __init__(self, base, support):
        self.base = base
        self.support = tuple(support)

    def __call__(self, x):
        return self.base(x)

    def deriv(self, k=1):
        return _Supported(self.base.deriv(k), self.support) if k else self


# ---------------------------------------------------------------------------
# grid container


class ScalarField:
    """A field rendered on a grid. source: FieldND or ndarray of samples."""

    def __init__(self, spec, source, derivative_mode=None):
        self.spec = spec
        self.source = source
        self._values = None
        if derivative_mode is None:
            derivative_mode = "exact" if isinstance(source, FieldND) and source.has_exact_partials() else "fd"
        self.derivative_mode = derivative_mode

    @property
    def values(self):
        if self._values is None:
            if isinstance(self.source, np.ndarray):
                if tuple(self.source.shape) != tuple(self.spec.resolution):
                    raise ValueError("sample array does not match grid resolution")
                self._values = self.source.astype(float)
            else:
                self._values = np.asarray(self.source(*self.spec.meshgrid()), dtype=float)
        return self._values

    def eval_at(self, *coords):
        if isinstance(self.source, FieldND):
            return self.source(*coords)
        return _grid_interp(self.spec, self.values, coords)

    def derivative(self, alpha):
        alpha = tuple(int(a) for a in alpha)
        if self.derivative_mode == "exact":
            src = self.source
            for ax, a in enumerate(alpha):
                if a:
                    src = src.partial(ax, a)
            return ScalarField(self.spec, src, derivative_mode="exact")
        vals = self.values
        for ax, a in enumerate(alpha):
            for _ in range(a):
                vals = _fd_axis(vals, self.spec.spacing()[ax], ax, self.spec.topology)
        return ScalarField(self.spec, vals, derivative_mode="fd")


def _grid_interp(spec, values, coords):
    from scipy.interpolate import RegularGridInterpolator

    interp = RegularGridInterpolator(spec.axes(), values, method="linear", bounds_error=False, fill_value=0.0)
    pts = np.stack([np.asarray(c, dtype=float).ravel() for c in coords], axis=-1)
    out = interp(pts)
    return out.reshape(np.asarray(coords[0]).shape)


def _fd_axis(vals, h, axis, topology):
    """Order-4 central difference along one axis."""

    def roll(k):
        return np.roll(vals, -k, axis=axis)

    out = (-roll(2) + 8 * roll(1) - 8 * roll(-1) + roll(-2)) / (12.0 * h)
    if topology == "box":
        # zero-extension is correct for compactly supported fields; edge cells
        # are recomputed with one-sided second-order stencils
        sl = [slice(None)] * vals.ndim
        for edge in range(2):
            sl[axis] = slice(0, 2) if edge == 0 else slice(-2, None)
            idx = tuple(sl)
            fwd = np.diff(vals, axis=axis, append=np.take(vals, [-1], axis=axis))
            out[idx] = np.take(fwd, [0, 1] if edge == 0 else [-2, -1], axis=axis) / h
    return out


# ---------------------------------------------------------------------------
# norm / support / averaging operations


def _iter_multi(nvars, kmax):
    if nvars == 0:
        yield ()
        return
    for head in range(kmax + 1):
        for rest in _iter_multi(nvars - 1, kmax - head):
            yield (head,) + rest


def supnorm(f, spec=None):
    """Sup of |f| sampled on its grid (or the provided spec)."""
    sf = f if isinstance(f, ScalarField) else ScalarField(spec, f)
    return float(np.max(np.abs(sf.values)))


def cknorm(f, k, spec=None):
    """max_{|alpha| <= k} sup |d^alpha f| on the grid."""
    sf = f if isinstance(f, ScalarField) else ScalarField(spec, f)
    best = 0.0
    for alpha in _iter_multi(sf.spec.dim, k):
        best = max(best, float(np.max(np.abs(sf.derivative(alpha).values))))
    return best


def support_box(f, spec=None, threshold=1e-14):
    """Smallest axis box containing {|f| > threshold * sup |f|}; None if zero."""
    sf = f if isinstance(f, ScalarField) else ScalarField(spec, f)
    vals = np.abs(sf.values)
    top = vals.max()
    if top == 0.0:
        return None
    mask = vals > threshold * top
    axes = sf.spec.axes()
    out = []
    for ax in range(sf.spec.dim):
        proj = mask.any(axis=tuple(i for i in range(sf.spec.dim) if i != ax))
        idx = np.nonzero(proj)[0]
        out.append((float(axes[ax][idx[0]]), float(axes[ax][idx[-1]])))
    return tuple(out)


def angular_average(f, rmax, n_r=2048, n_theta=1024, center=(0.0, 0.0)):
    """Angular mean of a 2-D field as a RadialProfile on [0, rmax].

    Uses the trapezoid rule over the periodic angle (spectrally accurate for
    smooth fields) on n_r radial nodes.
    """
    fn = f.eval_at if isinstance(f, ScalarField) else f
    r = np.linspace(0.0, rmax, n_r)
    theta = np.linspace(0.0, 2.0 * math.pi, n_theta, endpoint=False)
    rr, tt = np.meshgrid(r, theta, indexing="ij")
    vals = fn(center[0] + rr * np.cos(tt), center[1] + rr * np.sin(tt))
    avg = np.mean(vals, axis=1)
    return RadialProfile(SplineProfile(r, avg, support=(0.0, rmax)), support=(0.0, rmax))


def taylor_poly(f, center, order):
    """Taylor coefficients {alpha: d^alpha f(center)/alpha!} up to |alpha|<=order.

    f must have exact partials (ExprField / ExprFn / polynomial)."""
    if isinstance(f, ExprFn):
        f = ExprField(f)
    center = tuple(float(c) for c in center)
    pts = [np.array([c]) for c in center]
    out = {}
    for alpha in _iter_multi(f.nvars, order):
        g = f
        fac = 1.0
        for ax, a in enumerate(alpha):
            if a:
                g = g.partial(ax, a)
                fac *= math.factorial(a)
        out[alpha] = float(g(*pts)[0]) / fac
    return out


def taylor_field(coeffs, center, nvars):
    return PolyField(coeffs, center, nvars)


def pullback(f, plane_map, out_spec=None, support_box=None):
    """(Phi)^* f as a lazy field; rendered on out_spec when provided."""
    base = f.source if isinstance(f, ScalarField) else f
    if not isinstance(base, FieldND):
        base = LambdaField(f.eval_at, f.spec.dim)
    pb = PullbackField(base, plane_map, support_box=support_box)
    if out_spec is None:
        return pb
    return ScalarField(out_spec, pb)


# ---------------------------------------------------------------------------
# field files: JSON header + base64 row-major float64 payload


def save_field(path, sf):
    header = {
        "dim": sf.spec.dim,
        "box": [list(b) for b in sf.spec.box],
        "resolution": list(sf.spec.resolution),
        "topology": sf.spec.topology,
        "dtype": "float64",
        "order": "C",
    }
    payload = base64.b64encode(np.ascontiguousarray(sf.values, dtype="<f8").tobytes()).decode("ascii")
    with open(path, "w") as fh:
        json.dump({"header": header, "data": payload}, fh)


def load_field(path):
    with open(path) as fh:
        blob = json.load(fh)
    h = blob["header"]
    spec = GridSpec(h["dim"], tuple(tuple(b) for b in h["box"]), tuple(h["resolution"]), h["topology"])
    raw = base64.b64decode(blob["data"])
    vals = np.frombuffer(raw, dtype="<f8").reshape(spec.resolution).copy()
    return ScalarField(spec, vals)
