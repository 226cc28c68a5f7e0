"""Moment matching onto the oriented atom and discrete rotational averaging.

Two constructions turn radial data into atom representations.  The first
builds an area-preserving plane map phi whose pullback of the oriented atom
f0 has prescribed disc integrals: int_{D_r} (phi^* f0) w = int_{D_r} f w for
every radius, for any admissible radial profile f.  The second is the finite
rotational average P_N f(z) = (1/N) sum_k f(z e^{2 pi i k / N}), which fixes
radial functions and crushes angular harmonics; combining the two expands a
radial function into N pullbacks of f0 with explicit l1 coefficient mass.
"""

import math
from dataclasses import dataclass, field as dfield

import numpy as np

from ._num import gauss_integrate, gauss_nodes
from .diffeo import (AngularShear, MapChain, MomentMap, cutoff_rotation,
                     to_area_preserving)
from .field import FieldND, GridSpec, RadialField, RadialProfile, ScalarField
from .norms import Decomposition, Fan
from .profiles import (CumulativeProfile, ExprProfile, PiecewiseProfile,
                       ProductProfile, SplineProfile, SumProfile, as_profile,
                       dstep)

__all__ = [
    "AveragingError",
    "MomentDiffeo",
    "build_moment_diffeo",
    "disc_moments",
    "RotationAverage",
    "discrete_average",
    "expand_h",
]

TWO_PI = 2.0 * math.pi


class AveragingError(ValueError):
    """Precondition or residual failure in an averaging construction."""


# ---------------------------------------------------------------------------
# polar disc quadrature


def disc_moments(fn, radii, n_theta=256, order=12, r0=0.0):
    """Cumulative disc integrals int_{D_r} fn dA at increasing radii.

    Polar product quadrature: the periodic trapezoid rule in the angle
    (spectrally accurate for smooth fields) and one Gauss-Legendre panel in
    the radius between consecutive radii, starting from r0.  fn must accept
    coordinate arrays.
    """
    radii = np.asarray(radii, dtype=float)
    edges = np.concatenate([[float(r0)], radii])
    if np.any(np.diff(edges) <= 0.0):
        raise ValueError("radii must be strictly increasing above r0")
    nodes, weights = gauss_nodes(order)
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * (edges[1:] - edges[:-1])
    s = (mid[:, None] + half[:, None] * nodes[None, :]).ravel()
    w = (half[:, None] * weights[None, :]).ravel()
    theta = np.linspace(0.0, TWO_PI, n_theta, endpoint=False)
    vals = np.asarray(fn(s[:, None] * np.cos(theta)[None, :],
                         s[:, None] * np.sin(theta)[None, :]), dtype=float)
    ring = (TWO_PI / n_theta) * np.sum(vals, axis=1) * s * w
    return np.cumsum(np.sum(ring.reshape(len(radii), order), axis=1))


# ---------------------------------------------------------------------------
# the moment-matching diffeomorphism


@dataclass
class MomentDiffeo:
    """Area-preserving map phi with the disc moments of f built in.

    u, v are the transported disc-mass profiles (u = r^2 + m, v = r^2 - m
    with m the cumulative of s f(s)); psi is the per-ray rescale with
    R^2 = u mu + v nu, phi = psi composed with the inverse closed-form
    angular shear, and f the radial profile actually transported (the input
    minus a bump carrying its residual mean, reported as mean_correction).
    """

    u: object
    v: object
    psi: MomentMap
    phi: MapChain
    f: RadialProfile
    input_f: RadialProfile
    atoms: object
    mean_correction: float
    moment_residual: float
    circle_residual: float
    identity_residuals: dict = dfield(default_factory=dict)


def _pullback_f0(phi, atoms):
    def fn(x, y):
        X, Y = phi.apply(x, y)
        return atoms.f0(X, Y)

    return fn


def build_moment_diffeo(f, atoms, n_check=100, tol_moment=1e-6, n_theta=256,
                        order=12):
    """Moment-matching map for a radial profile on the atom annulus.

    f must satisfy sup |f| <= 1, vanish outside [a, A], and have plane
    integral below 1e-9 in magnitude.  The returned phi is area preserving,
    the identity outside the annulus, and satisfies
    int_{D_r} (phi^* f0) w = int_{D_r} f w within tol_moment at n_check
    radii (verified here by independent polar quadrature, not assumed).
    """
    a, A, L = atoms.a, atoms.A, atoms.L
    if not isinstance(f, RadialProfile):
        f = RadialProfile(as_profile(f), support=(a, A))

    rs = np.linspace(0.0, L, 4001)
    vals = f(rs)
    sup = float(np.max(np.abs(vals)))
    if sup > 1.0 + 1e-12:
        raise AveragingError(f"profile must stay within 1 in sup norm, measured {sup:.6g}")
    outside = (rs <= a) | (rs >= A)
    leak = float(np.max(np.abs(vals[outside])))
    if leak > 1e-12:
        raise AveragingError(f"profile must vanish off the annulus [{a:.6g}, {A:.6g}], leak {leak:.3e}")
    total = TWO_PI * gauss_integrate(lambda s: s * f(s), a, A, order=64, pieces=32)
    if abs(total) > 1e-9:
        raise AveragingError(f"profile must have zero plane integral, got {total:.3e}")

    # freeze the profile on a cubic spline over the annulus, masked to exact
    # zero outside, so downstream map evaluations cost the same no matter how
    # expensive the caller's profile is
    rg = np.linspace(a, A, 8193)
    beta = dstep(a, A)
    fs = PiecewiseProfile([a, A], [SplineProfile(rg, f(rg))])
    cs = PiecewiseProfile([a, A], [SplineProfile(rg, beta(rg) / rg)])
    # siphon the residual mean into a fixed interior bump; measuring both
    # masses through the same quadrature that defines the cumulative makes
    # the cumulative close at A to rounding, keeping the map seams flat
    x1 = ExprProfile("x1")
    mf = CumulativeProfile(ProductProfile(x1, fs), a, A, f0=0.0, n=2049, order=24)
    mc = CumulativeProfile(ProductProfile(x1, cs), a, A, f0=0.0, n=2049, order=24)
    delta = mf(A) / mc(A)
    ftil = RadialProfile(SumProfile([fs, cs], [1.0, -delta]), support=(a, A))
    q = ProductProfile(x1, ftil.profile)
    m = CumulativeProfile(q, a, A, f0=0.0, n=2049, order=24)
    r2 = ExprProfile("x1^2")
    u = SumProfile([r2, m], [1.0, 1.0])
    v = SumProfile([r2, m], [1.0, -1.0])

    rr = np.linspace(1e-5 * L, A, 3001)
    du, dv = u.deriv(1)(rr), v.deriv(1)(rr)
    floor = float(np.min(np.minimum(du, dv) / rr))
    if floor <= 0.0:
        raise AveragingError(f"u, v must be strictly increasing, slope floor {floor:.3e}")
    identity_residuals = {
        "sum_4r": float(np.max(np.abs(du + dv - 4.0 * rr))),
        "diff_2rf": float(np.max(np.abs(du - dv - 2.0 * rr * ftil(rr)))),
    }
    if max(identity_residuals.values()) > 1e-10:
        raise AveragingError(f"profile derivative identities fail: {identity_residuals}")

    psi = MomentMap(u, v, a, A)
    # det D(psi) = 1 + (f(r)/2) cos(theta): the conversion shear has the
    # closed-form angular cumulative theta + (f(r)/2) sin(theta)
    dens = lambda r, s: 1.0 + 0.5 * ftil(r) * np.cos(s)
    cum = lambda r, th: th + 0.5 * ftil(r) * np.sin(th)
    shear = AngularShear(a, A, dens, cum=cum, amp=(rg, 0.5 * ftil(rg)))
    phi = to_area_preserving(psi, a, A, L, reparam=shear)

    radii = np.linspace(a, A, n_check)
    lhs = disc_moments(_pullback_f0(phi, atoms), radii, n_theta=n_theta, order=order)
    rhs = TWO_PI * _radial_cumulative(f, radii)
    resid = float(np.max(np.abs(lhs - rhs)))
    if resid > tol_moment:
        raise AveragingError(f"disc-moment residual {resid:.3e} exceeds {tol_moment:.1e}")

    return MomentDiffeo(u=u, v=v, psi=psi, phi=phi, f=ftil, input_f=f,
                        atoms=atoms, mean_correction=delta,
                        moment_residual=resid,
                        circle_residual=phi.circle_residual,
                        identity_residuals=identity_residuals)


def _radial_cumulative(f, radii):
    """int_0^r s f(s) ds at each radius, one Gauss panel per gap."""
    edges = np.concatenate([[0.0], np.asarray(radii, dtype=float)])
    panel = gauss_integrate(lambda s: s * f(s), edges[:-1], edges[1:], order=24)
    return np.cumsum(panel)


# ---------------------------------------------------------------------------
# discrete rotational averaging


class RotationAverage(FieldND):
    """(1/N) sum_k f(z e^{2 pi i k/N}) as a lazy field.

    The rotations act on the argument, so every evaluation goes through the
    base field's own evaluator; no resampling or interpolation happens here.
    """

    nvars = 2

    def __init__(self, base, N):
        self.base = base
        self.N = int(N)
        if self.N < 1:
            raise ValueError("N must be a positive integer")
        ang = TWO_PI * np.arange(self.N) / self.N
        self._cos = np.cos(ang)
        self._sin = np.sin(ang)
        box = getattr(base, "support_box", None)
        if box is not None:
            (x0, x1), (y0, y1) = box
            R = max(math.hypot(x, y) for x in (x0, x1) for y in (y0, y1))
            self.support_box = ((-R, R), (-R, R))

    def __call__(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        out = 0.0
        for c, s in zip(self._cos, self._sin):
            out = out + self.base(c * x - s * y, s * x + c * y)
        return out / self.N

    def has_exact_partials(self):
        return False


def _disc_support_violation(f, A):
    """Largest |f| sample outside the closed disc of radius A, or 0."""
    if isinstance(f, ScalarField):
        xx, yy = f.spec.meshgrid()
        mask = np.hypot(xx, yy) > A * (1.0 + 1e-12)
        return float(np.max(np.abs(np.where(mask, f.values, 0.0))))
    box = getattr(f, "support_box", None)
    if box is not None:
        (x0, x1), (y0, y1) = box
        if max(math.hypot(x, y) for x in (x0, x1) for y in (y0, y1)) <= A * (1.0 + 1e-12):
            return 0.0
        hi = max(abs(v) for pair in box for v in pair)
    else:
        hi = 2.0 * A
    r = np.linspace(A * (1.0 + 1e-9), max(hi, A * 1.0000001), 64)
    t = np.linspace(0.0, TWO_PI, 256, endpoint=False)
    return float(np.max(np.abs(f(r[:, None] * np.cos(t)[None, :],
                                 r[:, None] * np.sin(t)[None, :]))))


def discrete_average(f, N, A):
    """Average of f over the N-th roots of unity acting on the argument.

    f must be supported in the disc of radius A (checked by sampling).
    Rotation-invariant inputs pass through unchanged: a radial field is a
    fixed point of the average for every N, so returning it verbatim is the
    closed form.  Other inputs come back as a lazy field (same wrapper kind
    as the input) that evaluates the N rotations exactly on demand.
    """
    N = int(N)
    if N < 1:
        raise AveragingError("N must be a positive integer")
    leak = _disc_support_violation(f, A)
    if leak > 1e-12:
        raise AveragingError(f"support leaks outside the disc of radius {A:.6g}: {leak:.3e}")
    base = f.source if isinstance(f, ScalarField) else f
    if isinstance(base, RadialField) and base.center == (0.0, 0.0):
        return f
    if not isinstance(base, FieldND):
        raise AveragingError("discrete_average needs an evaluable field source")
    avg = RotationAverage(base, N)
    if isinstance(f, ScalarField):
        return ScalarField(f.spec, avg, derivative_mode="fd")
    return avg


# ---------------------------------------------------------------------------
# the rotational-fan expansion


def _fan_values(prefix, atoms, angles, x, y, rigid, outer):
    """Values of f0(prefix(T_ang(z))) for each fan angle, stacked.

    For a moment chain (per-ray rescale after an inverse angular shear) the
    radius work is shared across angles: rotations inside the rigid disc
    preserve the radius, the shear moves only the angle, and the rescale
    reads one angle-dependent combination of u and v.  Everything the gate
    can see lies inside the rigid disc, so points beyond it only ever meet
    gate value zero and the generic twist correction is immaterial there.
    Falls back to direct composition for other prefixes.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    shape = np.broadcast_shapes(x.shape, y.shape)
    xf = np.broadcast_to(x, shape).ravel()
    yf = np.broadcast_to(y, shape).ravel()
    structured = (
        isinstance(prefix, MapChain)
        and len(prefix.maps) == 2
        and isinstance(prefix.maps[0], MomentMap)
        and isinstance(getattr(prefix.maps[1], "base", None), AngularShear)
    )
    out = np.empty((len(angles),) + shape)
    if not structured:
        for i, ang in enumerate(angles):
            rot = cutoff_rotation(rigid, ang, atoms.L, outer)
            X, Y = prefix.apply(*rot.apply(xf, yf))
            out[i] = atoms.f0(X, Y).reshape(shape)
        return out

    psi, shear = prefix.maps[0], prefix.maps[1].base
    a, A = psi.a, psi.A
    r = np.hypot(xf, yf)
    th = np.arctan2(yf, xf)
    m = (r > a) & (r < A)
    rm = r[m]
    u, v = psi.u(rm), psi.v(rm)
    rd = shear._dens_radius(rm)
    gate = atoms.phi0
    for i, ang in enumerate(angles):
        alpha = np.mod(th + ang, TWO_PI)
        alpha_m = shear.angle_inverse(rd, alpha[m])
        cos_a = np.cos(alpha)
        cos_a[m] = np.cos(alpha_m)
        R = r.copy()
        R[m] = np.sqrt(np.maximum(v + (u - v) * 0.5 * (1.0 + cos_a[m]), 0.0))
        out[i] = (gate(R) * 4.0 * cos_a).reshape(shape)
    return out


def expand_h(h, phi_tilde, atoms, Cp, N, n_radii=24, tol_pre=1e-6,
             n_theta=256, order=12, spec=None):
    """N-term rotational fan (Cp/N) sum_k (phi_tilde o T_k)^* f0 for h.

    T_k are cutoff rotations by the N-th roots of unity, rigid on the disc
    holding supp f0 and the identity near the box edge, so each term is a
    pullback of f0 by one compactly supported area-preserving map.
    Precondition: the disc moments of phi_tilde^* f0 equal 1/Cp times those
    of h at sampled radii (tol_pre); then the fan average converges to the
    angular mean of h, which those moments pin down.  The witness mass is
    Cp for every N; the sup-norm reconstruction error is measured on spec
    (or the grid of h) and stored in meta.
    """
    Cp = float(Cp)
    N = int(N)
    if Cp <= 0.0:
        raise AveragingError("the coefficient budget Cp must be positive")
    if N < 1:
        raise AveragingError("N must be a positive integer")
    a, A, L = atoms.a, atoms.A, atoms.L
    h_fn = h.eval_at if isinstance(h, ScalarField) else h

    radii = np.linspace(a, A, n_radii)
    lhs = disc_moments(_pullback_f0(phi_tilde, atoms), radii, n_theta=n_theta, order=order)
    rhs = disc_moments(h_fn, radii, n_theta=n_theta, order=order) / Cp
    pre_resid = float(np.max(np.abs(lhs - rhs)))
    if pre_resid > tol_pre:
        raise AveragingError(
            f"disc moments of the pullback differ from those of h/Cp by {pre_resid:.3e}")

    rigid, outer = 0.85 * L, 0.95 * L
    angles = TWO_PI * np.arange(N) / N
    coef = Cp / N
    terms = []
    for ang in angles:
        rot = cutoff_rotation(rigid, float(ang), L, outer)
        terms.append((coef, MapChain([phi_tilde, rot], area_preserving=True), "f0"))
    fan = Fan(0, N, phi_tilde, rigid, outer, L, (0.0, 0.0), angles)

    if spec is None:
        spec = h.spec if isinstance(h, ScalarField) else GridSpec.square(L, 257)
    xx, yy = spec.meshgrid()
    recon = coef * np.sum(_fan_values(phi_tilde, atoms, angles, xx, yy, rigid, outer), axis=0)
    err = float(np.max(np.abs(recon - h_fn(xx, yy))))

    return Decomposition(terms, atoms, fans=[fan], meta={
        "reconstruction_error": err,
        "precondition_residual": pre_resid,
        "C_prime": Cp,
        "N": N,
    })
