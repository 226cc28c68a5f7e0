"""Special scalar profiles: the unit-partition cutoff and bump, exponential-flat
boundary profiles, the chi cutoff triple, and the atom set used by every
decomposition stage.

All constructions are closed-form in the expression language, so derivatives
are exact; the only quadrature appearing is in cumulative integrals, which are
evaluated to quadrature accuracy.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from ._num import gauss_integrate
from .expr import ExprFn, parse_expr
from .field import FieldND, RadialProfile
from .profiles import (
    AffineProfile,
    ConstProfile,
    CumulativeProfile,
    ExprProfile,
    PiecewiseProfile,
    Profile,
    ProductProfile,
    SumProfile,
    _SMOOTHSTEP_TEXT,
    dstep,
    plateau,
    step,
)

__all__ = [
    "cutoff_r",
    "build_phi",
    "PhiProfile",
    "PropertyError",
    "boundary_profile",
    "chi_family",
    "build_atoms",
    "AtomSet",
]


class PropertyError(ValueError):
    """A constructed profile failed one of its defining properties."""

    def __init__(self, prop, detail=""):
        self.prop = prop
        super().__init__(f"property failed: {prop}" + (f" ({detail})" if detail else ""))


def _sstep(inner):
    return _SMOOTHSTEP_TEXT.replace("x1", f"({inner})")


def cutoff_r():
    """Smooth cutoff with r = 1 on [-1/3, 1/3], supp = [-2/3, 2/3].

    r(t) = s(3t + 2) - s(3t - 1) with s the canonical smooth step; integer
    translates sum to 1 exactly by telescoping.
    """
    text = f"{_sstep('3*x1 + 2')} - {_sstep('3*x1 - 1')}"
    return parse_expr(text, nvars=1)


# ---------------------------------------------------------------------------
# the unit-partition bump


class PhiProfile(Profile):
    """Bump with supp = [0,3], unimodal, strictly log-concave, translates
    summing to one.

    Assembled from F on [0,1] (F'' = h, F(0) = F'(0) = 0, h a flat-tapered
    version of the second derivative of e^{-2/x}) by the three-branch mirror
    formula; the partition of unity is then an algebraic identity.
    """

    support = (0.0, 3.0)

    def __init__(self, delta):
        self.delta = float(delta)
        x0 = 1.0 - 2.0 * self.delta

        f = ExprProfile("expflat(x1/2)")  # e^{-2/x} for x > 0
        fpp = f.deriv(2)
        # taper window: 1 up to 1 - 2 delta, flat-0 from 1 - delta on
        down = dstep(x0, 1.0 - self.delta)
        h = ProductProfile(fpp, down)
        excess = ProductProfile(fpp, step(x0, 1.0 - self.delta))  # f'' - h

        # F = f - (x G0 - G1) past the taper start, where G0 = int excess,
        # G1 = int s * excess; so F' = f' - G0 and F'' = h exactly
        G0 = CumulativeProfile(excess, x0, 1.0, n=513, order=32)
        G1 = CumulativeProfile(ProductProfile(ExprProfile("x1"), excess), x0, 1.0, n=513, order=32)
        tail = SumProfile([f, ProductProfile(ExprProfile("x1"), G0), G1], [1.0, -1.0, 1.0])
        self.F = PiecewiseProfile([0.0, x0, 1.0], [f, tail])
        self.h = h
        self.F1 = float(self.F(1.0))

        c = 0.5 / self.F1
        b1 = SumProfile([self.F], [c])
        b2 = SumProfile(
            [ConstProfile(1.0), AffineProfile(self.F, 1.0, 1.0), AffineProfile(self.F, 2.0, -1.0)],
            [1.0, -c, -c],
        )
        b3 = SumProfile([AffineProfile(self.F, 3.0, -1.0)], [c])
        self._phi = PiecewiseProfile([0.0, 1.0, 2.0, 3.0], [b1, b2, b3])

    def __call__(self, x):
        return self._phi(x)

    def deriv(self, k=1):
        return self._phi.deriv(k) if k else self

    def verify(self, n=10_000):
        """Margins for the five defining properties; raises PropertyError."""
        t = np.linspace(0.01, 2.99, n)
        v = self(t)
        d1 = self.deriv(1)(t)
        d2 = self.deriv(2)(t)

        if not np.all(v > 0.0):
            raise PropertyError("positivity on (0,3)")
        lo, hi = t < 1.4999, t > 1.5001
        if not (np.all(d1[lo] > 0) and np.all(d1[hi] < 0)):
            raise PropertyError("unimodality (sign of phi')")
        mask = v > 1e-30
        log_concavity = np.max((d2[mask] * v[mask] - d1[mask] ** 2) / v[mask] ** 2)
        if not log_concavity < 0.0:
            raise PropertyError("log-concavity", f"sup = {log_concavity:.3e}")

        s = np.linspace(-1.0, 4.0, 2001)
        total = sum(self(s + k) for k in range(-4, 5))
        partition = float(np.max(np.abs(total - 1.0)))
        if not partition < 1e-9:
            raise PropertyError("partition of unity", f"residual = {partition:.3e}")

        # the same inequality for F itself on (0,1)
        x = np.linspace(0.01, 0.999, n // 2)
        Fv, Fd, Fh = self.F(x), self.F.deriv(1)(x), self.h(x)
        f_concavity = float(np.max(Fh * Fv - Fd**2))
        if not f_concavity < 0.0:
            raise PropertyError("base-profile concavity", f"sup = {f_concavity:.3e}")
        return {
            "log_concavity_sup": float(log_concavity),
            "partition_residual": partition,
            "base_concavity_sup": f_concavity,
            "F1": self.F1,
            "delta": self.delta,
        }


def build_phi(delta):
    """Construct the unit-partition bump, halving delta (up to 6 times) until
    every property check passes."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    delta = min(float(delta), 0.25)  # the taper must not touch [0, 1/2]
    last = None
    for _ in range(7):
        phi = PhiProfile(delta)
        try:
            phi.margins = phi.verify()
            return phi
        except PropertyError as err:
            last = err
            delta *= 0.5
    raise last


# ---------------------------------------------------------------------------
# boundary profiles and the chi family


def boundary_profile(alpha, beta, plateau_value=1.0):
    """Positive profile on (alpha, beta): exactly e^{-1/(x-alpha)} near alpha,
    e^{-1/(beta-x)} near beta, constant = plateau_value on the middle half.

    The tails are blended to the plateau in log space, so the profile stays
    positive and the seams are flat contacts.
    """
    alpha, beta = float(alpha), float(beta)
    if not beta > alpha:
        raise ValueError("need alpha < beta")
    w = beta - alpha
    d1, d2 = w / 8.0, w / 4.0
    logp = math.log(plateau_value)

    left_tail = ExprProfile(f"expflat(x1 - {alpha!r})")
    right_tail = ExprProfile(f"expflat({beta!r} - x1)")
    s_left = _sstep(f"(x1 - {alpha + d1!r})/{d2 - d1!r}")
    blend_left = ExprProfile(
        f"exp((1 - {s_left})*(0 - 1/(x1 - {alpha!r})) + {s_left}*{logp!r})"
    )
    s_right = _sstep(f"({beta - d1!r} - x1)/{d2 - d1!r}")
    blend_right = ExprProfile(
        f"exp((1 - {s_right})*(0 - 1/({beta!r} - x1)) + {s_right}*{logp!r})"
    )
    return PiecewiseProfile(
        [alpha, alpha + d1, alpha + d2, beta - d2, beta - d1, beta],
        [left_tail, blend_left, ConstProfile(plateau_value), blend_right, right_tail],
        support=(alpha, beta),
    )


def chi_family(a1, a2, eps):
    """The three cutoffs on [a1, a2] used to flatten a profile on a slab
    (m = midpoint of [a1, a2]).

    chi1: 1 on [a1, a1+eps], [m-eps, m+eps] and [a2-eps, a2]; 0 on
          [a1+2eps, m-2eps] and [m+2eps, a2-2eps].
    chi2: supported in [a1+eps, m-eps], 1 on [a1+2eps, m-2eps].
    chi3: supported in [m+eps, a2-eps], 1 on [m+2eps, a2-2eps].
    chi2 chi3 = 0 since their supports are disjoint.
    """
    a1, a2, eps = float(a1), float(a2), float(eps)
    if not eps < (a2 - a1) / 10.0:
        raise ValueError("eps too large: need eps < (a2-a1)/10")
    m = 0.5 * (a1 + a2)
    chi1 = SumProfile(
        [
            ConstProfile(1.0),
            step(a1 + eps, a1 + 2 * eps),
            plateau(m - 2 * eps, m - eps, m + eps, m + 2 * eps),
            step(a2 - 2 * eps, a2 - eps),
        ],
        [1.0, -1.0, 1.0, 1.0],
    )
    chi1.support = None  # equals 1 at both ends of [a1, a2]
    chi2 = plateau(a1 + eps, a1 + 2 * eps, m - 2 * eps, m - eps)
    chi3 = plateau(m + eps, m + 2 * eps, a2 - 2 * eps, a2 - eps)
    return chi1, chi2, chi3


# ---------------------------------------------------------------------------
# atoms


class AngularGateField(FieldND):
    """2-D field gate(r) * amp * cos(theta), evaluated safely at the origin."""

    nvars = 2

    def __init__(self, gate, amp=4.0):
        self.gate = gate
        self.amp = float(amp)
        r1 = gate.support[1]
        self.support_box = ((-r1, r1), (-r1, r1))

    def __call__(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        r = np.hypot(x, y)
        scalar = r.ndim == 0
        r = np.atleast_1d(r)
        xs = np.atleast_1d(np.broadcast_to(x, r.shape))
        out = np.zeros(r.shape)
        m = r > 1e-12
        out[m] = self.gate(r[m]) * self.amp * xs[m] / r[m]
        return float(out[0]) if scalar else out

    def polar(self, r, theta):
        return self.gate(r) * self.amp * np.cos(theta)

    def has_exact_partials(self):
        return False


@dataclass
class AtomSet:
    """The three-atom family on the square (-L, L)^2 and its angular data."""

    L: float
    a: float
    A: float
    A1: float
    C2: float
    f0: AngularGateField
    f1: RadialProfile
    f2: RadialProfile
    psi: ExprFn
    mu: ExprFn
    nu: ExprFn
    phi0: Profile  # radial gate of f0

    def sup_norms(self):
        return {
            "f0": 4.0 * self.phi0(np.linspace(0, self.L, 4001)).max(),
            "f1": float(self.f1(0.0)),
            "f2": self.f2.sup(),
        }

    def verify(self, tol=1e-10):
        """The five angular integrals plus the f2 mass and f1 slope margins."""
        two_pi = 2.0 * math.pi
        checks = {
            "psi_mu": (gauss_integrate(lambda t: self.psi(t) * self.mu(t), 0.0, two_pi), two_pi),
            "psi_nu": (gauss_integrate(lambda t: self.psi(t) * self.nu(t), 0.0, two_pi), -two_pi),
            "mu": (gauss_integrate(lambda t: self.mu(t), 0.0, two_pi), math.pi),
            "nu": (gauss_integrate(lambda t: self.nu(t), 0.0, two_pi), math.pi),
            "psi": (gauss_integrate(lambda t: self.psi(t), 0.0, two_pi), 0.0),
            "f2_mass": (self.f2.total_integral(), 1.0),
        }
        for name, (got, want) in checks.items():
            if abs(got - want) > tol:
                raise PropertyError(f"atom integral {name}", f"got {got!r}, want {want!r}")
        t = np.linspace(0.0, two_pi, 4001)
        if np.min(self.mu(t)) < -tol or np.min(self.nu(t)) < -tol:
            raise PropertyError("mu/nu nonnegativity")
        if np.max(np.abs(self.mu(t) + self.nu(t) - 1.0)) > tol:
            raise PropertyError("mu + nu = 1")
        r = np.linspace(self.a, self.A1, 4001)
        slope_margin = float(np.min(-self.f1.deriv(1)(r)) - self.C2)
        if not slope_margin > 0:
            raise PropertyError("f1 slope on [a, A1]", f"margin = {slope_margin:.3e}")
        rin = np.linspace(self.a / 200.0, self.A - self.A / 4000.0, 8001)
        if not np.all(self.f1.deriv(1)(rin) < 0):
            raise PropertyError("f1 strictly decreasing on (0, A)")
        return {name: float(got) for name, (got, _) in checks.items()} | {
            "f1_slope_margin": slope_margin
        }

    def to_json(self):
        r = np.linspace(0.0, self.L, 2001)
        return {
            "L": self.L,
            "a": self.a,
            "A": self.A,
            "A1": self.A1,
            "C2": self.C2,
            "profiles": {
                "r": r.tolist(),
                "phi0": self.phi0(r).tolist(),
                "f1": self.f1(r).tolist(),
                "f2": self.f2(r).tolist(),
            },
        }

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh)


def default_A1(L):
    """Radius of the image of the sector rectangle under the closed-form
    sector map: area pi A1^2 / 4 - pi a^2 / 4 = L * L/4 with a = L/4."""
    return L * math.sqrt(1.0 / (2.0 * math.pi) + 1.0 / 16.0)


def _f1_slope_profile(a, A1, A):
    """m >= 0 smooth, = 2r/a on [0, a/2], = 1 on [a, A1], flat-0 at A, > 0 inside."""
    eta = 1.0 / a
    ramp_s = _sstep(f"(x1 - {a / 2.0!r})/{a / 2.0!r}")
    ramp = ExprProfile(f"{eta!r}*x1 + {ramp_s}*(1 - {eta!r}*x1)")
    linear = ExprProfile(f"{eta!r}*x1")
    down = dstep(A1, A)
    return PiecewiseProfile(
        [0.0, a / 2.0, a, A1, A],
        [linear, ramp, ConstProfile(1.0), down],
        support=(0.0, A),
    )


def build_atoms(L, C2, A1=None):
    """Atom family for the square (-L, L)^2 with slope constant C2."""
    L = float(L)
    if not L > 0 or not C2 > 0:
        raise ValueError("L and C2 must be positive")
    a, A = L / 4.0, L / 2.0
    A1 = default_A1(L) if A1 is None else float(A1)
    if not a < A1 < A:
        raise ValueError("need a < A1 < A")

    # radial gate for f0: 1 on [a, 0.65 L], tapering inside W
    phi0 = plateau(a / 2.0, a, 0.65 * L, 0.8 * L)
    f0 = AngularGateField(phi0, amp=4.0)

    psi = parse_expr("4*cos(x1)", nvars=1)
    mu = parse_expr("(1 + cos(x1))/2", nvars=1)
    nu = parse_expr("(1 - cos(x1))/2", nvars=1)

    m = _f1_slope_profile(a, A1, A)
    M = CumulativeProfile(m, 0.0, A, n=2049, order=24)
    sigma = SumProfile([ConstProfile(float(M(A))), M], [1.0, -1.0])
    sigma.support = (0.0, A)
    f1 = RadialProfile(sigma.scaled(2.0 * C2), support=(0.0, A))

    mid, width = 0.5 * (a + A), 0.5 * (A - a)
    base = ExprProfile(f"bump01((x1 - {mid!r})/{width!r})", support=(a, A))
    mass = RadialProfile(base, support=(a, A)).total_integral()
    f2 = RadialProfile(base.scaled(1.0 / mass), support=(a, A))

    atoms = AtomSet(L=L, a=a, A=A, A1=A1, C2=C2, f0=f0, f1=f1, f2=f2, psi=psi, mu=mu, nu=nu, phi0=phi0)
    atoms.margins = atoms.verify()
    return atoms
