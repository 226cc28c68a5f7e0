import json
import math

import numpy as np
import pytest
from scipy.integrate import quad

from hamdecomp.diffeo import (
    AngularShear,
    CutoffRotation,
    GatedSwap,
    GraphX,
    IdentityMap,
    MapChain,
    MapError,
    MomentMap,
    NumericInverse,
    PlaneMap,
    PolarRect,
    ProductMap,
    RadialReparam,
    RayRadializer,
    circle_mass,
    compose,
    cutoff_rotation,
    fd_vol_det,
    grid_swap,
    inverse,
    jacobian_check,
    jacobian_check_nd,
    map_from_json,
    map_to_json,
    quasirandom_points,
    reparametrize,
    to_area_preserving,
    translation_flow,
)
from hamdecomp.profiles import ExprProfile, FuncProfile, SumProfile, as_profile

TWO_PI = 2.0 * math.pi
rng = np.random.default_rng(42)


def fd_det_oracle(apply_fn, x, y, h):
    """Independent Jacobian-determinant oracle: Richardson-extrapolated
    order-2 central differences (different stencil from the package's)."""

    def det_at(hh):
        Xr, Yr = apply_fn(x + hh, y)
        Xl, Yl = apply_fn(x - hh, y)
        Xu, Yu = apply_fn(x, y + hh)
        Xd, Yd = apply_fn(x, y - hh)
        ax = (np.asarray(Xr) - Xl) / (2 * hh)
        cx = (np.asarray(Yr) - Yl) / (2 * hh)
        ay = (np.asarray(Xu) - Xd) / (2 * hh)
        cy = (np.asarray(Yu) - Yd) / (2 * hh)
        return ax * cy - ay * cx

    d1 = det_at(h)
    d2 = det_at(0.5 * h)
    return (4.0 * d2 - d1) / 3.0


def annulus_points(a, A, n, seed=1):
    g = np.random.default_rng(seed)
    r = a + (A - a) * g.random(n)
    t = TWO_PI * g.random(n)
    return r * np.cos(t), r * np.sin(t)


# ---------------------------------------------------------------------------
# cutoff rotations


def test_rotation_rigid_zone_and_outside():
    rot = cutoff_rotation(0.5, 1.3, 1.0, A_outer=0.7)
    x, y = annulus_points(0.05, 0.499, 300)
    X, Y = rot.apply(x, y)
    c, s = math.cos(1.3), math.sin(1.3)
    assert np.max(np.abs(X - (c * x - s * y))) < 1e-15
    assert np.max(np.abs(Y - (s * x + c * y))) < 1e-15
    # radius preserved everywhere, including the taper
    x, y = annulus_points(0.0, 0.99, 500)
    X, Y = rot.apply(x, y)
    assert np.max(np.abs(np.hypot(X, Y) - np.hypot(x, y))) < 1e-15
    # identity outside the outer disc, to the last bit
    x, y = annulus_points(0.7, 0.99, 300)
    X, Y = rot.apply(x, y)
    assert np.all(X == x) and np.all(Y == y)


def test_rotation_zero_angle_is_identity():
    assert isinstance(cutoff_rotation(0.5, 0.0, 1.0), IdentityMap)


def test_rotation_bad_radius_raises():
    with pytest.raises(MapError):
        cutoff_rotation(1.0, 0.3, 1.0)
    with pytest.raises(MapError):
        cutoff_rotation(0.5, 0.3, 1.0, A_outer=1.5)


def test_rotation_n_fold_composition_is_identity_on_disc():
    N = 7
    rot = cutoff_rotation(0.5, TWO_PI / N, 1.0, A_outer=0.8)
    chain = MapChain([rot] * N)
    x, y = annulus_points(0.0, 0.4999, 400)
    X, Y = chain.apply(x, y)
    assert np.max(np.hypot(X - x, Y - y)) < 1e-12


def test_rotation_jacobian_fd_oracle():
    rot = cutoff_rotation(0.5, 1.1, 1.0, A_outer=0.8)
    x, y = annulus_points(0.45, 0.85, 400, seed=3)  # straddles the taper
    D = fd_det_oracle(rot.apply, x, y, 2e-4)
    assert np.max(np.abs(D - 1.0)) < 1e-9
    assert jacobian_check(rot, samples=2000) == 0.0  # analytic twist det
    assert jacobian_check(rot, samples=2000, mode="fd") < 1e-9


def test_rotation_inverse_roundtrip():
    rot = cutoff_rotation(0.5, 0.9, 1.0, A_outer=0.75)
    x, y = annulus_points(0.0, 0.9, 500)
    X, Y = rot.apply(*rot.apply_inverse(x, y))
    assert np.max(np.hypot(X - x, Y - y)) < 1e-13


# ---------------------------------------------------------------------------
# radial reparametrization and the angle shear


def test_radial_reparam_trivial_mass_is_identity():
    S = FuncProfile(lambda r: math.pi * r ** 2,
                    derivs=(lambda r: TWO_PI * r,))
    d1 = RadialReparam(S, 0.2, 0.8)
    x, y = annulus_points(0.0, 0.95, 400)
    X, Y = d1.apply(x, y)
    assert np.max(np.hypot(X - x, Y - y)) < 1e-12
    # chain of rotation o trivial reparam equals the rotation
    rot = cutoff_rotation(0.4, 1.0, 1.2, A_outer=0.9)
    chain = MapChain([rot, d1])
    Xc, Yc = chain.apply(x, y)
    Xr, Yr = rot.apply(x, y)
    assert np.max(np.hypot(Xc - Xr, Yc - Yr)) < 1e-12


@pytest.fixture(scope="module")
def shear_reparam():
    a, A, L = 0.3, 0.8, 1.0
    g = as_profile(f"0.5*bump01((x1 - {0.55}) / {0.25})")

    def G(x, y):
        r = np.hypot(x, y)
        out = np.ones_like(np.asarray(r, dtype=float))
        c = np.zeros_like(out)
        m = r > 0
        c[m] = np.asarray(x, dtype=float)[m] / r[m] if np.shape(x) else x / r[m]
        return out + g(r) * c

    lam = reparametrize(G, a, A, L)
    return lam, G, g, a, A, L


def test_reparametrize_cosine_density_radial_part_trivial(shear_reparam):
    lam, G, g, a, A, L = shear_reparam
    r = np.linspace(a + 1e-3, A - 1e-3, 64)
    assert np.max(np.abs(lam.delta1.radial_forward(r) - r)) < 1e-10


def test_reparametrize_cosine_density_shear_closed_form(shear_reparam):
    lam, G, g, a, A, L = shear_reparam
    gp = np.random.default_rng(5)
    r = a + (A - a) * gp.random(300)
    t = TWO_PI * gp.random(300)
    X, Y = lam.apply(r * np.cos(t), r * np.sin(t))
    F = t + g(r) * np.sin(t)
    assert np.max(np.hypot(X - r * np.cos(F), Y - r * np.sin(F))) < 1e-8


def test_reparametrize_det_matches_density(shear_reparam):
    lam, G, g, a, A, L = shear_reparam
    x, y = annulus_points(a + 0.02, A - 0.02, 400, seed=7)
    D = fd_det_oracle(lam.apply, x, y, 2e-4)
    assert np.max(np.abs(D - G(x, y))) < 1e-6
    assert np.max(np.abs(lam.det(x, y) - G(x, y))) < 1e-8


def test_reparametrize_circle_property(shear_reparam):
    lam, G, g, a, A, L = shear_reparam
    S = lam.mass_profile
    worst = 0.0
    for r in np.linspace(a + 0.01, A - 0.01, 64):
        t = np.linspace(0.0, TWO_PI, 96, endpoint=False)
        X, Y = lam.apply(r * np.cos(t), r * np.sin(t))
        R = math.sqrt(S(r) / math.pi)
        worst = max(worst, float(np.max(np.abs(np.hypot(X, Y) - R))))
    assert worst < 1e-8


def test_reparametrize_identity_outside_and_roundtrip(shear_reparam):
    lam, G, g, a, A, L = shear_reparam
    x, y = annulus_points(0.0, a, 150)
    X, Y = lam.apply(x, y)
    assert np.max(np.hypot(X - x, Y - y)) < 1e-12
    x, y = annulus_points(A, 0.99, 150)
    X, Y = lam.apply(x, y)
    assert np.max(np.hypot(X - x, Y - y)) < 1e-12
    x, y = annulus_points(a + 0.01, A - 0.01, 200)
    X, Y = lam.apply(*lam.apply_inverse(x, y))
    assert np.max(np.hypot(X - x, Y - y)) < 1e-10


def test_reparametrize_radial_density_against_quad_oracle():
    a, A, L = 0.3, 0.8, 1.0
    psi = as_profile(f"0.2*bump01((x1 - {0.55}) / {0.25})")
    psip = psi.deriv(1)

    def p(r):
        return psi(r) + 0.5 * r * psip(r)

    def G(x, y):
        return 1.0 + p(np.hypot(x, y))

    lam = reparametrize(G, a, A, L)
    # mass profile against an independent adaptive quadrature
    for r in [0.4, 0.55, 0.7]:
        S_ref = math.pi * r ** 2 + TWO_PI * quad(lambda s: p(s) * s, a, r, limit=200)[0]
        assert abs(lam.mass_profile(r) - S_ref) < 1e-9
        t = np.linspace(0.0, TWO_PI, 64, endpoint=False)
        X, Y = lam.apply(r * np.cos(t), r * np.sin(t))
        assert np.max(np.abs(np.hypot(X, Y) - math.sqrt(S_ref / math.pi))) < 1e-8
    # purely radial density: angles are preserved
    gp = np.random.default_rng(11)
    r = a + (A - a) * gp.random(200)
    t = TWO_PI * gp.random(200)
    X, Y = lam.apply(r * np.cos(t), r * np.sin(t))
    dt = np.mod(np.arctan2(Y, X) - t + math.pi, TWO_PI) - math.pi
    assert np.max(np.abs(dt)) < 1e-10
    x, y = annulus_points(a + 0.02, A - 0.02, 300, seed=13)
    D = fd_det_oracle(lam.apply, x, y, 2e-4)
    assert np.max(np.abs(D - G(x, y))) < 1e-6


def test_reparametrize_rejects_bad_densities():
    with pytest.raises(MapError):
        reparametrize(lambda x, y: np.full_like(np.asarray(x, float), -0.5) +
                      np.hypot(x, y) * 0, 0.3, 0.8, 1.0)
    bump = as_profile("0.3*bump01((x1 - 0.55)/0.25)")
    with pytest.raises(MapError):
        reparametrize(lambda x, y: 1.0 + bump(np.hypot(x, y)), 0.3, 0.8, 1.0)


# ---------------------------------------------------------------------------
# moment maps and conversion to area preservation


@pytest.fixture(scope="module")
def moment_setup():
    a, A, L = 0.3, 0.8, 1.0
    # amplitude small enough that |psi'| < 2r on the annulus, which keeps
    # both ray masses strictly increasing (u' > 0 and v' > 0)
    psi = as_profile(f"0.05*bump01((x1 - {0.55}) / {0.25})")
    r2 = ExprProfile("x1^2")
    u = SumProfile([r2, psi], [1.0, 1.0])
    v = SumProfile([r2, psi], [1.0, -1.0])
    return MomentMap(u, v, a, A), psi, a, A, L


def test_moment_map_values_and_identity(moment_setup):
    mm, psi, a, A, L = moment_setup
    gp = np.random.default_rng(17)
    r = a + (A - a) * gp.random(300)
    t = TWO_PI * gp.random(300)
    X, Y = mm.apply(r * np.cos(t), r * np.sin(t))
    mu = 0.5 * (1.0 + np.cos(t))
    R_ref = np.sqrt((r ** 2 + psi(r)) * mu + (r ** 2 - psi(r)) * (1.0 - mu))
    assert np.max(np.abs(np.hypot(X, Y) - R_ref)) < 1e-12
    # ray preserved
    dt = np.mod(np.arctan2(Y, X) - t + math.pi, TWO_PI) - math.pi
    assert np.max(np.abs(dt)) < 1e-12
    x, y = annulus_points(A, 0.99, 100)
    X, Y = mm.apply(x, y)
    assert np.all(X == x) and np.all(Y == y)


def test_moment_map_disc_mass_exact(moment_setup):
    mm, psi, a, A, L = moment_setup
    for r in np.linspace(0.32, 0.78, 12):
        assert abs(circle_mass(mm, r) / (math.pi * r ** 2) - 1.0) < 1e-9


def test_moment_map_inverse_and_det(moment_setup):
    mm, psi, a, A, L = moment_setup
    x, y = annulus_points(a + 0.01, A - 0.01, 300, seed=19)
    X, Y = mm.apply(*mm.apply_inverse(x, y))
    assert np.max(np.hypot(X - x, Y - y)) < 1e-11
    D = fd_det_oracle(mm.apply, x, y, 2e-4)
    assert np.max(np.abs(mm.det(x, y) - D)) < 1e-7


def test_to_area_preserving_moment_map(moment_setup):
    mm, psi, a, A, L = moment_setup
    phi = to_area_preserving(mm, a, A, L)
    assert phi.area_preserving
    x, y = annulus_points(a + 0.02, A - 0.02, 300, seed=23)
    D = fd_det_oracle(phi.apply, x, y, 2e-4)
    assert np.max(np.abs(D - 1.0)) < 1e-5
    assert np.max(np.abs(phi.det(x, y) - 1.0)) < 1e-8
    # phi(D_r) = psi(D_r): equal areas of image discs at every radius
    for r in np.linspace(0.35, 0.75, 8):
        assert abs(circle_mass(phi, r) - circle_mass(mm, r)) < 1e-7
    X, Y = phi.apply(*phi.apply_inverse(x, y))
    assert np.max(np.hypot(X - x, Y - y)) < 1e-10
    # identity outside
    xo, yo = annulus_points(A + 0.01, 0.99, 100)
    X, Y = phi.apply(xo, yo)
    assert np.max(np.hypot(X - xo, Y - yo)) < 1e-12


def test_to_area_preserving_of_area_preserving_is_same_map():
    rot = cutoff_rotation(0.45, 0.8, 1.0, A_outer=0.7)
    phi = to_area_preserving(rot, 0.3, 0.75, 1.0)
    x, y = annulus_points(0.0, 0.9, 300, seed=29)
    Xp, Yp = phi.apply(x, y)
    Xr, Yr = rot.apply(x, y)
    assert np.max(np.hypot(Xp - Xr, Yp - Yr)) < 1e-10


def test_to_area_preserving_rejects_mass_violation():
    # a radial squeeze moves disc masses, so the precondition must fail
    S = FuncProfile(lambda r: math.pi * (r ** 2 - 0.2 * np.sin(math.pi * (r - 0.3) / 0.5) ** 2 * 0.1))
    bad = RadialReparam(S, 0.3, 0.8)
    with pytest.raises(MapError):
        to_area_preserving(bad, 0.3, 0.8, 1.0)


# ---------------------------------------------------------------------------
# translations


def test_translation_exact_on_rect():
    rect = ((0.1, 0.3), (-0.1, 0.1))
    corridor = ((-0.5, 1.6), (-0.6, 0.8))
    off = (0.75, 0.2)
    tf = translation_flow(rect, off, corridor)
    assert tf.area_preserving
    gx = np.linspace(0.1, 0.3, 9)
    gy = np.linspace(-0.1, 0.1, 9)
    x, y = np.meshgrid(gx, gy)
    X, Y = tf.apply(x, y)
    assert np.max(np.abs(X - (x + off[0]))) < 1e-13
    assert np.max(np.abs(Y - (y + off[1]))) < 1e-13


def test_translation_identity_outside_corridor():
    rect = ((0.1, 0.3), (-0.1, 0.1))
    corridor = ((-0.5, 1.6), (-0.6, 0.8))
    tf = translation_flow(rect, (0.75, 0.2), corridor)
    gp = np.random.default_rng(31)
    x = 1.6 + gp.random(200) * 2.0
    y = -3.0 + gp.random(200) * 6.0
    X, Y = tf.apply(x, y)
    assert np.all(X == x) and np.all(Y == y)
    x = -3.0 + gp.random(200) * 2.5
    X, Y = tf.apply(x, y)
    assert np.all(X == x) and np.all(Y == y)


def test_translation_jacobian_and_roundtrip():
    rect = ((0.1, 0.3), (-0.1, 0.1))
    corridor = ((-0.5, 1.6), (-0.6, 0.8))
    tf = translation_flow(rect, (0.75, 0.2), corridor)
    pts = quasirandom_points(corridor, 500, seed=2)
    # overlapping taper zones make the composite steep (gradients ~50), so
    # the stencil needs a small step; any real area distortion would be O(1)
    D = fd_det_oracle(tf.apply, pts[:, 0], pts[:, 1], 2e-6)
    assert np.max(np.abs(D - 1.0)) < 1e-6
    X, Y = tf.apply(*tf.apply_inverse(pts[:, 0], pts[:, 1]))
    assert np.max(np.hypot(X - pts[:, 0], Y - pts[:, 1])) < 1e-12


def test_translation_narrow_corridor_uses_many_hops_and_stays_exact():
    rect = ((0.0, 0.2), (0.0, 0.2))
    corridor = ((-0.35, 2.6), (-0.35, 0.55))
    tf = translation_flow(rect, (2.0, 0.0), corridor)
    assert len(tf.maps) >= 6  # several hops, two rotations each
    x, y = np.meshgrid(np.linspace(0.0, 0.2, 5), np.linspace(0.0, 0.2, 5))
    X, Y = tf.apply(x, y)
    assert np.max(np.abs(X - (x + 2.0))) < 1e-12
    assert np.max(np.abs(Y - y)) < 1e-12


def test_translation_zero_offset_and_violations():
    rect = ((0.0, 0.2), (0.0, 0.2))
    tf = translation_flow(rect, (0.0, 0.0), ((-1, 1), (-1, 1)))
    x, y = np.meshgrid(np.linspace(-0.5, 0.5, 7), np.linspace(-0.5, 0.5, 7))
    X, Y = tf.apply(x, y)
    assert np.all(X == x) and np.all(Y == y)
    with pytest.raises(MapError):
        translation_flow(rect, (5.0, 0.0), ((-1, 1), (-1, 1)))
    with pytest.raises(MapError):
        # corridor narrower than the rectangle's circumradius
        translation_flow(rect, (0.5, 0.0), ((-0.01, 1.0), (-0.01, 0.21)))


# ---------------------------------------------------------------------------
# grid swaps


def test_grid_swap_plane_exchange_exact():
    eps = 0.05
    vp = np.array([0.0, 0.0])
    vpp = np.array([4 * eps, 0.0])
    sw = grid_swap(vp, vpp, eps, 2)
    g = np.linspace(-eps, eps, 5)
    xx, yy = np.meshgrid(g, g)
    cubeA = np.stack([xx.ravel(), yy.ravel()], axis=-1)
    out = sw.apply(cubeA)
    assert np.max(np.abs(out - (cubeA + [4 * eps, 0.0]))) < 1e-12
    cubeB = cubeA + [4 * eps, 0.0]
    out = sw.apply(cubeB)
    assert np.max(np.abs(out - (cubeB - [4 * eps, 0.0]))) < 1e-12
    # any other grid cube is untouched, exactly
    for shift in ([0.0, 4 * eps], [-4 * eps, 0.0], [8 * eps, 0.0], [4 * eps, -4 * eps]):
        cube = cubeA + np.asarray(shift)
        out = sw.apply(cube)
        assert np.all(out == cube)


def test_grid_swap_negative_direction_and_y_axis():
    eps = 0.1
    sw = grid_swap([0.0, 0.0], [0.0, -4 * eps], eps, 2)
    g = np.linspace(-eps, eps, 4)
    xx, yy = np.meshgrid(g, g)
    cube = np.stack([xx.ravel(), yy.ravel()], axis=-1)
    out = sw.apply(cube)
    assert np.max(np.abs(out - (cube + [0.0, -4 * eps]))) < 1e-12
    out = sw.apply(cube + [4 * eps, 0.0])
    assert np.all(out == cube + [4 * eps, 0.0])


def swap_orbit_det(sw, Z, h):
    """Chain-rule determinant oracle for a gated swap.

    Direct stencils on the composite fail near the bypass tube's shell,
    where squeezing the translation through the lattice gaps makes the
    map steep; but the determinant factors over the rotation chain, and
    every factor is gentle enough for Richardson differentiation. Returns
    the per-point products and the worst single-factor residual.
    """
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    g = sw.gamma(Z)
    x, y = Z[:, 2 * sw.k].copy(), Z[:, 2 * sw.k + 1].copy()
    det = np.ones(Z.shape[0])
    worst = 0.0
    for rot in sw.rotations:
        def fn(u, v):
            return rot.apply(u, v, scale=g)
        d = fd_det_oracle(fn, x, y, h)
        worst = max(worst, float(np.max(np.abs(d - 1.0))))
        det = det * d
        x, y = rot.apply(x, y, scale=g)
    return det, worst


def test_grid_swap_roundtrip_and_volume():
    eps = 0.05
    sw = grid_swap([0.0, 0.0], [4 * eps, 0.0], eps, 2)
    pts = quasirandom_points(((-3 * eps, 7 * eps), (-3 * eps, 3 * eps)), 400, seed=3)
    back = sw.apply_inverse(sw.apply(pts))
    assert np.max(np.abs(back - pts)) < 1e-7
    D, worst_factor = swap_orbit_det(sw, pts, 4e-5 * eps)
    assert worst_factor < 1e-6
    assert np.max(np.abs(D - 1.0)) < 5e-6


def test_grid_swap_gates_in_four_dimensions():
    eps = 0.05
    vp = np.array([0.2, -0.1, 0.0, 0.0])
    vpp = np.array([0.2, -0.1, 4 * eps, 0.0])
    sw = grid_swap(vp, vpp, eps, 4)
    gp = np.random.default_rng(7)
    local = (gp.random((60, 4)) * 2 - 1) * eps
    cubeA = vp + local
    out = sw.apply(cubeA)
    assert np.max(np.abs(out - (cubeA + (vpp - vp)))) < 1e-12
    cubeB = vpp + local
    out = sw.apply(cubeB)
    assert np.max(np.abs(out - (cubeB - (vpp - vp)))) < 1e-12
    # a cube differing in the gated plane: exactly fixed
    other = cubeA + np.array([4 * eps, 0.0, 0.0, 0.0])
    assert np.all(sw.apply(other) == other)
    other = cubeA + np.array([0.0, 4 * eps, 0.0, 0.0])
    assert np.all(sw.apply(other) == other)
    # transition shell: gate strictly between 0 and 1; still volume preserving
    shell = cubeA.copy()
    shell[:, 0] = vp[0] + 1.5 * eps
    gam = sw.gamma(shell)
    assert np.all((gam > 0) & (gam < 1))
    D, worst_factor = swap_orbit_det(sw, shell, 4e-5 * eps)
    assert worst_factor < 1e-6
    assert np.max(np.abs(D - 1.0)) < 5e-6
    back = sw.apply_inverse(sw.apply(shell))
    assert np.max(np.abs(back - shell)) < 1e-7
    # points across the whole bypass region, gates varying
    pts = quasirandom_points([(-0.05, 0.45), (-0.35, 0.15),
                              (-3 * eps, 7 * eps), (-3 * eps, 3 * eps)],
                             300, seed=5, dim=4)
    D, _ = swap_orbit_det(sw, pts, 4e-5 * eps)
    assert np.max(np.abs(D - 1.0)) < 5e-6


def test_product_map_volume_and_nd_jacobian():
    rot = cutoff_rotation(0.45, 1.2, 1.0, center=(0.1, -0.2))
    pm = ProductMap([rot, IdentityMap()])
    Z = quasirandom_points([(-0.7, 0.9), (-1.0, 0.6), (-1.0, 1.0), (-1.0, 1.0)],
                           250, seed=11, dim=4)
    W = pm.apply(Z)
    assert np.all(W[:, 2:] == Z[:, 2:])
    X, Y = rot.apply(Z[:, 0], Z[:, 1])
    assert np.max(np.abs(W[:, 0] - X)) == 0.0
    assert np.max(np.abs(W[:, 1] - Y)) == 0.0
    back = pm.apply_inverse(W)
    assert np.max(np.abs(back - Z)) < 1e-12
    assert np.max(np.abs(pm.vol_det(Z) - 1.0)) == 0.0
    res = jacobian_check_nd(pm, samples=200,
                            box=[(-0.7, 0.9), (-1.0, 0.6), (-1.0, 1.0), (-1.0, 1.0)],
                            h=2e-4)
    assert res < 1e-6


def test_grid_swap_rejects_non_neighbors():
    eps = 0.05
    with pytest.raises(MapError):
        grid_swap([0.0, 0.0], [8 * eps, 0.0], eps, 2)
    with pytest.raises(MapError):
        grid_swap([0.0, 0.0, 0.0, 0.0], [4 * eps, 0.0, 4 * eps, 0.0], eps, 4)


# ---------------------------------------------------------------------------
# sector map, fiber maps, ray radializer


def test_polar_rect_closed_forms():
    kappa, a = 1.2, 0.35
    rect = ((0.0, 0.9), (0.0, 2.0))
    pm = PolarRect(kappa, a, rect)
    assert pm.area_preserving
    # the rectangle's left edge lands on the circle of radius a
    y = np.linspace(0.0, 2.0, 11)
    X, Y = pm.apply(np.zeros_like(y), y)
    assert np.max(np.abs(np.hypot(X, Y) - a)) < 1e-14
    assert np.max(np.abs(np.arctan2(Y, X) - kappa * y)) < 1e-12
    pts = quasirandom_points(rect, 400, seed=5)
    x, yv = pts[:, 0], pts[:, 1]
    X, Y = pm.apply(x, yv)
    xb, yb = pm.apply_inverse(X, Y)
    assert np.max(np.hypot(xb - x, yb - yv)) < 1e-12
    D = fd_det_oracle(pm.apply, x, yv, 1e-5)
    assert np.max(np.abs(D - 1.0)) < 1e-8
    with pytest.raises(MapError):
        PolarRect(kappa, a, ((0.0, 1.0), (0.0, 6.0)))  # angle wraps past 2 pi


def test_graph_x_fiber_map():
    strip = ((0.0, 1.0), (0.0, 1.0))
    bump = as_profile("bump01(2*x1 - 1)")
    bumpp = bump.deriv(1)

    def w(x, y):
        return x + 0.1 * bump(x) * bump(y)

    def w_x(x, y):
        return 1.0 + 0.1 * bumpp(x) * bump(y)

    gm = GraphX(w, strip, w_x=w_x)
    pts = quasirandom_points(strip, 400, seed=9)
    x, y = pts[:, 0], pts[:, 1]
    X, Y = gm.apply(x, y)
    assert np.all(Y == y)
    xb, yb = gm.apply_inverse(X, Y)
    assert np.max(np.abs(xb - x)) < 1e-11
    D = fd_det_oracle(gm.apply, x, y, 1e-4)
    assert np.max(np.abs(gm.det(x, y) - D)) < 1e-8
    xo = np.array([1.2, -0.3, 0.5])
    yo = np.array([0.5, 0.5, 1.4])
    X, Y = gm.apply(xo, yo)
    assert np.all(X == xo) and np.all(Y == yo)


def test_ray_radializer_levels():
    A = 0.8
    f1p = as_profile(f"(1 - (x1/{A})^2)^2")
    rad = as_profile(f"bump01((x1 - 0.4)/0.15)")
    ang = as_profile("bump01(x1/1.2)")

    def H(r, th):
        return f1p(r) + 0.1 * rad(r) * ang(th)

    ups = RayRadializer(H, f1p, A)
    gp = np.random.default_rng(33)
    r = 0.05 + 0.7 * gp.random(300)
    t = -math.pi + TWO_PI * gp.random(300)
    x, y = r * np.cos(t), r * np.sin(t)
    X, Y = ups.apply(x, y)
    # the pullback of H is exactly the radial profile f1
    rr = np.hypot(X, Y)
    tt = np.arctan2(Y, X)
    assert np.max(np.abs(H(rr, tt) - f1p(r))) < 1e-12
    # rays are preserved
    dt = np.mod(tt - t + math.pi, TWO_PI) - math.pi
    assert np.max(np.abs(dt)) < 1e-12
    # identity wherever the angular gate vanishes
    far = np.abs(t) > 1.3
    assert np.all(X[far] == x[far]) and np.all(Y[far] == y[far])
    xb, yb = ups.apply_inverse(X, Y)
    assert np.max(np.hypot(xb - x, yb - y)) < 1e-10


# ---------------------------------------------------------------------------
# chains, inverses, checks


def test_chain_semantics_and_order():
    rot = cutoff_rotation(0.5, 0.7, 1.0, A_outer=0.8)
    tf = translation_flow(((0.05, 0.15), (-0.05, 0.05)), (0.3, 0.0),
                          ((-0.4, 0.8), (-0.4, 0.4)))
    chain = compose(rot, tf)  # rot applied last
    x, y = np.array([0.1]), np.array([0.0])
    Xm, Ym = tf.apply(x, y)
    Xm, Ym = rot.apply(Xm, Ym)
    X, Y = chain.apply(x, y)
    assert X[0] == Xm[0] and Y[0] == Ym[0]
    Xb, Yb = chain.apply_inverse(X, Y)
    assert abs(Xb[0] - x[0]) < 1e-12 and abs(Yb[0] - y[0]) < 1e-12
    app = MapChain.in_application_order([tf, rot])
    Xa, Ya = app.apply(x, y)
    assert Xa[0] == X[0] and Ya[0] == Y[0]


def test_inverse_op_and_numeric_inverse():
    rot = cutoff_rotation(0.5, 1.1, 1.0, A_outer=0.8)
    inv = inverse(rot)
    x, y = annulus_points(0.0, 0.75, 200)
    X1, Y1 = inv.apply(x, y)
    X2, Y2 = rot.apply_inverse(x, y)
    assert np.all(X1 == X2) and np.all(Y1 == Y2)
    ni = NumericInverse(rot)
    assert np.max(np.abs(ni.det(x, y) - 1.0)) < 1e-12
    assert ni.inverse() is rot


def test_jacobian_check_identity_and_degenerate():
    ident = IdentityMap()
    assert jacobian_check(ident, samples=500, box=((-1, 1), (-1, 1))) == 0.0

    class Collapse(PlaneMap):
        feature_scale = 0.5

        def apply(self, x, y):
            return np.zeros_like(np.asarray(x, dtype=float)), np.asarray(y, dtype=float)

    with pytest.raises(MapError):
        jacobian_check(Collapse(), samples=100, box=((-1, 1), (-1, 1)), mode="fd")


def test_pullback_supnorm_invariance():
    # twist maps preserve radii, so a radial field pulls back to itself
    rot = cutoff_rotation(0.5, 2.0, 1.0, A_outer=0.9)
    prof = as_profile("bump01(x1/0.6)")
    x, y = annulus_points(0.0, 0.95, 500, seed=37)
    f = prof(np.hypot(x, y))
    X, Y = rot.apply(x, y)
    fp = prof(np.hypot(X, Y))
    # the rotated radii carry ~1 ulp of cos/sin rounding
    assert np.max(np.abs(f - fp)) < 1e-13
    assert abs(np.max(np.abs(f)) - np.max(np.abs(fp))) < 1e-14
    tf = translation_flow(((0.0, 0.2), (0.0, 0.2)), (0.4, 0.0), ((-0.5, 1.0), (-0.5, 0.7)))
    gx = np.linspace(0.0, 0.2, 21)
    xx, yy = np.meshgrid(gx, gx)
    vals = prof(np.hypot(xx - 0.1, yy - 0.1))
    X, Y = tf.apply(xx, yy)
    pulled = prof(np.hypot(X - 0.5, Y - 0.1))
    assert np.max(np.abs(vals - pulled)) < 1e-12


# ---------------------------------------------------------------------------
# serialization


def test_serialize_rotation_chain_exact():
    rot = cutoff_rotation(0.5, 0.8, 1.0, A_outer=0.75)
    tf = translation_flow(((0.0, 0.2), (0.0, 0.2)), (0.5, 0.1), ((-0.6, 1.2), (-0.6, 0.8)))
    chain = compose(rot, tf)
    clone = map_from_json(map_to_json(chain))
    x, y = annulus_points(0.0, 0.9, 300, seed=41)
    X1, Y1 = chain.apply(x, y)
    X2, Y2 = clone.apply(x, y)
    assert np.all(X1 == X2) and np.all(Y1 == Y2)
    assert clone.area_preserving


def test_serialize_radial_reparam_spline_fidelity(shear_reparam):
    lam, G, g, a, A, L = shear_reparam
    clone = map_from_json(map_to_json(lam.delta1))
    x, y = annulus_points(a + 0.01, A - 0.01, 200, seed=43)
    X1, Y1 = lam.delta1.apply(x, y)
    X2, Y2 = clone.apply(x, y)
    assert np.max(np.hypot(X1 - X2, Y1 - Y2)) < 1e-9


def test_serialize_gated_swap():
    eps = 0.05
    sw = grid_swap([0.0, 0.0, 0.0, 0.0], [0.0, 0.0, 4 * eps, 0.0], eps, 4)
    clone = map_from_json(map_to_json(sw))
    gp = np.random.default_rng(47)
    local = (gp.random((40, 4)) * 2 - 1) * eps
    out1 = sw.apply(local)
    out2 = clone.apply(local)
    assert np.max(np.abs(out1 - out2)) == 0.0


def test_serialize_polar_rect_and_identity():
    pm = PolarRect(1.2, 0.35, ((0.0, 0.9), (0.0, 2.0)), theta_off=0.3)
    clone = map_from_json(map_to_json(pm))
    pts = quasirandom_points(pm.rect, 100, seed=51)
    X1, Y1 = pm.apply(pts[:, 0], pts[:, 1])
    X2, Y2 = clone.apply(pts[:, 0], pts[:, 1])
    assert np.all(X1 == X2) and np.all(Y1 == Y2)
    ident = map_from_json(map_to_json(IdentityMap()))
    assert isinstance(ident, IdentityMap)
