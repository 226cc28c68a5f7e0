import math

import numpy as np
import pytest

from hamdecomp.expr import ExprError, K_MAX, differentiate, parse_expr


def fd_partial(fn, coords, axis, h=1e-5):
    """Order-4 central difference oracle for one partial derivative."""
    shifted = []
    for step in (2, 1, -1, -2):
        pts = list(coords)
        pts[axis] = coords[axis] + step * h
        shifted.append(fn(*pts))
    return (-shifted[0] + 8 * shifted[1] - 8 * shifted[2] + shifted[3]) / (12 * h)


def test_arithmetic_and_constants():
    f = parse_expr("2*x1 + x2^2 - pi/2", nvars=2)
    x = np.array([0.5, -1.0])
    y = np.array([2.0, 3.0])
    np.testing.assert_allclose(f(x, y), 2 * x + y**2 - math.pi / 2, rtol=1e-15)


def test_exp_ratio_example():
    # derivative of exp(-2/x1) is (2/x1^2) exp(-2/x1)
    f = parse_expr("exp(-2/x1)")
    g = f.partial(0)
    x = np.linspace(0.2, 3.0, 57)
    expected = (2.0 / x**2) * np.exp(-2.0 / x)
    np.testing.assert_allclose(g(x), expected, rtol=1e-13)


def test_syntax_error_position():
    with pytest.raises(ExprError) as info:
        parse_expr("x1^")
    assert info.value.pos == 3


def test_unknown_identifier():
    with pytest.raises(ExprError):
        parse_expr("x1 + spam(x1)")


def test_bump01_matches_closed_form():
    f = parse_expr("bump01((x1-0.5)/0.25)")
    x = np.linspace(0.0, 1.0, 201)
    t = (x - 0.5) / 0.25
    inside = np.abs(t) < 1
    expected = np.zeros_like(x)
    expected[inside] = np.exp(1.0 - 1.0 / (1.0 - t[inside] ** 2))
    np.testing.assert_allclose(f(x), expected, rtol=1e-13, atol=1e-300)
    # compact support and smooth vanishing at the edges
    assert f(np.array([0.25])) == 0.0
    assert f(np.array([0.75])) == 0.0
    assert f.partial(0)(np.array([0.25, 0.75])).max() == 0.0


def test_expflat_derivative_recursion():
    # f(t)=exp(-1/t): f''(t) = (u^4 - 2u^3) exp(-u), u = 1/t
    f = parse_expr("expflat(x1)")
    t = np.linspace(0.05, 2.0, 101)
    u = 1.0 / t
    d2 = f.partial(0, 2)(t)
    np.testing.assert_allclose(d2, (u**4 - 2 * u**3) * np.exp(-u), rtol=1e-12)
    # flat side: all derivatives vanish for t <= 0
    neg = np.linspace(-1.0, 0.0, 11)
    for k in range(1, 6):
        assert np.all(f.partial(0, k)(neg) == 0.0)


def test_paper_second_derivative_of_exp_minus_two_over_x():
    # f(x) = e^{-2/x}: f''(x) = (4/x^4) e^{-2/x} (1 - x)
    f = parse_expr("expflat(x1/2)")
    x = np.linspace(0.1, 3.0, 300)
    expected = 4.0 / x**4 * np.exp(-2.0 / x) * (1.0 - x)
    np.testing.assert_allclose(f.partial(0, 2)(x), expected, rtol=1e-11)


@pytest.mark.parametrize(
    "text,pt",
    [
        ("sin(3*x1)*cos(x2)", (0.37, -1.2)),
        ("sqrt(x1 + 2)*log(x2 + 3)", (0.5, 0.25)),
        ("exp(-2/x1) + x1^3/(1 + x2^2)", (0.8, 1.5)),
        ("expflat(1 - x1^2 - x2^2)", (0.4, 0.3)),
        ("bump01(x1)*bump01(x2/2)", (0.2, 0.6)),
        ("x1^2.5 + x2^x1", (1.3, 2.0)),
    ],
)
def test_partials_against_fd_oracle(text, pt):
    f = parse_expr(text, nvars=2)
    coords = [np.array([v]) for v in pt]
    for axis in range(2):
        exact = f.partial(axis)(*coords)
        approx = fd_partial(f, coords, axis)
        np.testing.assert_allclose(exact, approx, rtol=1e-7, atol=1e-9)


def test_second_mixed_partial_fd_oracle():
    f = parse_expr("sin(x1*x2) + expflat(x1)*cos(x2)", nvars=2)
    g = f.derivative((1, 1))
    x = np.array([0.7])
    y = np.array([0.4])
    inner = f.partial(0)
    approx = fd_partial(inner, [x, y], 1)
    np.testing.assert_allclose(g(x, y), approx, rtol=1e-7)


def test_high_order_flat_derivatives_bounded():
    # eighth derivative of a bump stays finite and supported in [-1, 1]
    f = parse_expr("bump01(x1)")
    g = f.partial(0, K_MAX)
    x = np.linspace(-1.5, 1.5, 2001)
    vals = g(x)
    assert np.all(np.isfinite(vals))
    assert np.all(vals[np.abs(x) >= 1.0] == 0.0)
    assert np.max(np.abs(vals)) > 0


def test_kmax_enforced():
    f = parse_expr("sin(x1)")
    with pytest.raises(ValueError):
        differentiate(f, (K_MAX + 1,))


def test_variable_aliases():
    f = parse_expr("q1*p1 + q2 - p2", nvars=4)
    g = parse_expr("x1*x2 + x3 - x4", nvars=4)
    pts = [np.array([0.3]), np.array([1.7]), np.array([-0.5]), np.array([2.0])]
    np.testing.assert_allclose(f(*pts), g(*pts), rtol=1e-15)


def test_scalar_and_broadcast_shapes():
    f = parse_expr("x1 + 0*x2", nvars=2)
    assert isinstance(f(1.0, 2.0), float)
    a = np.zeros((3, 4))
    assert f(a, 1.0).shape == (3, 4)
    # constant expression broadcasts over inputs
    c = parse_expr("1 + 2", nvars=1)
    assert c(np.zeros(5)).shape == (5,)


def test_unary_minus_binds_looser_than_power():
    assert parse_expr("-x1^2", nvars=1)(3.0) == -9.0
    assert parse_expr("exp(-x1^2)", nvars=1)(1.0) == pytest.approx(math.exp(-1.0))
    assert parse_expr("2^-3", nvars=1)(0.0) == 0.125
    assert parse_expr("-2^2", nvars=1)(0.0) == -4.0
    assert parse_expr("x1^-2", nvars=1)(2.0) == 0.25
