from math import gamma, pi, sqrt

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cliffock.algebra import Multivector, conjugate, conjugate_arrays, norm_sq_arrays, product_arrays
from cliffock.quadrature import (
    RuleWeightMismatch,
    ball_rule,
    ball_volume,
    gauss_full_space,
    weighted_inner,
    weighted_norm_sq,
)
from cliffock.weights import diagonal, isotropic, make_quadratic


@pytest.mark.parametrize("n", [1, 2, 3])
def test_gaussian_mass(n):
    rule = gauss_full_space(isotropic(n), 6)
    assert rule.integrate(np.ones(len(rule))) == pytest.approx((pi / 2) ** ((n + 1) / 2), rel=1e-13)
    assert np.all(rule.weights > 0)


def test_axis_moment_and_odd_symmetry():
    rule = gauss_full_space(isotropic(1), 8)
    x0 = rule.nodes[:, 0]
    # int x0^2 e^{-2 x0^2} dx0 * int e^{-2 x1^2} dx1
    assert rule.integrate(x0**2) == pytest.approx(0.25 * sqrt(pi / 2) * sqrt(pi / 2), rel=1e-13)
    assert abs(rule.integrate(x0)) < 1e-15
    assert abs(rule.integrate(x0 * rule.nodes[:, 1] ** 2)) < 1e-15


def test_anisotropic_rule_matches_closed_form():
    Q = np.array([[1.0, 0.4], [0.4, 2.0]])
    rule = gauss_full_space(make_quadratic(Q), 10)
    # int e^{-2 x^T Q x} = pi / sqrt(det(2Q)) in two dimensions
    assert rule.integrate(np.ones(len(rule))) == pytest.approx(pi / sqrt(np.linalg.det(2 * Q)), rel=1e-12)
    # second moments: E[x x^T] = (4Q)^{-1} times the mass
    mass = pi / sqrt(np.linalg.det(2 * Q))
    cov = np.linalg.inv(4 * Q) * mass
    X = rule.nodes
    np.testing.assert_allclose(rule.integrate(X[:, :, None] * X[:, None, :]), cov, rtol=1e-12)


def test_full_space_exactness_convergence():
    w = diagonal([1.0, 0.5, 2.0])
    f = lambda X: (1 + X[:, 0] ** 2 * X[:, 1] ** 4 + X[:, 2] ** 6)  # noqa: E731
    vals = []
    for q in (5, 7, 9):
        r = gauss_full_space(w, q)
        vals.append(r.integrate(f(r.nodes)))
    assert abs(vals[1] - vals[0]) / abs(vals[0]) < 1e-12
    assert abs(vals[2] - vals[1]) / abs(vals[1]) < 1e-12


def test_ball_volumes_and_moment():
    r2 = ball_rule([0.0, 0.0], 1.0, 4)
    assert r2.integrate(np.ones(len(r2))) == pytest.approx(pi, rel=1e-13)
    r3 = ball_rule([0.0, 0.0, 0.0], 1.0, 4)
    assert r3.integrate(np.ones(len(r3))) == pytest.approx(4 * pi / 3, rel=1e-13)
    X = r2.nodes
    assert r2.integrate(X[:, 0] ** 2 + X[:, 1] ** 2) == pytest.approx(pi / 2, rel=1e-13)
    r4 = ball_rule(np.zeros(4), 0.5, 6)
    assert r4.integrate(np.ones(len(r4))) == pytest.approx(ball_volume(4, 0.5), rel=1e-13)


@pytest.mark.parametrize("dim", [2, 3, 4])
def test_ball_polynomial_exactness(dim):
    # int_{B_c(R)} |y - c|^4 dy = |S^{dim-1}| R^{dim+4} / (dim + 4)
    c = np.linspace(0.1, 0.4, dim)
    rule = ball_rule(c, 0.7, 6)
    s = 2 * pi ** (dim / 2) / gamma(dim / 2)
    r = np.linalg.norm(rule.nodes - c, axis=1)
    assert rule.integrate(r**4) == pytest.approx(s * 0.7 ** (dim + 4) / (dim + 4), rel=1e-12)
    # odd moments about the centre vanish
    assert abs(rule.integrate((rule.nodes[:, 0] - c[0]) ** 3)) < 1e-14


def test_ball_monte_carlo_in_high_dimension():
    rule = ball_rule(np.zeros(5), 1.0, 4, seed=3)
    assert rule.exactness_degree == 0
    assert rule.integrate(np.ones(len(rule))) == pytest.approx(ball_volume(5, 1.0), rel=1e-12)
    again = ball_rule(np.zeros(5), 1.0, 4, seed=3)
    np.testing.assert_array_equal(rule.nodes, again.nodes)


def test_ball_rule_errors():
    with pytest.raises(ValueError):
        ball_rule([0.0, 0.0], 0.0, 4)


def test_weighted_inner_of_constants():
    w = isotropic(1)
    rule = gauss_full_space(w, 4)
    e0 = Multivector.scalar(1, 1.0)
    val = weighted_inner(e0, e0, rule)
    assert val.allclose(Multivector.scalar(1, pi / 2), atol=1e-14)


def test_weighted_inner_rejects_other_weight():
    rule = gauss_full_space(isotropic(1), 4)
    with pytest.raises(RuleWeightMismatch):
        weighted_inner(Multivector.scalar(1, 1.0), Multivector.scalar(1, 1.0), rule, weight=isotropic(1, 2.0))


def _poly_field(n, coeffs, degree=2):
    """Field x -> sum_k c_k(x) with c_k random multivectors times monomials."""
    def f(X):
        out = np.zeros((X.shape[0], 1 << n))
        for j, c in enumerate(coeffs):
            out += np.outer(X[:, j % (n + 1)] ** (j % (degree + 1)), c)
        return out
    return f


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 3), st.integers(0, 10_000))
def test_inner_product_hermitian_and_positive(n, seed):
    rng = np.random.default_rng(seed)
    rule = gauss_full_space(isotropic(n), 5)
    f = _poly_field(n, rng.normal(size=(3, 1 << n)))
    g = _poly_field(n, rng.normal(size=(3, 1 << n)))
    fg = weighted_inner(f, g, rule)
    gf = weighted_inner(g, f, rule)
    np.testing.assert_allclose(fg.coeffs, conjugate(gf).coeffs, atol=1e-12)
    ff = weighted_inner(f, f, rule)
    assert ff.scalar_part() == pytest.approx(weighted_norm_sq(f, rule), rel=1e-12)
    assert weighted_norm_sq(f, rule) >= 0
    # module Cauchy-Schwarz
    assert abs(fg) <= 2**n * np.sqrt(weighted_norm_sq(f, rule) * weighted_norm_sq(g, rule)) + 1e-12


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 3), st.integers(0, 10_000))
def test_norm_scales_by_modulus_for_paravector_fields(n, seed):
    rng = np.random.default_rng(seed)
    rule = gauss_full_space(isotropic(n), 5)
    A = rng.normal(size=(n + 1, n + 1))
    masks = [0] + [1 << j for j in range(n)]

    def u(X):
        out = np.zeros((X.shape[0], 1 << n))
        out[:, masks] = X @ A + 0.5
        return out

    lam = rng.normal(size=1 << n)
    lam_u = lambda X: product_arrays(np.broadcast_to(lam, (X.shape[0], 1 << n)), u(X), n)  # noqa: E731
    lhs = weighted_norm_sq(lam_u, rule)
    assert lhs == pytest.approx(np.sum(lam**2) * weighted_norm_sq(u, rule), rel=1e-10)


def test_even_paravector_field_has_scalar_self_product():
    n = 2
    rule = gauss_full_space(isotropic(n), 6)
    masks = [0, 1, 2]

    def u(X):
        out = np.zeros((X.shape[0], 4))
        out[:, masks] = np.stack([1 + X[:, 0] ** 2, X[:, 1] ** 2, X[:, 2] ** 2 - 0.3], axis=1)
        return out

    val = weighted_inner(u, u, rule)
    assert np.abs(val.coeffs[1:]).max() < 1e-13
    pointwise = product_arrays(conjugate_arrays(u(rule.nodes), n), u(rule.nodes), n)
    np.testing.assert_allclose(pointwise[:, 0], norm_sq_arrays(u(rule.nodes)), rtol=1e-13)


def test_scalar_field_needs_algebra():
    rule = gauss_full_space(isotropic(1), 3)
    val = weighted_inner(lambda X: X[:, 0], lambda X: X[:, 0], rule, n=1)
    assert val.scalar_part() == pytest.approx(0.25 * pi / 2, rel=1e-13)


def test_csv_export():
    rule = ball_rule([0.0, 0.0], 1.0, 2)
    text = rule.to_csv()
    lines = text.splitlines()
    assert lines[0] == "x0,x1,weight"
    assert len(lines) == len(rule) + 1
    assert "\r" not in text
