import dataclasses
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cliffock.polynomials import PolyField, laplacian_apply
from cliffock.weights import (
    UnsupportedWeightError,
    decompose_quadratic,
    diagonal,
    from_config,
    isotropic,
    make_quadratic,
    quadratic_poly,
    sample_points,
    validate_bounds,
    zero_weight,
)


def test_isotropic_constants():
    w = make_quadratic(np.eye(2))
    assert w.m == w.M == 4.0
    assert w.L == 2.0
    assert w.homogeneous2
    x = np.array([[0.3, -1.2]])
    assert w(x)[0] == pytest.approx(0.09 + 1.44)


def test_anisotropic_constants():
    w = make_quadratic(np.diag([1.0, 2.0]))
    assert w.m == 6.0 and w.L == 4.0
    assert isotropic(2).m == 6.0


def test_non_positive_definite_rejected():
    with pytest.raises(ValueError):
        make_quadratic(np.diag([1.0, -1.0]))
    with pytest.raises(ValueError):
        make_quadratic([[1.0, 2.0], [0.0, 1.0]])


def test_bounds_pass_for_isotropic():
    w = isotropic(2)
    rep = validate_bounds(w, sample_points(2, 200))
    assert rep.passed and rep.violations == []


def test_gradient_bound_violation_detected():
    w = dataclasses.replace(make_quadratic(np.diag([1.0, 3.0])), L=2.0)
    rep = validate_bounds(w, np.array([[0.0, 1.0]]))
    assert not rep.passed
    assert rep.violations == ["gradient"]
    assert rep.gradient_margin == pytest.approx(2.0 - 6.0)
    np.testing.assert_array_equal(rep.worst_points["gradient"], [0.0, 1.0])


def test_laplacian_lower_violation_detected():
    rep = validate_bounds(zero_weight(1, m=1.0), sample_points(1, 32))
    assert "laplacian_lower" in rep.violations
    assert rep.laplacian_lower_margin == pytest.approx(-1.0)


def test_empty_samples_rejected():
    with pytest.raises(ValueError):
        validate_bounds(isotropic(1), np.zeros((0, 2)))


@settings(max_examples=30, deadline=None)
@given(st.floats(0.1, 3.0), st.lists(st.floats(-2, 2), min_size=2, max_size=2))
def test_homogeneity(t, x):
    w = diagonal([1.0, 2.5])
    x = np.array([x])
    assert w(t * x)[0] == pytest.approx(t * t * w(x)[0], rel=1e-12, abs=1e-12)


def test_decomposition_examples():
    d = decompose_quadratic(isotropic(1))
    assert d.t == 1 and all(v == 0 for row in d.H for v in row)
    d = decompose_quadratic(make_quadratic(np.diag([1.0, 0.0]), check=False))
    assert d.t == Fraction(1, 2)
    assert d.H == ((Fraction(1, 2), 0), (0, Fraction(-1, 2)))
    assert d.is_harmonic()
    d = decompose_quadratic(isotropic(2, 2.0))
    assert d.t == 2 and not d.h_poly().terms


def test_decomposition_reassembles_exactly():
    Q = np.array([[2.0, 0.5, 0.0], [0.5, 1.0, -0.25], [0.0, -0.25, 3.0]])
    w = make_quadratic(Q)
    d = decompose_quadratic(w)
    assert laplacian_apply(d.h_poly()).is_zero()
    r2 = sum((PolyField.monomial(2, [2 if i == j else 0 for j in range(3)], 0, 1) for i in range(3)), PolyField(2))
    assert (d.h_poly() + r2.scale(d.t) - quadratic_poly(w)).is_zero()
    X = np.random.default_rng(1).normal(size=(5, 3))
    np.testing.assert_allclose(d.h(X) + float(d.t) * (X**2).sum(1), w(X), rtol=1e-13)


def test_decomposition_needs_quadratic():
    w = dataclasses.replace(isotropic(1), Q=None)
    with pytest.raises(UnsupportedWeightError):
        decompose_quadratic(w)


def test_finite_difference_second_order():
    w = make_quadratic(np.array([[1.0, 0.3], [0.3, 2.0]]))
    x = np.array([0.7, -0.4])
    cube = lambda y: w(y) + (y[:, 0] ** 3 - y[:, 0] * y[:, 1] ** 2)  # noqa: E731
    # analytic data for the cubic perturbation makes the O(h^2) term nonzero
    grad_exact = w.gradient(x[None])[0] + np.array([3 * x[0] ** 2 - x[1] ** 2, -2 * x[0] * x[1]])
    lap_exact = w.laplacian(x[None])[0] + (6 * x[0] - 2 * x[0])
    errs_g, errs_l = [], []
    for h in (1e-2, 5e-3):
        E = np.eye(2) * h
        g = np.array([(cube((x + E[j])[None]) - cube((x - E[j])[None]))[0] / (2 * h) for j in range(2)])
        lap = sum((cube((x + E[j])[None]) - 2 * cube(x[None]) + cube((x - E[j])[None]))[0] / h**2 for j in range(2))
        errs_g.append(np.abs(g - grad_exact).max())
        errs_l.append(abs(lap - lap_exact))
    assert 3.0 <= errs_g[0] / errs_g[1] <= 5.0
    # quadratic + cubic: the 3-point Laplacian is exact up to rounding
    assert errs_l[1] < 1e-5
    # the quadratic part alone is exact for central differences
    E = np.eye(2) * 1e-3
    g = np.array([(w((x + E[j])[None]) - w((x - E[j])[None]))[0] / 2e-3 for j in range(2)])
    np.testing.assert_allclose(g, w.gradient(x[None])[0], atol=1e-9)


def test_from_config():
    assert from_config("quadratic_iso", (2.0,), 1).m == 8.0
    assert from_config("quadratic_diag", (1.0, 2.0, 3.0), 2).L == 6.0
    w = from_config("quadratic_full", (1.0, 0.0, 0.0, 1.0), 1)
    assert w.same_as(isotropic(1))
    assert from_config("zero", None, 1).name == "zero"
    with pytest.raises(ValueError):
        from_config("cubic", None, 1)
    with pytest.raises(ValueError):
        from_config("quadratic_diag", (1.0,), 2)


def test_scaled_weight():
    w = isotropic(1).scaled(4.0)
    assert w.m == 16.0
    assert w.same_as(isotropic(1, 4.0))
