from fractions import Fraction

import numpy as np
import pytest
from sklearn.base import clone

from cliffock.algebra import Multivector
from cliffock.dirac import (
    Bump,
    Grid,
    MinimalNormDiracSolver,
    SupportMarginError,
    discretize,
    dstar_apply,
    energy_identity_check,
    field_csv,
    grid_density,
    grid_inner,
    grid_norm_sq,
    minimal_norm_solve,
    nullspace_probe,
    sample_field,
    solvability_checks,
    verify_l2_bound,
)
from cliffock.polynomials import PolyField, dirac_apply
from cliffock.weights import isotropic, zero_weight


def coord(n, j):
    return PolyField.coordinate(n, j)


def gaussian_times(P, width=0.8):
    """g = exp(-|x|^2 / w^2) P(x) as a grid callable."""
    def g(X):
        return np.exp(-(X**2).sum(1) / width**2)[:, None] * P(X)
    return g


def interior_norm(v, grid, w):
    """Weighted norm over interior nodes, where the constraint equations live."""
    dens = grid_density(grid, w)[grid.interior]
    return np.sqrt(dens @ np.sum(np.asarray(v)[grid.interior] ** 2, axis=1))


@pytest.fixture(scope="module")
def grid1():
    return Grid(1, 3.0, 0.1)


def test_grid_invariants():
    g = Grid(1, 1.0, 0.25)
    assert g.points_per_axis == 9 and g.size == 81
    assert g.coords.shape == (81, 2)
    np.testing.assert_allclose(g.coords[g.origin], [0.0, 0.0])
    assert np.allclose(np.diff(g.axis), 0.25)
    assert Grid(2, 1.0, 0.5).size == 5**3
    assert Grid.fitted(1, 1.05, 0.1).half_width == pytest.approx(1.1)
    with pytest.raises(ValueError):
        Grid(1, 1.0, 0.3)
    with pytest.raises(ValueError):
        Grid(1, 1.0, -0.1)


def test_stencils_exact_on_quadratics():
    grid = Grid(2, 1.0, 0.125)
    op = discretize(grid)
    # x1 - x0 e1 + x0 x2 e3-part: any degree <= 2 polynomial is differentiated exactly
    e1 = Multivector.blade(2, 0b01, Fraction(1))
    e12 = Multivector.blade(2, 0b11, Fraction(1))
    P = coord(2, 1) - coord(2, 0).right_mul(e1) + coord(2, 0).mul_poly(coord(2, 2)).right_mul(e12)
    P = P + coord(2, 1).mul_poly(coord(2, 1))
    got = op.apply(sample_field(P, grid))
    want = sample_field(dirac_apply(P), grid)
    assert np.abs(got - want).max() < 1e-12
    assert np.abs(op.apply(sample_field(PolyField.constant(2, e12), grid))).max() == 0.0


def test_fueter_variable_in_kernel(grid1):
    e1 = Multivector.blade(1, 1, Fraction(1))
    z = coord(1, 1) - coord(1, 0).right_mul(e1)
    assert np.abs(discretize(grid1).apply(sample_field(z, grid1))).max() < 1e-12


def test_second_order_consistency():
    P = coord(1, 0).mul_poly(coord(1, 0)).mul_poly(coord(1, 0)).mul_poly(coord(1, 1))  # x0^3 x1
    errs = []
    for h in (0.1, 0.05):
        grid = Grid(1, 1.0, h)
        err = discretize(grid).apply(sample_field(P, grid)) - sample_field(dirac_apply(P), grid)
        errs.append(np.abs(err[grid.interior]).max())
    assert 3.0 <= errs[0] / errs[1] <= 5.0


def test_dbar_d_is_laplacian(grid1):
    op = discretize(grid1)
    x0sq = sample_field(coord(1, 0).mul_poly(coord(1, 0)), grid1)
    lap = op.apply(op.apply(x0sq), conj=True)
    deep = grid1.layer_mask(2)
    np.testing.assert_allclose(lap[deep, 0], 2.0, atol=1e-10)
    assert np.abs(lap[deep, 1]).max() < 1e-10


def test_dstar_examples(grid1):
    w = isotropic(1)
    X = grid1.coords
    one = np.ones(grid1.size)
    got = dstar_apply(one, w, grid1)
    # 2 Dbar(|x|^2) = 2 (2 x0 - 2 x1 e1)
    np.testing.assert_allclose(got, np.stack([4 * X[:, 0], -4 * X[:, 1]], axis=1), atol=1e-12)
    bump = Bump([0.2, -0.1], 1.0)
    a = bump(X)
    op = discretize(grid1)
    np.testing.assert_allclose(dstar_apply(a, zero_weight(1), grid1, op), -op.conj_scalar(a), atol=0)
    away = np.linalg.norm(X - bump.center, axis=1) > bump.radius + 2 * grid1.spacing
    assert np.abs(dstar_apply(a, w, grid1, op)[away]).max() == 0.0
    assert np.all(np.abs(dstar_apply(a, w, grid1, op)) < np.inf)


def test_zero_rhs_gives_zero(grid1):
    solver = minimal_norm_solve(np.zeros((grid1.size, 2)), isotropic(1), grid1)
    assert not solver.solution_.any()
    res = verify_l2_bound(solver.solution_, np.zeros((grid1.size, 2)), isotropic(1), grid1)
    assert res.ratio == 0.0


@pytest.fixture(scope="module")
def solved1(grid1):
    w = isotropic(1)
    e1 = Multivector.blade(1, 1, Fraction(1))
    P = coord(1, 0) + coord(1, 1).right_mul(e1) + PolyField.constant(1, Fraction(1, 2))
    g = sample_field(gaussian_times(P), grid1)
    op = discretize(grid1)
    f = op.apply(g)
    solver = minimal_norm_solve(f, w, grid1)
    return solver, g, f


def test_minimal_norm_solution_properties(solved1, grid1):
    solver, g, f = solved1
    w = isotropic(1)
    u = solver.solution_
    assert solver.residual_ <= 1e-8
    err = solver.operator_.apply(u) - f
    assert interior_norm(err, grid1, w) <= 1e-8 * interior_norm(f, grid1, w)
    assert grid_norm_sq(u, grid1, w) <= grid_norm_sq(g, grid1, w)
    res = verify_l2_bound(u, f, w, grid1)
    assert 0 < res.ratio <= 1.1
    assert res.ratio_doubled == pytest.approx(2 * res.ratio)


def test_adding_nullspace_directions_increases_norm(solved1, grid1):
    solver, _, f = solved1
    w = isotropic(1)
    u = solver.solution_.copy()
    base = grid_norm_sq(u, grid1, w)
    probe = clone(solver)
    rng = np.random.default_rng(0)
    for _ in range(3):
        r = rng.normal(size=u.shape)
        z = nullspace_probe(probe, r)
        Dr = probe.operator_.apply(r)
        assert interior_norm(probe.operator_.apply(z), grid1, w) <= 1e-7 * interior_norm(Dr, grid1, w)
        # weighted orthogonality of u and ker D_h directions
        zu = grid_inner(z, u, grid1, w).scalar_part()
        assert abs(zu) <= 1e-6 * np.sqrt(grid_norm_sq(z, grid1, w) * base)
        for eps in (1e-2, -1e-2):
            assert grid_norm_sq(u + eps * z, grid1, w) > base


def test_energy_identity_second_order():
    w = isotropic(1)
    gaps = []
    for h in (0.1, 0.05):
        grid = Grid(1, 3.0, h)
        lhs, rhs = energy_identity_check(Bump([0.0, 0.0], 1.5, power=2), w, grid)
        gaps.append(abs(lhs - rhs) / rhs)
    assert gaps[1] <= 1e-3
    assert 3.0 <= gaps[0] / gaps[1] <= 5.0
    lhs, rhs = energy_identity_check(Bump([0.0, 0.0], 1.0, amp=0.0), w, Grid(1, 2.0, 0.1))
    assert lhs == rhs == 0.0


def test_energy_identity_margin_error():
    with pytest.raises(SupportMarginError):
        energy_identity_check(Bump([0.0, 0.0], 2.95), isotropic(1), Grid(1, 3.0, 0.1))


def test_solvability_checks(solved1, grid1):
    solver, _, f = solved1
    rng = np.random.default_rng(4)
    trials = []
    for _ in range(5):
        trials.append([(int(A), Bump(rng.uniform(-0.8, 0.8, 2), rng.uniform(0.6, 1.2), amp=rng.normal()))
                       for A in range(2)])
    rep = solvability_checks(f, solver.solution_, trials, isotropic(1), grid1)
    assert rep.necessity_passed
    assert np.max(rep.relative_mismatch) < 0.05
    zero = solvability_checks(f, solver.solution_, [[(0, Bump([0, 0], 1.0, amp=0.0))]], isotropic(1), grid1)
    assert zero.lhs == [0.0] and zero.rhs == [0.0]


def test_adjoint_chain_converges():
    w = isotropic(1)
    e1 = Multivector.blade(1, 1, Fraction(1))
    g = gaussian_times(coord(1, 1).right_mul(e1) + PolyField.constant(1, 1))
    trials = [[(0, Bump([0.3, 0.1], 1.0)), (1, Bump([-0.2, 0.2], 0.8, amp=-0.7))]]
    gaps = []
    for h in (0.1, 0.05):
        grid = Grid(1, 3.0, h)
        f = discretize(grid).apply(sample_field(g, grid))
        u = minimal_norm_solve(f, w, grid).solution_
        gaps.append(solvability_checks(f, u, trials, w, grid).relative_mismatch[0])
    assert 3.0 <= gaps[0] / gaps[1] <= 5.0


def test_solver_estimator_shape_and_validation(grid1):
    est = MinimalNormDiracSolver(n=1, half_width=1.0, spacing=0.25)
    assert est.get_params()["spacing"] == 0.25
    with pytest.raises(ValueError):
        est.fit(np.zeros((5, 2)))
    est.fit(np.zeros((81, 2)))
    assert est.norm_sq(est.solution_) == 0.0


def test_field_csv(grid1):
    g = Grid(1, 0.5, 0.25)
    text = field_csv(np.ones((g.size, 2)), g)
    lines = text.splitlines()
    assert lines[0] == "x0,x1,e0,e1"
    assert len(lines) == g.size + 1
