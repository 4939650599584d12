"""Finite-difference Dirac operators on a box and weighted minimal-norm solves.

Fields on a grid are arrays of shape ``(P, 2**n)`` with nodes in C order of
the lattice; the flat unknown vector is node-major (``p * 2**n + A``).  The
discrete norm is ``||u||^2_{phi,h} = sum |u|^2 e^{-2 phi} h^{n+1}``.
"""

from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import lsqr
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .algebra import Multivector, blade_labels, conjugate_arrays, product_arrays
from .weights import Weight

DEFAULT_RTOL = 1e-8
DEFAULT_MAX_ITER = 10_000
TOL_DISC = 0.1


class StagnationError(ArithmeticError):
    def __init__(self, residual: float, iterations: int):
        super().__init__(f"iterative solve stalled after {iterations} iterations (residual {residual:.3e})")
        self.residual = residual
        self.iterations = iterations


class SupportMarginError(ValueError):
    pass


@dataclass(frozen=True)
class Grid:
    """Uniform lattice of ``[-half_width, half_width]^{n+1}`` containing 0."""

    n: int
    half_width: float
    spacing: float

    def __post_init__(self):
        if self.spacing <= 0 or self.half_width <= 0:
            raise ValueError("half_width and spacing must be positive")
        steps = self.half_width / self.spacing
        if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
            raise ValueError("half_width must be an integer multiple of spacing")
        if round(steps) < 2:
            raise ValueError("grid needs at least two steps per half axis")

    @classmethod
    def fitted(cls, n: int, half_width: float, spacing: float) -> "Grid":
        """Smallest admissible grid with at least the requested half width."""
        steps = int(np.ceil(half_width / spacing - 1e-9))
        return cls(n, steps * spacing, spacing)

    @property
    def steps(self) -> int:
        return int(round(self.half_width / self.spacing))

    @property
    def points_per_axis(self) -> int:
        return 2 * self.steps + 1

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.points_per_axis,) * (self.n + 1)

    @property
    def size(self) -> int:
        return self.points_per_axis ** (self.n + 1)

    @property
    def cell(self) -> float:
        return self.spacing ** (self.n + 1)

    @cached_property
    def axis(self) -> np.ndarray:
        return self.spacing * np.arange(-self.steps, self.steps + 1)

    @cached_property
    def coords(self) -> np.ndarray:
        mesh = np.meshgrid(*([self.axis] * (self.n + 1)), indexing="ij")
        out = np.stack([m.ravel() for m in mesh], axis=1)
        out.setflags(write=False)
        return out

    def layer_mask(self, layers: int) -> np.ndarray:
        """Nodes at least ``layers`` steps away from every face."""
        idx = np.indices(self.shape).reshape(self.n + 1, -1)
        lo = idx.min(axis=0)
        hi = (self.points_per_axis - 1 - idx).min(axis=0)
        return np.minimum(lo, hi) >= layers

    @cached_property
    def interior(self) -> np.ndarray:
        return self.layer_mask(1)

    @property
    def origin(self) -> int:
        return self.size // 2


def _derivative_1d(m: int, h: float) -> sparse.csr_matrix:
    """Central differences inside, second-order one-sided rows at both ends."""
    D = sparse.lil_matrix((m, m))
    for i in range(1, m - 1):
        D[i, i - 1] = -0.5 / h
        D[i, i + 1] = 0.5 / h
    D[0, 0:3] = np.array([-3.0, 4.0, -1.0]) / (2 * h)
    D[m - 1, m - 3:m] = np.array([1.0, -4.0, 3.0]) / (2 * h)
    return D.tocsr()


def partial_matrices(grid: Grid) -> list[sparse.csr_matrix]:
    """Scalar difference matrices for each coordinate direction."""
    m = grid.points_per_axis
    d1 = _derivative_1d(m, grid.spacing)
    eye = sparse.identity(m, format="csr")
    out = []
    for j in range(grid.n + 1):
        factors = [d1 if ax == j else eye for ax in range(grid.n + 1)]
        mat = factors[0]
        for f in factors[1:]:
            mat = sparse.kron(mat, f, format="csr")
        out.append(mat)
    return out


class DiracOperator:
    """Sparse D_h and its conjugate on node-major Clifford fields."""

    def __init__(self, grid: Grid, partials: list):
        self.grid = grid
        self.partials = partials

    def _assemble(self, conj: bool) -> sparse.csr_matrix:
        n = self.grid.n
        mats = [sparse.kron(pj, _generator_matrix(n, j, conj), format="csr") for j, pj in enumerate(self.partials)]
        return sum(mats[1:], mats[0]).tocsr()

    @cached_property
    def D(self) -> sparse.csr_matrix:
        return self._assemble(False)

    @cached_property
    def Dbar(self) -> sparse.csr_matrix:
        return self._assemble(True)

    def apply(self, u: np.ndarray, conj: bool = False) -> np.ndarray:
        u = _as_field(u, self.grid)
        mat = self.Dbar if conj else self.D
        return (mat @ u.ravel()).reshape(u.shape)

    def gradient(self, alpha: np.ndarray) -> np.ndarray:
        """Discrete gradient of a scalar field, shape ``(P, n+1)``."""
        alpha = np.asarray(alpha, dtype=float).ravel()
        return np.stack([dj @ alpha for dj in self.partials], axis=1)

    def conj_scalar(self, alpha: np.ndarray) -> np.ndarray:
        """D-bar_h of a real field: paravector ``d0 a - sum_j dj a e_j``."""
        return paravector_from_gradient(self.gradient(alpha), self.grid.n, conj=True)

    @cached_property
    def constraint_rows(self) -> np.ndarray:
        dim = 1 << self.grid.n
        nodes = np.flatnonzero(self.grid.interior)
        return (nodes[:, None] * dim + np.arange(dim)[None, :]).ravel()


def _generator_matrix(n: int, j: int, conj: bool) -> np.ndarray:
    if j == 0:
        return np.eye(1 << n)
    mv = Multivector.blade(n, 1 << (j - 1), -1 if conj else 1)
    return mv.left_matrix().astype(float)


def discretize(grid: Grid) -> DiracOperator:
    return DiracOperator(grid, partial_matrices(grid))


def paravector_from_gradient(grad: np.ndarray, n: int, conj: bool = False) -> np.ndarray:
    """``sum_j e_j g_j`` (or with conjugated generators) as ``(P, 2**n)``."""
    out = np.zeros((grad.shape[0], 1 << n))
    out[:, 0] = grad[:, 0]
    sign = -1.0 if conj else 1.0
    for j in range(1, n + 1):
        out[:, 1 << (j - 1)] = sign * grad[:, j]
    return out


def _as_field(u, grid: Grid) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    dim = 1 << grid.n
    if u.ndim == 1 and u.size == grid.size * dim:
        u = u.reshape(grid.size, dim)
    if u.shape != (grid.size, dim):
        raise ValueError(f"field must have shape {(grid.size, dim)}, got {u.shape}")
    return u


def sample_field(func, grid: Grid) -> np.ndarray:
    """Evaluate a callable (e.g. a PolyField) on all grid nodes."""
    vals = np.asarray(func(grid.coords), dtype=float)
    if vals.ndim == 1:
        out = np.zeros((grid.size, 1 << grid.n))
        out[:, 0] = vals
        return out
    return _as_field(vals, grid)


def grid_density(grid: Grid, w: Weight) -> np.ndarray:
    return np.exp(-2 * w(grid.coords)) * grid.cell


def grid_norm_sq(u: np.ndarray, grid: Grid, w: Weight) -> float:
    u = np.asarray(u, dtype=float)
    sq = u**2 if u.ndim == 1 else np.sum(u**2, axis=1)
    return float(grid_density(grid, w) @ sq)


def grid_inner(f: np.ndarray, g: np.ndarray, grid: Grid, w: Weight) -> Multivector:
    """Discrete ``(f, g)_phi = sum conj(f) g e^{-2 phi} h^{n+1}``."""
    n = grid.n
    f, g = _as_field(f, grid), _as_field(g, grid)
    return Multivector(n, grid_density(grid, w) @ product_arrays(conjugate_arrays(f, n), g, n))


def dstar_apply(alpha: np.ndarray, w: Weight, grid: Grid, op: DiracOperator | None = None,
                grad_alpha: np.ndarray | None = None) -> np.ndarray:
    """Weighted adjoint ``2 alpha Dbar(phi) - Dbar(alpha)`` of a real field.

    ``Dbar(alpha)`` uses the difference stencils unless the exact gradient
    ``grad_alpha`` (shape ``(P, n+1)``) is supplied; ``Dbar(phi)`` is analytic.
    """
    op = discretize(grid) if op is None else op
    alpha = np.asarray(alpha, dtype=float).ravel()
    if alpha.shape != (grid.size,):
        raise ValueError("alpha must be a real field on the grid")
    n = grid.n
    dphi = paravector_from_gradient(w.gradient(grid.coords), n, conj=True)
    if grad_alpha is None:
        dal = op.conj_scalar(alpha)
    else:
        dal = paravector_from_gradient(np.asarray(grad_alpha, dtype=float), n, conj=True)
    return 2 * alpha[:, None] * dphi - dal


class MinimalNormDiracSolver(BaseEstimator):
    """Weighted minimal-norm solutions of ``D_h u = f`` on interior nodes.

    Rows are scaled by ``e^{-phi} h^{(n+1)/2}`` and unknowns by
    ``e^{phi} h^{-(n+1)/2}`` so that the Euclidean problem is
    ``min ||v||`` subject to ``M v = b``; LSQR started at zero returns the
    minimum-norm least-squares solution, equivalently CG on the normal
    equations preconditioned by e^{2 phi}.  ``D_h u`` is then the weighted
    projection of ``f`` onto the range of D_h.

    Parameters
    ----------
    half_width, spacing : float
        Box ``[-half_width, half_width]^{n+1}`` and lattice step.
    weight : Weight
    max_iter : int
    rtol : float
        Stopping tolerance of LSQR (relative residual / optimality).
    range_warn : float
        Relative distance of ``f`` to the discrete range that triggers a warning.
    """

    def __init__(self, n=1, half_width=3.2, spacing=0.05, weight=None, max_iter=DEFAULT_MAX_ITER,
                 rtol=DEFAULT_RTOL, range_warn=1e-6):
        self.n = n
        self.half_width = half_width
        self.spacing = spacing
        self.weight = weight
        self.max_iter = max_iter
        self.rtol = rtol
        self.range_warn = range_warn

    def _setup(self):
        from ._validation import check_weight

        grid = Grid(int(self.n), float(self.half_width), float(self.spacing))
        if getattr(self, "grid_", None) != grid or getattr(self, "_weight_obj", None) is not self.weight:
            self.grid_ = grid
            self._weight_obj = self.weight
            self.weight_ = check_weight(self.weight, int(self.n))
            self.operator_ = discretize(grid)
            rows = self.operator_.constraint_rows
            dim = 1 << grid.n
            phi = self.weight_(grid.coords)
            root = np.sqrt(grid.cell)
            self._row_scale = np.repeat(np.exp(-phi) * root, dim)[rows]
            self._col_scale = np.repeat(np.exp(phi) / root, dim)
            A = self.operator_.D[rows]
            self._M = sparse.diags(self._row_scale) @ A @ sparse.diags(self._col_scale)
            self._M = self._M.tocsr()

    def fit(self, f, y=None):
        """Solve for the right-hand side ``f`` of shape ``(P, 2**n)``."""
        self._setup()
        grid = self.grid_
        f = _as_field(f, grid)
        rows = self.operator_.constraint_rows
        b = self._row_scale * f.ravel()[rows]
        bnorm = np.linalg.norm(b)
        if bnorm == 0:
            self.solution_ = np.zeros_like(f)
            self.residual_ = 0.0
            self.range_deviation_ = 0.0
            self.iterations_ = 0
            self.projected_rhs_ = np.zeros_like(f)
            return self
        res = lsqr(self._M, b, atol=1e-4 * self.rtol, btol=0.5 * self.rtol, iter_lim=int(self.max_iter))
        v, istop, itn = res[0], res[1], res[2]
        r = self._M @ v - b
        # deviation of f from the discrete range = size of the least-squares residual
        dev = float(np.linalg.norm(r) / bnorm)
        opt = float(np.linalg.norm(self._M.T @ r) / (max(res[5], 1e-300) * bnorm))
        self.iterations_ = int(itn)
        self.range_deviation_ = dev
        self.optimality_ = opt
        if istop == 7 and min(dev, opt) > self.rtol:
            raise StagnationError(min(dev, opt), int(itn))
        if dev > self.range_warn:
            warnings.warn(f"right-hand side is {dev:.2e} away from the range of D_h; projected")
        u = (self._col_scale * v).reshape(f.shape)
        self.solution_ = u
        self.projected_rhs_ = self.operator_.apply(u)
        # consistent data: the residual is the distance D_h u - f itself;
        # otherwise D_h u is the projection and the normal-equation gap is reported
        self.residual_ = dev if dev <= self.range_warn else opt
        return self

    def solve(self, f) -> np.ndarray:
        return self.fit(f).solution_

    def norm_sq(self, u) -> float:
        check_is_fitted(self, "grid_")
        return grid_norm_sq(u, self.grid_, self.weight_)


def minimal_norm_solve(f, w: Weight, grid: Grid, max_iter: int = DEFAULT_MAX_ITER,
                       rtol: float = DEFAULT_RTOL) -> MinimalNormDiracSolver:
    solver = MinimalNormDiracSolver(grid.n, grid.half_width, grid.spacing, w, max_iter, rtol)
    return solver.fit(f)


def nullspace_probe(solver: MinimalNormDiracSolver, r: np.ndarray) -> np.ndarray:
    """``r - P r`` with ``P r`` the minimal-norm solution for ``D_h r``; lies in ker D_h."""
    solver._setup()
    r = _as_field(r, solver.grid_)
    u = solver.fit(solver.operator_.apply(r)).solution_
    return r - u


# bound and solvability checks ----------------------------------------------

@dataclass
class L2BoundResult:
    ratio: float
    ratio_doubled: float
    norm_u2: float
    bound: float


def verify_l2_bound(u, f, w: Weight, grid: Grid) -> L2BoundResult:
    """``||u||^2 / (4^n sum |f|^2 / Lap(phi) e^{-2phi} h^{n+1})``.

    ``ratio_doubled`` uses ``Lap(2 phi)`` in the denominator instead.
    """
    lap = np.asarray(w.laplacian(grid.coords), dtype=float)
    if lap.min() <= 0:
        raise ValueError("Laplacian of the weight must be positive on the grid")
    nu = grid_norm_sq(u, grid, w)
    fsq = np.sum(_as_field(f, grid) ** 2, axis=1)
    bound = 4**grid.n * float(grid_density(grid, w) @ (fsq / lap))
    if bound == 0:
        return L2BoundResult(0.0, 0.0, nu, 0.0)
    return L2BoundResult(nu / bound, 2 * nu / bound, nu, bound)


class Bump:
    """``amp * cos(pi r / (2 rho))^power`` for ``r = |x - center| < rho``, else 0."""

    def __init__(self, center, radius: float, power: int = 4, amp: float = 1.0):
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)
        self.power = int(power)
        self.amp = float(amp)
        if self.power < 2:
            raise ValueError("power must be at least 2 for a C^1 bump")

    def _r(self, X):
        d = np.asarray(X, dtype=float) - self.center
        return d, np.linalg.norm(d, axis=1)

    def __call__(self, X) -> np.ndarray:
        _, r = self._r(X)
        s = np.pi * np.minimum(r, self.radius) / (2 * self.radius)
        return np.where(r < self.radius, self.amp * np.cos(s) ** self.power, 0.0)

    def gradient(self, X) -> np.ndarray:
        d, r = self._r(X)
        s = np.pi * np.minimum(r, self.radius) / (2 * self.radius)
        dr = -self.amp * self.power * np.cos(s) ** (self.power - 1) * np.sin(s) * np.pi / (2 * self.radius)
        with np.errstate(invalid="ignore", divide="ignore"):
            unit = np.where(r[:, None] > 0, d / r[:, None], 0.0)
        return np.where((r < self.radius)[:, None], dr[:, None] * unit, 0.0)

    def margin_ok(self, grid: Grid, layers: int = 2) -> bool:
        inner = grid.half_width - layers * grid.spacing
        return bool(np.all(np.abs(self.center) + self.radius <= inner))


def energy_identity_check(alpha: Bump, w: Weight, grid: Grid, op: DiracOperator | None = None) -> tuple[float, float]:
    """Discrete ``(||D*alpha||^2, ||Dbar alpha||^2 + sum alpha^2 Lap(2phi) e^{-2phi} h^{n+1})``."""
    if not alpha.margin_ok(grid):
        raise SupportMarginError("test field needs two grid layers of margin inside the box")
    op = discretize(grid) if op is None else op
    a = alpha(grid.coords)
    lhs = grid_norm_sq(dstar_apply(a, w, grid, op), grid, w)
    dens = grid_density(grid, w)
    rhs = grid_norm_sq(op.conj_scalar(a), grid, w) + float(dens @ (a**2 * 2 * w.laplacian(grid.coords)))
    return lhs, rhs


@dataclass
class SolvabilityReport:
    chain_mismatch: list
    chain_scale: list
    lhs: list
    rhs: list
    tol_disc: float = TOL_DISC

    @property
    def relative_mismatch(self) -> np.ndarray:
        m = np.asarray(self.chain_mismatch)
        s = np.asarray(self.chain_scale)
        return np.where(s > 0, m / np.where(s > 0, s, 1), m)

    @property
    def necessity_passed(self) -> bool:
        return all(l <= (1 + self.tol_disc) * r for l, r in zip(self.lhs, self.rhs))


def solvability_checks(f, u, trials, w: Weight, grid: Grid, tol_disc: float = TOL_DISC,
                op: DiracOperator | None = None) -> SolvabilityReport:
    """Adjoint chain and necessity inequality for A_n-valued test fields.

    Each trial is a list of ``(blade, Bump)`` pairs forming
    ``alpha = sum_A alpha_A e_A``.  The chain compares the discrete
    ``(alpha, f)_phi`` with ``sum_A conj(e_A) (D* alpha_A, u)_phi`` where
    D* uses the exact gradient of each bump, so the gap is the consistency
    error of the stencils.
    """
    n = grid.n
    dim = 1 << n
    f, u = _as_field(f, grid), _as_field(u, grid)
    X = grid.coords
    nu = grid_norm_sq(u, grid, w)
    mism, scale, lhs, rhs = [], [], [], []
    for trial in trials:
        alpha = np.zeros((grid.size, dim))
        chain = Multivector.zero(n, exact=False)
        dsum = 0.0
        for A, bump in trial:
            if not bump.margin_ok(grid):
                raise SupportMarginError("test field needs two grid layers of margin inside the box")
            a = bump(X)
            alpha[:, A] += a
            ds = dstar_apply(a, w, grid, op, grad_alpha=bump.gradient(X))
            inner = grid_inner(ds, u, grid, w)
            chain = chain + Multivector.blade(n, A, 1.0).conjugate() * inner
            dsum += grid_norm_sq(ds, grid, w)
        direct = grid_inner(alpha, f, grid, w)
        mism.append(abs(direct - chain))
        scale.append(np.sqrt(grid_norm_sq(alpha, grid, w) * grid_norm_sq(f, grid, w)))
        lhs.append(abs(direct) ** 2)
        rhs.append(4**n * nu * dsum)
    return SolvabilityReport(mism, scale, lhs, rhs, tol_disc)


def field_csv(u, grid: Grid) -> str:
    u = _as_field(u, grid)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([f"x{j}" for j in range(grid.n + 1)] + blade_labels(grid.n))
    for x, vals in zip(grid.coords, u):
        writer.writerow([repr(float(v)) for v in x] + [repr(float(v)) for v in vals])
    return buf.getvalue()
