"""Empirical surrogates of the pointwise and kernel estimates.

Each function returns a small report object holding the raw table and the
pass/fail verdict of its contract; the CLI turns these into CSV files.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from math import pi

import numpy as np
from scipy.special import logsumexp

from .dirac import Grid, MinimalNormDiracSolver, grid_norm_sq
from .kernel import BergmanKernel
from .quadrature import _sphere_rule, ball_rule, ball_volume
from .weights import UnsupportedWeightError, Weight, decompose_quadratic

NOISE_FLOOR = 1e-14


def _values(u, X, n) -> np.ndarray:
    vals = np.asarray(u(X), dtype=float)
    if vals.ndim == 1:
        vals = vals[:, None]
    return vals


# mean-value inequality -------------------------------------------------------

@dataclass
class MVIReport:
    radius: float
    points: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    ratios: np.ndarray
    constant: float
    constant_refined: float
    anomalies: list = field(default_factory=list)

    @property
    def stable(self) -> bool:
        if self.constant == 0:
            return self.constant_refined == 0
        return abs(self.constant_refined / self.constant - 1) <= 0.1

    @property
    def passed(self) -> bool:
        return bool(np.all(np.isfinite(self.ratios))) and self.stable and not self.anomalies


def _mvi_ratios(u, w: Weight, R: float, X: np.ndarray, order: int, seed: int):
    n = w.n
    lhs = np.linalg.norm(_values(u, X, n), axis=1) * np.exp(-w(X))
    rhs = np.empty(len(X))
    for i, x in enumerate(X):
        rule = ball_rule(x, R, order, seed=seed)
        vals = _values(u, rule.nodes, n)
        rhs[i] = np.sqrt(rule.weights @ (np.sum(vals**2, axis=1) * np.exp(-2 * w(rule.nodes))))
    return lhs, rhs


def mvi_check(u, w: Weight, R: float, X, order: int = 16, refine: int = 8, seed: int = 0) -> MVIReport:
    """Ratios ``|u(x)| e^{-phi(x)} / (int_{B_x(R)} |u|^2 e^{-2 phi})^{1/2}``.

    The rule of order ``order`` is compared with one of order ``order + refine``.
    """
    if not 0 < R < 1:
        raise ValueError("R must lie in (0, 1)")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    lhs, rhs = _mvi_ratios(u, w, R, X, order, seed)
    lhs2, rhs2 = _mvi_ratios(u, w, R, X, order + refine, seed + 1)
    anomalies = []
    scale = max(float(rhs.max(initial=0.0)), 1.0)

    def ratios(a, b):
        out = np.zeros_like(a)
        ok = b > 1e-300
        out[ok] = a[ok] / b[ok]
        return out

    for i, (a, b) in enumerate(zip(lhs, rhs)):
        if a > 0 and b <= 1e-13 * scale:
            anomalies.append(i)
    r = ratios(lhs, rhs)
    r2 = ratios(lhs2, rhs2)
    return MVIReport(float(R), X, lhs, rhs, r, float(r.max(initial=0.0)), float(r2.max(initial=0.0)), anomalies)


# Moser chain -------------------------------------------------------------------

def chain_exponent(n: int) -> float:
    """(n+1)/(n-1) for n > 1; the fixed choice 3 for n = 1."""
    return (n + 1) / (n - 1) if n > 1 else 3.0


@dataclass
class MoserTable:
    gammas: np.ndarray
    radii: np.ndarray
    log_norms: np.ndarray
    log_space: np.ndarray
    sup: float
    k0: float

    @property
    def norms(self) -> np.ndarray:
        return np.exp(self.log_norms)

    @property
    def final_ratio(self) -> float:
        return float(self.norms[-1] / self.sup)

    @property
    def passed(self) -> bool:
        return abs(self.final_ratio - 1) <= 0.1

    @property
    def log_space_used(self) -> bool:
        return bool(self.log_space.any())


def _ball_lattice(dim: int, radius: float, per_axis: int) -> np.ndarray:
    ax = np.linspace(-radius, radius, per_axis)
    mesh = np.stack([m.ravel() for m in np.meshgrid(*([ax] * dim), indexing="ij")], axis=1)
    inside = mesh[np.linalg.norm(mesh, axis=1) <= radius]
    dirs, _ = _sphere_rule(dim, 2 * per_axis)
    return np.vstack([inside, radius * dirs])


def moser_chain(v, w: Weight, k0: float = 1e-3, steps: int = 7, order: int = 40,
                sup_points: int | None = None) -> MoserTable:
    """``|| (v^+ + k0) e^{-phi} ||_{L^{gamma_i}(B_0(r_i))}`` for i < ``steps``.

    ``gamma_i = 2 chi^i`` and ``r_i = 1/2 + 2^{-(i+1)}``; integrals are
    accumulated as log-sum-exp.  ``log_space[i]`` marks entries whose plain
    evaluation would overflow.
    """
    if k0 <= 0:
        raise ValueError("k0 must be positive")
    n = w.n
    dim = n + 1
    chi = chain_exponent(n)
    gammas = 2 * chi ** np.arange(steps)
    radii = 0.5 + 0.5 ** (np.arange(steps) + 1)

    def field_log(X):
        vals = np.asarray(v(X), dtype=float).ravel()
        return np.log(np.maximum(vals, 0.0) + k0) - w(X)

    logs, flags = [], []
    for g, r in zip(gammas, radii):
        rule = ball_rule(np.zeros(dim), r, order)
        lf = g * field_log(rule.nodes)
        flags.append(bool(lf.max() > 700 or lf.min() < -700))
        logs.append(logsumexp(lf, b=rule.weights) / g)
    per_axis = sup_points or {1: 401, 2: 201, 3: 61}.get(dim, 25)
    sup = float(np.exp(field_log(_ball_lattice(dim, 0.5, per_axis)).max()))
    return MoserTable(gammas, radii, np.array(logs), np.array(flags), sup, float(k0))


# kernel diagonal -----------------------------------------------------------------

@dataclass
class DiagonalProfile:
    points: np.ndarray
    diagonal: np.ndarray
    ratio: np.ndarray
    radius: float
    rim_change: float

    @property
    def ratio_max(self) -> float:
        return float(self.ratio.max())

    @property
    def ratio_min(self) -> float:
        return float(self.ratio.min())

    @property
    def spread(self) -> float:
        return self.ratio_max / self.ratio_min


def lattice_ball(dim: int, radius: float, step: float) -> np.ndarray:
    m = int(np.floor(radius / step + 1e-9))
    ax = step * np.arange(-m, m + 1)
    mesh = np.stack([g.ravel() for g in np.meshgrid(*([ax] * dim), indexing="ij")], axis=1)
    return mesh[np.linalg.norm(mesh, axis=1) <= radius + 1e-12]


def truncation_change(model: BergmanKernel, X) -> np.ndarray:
    """``|B_d(x,x) - B_{d-1}(x,x)| / B_d(x,x)`` on scalar parts."""
    if model.degree < 1:
        return np.zeros(len(np.atleast_2d(X)))
    top = np.atleast_2d(model.diagonal(X))[:, 0] if model.kind == "monogenic" else model.diagonal(X)
    low = model.truncated(int(model.degree) - 1)
    sub = np.atleast_2d(low.diagonal(X))[:, 0] if model.kind == "monogenic" else low.diagonal(X)
    return np.abs(top - sub) / np.abs(top)


def diagonal_profile(model: BergmanKernel, radius: float, step: float, tol: float = 0.01) -> DiagonalProfile:
    """``[B(x,x)]_0`` and ``[B(x,x)]_0 e^{-2 phi(x)}`` on lattice points of a ball.

    The radius shrinks by ``step`` until the last degree changes the rim
    values by at most ``tol``.
    """
    dim = int(model.n) + 1
    dirs, _ = _sphere_rule(dim, 8)
    rho = float(radius)
    while True:
        change = float(truncation_change(model, rho * dirs).max()) if rho > 0 else 0.0
        if change <= tol or rho <= 0:
            break
        warnings.warn(f"degree truncation not converged at radius {rho:g}; shrinking")
        rho = round(rho - step, 12)
    rho = max(rho, 0.0)
    X = lattice_ball(dim, rho, step)
    B = model.diagonal(X)
    B0 = B[:, 0] if B.ndim == 2 else B
    ratio = B0 * np.exp(-2 * model.weight_(X))
    return DiagonalProfile(X, B0, ratio, rho, change)


# off-diagonal decay -------------------------------------------------------------

@dataclass
class DecayFit:
    distances: np.ndarray
    loggap: np.ndarray
    slope: float
    intercept: float
    r2: float
    quad_coeffs: np.ndarray
    quad_r2: float
    excluded: int

    @property
    def alpha(self) -> float:
        return -self.slope

    @property
    def passed(self) -> bool:
        return self.alpha > 0 and self.r2 >= 0.9


def _r2(y, yhat) -> float:
    ss = float(np.sum((y - y.mean()) ** 2))
    return 1.0 - float(np.sum((y - yhat) ** 2)) / ss if ss > 0 else 1.0


def offdiagonal_decay(model: BergmanKernel, x0, directions, distances) -> DecayFit:
    """Fit ``log|B(y, x0)| - phi(x0) - phi(y)`` against ``|y - x0|``.

    Reports a line (slope = -alpha) and a quadratic fit; values below the
    noise floor are dropped.
    """
    x0 = np.asarray(x0, dtype=float)
    dirs = np.atleast_2d(np.asarray(directions, dtype=float))
    dirs = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
    dist = np.asarray(distances, dtype=float)
    Y = (x0[None, None, :] + dist[None, :, None] * dirs[:, None, :]).reshape(-1, x0.size)
    D = np.tile(dist, len(dirs))
    X = np.broadcast_to(x0, Y.shape)
    vals, _ = model.evaluate(X, Y)
    mag = np.linalg.norm(np.atleast_2d(vals.T).T.reshape(len(Y), -1), axis=1)
    keep = mag >= NOISE_FLOOR
    gap = np.log(mag[keep]) - model.weight_(x0[None, :])[0] - model.weight_(Y[keep])
    d = D[keep]
    slope, intercept = np.polyfit(d, gap, 1)
    quad = np.polyfit(d, gap, 2)
    return DecayFit(d, gap, float(slope), float(intercept), _r2(gap, slope * d + intercept),
                    quad, _r2(gap, np.polyval(quad, d)), int((~keep).sum()))


# lower-bound witness ------------------------------------------------------------

def cutoff(s) -> np.ndarray:
    """C^2 profile: 1 on [0, 1/2], quintic descent, 0 from 1 on."""
    s = np.asarray(s, dtype=float)
    q = np.clip(2 * s - 1, 0.0, 1.0)
    return 1 - q**3 * (10 - 15 * q + 6 * q**2)


def cutoff_derivative(s) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    q = np.clip(2 * s - 1, 0.0, 1.0)
    return -2 * 30 * q**2 * (1 - q) ** 2


class WitnessField:
    """``k^{(n+1)/2} chi(|x|/tau) E(x)`` with ``|E| = e^{k^2 h}`` and ``DE = 0``.

    For ``h = 0`` the factor is ``E = 1``.  For n = 1 and ``h != 0`` it is
    the holomorphic lift ``exp(k^2 H(z))`` with ``Re H = h`` and
    ``z = x0 + e1 x1``.
    """

    def __init__(self, w: Weight, k: float, tau: float):
        dec = decompose_quadratic(w)
        H = np.array([[float(v) for v in row] for row in dec.H])
        self.n = w.n
        self.k = float(k)
        self.tau = float(tau)
        self.t = float(dec.t)
        self.harmonic = bool(np.any(H))
        if self.harmonic and self.n != 1:
            raise UnsupportedWeightError("a monogenic lift of e^{k^2 h} is only available for n = 1")
        self._a, self._b = H[0, 0], H[0, 1]

    def amplitude(self, X) -> np.ndarray:
        """``E(x)`` as ``(P, 2**n)``."""
        X = np.atleast_2d(X)
        out = np.zeros((len(X), 1 << self.n))
        if not self.harmonic:
            out[:, 0] = 1.0
            return out
        z = X[:, 0] + 1j * X[:, 1]
        e = np.exp(self.k**2 * (self._a - 1j * self._b) * z**2)
        out[:, 0], out[:, 1] = e.real, e.imag
        return out

    def chi(self, X) -> np.ndarray:
        if np.isinf(self.tau):
            return np.ones(len(np.atleast_2d(X)))
        return cutoff(np.linalg.norm(np.atleast_2d(X), axis=1) / self.tau)

    def __call__(self, X) -> np.ndarray:
        return self.k ** ((self.n + 1) / 2) * self.chi(X)[:, None] * self.amplitude(X)

    def dirac(self, X) -> np.ndarray:
        """Exact ``Dg = k^{(n+1)/2} (D chi_tau) E``; zero off the annulus."""
        from .algebra import product_arrays
        from .dirac import paravector_from_gradient

        X = np.atleast_2d(X)
        if np.isinf(self.tau):
            return np.zeros((len(X), 1 << self.n))
        r = np.linalg.norm(X, axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            unit = np.where(r[:, None] > 0, X / r[:, None], 0.0)
        grad = (cutoff_derivative(r / self.tau) / self.tau)[:, None] * unit
        dchi = paravector_from_gradient(grad, self.n)
        return self.k ** ((self.n + 1) / 2) * product_arrays(dchi, self.amplitude(X), self.n)


@dataclass
class WitnessRow:
    k: float
    tau: float
    spacing: float
    half_width: float
    norm_g2: float
    norm_u2: float
    norm_G2: float
    G0: float
    g0: float
    u0: float
    r: float
    residual: float


@dataclass
class WitnessTable:
    rows: list
    t: float
    n: int

    @property
    def floor(self) -> float:
        return 0.5 * (2 * self.t / pi) ** ((self.n + 1) / 2)

    @property
    def energy_ratios(self) -> np.ndarray:
        return np.array([r.norm_u2 / r.norm_g2 for r in self.rows])

    @property
    def decreasing(self) -> bool:
        q = self.energy_ratios
        return bool(np.all(np.diff(q) < 0))

    @property
    def above_floor(self) -> bool:
        return self.rows[-1].r >= self.floor

    @property
    def passed(self) -> bool:
        return self.decreasing and self.above_floor


def witness_grid(w: Weight, k: float, tau: float, spacing_scale: float = 0.08, max_spacing: float = 0.04,
                 decay: float = 3.2) -> Grid:
    """Box resolving the Gaussian profile of ``e^{-2 k^2 phi}`` and the cutoff support."""
    t = float(decompose_quadratic(w).t)
    h = min(max_spacing, spacing_scale / k)
    if h * k * np.sqrt(2 * t) > 0.25:
        raise ValueError(f"spacing {h:g} does not resolve the scale 1/k at k = {k:g}")
    reach = decay / (k * np.sqrt(t))
    support = tau + 4 * h if np.isfinite(tau) else reach
    return Grid.fitted(w.n, max(support, reach), h)


def lower_bound_witness(w: Weight, ks, tau=None, spacing_scale: float = 0.08, max_spacing: float = 0.04,
                        max_iter: int = 10_000, rtol: float = 1e-8) -> WitnessTable:
    """Solve ``Du = Dg`` in the weight ``k^2 phi`` for each k and tabulate.

    ``tau`` is a number, a callable of k, or ``None`` for ``k^{-1/2}``.
    """
    rows = []
    t = float(decompose_quadratic(w).t)
    for k in ks:
        k = float(k)
        if k <= 0:
            raise ValueError("k must be positive")
        tk = k**-0.5 if tau is None else (tau(k) if callable(tau) else float(tau))
        grid = witness_grid(w, k, tk, spacing_scale, max_spacing)
        wk = w.scaled(k**2)
        g = WitnessField(w, k, tk)
        solver = MinimalNormDiracSolver(w.n, grid.half_width, grid.spacing, wk, max_iter, rtol)
        solver._setup()
        gv = g(grid.coords)
        f = solver.operator_.apply(gv)
        solver.fit(f)
        u = solver.solution_
        G = gv - u
        o = grid.origin
        ng, nu, nG = (grid_norm_sq(a, grid, wk) for a in (gv, u, G))
        G0 = float(np.linalg.norm(G[o]))
        r = k ** -(w.n + 1) * G0**2 / nG * np.exp(-2 * wk(np.zeros((1, w.n + 1)))[0])
        rows.append(WitnessRow(k, tk, grid.spacing, grid.half_width, ng, nu, nG, G0,
                               float(np.linalg.norm(gv[o])), float(np.linalg.norm(u[o])), float(r),
                               solver.residual_))
    return WitnessTable(rows, t, w.n)


# harmonic kernel bound ----------------------------------------------------------

@dataclass
class HarmonicBound:
    constant: float
    values: np.ndarray


def harmonic_bound_check(model: BergmanKernel, X, Y) -> HarmonicBound:
    """``max |B_har(y, x)| e^{-phi(x) - phi(y)}`` over paired samples."""
    if model.kind != "harmonic":
        raise ValueError("needs a harmonic model")
    vals, _ = model.evaluate(X, Y)
    scaled = np.abs(vals) * np.exp(-model.weight_(X) - model.weight_(Y))
    return HarmonicBound(float(scaled.max()), scaled)


def sample_pairs(n: int, count: int, radius: float, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Diagonal pairs plus random off-diagonal pairs inside the ball of ``radius``."""
    rng = np.random.default_rng(seed)

    def ball(m):
        g = rng.normal(size=(m, n + 1))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        return g * radius * rng.random(m)[:, None] ** (1 / (n + 1))

    A = ball(count)
    B = ball(count)
    return np.vstack([A, A]), np.vstack([A, B])


__all__ = [
    "DecayFit",
    "DiagonalProfile",
    "HarmonicBound",
    "MVIReport",
    "MoserTable",
    "WitnessField",
    "WitnessTable",
    "ball_volume",
    "chain_exponent",
    "cutoff",
    "diagonal_profile",
    "harmonic_bound_check",
    "lattice_ball",
    "lower_bound_witness",
    "moser_chain",
    "mvi_check",
    "offdiagonal_decay",
    "sample_pairs",
    "truncation_change",
    "witness_grid",
]
