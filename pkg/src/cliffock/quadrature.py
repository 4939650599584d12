"""Quadrature against e^{-2 phi} on R^{n+1} and Lebesgue rules on balls."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from math import ceil, gamma, pi

import numpy as np
from scipy.special import roots_hermite, roots_jacobi

from .algebra import Multivector, conjugate_arrays, product_arrays
from .weights import UnsupportedWeightError, Weight

FULL_SPACE_RTOL = 1e-10
BALL_RTOL = 1e-6


class RuleWeightMismatch(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Nodes and positive weights.

    For ``domain == "full"`` the weights already carry ``e^{-2 phi}`` for
    ``weight``; ball rules integrate against Lebesgue measure.
    """

    nodes: np.ndarray
    weights: np.ndarray
    exactness_degree: int
    domain: str
    weight: Weight | None = None
    center: np.ndarray | None = None
    radius: float | None = None

    @property
    def dim(self) -> int:
        return self.nodes.shape[1]

    def __len__(self):
        return self.weights.shape[0]

    def integrate(self, values) -> np.ndarray:
        """sum_i w_i values[i] (leading axis = nodes)."""
        values = np.asarray(values)
        return np.tensordot(self.weights, values, axes=(0, 0))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow([f"x{j}" for j in range(self.dim)] + ["weight"])
        for x, w in zip(self.nodes, self.weights):
            writer.writerow([repr(float(v)) for v in x] + [repr(float(w))])
        return buf.getvalue()


def _tensor(points_1d: list[np.ndarray], weights_1d: list[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    grids = np.meshgrid(*points_1d, indexing="ij")
    wgrids = np.meshgrid(*weights_1d, indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=1)
    weights = np.prod(np.stack([g.ravel() for g in wgrids], axis=1), axis=1)
    return nodes, weights


def gauss_full_space(w: Weight, order: int) -> QuadratureRule:
    """Tensor Gauss-Hermite rule for ``int f(x) e^{-2 x^T Q x} dx``.

    Q is diagonalised, each principal axis gets an ``order``-point rule
    rescaled to the density ``e^{-2 lambda y^2}``; exact for polynomials of
    degree ``2*order - 1`` per principal axis.
    """
    if not w.is_quadratic:
        raise UnsupportedWeightError("full-space rules need a quadratic weight")
    if order < 1:
        raise ValueError("order must be positive")
    lam, V = np.linalg.eigh(w.Q)
    if lam[0] <= 0:
        raise UnsupportedWeightError("full-space rules need a positive definite weight")
    t, wt = roots_hermite(order)
    pts = [t / np.sqrt(2 * l) for l in lam]
    wts = [wt / np.sqrt(2 * l) for l in lam]
    y, weights = _tensor(pts, wts)
    nodes = y @ V.T
    return QuadratureRule(nodes, weights, 2 * order - 1, "full", weight=w)


def ball_rule(center, radius: float, order: int, dim: int | None = None, seed: int = 0) -> QuadratureRule:
    """Lebesgue rule on the ball ``B_center(radius)``.

    Up to dimension 4 this is a Gauss-Jacobi radial rule times a recursive
    spherical product rule, exact for polynomials of total degree <=
    ``order``.  Higher dimensions use a fixed-seed Monte Carlo rule whose
    declared exactness is 0.
    """
    center = np.atleast_1d(np.asarray(center, dtype=np.float64))
    dim = center.shape[0] if dim is None else dim
    if center.shape != (dim,):
        raise ValueError("center has the wrong dimension")
    if radius <= 0:
        raise ValueError("radius must be positive")
    if order < 0:
        raise ValueError("order must be non-negative")
    if dim > 4:
        return _ball_monte_carlo(center, radius, dim, max(4096, 64 * (order + 1)), seed)
    half = ceil((order + 1) / 2)
    s, ws = roots_jacobi(half, 0.0, dim - 1.0)
    r = radius * (1 + s) / 2
    wr = ws * (radius / 2) ** dim
    dirs, wdir = _sphere_rule(dim, order)
    nodes = center + (r[:, None, None] * dirs[None, :, :]).reshape(-1, dim)
    weights = (wr[:, None] * wdir[None, :]).ravel()
    return QuadratureRule(nodes, weights, order, "ball", center=center, radius=float(radius))


def _sphere_rule(dim: int, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Points and weights on S^{dim-1} exact for polynomials of degree <= order."""
    if dim == 1:
        return np.array([[1.0], [-1.0]]), np.array([1.0, 1.0])
    if dim == 2:
        m = order + 1
        theta = 2 * pi * np.arange(m) / m
        return np.stack([np.cos(theta), np.sin(theta)], axis=1), np.full(m, 2 * pi / m)
    # x = (t, sqrt(1 - t^2) y), y on S^{dim-2}, measure (1 - t^2)^{(dim-3)/2} dt dsigma
    a = (dim - 3) / 2
    t, wt = roots_jacobi(ceil((order + 1) / 2), a, a)
    sub, wsub = _sphere_rule(dim - 1, order)
    rad = np.sqrt(1 - t**2)
    pts = np.concatenate(
        [np.broadcast_to(t[:, None, None], (len(t), len(sub), 1)), rad[:, None, None] * sub[None, :, :]], axis=2
    ).reshape(-1, dim)
    return pts, (wt[:, None] * wsub[None, :]).ravel()


def _ball_monte_carlo(center, radius, dim, count, seed) -> QuadratureRule:
    rng = np.random.default_rng(seed)
    g = rng.normal(size=(count, dim))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    r = radius * rng.random(count) ** (1 / dim)
    vol = pi ** (dim / 2) / gamma(dim / 2 + 1) * radius**dim
    return QuadratureRule(center + g * r[:, None], np.full(count, vol / count), 0, "ball", center=center, radius=radius)


def ball_volume(dim: int, radius: float) -> float:
    return pi ** (dim / 2) / gamma(dim / 2 + 1) * radius**dim


def _field_values(f, nodes: np.ndarray, n: int | None) -> np.ndarray:
    if isinstance(f, Multivector):
        return np.broadcast_to(f.coeffs.astype(float), (nodes.shape[0], f.dim))
    vals = np.asarray(f(nodes), dtype=np.float64)
    if vals.ndim == 1:
        if n is None:
            raise ValueError("scalar field values need an explicit algebra parameter n")
        out = np.zeros((nodes.shape[0], 1 << n))
        out[:, 0] = vals
        return out
    return vals


def density(rule: QuadratureRule, weight: Weight | None) -> np.ndarray:
    """Per-node measure ``w_i`` times the weight factor the rule does not carry."""
    if rule.domain == "full":
        if weight is not None and not weight.same_as(rule.weight):
            raise RuleWeightMismatch("rule was built for a different weight")
        return rule.weights
    if weight is None:
        return rule.weights
    return rule.weights * np.exp(-2 * weight(rule.nodes))


def weighted_inner(f, g, rule: QuadratureRule, weight: Weight | None = None, n: int | None = None) -> Multivector:
    """(f, g)_phi = int conj(f(x)) g(x) e^{-2 phi(x)} dx  (A_n-valued).

    ``f`` and ``g`` are Multivectors (constants) or callables mapping nodes
    ``(P, n+1)`` to values ``(P, 2**n)`` (or ``(P,)`` for scalar fields).
    """
    dens = density(rule, weight)
    if n is None:
        n = rule.dim - 1
    F = _field_values(f, rule.nodes, n)
    G = _field_values(g, rule.nodes, n)
    if F.shape != G.shape or F.shape[1] != 1 << n:
        raise ValueError("fields must take values in the same algebra")
    prod = product_arrays(conjugate_arrays(F, n), G, n)
    return Multivector(n, dens @ prod)


def weighted_norm_sq(f, rule: QuadratureRule, weight: Weight | None = None, n: int | None = None) -> float:
    dens = density(rule, weight)
    F = _field_values(f, rule.nodes, rule.dim - 1 if n is None else n)
    return float(dens @ np.sum(F**2, axis=1))
