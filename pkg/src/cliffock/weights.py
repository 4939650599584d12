"""Weight functions phi with certified Laplacian and gradient bounds."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np
from scipy.stats import qmc

from .polynomials import PolyField, laplacian_apply


class UnsupportedWeightError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Weight:
    """Weight phi on R^{n+1} with declared constants.

    ``m <= Laplacian(phi) <= M`` and ``|grad phi(x)| <= L |x|`` are claims,
    checked by :func:`validate_bounds`.  ``Q`` is set for quadratic weights
    ``phi(x) = x^T Q x``.
    """

    n: int
    evaluate: Callable[[np.ndarray], np.ndarray]
    gradient: Callable[[np.ndarray], np.ndarray]
    laplacian: Callable[[np.ndarray], np.ndarray]
    m: float
    M: float
    L: float
    homogeneous2: bool = False
    Q: np.ndarray | None = field(default=None, repr=False)
    name: str = "custom"

    def __call__(self, X) -> np.ndarray:
        return self.evaluate(_points(X, self.n))

    @property
    def is_quadratic(self) -> bool:
        return self.Q is not None

    def scaled(self, c: float) -> "Weight":
        """The weight c * phi, e.g. k^2 phi in the witness experiment."""
        if c <= 0:
            raise ValueError("scale must be positive")
        if self.is_quadratic:
            if not self.Q.any():
                return zero_weight(self.n, self.m)
            return make_quadratic(c * self.Q)
        return Weight(
            self.n,
            lambda X: c * self.evaluate(X),
            lambda X: c * self.gradient(X),
            lambda X: c * self.laplacian(X),
            c * self.m,
            c * self.M,
            c * self.L,
            self.homogeneous2,
            None,
            f"{c}*{self.name}",
        )

    def same_as(self, other: "Weight") -> bool:
        if other is self:
            return True
        if self.Q is None or other.Q is None:
            return False
        return self.n == other.n and np.array_equal(self.Q, other.Q)


def _points(X, n: int) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != n + 1:
        raise ValueError(f"points must have {n + 1} coordinates, got {X.shape[1]}")
    return X


def make_quadratic(Q, check: bool = True) -> Weight:
    """phi(x) = x^T Q x for a symmetric positive definite ``Q``."""
    Q = np.array(Q, dtype=np.float64)
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1] or Q.shape[0] < 2:
        raise ValueError("Q must be a square matrix of size n+1 >= 2")
    if not np.allclose(Q, Q.T, rtol=0, atol=1e-14):
        raise ValueError("Q must be symmetric")
    Q = 0.5 * (Q + Q.T)
    eig = np.linalg.eigvalsh(Q)
    if check and eig[0] <= 0:
        raise ValueError(f"Q must be positive definite (smallest eigenvalue {eig[0]:g})")
    n = Q.shape[0] - 1
    lap = 2.0 * float(np.trace(Q))
    Q.setflags(write=False)
    return Weight(
        n=n,
        evaluate=lambda X: np.einsum("pi,ij,pj->p", X, Q, X),
        gradient=lambda X: 2.0 * X @ Q,
        laplacian=lambda X: np.full(np.shape(X)[0], lap),
        m=lap,
        M=lap,
        L=2.0 * float(eig[-1]),
        homogeneous2=True,
        Q=Q,
        name="quadratic",
    )


def isotropic(n: int, c: float = 1.0) -> Weight:
    return make_quadratic(c * np.eye(n + 1))


def diagonal(coeffs) -> Weight:
    return make_quadratic(np.diag(np.asarray(coeffs, dtype=np.float64)))


def zero_weight(n: int, m: float = 1.0) -> Weight:
    """phi = 0; the declared ``m`` is deliberately violated (tests only)."""
    Q = np.zeros((n + 1, n + 1))
    Q.setflags(write=False)
    return Weight(
        n=n,
        evaluate=lambda X: np.zeros(np.shape(X)[0]),
        gradient=lambda X: np.zeros_like(X),
        laplacian=lambda X: np.zeros(np.shape(X)[0]),
        m=m,
        M=m,
        L=1.0,
        homogeneous2=True,
        Q=Q,
        name="zero",
    )


def from_config(kind: str, coeffs, n: int) -> Weight:
    """Build a weight from ``weight.type`` / ``weight.coeffs`` config values."""
    if kind == "quadratic_iso":
        c = float(np.ravel(coeffs)[0]) if coeffs is not None and np.size(coeffs) else 1.0
        return isotropic(n, c)
    if kind == "quadratic_diag":
        vals = np.ravel(np.asarray(coeffs, dtype=np.float64))
        if vals.size != n + 1:
            raise ValueError(f"quadratic_diag needs {n + 1} coefficients")
        return diagonal(vals)
    if kind == "quadratic_full":
        Q = np.asarray(coeffs, dtype=np.float64)
        if Q.size != (n + 1) ** 2:
            raise ValueError(f"quadratic_full needs {(n + 1) ** 2} coefficients")
        return make_quadratic(Q.reshape(n + 1, n + 1))
    if kind == "zero":
        return zero_weight(n)
    raise ValueError(f"unknown weight type {kind!r}")


@dataclass
class BoundsReport:
    laplacian_lower_margin: float
    laplacian_upper_margin: float
    gradient_margin: float
    worst_points: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return min(self.laplacian_lower_margin, self.laplacian_upper_margin, self.gradient_margin) >= 0

    @property
    def violations(self) -> list[str]:
        out = []
        if self.laplacian_lower_margin < 0:
            out.append("laplacian_lower")
        if self.laplacian_upper_margin < 0:
            out.append("laplacian_upper")
        if self.gradient_margin < 0:
            out.append("gradient")
        return out


def sample_points(n: int, count: int = 256, radius: float = 3.0, seed: int = 0) -> np.ndarray:
    """Scrambled Sobol points in the cube plus Gaussian points, fixed seed."""
    half = 1 << max(count // 2, 1).bit_length() - 1  # Sobol balance needs a power of two
    sob = qmc.Sobol(d=n + 1, scramble=True, seed=seed).random_base2(half.bit_length() - 1)
    rng = np.random.default_rng(seed)
    gauss = rng.normal(scale=radius / 2, size=(count - half, n + 1))
    return np.vstack([radius * (2 * sob - 1), gauss])


def validate_bounds(w: Weight, samples, rtol: float = 1e-12) -> BoundsReport:
    """Worst-case margins of the declared bounds on ``samples``.

    Margins are ``min(lap) - m``, ``M - max(lap)`` and
    ``min(L |x| - |grad phi|)``; negative means violated.
    """
    X = _points(samples, w.n)
    if X.shape[0] == 0:
        raise ValueError("sample set is empty")
    lap = np.asarray(w.laplacian(X), dtype=float)
    grad = np.linalg.norm(w.gradient(X), axis=1)
    radius = np.linalg.norm(X, axis=1)
    slack = rtol * (1 + np.abs(lap).max())
    lower = float(lap.min() - w.m)
    upper = float(w.M - lap.max())
    gmarg = w.L * radius - grad
    gslack = rtol * (1 + grad.max())
    return BoundsReport(
        laplacian_lower_margin=lower if lower < -slack else max(lower, 0.0),
        laplacian_upper_margin=upper if upper < -slack else max(upper, 0.0),
        gradient_margin=float(gmarg.min()) if gmarg.min() < -gslack else max(float(gmarg.min()), 0.0),
        worst_points={
            "laplacian_lower": X[int(np.argmin(lap))],
            "laplacian_upper": X[int(np.argmax(lap))],
            "gradient": X[int(np.argmin(gmarg))],
        },
    )


@dataclass(frozen=True)
class QuadDecomposition:
    """phi(x) = h(x) + t |x|^2 with h a traceless (hence harmonic) quadratic form.

    ``H`` holds the exact rational matrix of h; ``h(0) = phi(0) = 0``.
    """

    n: int
    H: tuple
    t: Fraction

    def h(self, X) -> np.ndarray:
        X = _points(X, self.n)
        H = np.array([[float(v) for v in row] for row in self.H])
        return np.einsum("pi,ij,pj->p", X, H, X)

    def h_poly(self) -> PolyField:
        n = self.n
        P = PolyField(n)
        for i in range(n + 1):
            for j in range(n + 1):
                if self.H[i][j]:
                    exp = [0] * (n + 1)
                    exp[i] += 1
                    exp[j] += 1
                    P = P + PolyField.monomial(n, exp, 0, self.H[i][j])
        return P

    def is_harmonic(self) -> bool:
        return laplacian_apply(self.h_poly()).is_zero()


def decompose_quadratic(w: Weight) -> QuadDecomposition:
    if not w.is_quadratic:
        raise UnsupportedWeightError("decomposition is only available for quadratic weights")
    n = w.n
    Q = [[Fraction(float(v)) for v in row] for row in w.Q]
    t = sum(Q[i][i] for i in range(n + 1)) / (n + 1)
    H = tuple(tuple(Q[i][j] - (t if i == j else 0) for j in range(n + 1)) for i in range(n + 1))
    dec = QuadDecomposition(n, H, t)
    if not dec.is_harmonic():
        raise ArithmeticError("harmonic part has nonzero Laplacian")
    return dec


def quadratic_poly(w: Weight) -> PolyField:
    """phi as an exact PolyField (quadratic weights only)."""
    if not w.is_quadratic:
        raise UnsupportedWeightError("not a quadratic weight")
    n = w.n
    P = PolyField(n)
    for i in range(n + 1):
        for j in range(n + 1):
            v = Fraction(float(w.Q[i, j]))
            if v:
                exp = [0] * (n + 1)
                exp[i] += 1
                exp[j] += 1
                P = P + PolyField.monomial(n, exp, 0, v)
    return P
