"""Finite-degree Bergman kernels of weighted monogenic and harmonic spaces.

The model space V_N is the real span of homogeneous basis polynomials
``r_1, ..., r_N`` (closed under right multiplication by blades for the
monogenic kind).  With the Clifford Gram ``G_mn = (r_m, r_n)_phi`` the kernel
``B(y, x) = sum_m r_m(y) c_m(x)`` is defined by the stacked real system
``sum_m c_m(x) [G_mn]_A = [r_n(x)]_A`` over all n and blades A, i.e. the
reproducing identity ``u(x) = int conj(B(y, x)) u(y) e^{-2 phi(y)} dy`` on
V_N.  The second argument of ``B`` is always the evaluation point.
"""

from __future__ import annotations

import warnings

import numpy as np
from scipy import linalg
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError
from sklearn.utils.validation import check_is_fitted
from sympy import QQ
from sympy.polys.matrices import DomainMatrix

from ._validation import check_points, check_weight
from .algebra import Multivector, cayley_tables, conjugate_arrays, product_arrays
from .polynomials import GradedBasis, PolyField, harmonic_basis, monogenic_basis, monomial_values
from .quadrature import QuadratureRule, density, gauss_full_space

TOL_REPRO = 1e-8
COND_CAP = 1e12


class KernelResidualError(ArithmeticError):
    """The stacked reproducing system was not solved to tolerance."""

    def __init__(self, residual: float, tol: float):
        super().__init__(f"stacked system residual {residual:.3e} exceeds {tol:.1e}")
        self.residual = residual
        self.tol = tol


def right_module_closure(basis: GradedBasis) -> tuple[list[PolyField], list[int]]:
    """Real basis of the right A_n-span of ``basis``, degree by degree.

    Candidates ``p_i e_A`` are taken in order (``p_i`` itself first) and kept
    when they raise the exact rank.
    """
    n = basis.n
    dim = 1 << n
    elements, grades = [], []
    for k in sorted(set(basis.grades)):
        block = [P for P, g in zip(basis.elements, basis.grades) if g == k]
        cands = [P.right_mul(Multivector.blade(n, A, 1)) for P in block for A in range(dim)]
        keys = sorted({e for P in cands for e in P.terms})
        index = {e: i for i, e in enumerate(keys)}
        entries: dict[int, dict[int, object]] = {}
        for c, P in enumerate(cands):
            for e, vec in P.terms.items():
                for A, v in enumerate(vec):
                    if v:
                        entries.setdefault(index[e] * dim + A, {})[c] = QQ(v.numerator, v.denominator)
        M = DomainMatrix(entries, (len(keys) * dim, len(cands)), QQ)
        _, pivots = M.rref()
        for c in pivots:
            elements.append(cands[c])
            grades.append(k)
    return elements, grades


class BergmanKernel(TransformerMixin, BaseEstimator):
    """Bergman kernel of the degree-``degree`` truncation of F^2_phi.

    Parameters
    ----------
    n : int
        Algebra parameter; points live in R^{n+1}.
    degree : int
        Maximal polynomial degree of the model space.
    kind : {"monogenic", "harmonic"}
        Left-monogenic A_n-valued space or scalar harmonic space.
    weight : Weight, array of shape (n+1, n+1) or None
        Quadratic weight; ``None`` means ``phi = |x|^2``.
    quad_order : int or None
        Points per principal axis of the Gauss-Hermite rule; by default
        ``degree + 2`` which integrates the Gram entries exactly.
    cond_cap : float
        Upper bound for the condition number of the equilibrated real Gram.
    tol_repro : float
        Relative residual accepted for the stacked reproducing system.

    Attributes
    ----------
    elements_ : list of PolyField
        Spanning set r_m actually used (after closure and pruning).
    gram_clifford_ : ndarray of shape (N, N, 2**n)
        Blade components of ``(r_m, r_l)_phi``.
    gram_real_ : ndarray of shape (N, N)
        Scalar parts of ``gram_clifford_``.
    pruned_ : list of (degree, PolyField)
        Elements removed to respect ``cond_cap``.
    """

    def __init__(self, n=1, degree=6, kind="monogenic", weight=None, quad_order=None,
                 cond_cap=COND_CAP, tol_repro=TOL_REPRO):
        self.n = n
        self.degree = degree
        self.kind = kind
        self.weight = weight
        self.quad_order = quad_order
        self.cond_cap = cond_cap
        self.tol_repro = tol_repro

    # ------------------------------------------------------------------
    def fit(self, X=None, y=None, basis: GradedBasis | None = None, rule: QuadratureRule | None = None):
        """Assemble Grams; ``X`` and ``y`` are ignored (the model is data free)."""
        if self.kind not in ("monogenic", "harmonic"):
            raise ValueError(f"kind must be 'monogenic' or 'harmonic', got {self.kind!r}")
        if int(self.degree) < 0 or int(self.n) < 1:
            raise ValueError("need n >= 1 and degree >= 0")
        n = int(self.n)
        self.weight_ = check_weight(self.weight, n)
        if basis is None:
            builder = monogenic_basis if self.kind == "monogenic" else harmonic_basis
            basis = builder(n, int(self.degree))
        if basis.n != n or basis.kind != self.kind:
            raise ValueError("basis does not match the estimator's n/kind")
        order = int(self.quad_order) if self.quad_order is not None else int(self.degree) + 2
        if rule is None:
            rule = gauss_full_space(self.weight_, order)
        if rule.domain == "full" and rule.exactness_degree < 2 * basis.degree:
            raise ValueError(f"rule exactness {rule.exactness_degree} does not cover degree {2 * basis.degree}")
        self.rule_ = rule
        self.basis_ = basis
        if self.kind == "monogenic":
            elements, grades = right_module_closure(basis)
        else:
            elements, grades = list(basis.elements), list(basis.grades)
        if not elements:
            raise ValueError("empty basis")
        self._set_elements(elements, grades)
        self._assemble()
        self._prune()
        self._factor()
        return self

    @property
    def value_dim(self) -> int:
        return 1 << int(self.n) if self.kind == "monogenic" else 1

    def _set_elements(self, elements, grades):
        n = int(self.n)
        keys = sorted({e for P in elements for e in P.terms})
        index = {e: i for i, e in enumerate(keys)}
        dv = self.value_dim
        coef = np.zeros((len(elements), len(keys), dv))
        for m, P in enumerate(elements):
            for e, vec in P.terms.items():
                coef[m, index[e], :] = [float(v) for v in vec[:dv]]
        self.elements_ = list(elements)
        self.grades_ = np.array(grades, dtype=int)
        self._exps = np.array(keys, dtype=np.int64).reshape(len(keys), n + 1)
        self._coef = coef

    def basis_values(self, X) -> np.ndarray:
        """``r_m(x)`` for every point: array ``(P, N, value_dim)``."""
        X = check_points(X, int(self.n))
        mono = monomial_values(X, self._exps)
        return np.einsum("pt,mtk->pmk", mono, self._coef, optimize=True)

    def _assemble(self):
        V = self.basis_values(self.rule_.nodes)
        dens = density(self.rule_, None)
        self.gram_clifford_ = _clifford_gram(V, dens, int(self.n) if self.kind == "monogenic" else 0)
        self.gram_real_ = self.gram_clifford_[:, :, 0].copy()

    def _scaled_gram(self, G):
        d = 1 / np.sqrt(np.diag(G))
        return G * d[:, None] * d[None, :], d

    def _prune(self):
        self.pruned_ = []
        while True:
            Gs, _ = self._scaled_gram(self.gram_real_)
            evals, evecs = np.linalg.eigh(Gs)
            cond = evals[-1] / evals[0] if evals[0] > 0 else np.inf
            if cond <= self.cond_cap:
                self.condition_number_ = float(cond)
                return
            v = np.abs(evecs[:, 0])
            drop = None
            for g in sorted(set(self.grades_.tolist()), reverse=True):
                members = np.flatnonzero(self.grades_ == g)
                if v[members].max() > 1e-3 * v.max():
                    drop = int(members[np.argmax(v[members])])
                    break
            keep = np.arange(len(self.elements_)) != drop
            self.pruned_.append((int(self.grades_[drop]), self.elements_[drop]))
            if keep.sum() == 0:
                raise ValueError("empty basis after pruning")
            warnings.warn(f"pruned a degree-{self.grades_[drop]} element (condition {cond:.2e})")
            self.elements_ = [P for P, k in zip(self.elements_, keep) if k]
            self.grades_ = self.grades_[keep]
            self._coef = self._coef[keep]
            self.gram_clifford_ = self.gram_clifford_[keep][:, keep]
            self.gram_real_ = self.gram_real_[keep][:, keep]

    def _factor(self):
        G = self.gram_clifford_
        N, _, dv = G.shape
        _, d = self._scaled_gram(self.gram_real_)
        self._col_scale = d
        # rows (l, A), columns m: [G_ml]_A, columns equilibrated
        S = G.transpose(1, 2, 0).reshape(N * dv, N) * d[None, :]
        self._stack_q, self._stack_r = np.linalg.qr(S)
        self._stack = S
        Gs, _ = self._scaled_gram(self.gram_real_)
        try:
            self._chol = linalg.cho_factor(Gs, lower=True)
        except linalg.LinAlgError as exc:
            raise ValueError("real Gram is not positive definite") from exc

    def _check_fitted(self):
        check_is_fitted(self, ["gram_real_", "_stack_q"])

    # ------------------------------------------------------------------
    def kernel_coefficients(self, X, check: bool = True) -> tuple[np.ndarray, np.ndarray]:
        """Coefficients ``c(x)`` of ``B(., x)`` and the stacked relative residuals."""
        self._check_fitted()
        V = self.basis_values(X)
        P, N, dv = V.shape
        b = V.reshape(P, N * dv).T
        ct = linalg.solve_triangular(self._stack_r, self._stack_q.T @ b)
        resid = np.linalg.norm(self._stack @ ct - b, axis=0) / np.maximum(np.linalg.norm(b, axis=0), 1e-300)
        if check and resid.size and resid.max() > self.tol_repro:
            raise KernelResidualError(float(resid.max()), self.tol_repro)
        return (ct * self._col_scale[:, None]).T, resid

    def transform(self, X):
        """Kernel coefficient vectors ``c(x)``, one row per point."""
        return self.kernel_coefficients(X)[0]

    def evaluate(self, X, Y, check: bool = True) -> tuple[np.ndarray, np.ndarray]:
        """``B(y_i, x_i)`` for paired rows; returns values and residuals.

        Values have shape ``(P, 2**n)`` (monogenic) or ``(P,)`` (harmonic).
        """
        X = check_points(X, int(self.n), "X")
        Y = check_points(Y, int(self.n), "Y")
        if X.shape[0] != Y.shape[0]:
            raise ValueError("X and Y must have the same number of rows")
        c, resid = self.kernel_coefficients(X, check=check)
        vals = np.einsum("pmk,pm->pk", self.basis_values(Y), c)
        return (vals if self.kind == "monogenic" else vals[:, 0]), resid

    def kernel_field(self, x):
        """``y -> B(y, x)`` as a callable on point arrays (for quadrature)."""
        c, _ = self.kernel_coefficients(np.atleast_2d(x))
        c = c[0]

        def field(Y):
            vals = np.einsum("pmk,m->pk", self.basis_values(Y), c)
            return vals if self.kind == "monogenic" else vals[:, 0]

        return field

    def diagonal(self, X) -> np.ndarray:
        X = check_points(X, int(self.n))
        return self.evaluate(X, X)[0]

    def sup_eigenvalue(self, X) -> np.ndarray:
        """``max |u(x)|^2`` over ``u`` in V_N with unit norm, per point.

        Largest generalized eigenvalue of the point-evaluation form against
        the real Gram, via the Cholesky factor of the equilibrated Gram.
        """
        self._check_fitted()
        V = self.basis_values(X) * self._col_scale[None, :, None]
        L = self._chol[0]
        out = np.empty(V.shape[0])
        for p in range(V.shape[0]):
            M = linalg.solve_triangular(L, V[p], lower=True)  # (N, dv)
            try:
                out[p] = np.linalg.eigvalsh(M.T @ M)[-1]
            except np.linalg.LinAlgError as exc:
                raise ArithmeticError("eigen-solver failed") from exc
        return out

    def project(self, g) -> np.ndarray:
        """Real-orthogonal projection coefficients of ``g`` onto V_N."""
        self._check_fitted()
        nodes = self.rule_.nodes
        V = self.basis_values(nodes)
        G = np.asarray(g(nodes), dtype=float)
        if G.ndim == 1:
            G = G[:, None]
        if G.shape[1] != self.value_dim:
            raise ValueError("field takes values in the wrong space")
        dens = density(self.rule_, None)
        rhs = np.einsum("p,pmk,pk->m", dens, V, G) * self._col_scale
        return linalg.cho_solve(self._chol, rhs) * self._col_scale

    def field_values(self, coeffs, X) -> np.ndarray:
        vals = np.einsum("pmk,m->pk", self.basis_values(X), np.asarray(coeffs, dtype=float))
        return vals if self.kind == "monogenic" else vals[:, 0]

    def truncated(self, degree: int) -> "BergmanKernel":
        """The same model restricted to elements of degree <= ``degree``."""
        self._check_fitted()
        keep = self.grades_ <= degree
        if not keep.any():
            raise ValueError("no elements of that degree")
        sub = BergmanKernel(**{**self.get_params(), "degree": degree})
        sub.weight_ = self.weight_
        sub.rule_ = self.rule_
        sub.basis_ = self.basis_.restrict(degree)
        sub.elements_ = [P for P, k in zip(self.elements_, keep) if k]
        sub.grades_ = self.grades_[keep]
        sub._exps = self._exps
        sub._coef = self._coef[keep]
        sub.gram_clifford_ = self.gram_clifford_[keep][:, keep]
        sub.gram_real_ = self.gram_real_[keep][:, keep]
        sub.pruned_ = []
        sub.condition_number_ = None
        sub._factor()
        return sub


def _clifford_gram(V: np.ndarray, dens: np.ndarray, n: int) -> np.ndarray:
    """``G[m, l] = sum_i dens_i conj(V[i, m]) V[i, l]`` with Clifford products."""
    P, N, dv = V.shape
    if dv == 1:
        Vw = V[:, :, 0] * dens[:, None]
        return (Vw.T @ V[:, :, 0])[:, :, None]
    idx, sgn = cayley_tables(n)
    Vc = conjugate_arrays(V, n) * dens[:, None, None]
    G = np.zeros((N, N, dv))
    for k in range(dv):
        for j in range(dv):
            G[:, :, k] += sgn[k, j] * (Vc[:, :, idx[k, j]].T @ V[:, :, j])
    return G


# functional surface --------------------------------------------------------

def build_model(basis: GradedBasis, w, rule: QuadratureRule | None = None, **params) -> BergmanKernel:
    est = BergmanKernel(n=basis.n, degree=basis.degree, kind=basis.kind, weight=w, **params)
    return est.fit(basis=basis, rule=rule)


def harmonic_model(basis: GradedBasis, w, rule: QuadratureRule | None = None, **params) -> BergmanKernel:
    if basis.kind != "harmonic":
        raise ValueError("harmonic_model needs a harmonic basis")
    return build_model(basis, w, rule, **params)


def kernel_coefficients(model: BergmanKernel, x) -> np.ndarray:
    return model.kernel_coefficients(x)[0][0]


def evaluate_kernel(model: BergmanKernel, x, y) -> "KernelEvaluation":
    vals, resid = model.evaluate(np.atleast_2d(x), np.atleast_2d(y))
    value = Multivector(int(model.n), vals[0]) if model.kind == "monogenic" else float(vals[0])
    return KernelEvaluation(np.asarray(x, float), np.asarray(y, float), value, float(resid[0]))


def evaluate_harmonic_kernel(model: BergmanKernel, x, y) -> float:
    if model.kind != "harmonic":
        raise ValueError("not a harmonic model")
    return evaluate_kernel(model, x, y).value


def diagonal_sup_check(model: BergmanKernel, x) -> tuple[float, float]:
    """``(|B(x, x)|, sup_{|u|=1} |u(x)|^2)`` at one point."""
    b = model.diagonal(np.atleast_2d(x))[0]
    lhs = float(np.linalg.norm(np.atleast_1d(b)))
    rhs = float(model.sup_eigenvalue(np.atleast_2d(x))[0])
    return lhs, rhs


def project(model: BergmanKernel, g) -> np.ndarray:
    return model.project(g)


class KernelEvaluation:
    __slots__ = ("x", "y", "value", "residual")

    def __init__(self, x, y, value, residual):
        self.x, self.y, self.value, self.residual = x, y, value, residual

    def __repr__(self):
        return f"KernelEvaluation(value={self.value}, residual={self.residual:.2e})"


def kernel_csv_rows(model: BergmanKernel, X, Y) -> tuple[list[str], list[list[float]]]:
    """Header and rows ``x..., y..., blade components..., residual``."""
    from .algebra import blade_labels

    vals, resid = model.evaluate(X, Y, check=False)
    vals = vals if vals.ndim == 2 else vals[:, None]
    n = int(model.n)
    labels = blade_labels(n) if model.kind == "monogenic" else ["B"]
    header = [f"x{j}" for j in range(n + 1)] + [f"y{j}" for j in range(n + 1)] + labels + ["residual"]
    rows = [list(x) + list(y) + list(v) + [r] for x, y, v, r in zip(np.atleast_2d(X), np.atleast_2d(Y), vals, resid)]
    return header, rows


__all__ = [
    "BergmanKernel",
    "KernelEvaluation",
    "KernelResidualError",
    "NotFittedError",
    "build_model",
    "diagonal_sup_check",
    "evaluate_harmonic_kernel",
    "evaluate_kernel",
    "harmonic_model",
    "kernel_coefficients",
    "project",
    "right_module_closure",
    "product_arrays",
]
