"""Exact A_n-valued polynomials on R^{n+1} and monogenic/harmonic bases.

Coordinates are ``x_0, ..., x_n``; the Dirac operator is
``D = sum_j e_j d/dx_j`` with ``e_0 = 1`` acting from the left.  Bases are
the reduced-echelon rational nullspaces of D (or of the Laplacian) on
homogeneous coefficient spaces, monomials in graded lexicographic order.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations_with_replacement
from math import comb

import numpy as np
from sympy import QQ
from sympy.polys.matrices import DomainMatrix

from .algebra import Multivector, blade_name, blade_sign, check_dim, parse_blade

__all__ = [
    "PolyField",
    "GradedBasis",
    "monomials",
    "dirac_apply",
    "conj_dirac_apply",
    "laplacian_apply",
    "dirac_matrix",
    "laplacian_matrix",
    "monogenic_basis",
    "harmonic_basis",
    "evaluate",
    "dump_basis",
    "parse_basis",
]


def monomials(nvars: int, degree: int) -> list[tuple[int, ...]]:
    """Exponent tuples of total ``degree`` in descending lex order (x_0 first)."""
    if degree < 0:
        return []
    out = []
    for combo in combinations_with_replacement(range(nvars), degree):
        exp = [0] * nvars
        for v in combo:
            exp[v] += 1
        out.append(tuple(exp))
    out.sort(reverse=True)
    return out


def _frac_vec(values) -> np.ndarray:
    return np.array([Fraction(v) for v in values], dtype=object)


class PolyField:
    """Polynomial with Multivector coefficients and rational scalars.

    ``terms`` maps exponent tuples ``(k_0, ..., k_n)`` to coefficient vectors
    of length ``2**n``; zero coefficients are never stored.
    """

    __slots__ = ("n", "terms", "_compiled")

    def __init__(self, n: int, terms=None):
        self.n = check_dim(n)
        self.terms: dict[tuple[int, ...], np.ndarray] = {}
        self._compiled = None
        for exp, coeff in (terms or {}).items():
            exp = tuple(int(e) for e in exp)
            if len(exp) != self.n + 1 or min(exp) < 0:
                raise ValueError(f"bad exponent {exp} for n={self.n}")
            vec = coeff.coeffs if isinstance(coeff, Multivector) else coeff
            vec = _frac_vec(vec)
            if len(vec) != 1 << self.n:
                raise ValueError("coefficient length must be 2**n")
            if any(vec):
                self.terms[exp] = vec

    # constructors ---------------------------------------------------------
    @classmethod
    def constant(cls, n: int, value) -> "PolyField":
        mv = value if isinstance(value, Multivector) else Multivector.scalar(n, Fraction(value))
        return cls(n, {(0,) * (n + 1): mv})

    @classmethod
    def coordinate(cls, n: int, j: int) -> "PolyField":
        exp = [0] * (n + 1)
        exp[j] = 1
        return cls(n, {tuple(exp): Multivector.scalar(n, Fraction(1))})

    @classmethod
    def monomial(cls, n: int, exp, mask: int = 0, value=1) -> "PolyField":
        vec = [Fraction(0)] * (1 << n)
        vec[mask] = Fraction(value)
        return cls(n, {tuple(exp): vec})

    # basic structure ------------------------------------------------------
    @property
    def degree(self) -> int:
        return max((sum(e) for e in self.terms), default=-1)

    def is_zero(self) -> bool:
        return not self.terms

    def is_homogeneous(self) -> bool:
        return len({sum(e) for e in self.terms}) <= 1

    def is_scalar(self) -> bool:
        return all(not any(v[1:]) for v in self.terms.values())

    def coefficient(self, exp) -> Multivector:
        vec = self.terms.get(tuple(exp))
        if vec is None:
            return Multivector(self.n, _frac_vec([0] * (1 << self.n)))
        return Multivector(self.n, vec)

    def _check(self, other: "PolyField") -> None:
        if not isinstance(other, PolyField):
            raise TypeError(f"expected PolyField, got {type(other).__name__}")
        if other.n != self.n:
            raise ValueError(f"dimension mismatch: n={self.n} vs n={other.n}")

    def __eq__(self, other):
        if not isinstance(other, PolyField) or other.n != self.n:
            return NotImplemented
        if self.terms.keys() != other.terms.keys():
            return False
        return all(list(self.terms[k]) == list(other.terms[k]) for k in self.terms)

    def __hash__(self):
        return hash((self.n, tuple(sorted((k, tuple(v)) for k, v in self.terms.items()))))

    def __repr__(self):
        return f"PolyField(n={self.n}, terms={len(self.terms)}, degree={self.degree})"

    # arithmetic -----------------------------------------------------------
    def __add__(self, other: "PolyField") -> "PolyField":
        self._check(other)
        terms = {k: v.copy() for k, v in self.terms.items()}
        for k, v in other.terms.items():
            terms[k] = terms[k] + v if k in terms else v
        return PolyField(self.n, terms)

    def __neg__(self) -> "PolyField":
        return PolyField(self.n, {k: -v for k, v in self.terms.items()})

    def __sub__(self, other: "PolyField") -> "PolyField":
        return self + (-other)

    def scale(self, c) -> "PolyField":
        c = Fraction(c)
        return PolyField(self.n, {k: v * c for k, v in self.terms.items()})

    def right_mul(self, mv: Multivector) -> "PolyField":
        """P * mv with the constant multivector on the right."""
        if mv.n != self.n:
            raise ValueError("dimension mismatch")
        right = _exact(mv)
        return PolyField(self.n, {k: (Multivector(self.n, v) * right).coeffs for k, v in self.terms.items()})

    def left_mul(self, mv: Multivector) -> "PolyField":
        if mv.n != self.n:
            raise ValueError("dimension mismatch")
        left = _exact(mv)
        return PolyField(self.n, {k: (left * Multivector(self.n, v)).coeffs for k, v in self.terms.items()})

    def partial(self, j: int) -> "PolyField":
        terms: dict = {}
        for exp, vec in self.terms.items():
            if exp[j] == 0:
                continue
            new = list(exp)
            new[j] -= 1
            new = tuple(new)
            add = vec * exp[j]
            terms[new] = terms[new] + add if new in terms else add
        return PolyField(self.n, terms)

    def mul_poly(self, other: "PolyField") -> "PolyField":
        """Product with the second factor's coefficients on the right."""
        self._check(other)
        terms: dict = {}
        for ea, va in self.terms.items():
            for eb, vb in other.terms.items():
                exp = tuple(p + q for p, q in zip(ea, eb))
                prod = (Multivector(self.n, va) * Multivector(self.n, vb)).coeffs
                terms[exp] = terms[exp] + prod if exp in terms else prod
        return PolyField(self.n, terms)

    # evaluation -----------------------------------------------------------
    def compiled(self) -> tuple[np.ndarray, np.ndarray]:
        """Float exponent matrix ``(T, n+1)`` and coefficient matrix ``(T, 2**n)``."""
        if self._compiled is None:
            keys = sorted(self.terms)
            exps = np.array(keys, dtype=np.int64).reshape(len(keys), self.n + 1)
            coeffs = np.array([[float(c) for c in self.terms[k]] for k in keys], dtype=np.float64)
            self._compiled = (exps, coeffs.reshape(len(keys), 1 << self.n))
        return self._compiled

    def __call__(self, X) -> np.ndarray:
        """Values at points ``X`` of shape ``(P, n+1)``; returns ``(P, 2**n)``."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        exps, coeffs = self.compiled()
        if len(exps) == 0:
            return np.zeros((X.shape[0], 1 << self.n))
        mono = monomial_values(X, exps)
        return mono @ coeffs

    def evaluate(self, x) -> Multivector:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.n + 1,):
            raise ValueError(f"point must have {self.n + 1} coordinates")
        return Multivector(self.n, self(x[None, :])[0])


def _exact(mv: Multivector) -> Multivector:
    return Multivector(mv.n, _frac_vec(mv.coeffs.tolist()))


def monomial_values(X: np.ndarray, exps: np.ndarray) -> np.ndarray:
    """``prod_j X[:, j] ** exps[t, j]`` as a ``(P, T)`` array via power tables."""
    X = np.asarray(X, dtype=np.float64)
    exps = np.asarray(exps, dtype=np.int64)
    top = int(exps.max()) if exps.size else 0
    powers = np.ones((X.shape[1], top + 1, X.shape[0]))
    for p in range(1, top + 1):
        powers[:, p, :] = powers[:, p - 1, :] * X.T
    out = np.ones((X.shape[0], exps.shape[0]))
    for j in range(X.shape[1]):
        out *= powers[j, exps[:, j], :].T
    return out


def evaluate(P: PolyField, x) -> Multivector:
    return P.evaluate(x)


def _generator(n: int, j: int, conj: bool = False) -> Multivector:
    if j == 0:
        return Multivector.scalar(n, Fraction(1))
    mv = Multivector.blade(n, 1 << (j - 1), Fraction(1))
    return -mv if conj else mv


def dirac_apply(P: PolyField) -> PolyField:
    """D P = sum_j e_j d_j P."""
    out = PolyField(P.n)
    for j in range(P.n + 1):
        out = out + P.partial(j).left_mul(_generator(P.n, j))
    return out


def conj_dirac_apply(P: PolyField) -> PolyField:
    """conj(D) P = sum_j conj(e_j) d_j P."""
    out = PolyField(P.n)
    for j in range(P.n + 1):
        out = out + P.partial(j).left_mul(_generator(P.n, j, conj=True))
    return out


def laplacian_apply(P: PolyField) -> PolyField:
    out = PolyField(P.n)
    for j in range(P.n + 1):
        out = out + P.partial(j).partial(j)
    return out


# ---------------------------------------------------------------------------
# exact linear maps on homogeneous coefficient spaces


def dirac_matrix(n: int, k: int) -> DomainMatrix:
    """D from degree-k to degree-(k-1) coefficient vectors.

    Column ``i * 2**n + B`` is the coefficient of ``x^{m_i} e_B`` with ``m_i``
    the i-th entry of :func:`monomials` ``(n+1, k)``; rows likewise for k-1.
    """
    dim = 1 << n
    cols = monomials(n + 1, k)
    rows = monomials(n + 1, k - 1)
    row_index = {m: i for i, m in enumerate(rows)}
    entries: dict[int, dict[int, object]] = {}
    for ci, exp in enumerate(cols):
        for B in range(dim):
            col = ci * dim + B
            for j in range(n + 1):
                if exp[j] == 0:
                    continue
                lower = list(exp)
                lower[j] -= 1
                gen = 0 if j == 0 else 1 << (j - 1)
                r = row_index[tuple(lower)] * dim + (gen ^ B)
                val = exp[j] * blade_sign(gen, B)
                entries.setdefault(r, {})[col] = QQ(val)
    return DomainMatrix(entries, (len(rows) * dim, len(cols) * dim), QQ)


def laplacian_matrix(n: int, k: int) -> DomainMatrix:
    cols = monomials(n + 1, k)
    rows = monomials(n + 1, k - 2)
    row_index = {m: i for i, m in enumerate(rows)}
    entries: dict[int, dict[int, object]] = {}
    for ci, exp in enumerate(cols):
        for j in range(n + 1):
            if exp[j] < 2:
                continue
            lower = list(exp)
            lower[j] -= 2
            r = row_index[tuple(lower)]
            row = entries.setdefault(r, {})
            row[ci] = row.get(ci, QQ(0)) + QQ(exp[j] * (exp[j] - 1))
    return DomainMatrix(entries, (len(rows), len(cols)), QQ)


def _to_fraction(q) -> Fraction:
    return Fraction(int(q.numerator), int(q.denominator))


def _rref_nullspace(M: DomainMatrix) -> tuple[list[dict[int, Fraction]], int]:
    """Reduced-echelon nullspace vectors (sparse) and the rank of M."""
    ncols = M.shape[1]
    if M.shape[0] == 0:
        return [{c: Fraction(1)} for c in range(ncols)], 0
    R, pivots = M.rref()
    pivots = list(pivots)
    pivot_set = set(pivots)
    rows = R.to_sdm()
    vectors = []
    for free in range(ncols):
        if free in pivot_set:
            continue
        vec = {free: Fraction(1)}
        for i, p in enumerate(pivots):
            entry = rows.get(i, {}).get(free)
            if entry:
                vec[p] = -_to_fraction(entry)
        vectors.append(vec)
    return vectors, len(pivots)


@dataclass
class GradedBasis:
    """Homogeneous basis elements grouped by degree.

    ``ranks[k] = (dimension, rank, total)`` records the nullspace dimension,
    the rank of the operator on degree-k coefficients and the size of the
    coefficient space, so that ``dimension + rank == total``.
    """

    n: int
    kind: str
    elements: list[PolyField]
    grades: list[int]
    ranks: dict[int, tuple[int, int, int]] = field(default_factory=dict)

    def __len__(self):
        return len(self.elements)

    @property
    def degree(self) -> int:
        return max(self.grades, default=-1)

    def restrict(self, degree: int) -> "GradedBasis":
        keep = [i for i, g in enumerate(self.grades) if g <= degree]
        return GradedBasis(
            self.n,
            self.kind,
            [self.elements[i] for i in keep],
            [self.grades[i] for i in keep],
            {k: v for k, v in self.ranks.items() if k <= degree},
        )

    def coefficient_matrix(self) -> np.ndarray:
        """Real coefficient matrix (elements x (monomial, blade)) as floats."""
        keys = sorted({k for P in self.elements for k in P.terms})
        index = {k: i for i, k in enumerate(keys)}
        out = np.zeros((len(self.elements), len(keys) * (1 << self.n)))
        for r, P in enumerate(self.elements):
            for k, v in P.terms.items():
                base = index[k] * (1 << self.n)
                out[r, base:base + (1 << self.n)] = [float(c) for c in v]
        return out


def monogenic_basis(n: int, d: int) -> GradedBasis:
    """Left-monogenic homogeneous polynomials of degree 0..d, real basis."""
    check_dim(n)
    if n < 1 or d < 0:
        raise ValueError("need n >= 1 and d >= 0")
    dim = 1 << n
    elements, grades, ranks = [], [], {}
    for k in range(d + 1):
        cols = monomials(n + 1, k)
        vectors, rank = _rref_nullspace(dirac_matrix(n, k))
        total = len(cols) * dim
        ranks[k] = (len(vectors), rank, total)
        for vec in vectors:
            terms: dict = {}
            for c, val in vec.items():
                exp = cols[c // dim]
                coeff = terms.setdefault(exp, [Fraction(0)] * dim)
                coeff[c % dim] = val
            elements.append(PolyField(n, terms))
            grades.append(k)
    return GradedBasis(n, "monogenic", elements, grades, ranks)


def harmonic_basis(n: int, d: int) -> GradedBasis:
    """Scalar harmonic homogeneous polynomials of degree 0..d."""
    check_dim(n)
    if n < 1 or d < 0:
        raise ValueError("need n >= 1 and d >= 0")
    dim = 1 << n
    elements, grades, ranks = [], [], {}
    for k in range(d + 1):
        cols = monomials(n + 1, k)
        vectors, rank = _rref_nullspace(laplacian_matrix(n, k))
        ranks[k] = (len(vectors), rank, len(cols))
        for vec in vectors:
            terms = {}
            for c, val in vec.items():
                coeff = [Fraction(0)] * dim
                coeff[0] = val
                terms[cols[c]] = coeff
            elements.append(PolyField(n, terms))
            grades.append(k)
    return GradedBasis(n, "harmonic", elements, grades, ranks)


def monomial_count(nvars: int, degree: int) -> int:
    return comb(degree + nvars - 1, nvars - 1) if degree >= 0 else 0


# ---------------------------------------------------------------------------
# text dump: "degree; (k0,...,kn):blade:rational, ..."


def dump_element(P: PolyField, grade_: int) -> str:
    items = []
    for exp in sorted(P.terms, reverse=True):
        for mask, c in enumerate(P.terms[exp]):
            if c:
                items.append(f"({','.join(map(str, exp))}):{blade_name(mask, P.n)}:{c}")
    return f"{grade_}; " + ", ".join(items)


def dump_basis(basis: GradedBasis) -> str:
    return "".join(dump_element(P, g) + "\n" for P, g in zip(basis.elements, basis.grades))


_ITEM = re.compile(r"\(([\d,]+)\):(e[\d_]+):(-?\d+(?:/\d+)?)")


def parse_basis(text: str, n: int, kind: str = "monogenic") -> GradedBasis:
    elements, grades = [], []
    dim = 1 << n
    for line in text.splitlines():
        if not line.strip():
            continue
        head, _, body = line.partition(";")
        terms: dict = {}
        for exp_txt, blade_txt, val in _ITEM.findall(body):
            exp = tuple(int(e) for e in exp_txt.split(","))
            coeff = terms.setdefault(exp, [Fraction(0)] * dim)
            coeff[parse_blade(blade_txt)] = Fraction(val)
        elements.append(PolyField(n, terms))
        grades.append(int(head))
    return GradedBasis(n, kind, elements, grades)

