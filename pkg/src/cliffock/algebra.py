"""Real Clifford algebra A_n with generators e_1..e_n, e_j^2 = -1.

Blades are integer bitmasks (bit j-1 set means e_j is a factor, written in
ascending index order).  Coefficients are stored densely; integer and
``Fraction`` coefficients give exact arithmetic, floats are used by the
numerical layers.
"""

from __future__ import annotations

from fractions import Fraction
from functools import lru_cache
from numbers import Rational, Real

import numpy as np

MAX_DIM = 12


def check_dim(n: int) -> int:
    if not isinstance(n, (int, np.integer)) or n < 0 or n > MAX_DIM:
        raise ValueError(f"algebra parameter n must be an integer in [0, {MAX_DIM}], got {n!r}")
    return int(n)


def grade(mask: int) -> int:
    return bin(mask).count("1")


def blade_sign(a: int, b: int) -> int:
    """Sign of e_A e_B relative to e_{A xor B}.

    For every generator of ``b`` count the generators of ``a`` with a higher
    index (each is one transposition), then pick up a factor -1 per shared
    generator since e_j^2 = -1.
    """
    swaps = 0
    bb = b
    while bb:
        low = bb & -bb
        swaps += grade(a & ~((low << 1) - 1))
        bb ^= low
    swaps += grade(a & b)
    return -1 if swaps & 1 else 1


def conj_sign(mask: int) -> int:
    g = grade(mask)
    return -1 if (g * (g + 1) // 2) & 1 else 1


@lru_cache(maxsize=None)
def cayley_tables(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Index and sign tables for left multiplication.

    ``IDX[k, j] = k ^ j`` and ``SGN[k, j] = sign(k ^ j, j)`` so that
    ``(a b)_k = sum_j SGN[k, j] * a[IDX[k, j]] * b[j]``.
    """
    dim = 1 << check_dim(n)
    idx = np.empty((dim, dim), dtype=np.int64)
    sgn = np.empty((dim, dim), dtype=np.int64)
    for k in range(dim):
        for j in range(dim):
            idx[k, j] = k ^ j
            sgn[k, j] = blade_sign(k ^ j, j)
    idx.setflags(write=False)
    sgn.setflags(write=False)
    return idx, sgn


@lru_cache(maxsize=None)
def conj_signs(n: int) -> np.ndarray:
    out = np.array([conj_sign(m) for m in range(1 << check_dim(n))], dtype=np.int64)
    out.setflags(write=False)
    return out


def blade_name(mask: int, n: int | None = None) -> str:
    """``e0`` for the unit, otherwise ``e`` followed by the generator indices."""
    if mask == 0:
        return "e0"
    idx = [j + 1 for j in range(mask.bit_length()) if mask >> j & 1]
    sep = "_" if (n is not None and n >= 10) or idx[-1] >= 10 else ""
    return "e" + sep.join(str(j) for j in idx)


def blade_from_indices(indices) -> int:
    mask = 0
    for j in indices:
        if j < 1:
            raise ValueError("generator indices start at 1")
        mask |= 1 << (j - 1)
    return mask


def parse_blade(name: str) -> int:
    if not name.startswith("e"):
        raise ValueError(f"bad blade name {name!r}")
    body = name[1:]
    if body == "0":
        return 0
    parts = body.split("_") if "_" in body else list(body)
    return blade_from_indices(int(p) for p in parts)


def _as_coeff_array(coeffs, dim: int) -> np.ndarray:
    arr = np.asarray(coeffs)
    if arr.shape != (dim,):
        raise ValueError(f"expected {dim} coefficients, got shape {arr.shape}")
    if arr.dtype == object:
        return arr.copy()
    if np.issubdtype(arr.dtype, np.integer):
        return arr.astype(np.int64)
    if np.issubdtype(arr.dtype, np.floating):
        return arr.astype(np.float64)
    raise TypeError(f"unsupported coefficient dtype {arr.dtype}")


class Multivector:
    """Immutable element of A_n.

    Parameters
    ----------
    n : int
        Number of generators.
    coeffs : array-like of length 2**n
        ``coeffs[A]`` is the coefficient of the blade with bitmask ``A``.
    """

    __slots__ = ("n", "coeffs")
    __array_priority__ = 1000

    def __init__(self, n: int, coeffs):
        n = check_dim(n)
        arr = _as_coeff_array(coeffs, 1 << n)
        arr.setflags(write=False)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "coeffs", arr)

    def __setattr__(self, key, value):
        raise AttributeError("Multivector is immutable")

    # constructors ---------------------------------------------------------
    @classmethod
    def zero(cls, n: int, exact: bool = True) -> "Multivector":
        dim = 1 << check_dim(n)
        return cls(n, np.zeros(dim, dtype=np.int64 if exact else np.float64))

    @classmethod
    def scalar(cls, n: int, value) -> "Multivector":
        return cls.blade(n, 0, value)

    @classmethod
    def blade(cls, n: int, mask: int, value=1) -> "Multivector":
        dim = 1 << check_dim(n)
        if not 0 <= mask < dim:
            raise ValueError(f"blade mask {mask} out of range for n={n}")
        if isinstance(value, Fraction):
            arr = np.array([Fraction(0)] * dim, dtype=object)
        elif isinstance(value, (int, np.integer)):
            arr = np.zeros(dim, dtype=np.int64)
        else:
            arr = np.zeros(dim, dtype=np.float64)
        arr[mask] = value
        return cls(n, arr)

    @classmethod
    def basis(cls, n: int, *indices: int) -> "Multivector":
        """e_{j1} ... e_{jl} as written (indices need not be sorted)."""
        out = cls.scalar(n, 1)
        for j in indices:
            if not 1 <= j <= n:
                raise ValueError(f"generator e{j} not in A_{n}")
            out = out * cls.blade(n, 1 << (j - 1))
        return out

    @classmethod
    def paravector(cls, n: int, values) -> "Multivector":
        values = list(values)
        if len(values) != n + 1:
            raise ValueError(f"paravector in A_{n} needs {n + 1} components")
        coeffs = [0] * (1 << check_dim(n))
        coeffs[0] = values[0]
        for j in range(1, n + 1):
            coeffs[1 << (j - 1)] = values[j]
        exact = any(isinstance(v, Fraction) for v in values)
        return cls(n, np.array(coeffs, dtype=object if exact else None))

    # structure ------------------------------------------------------------
    @property
    def dim(self) -> int:
        return 1 << self.n

    def _check(self, other: "Multivector") -> None:
        if not isinstance(other, Multivector):
            raise TypeError(f"expected Multivector, got {type(other).__name__}")
        if other.n != self.n:
            raise ValueError(f"dimension mismatch: A_{self.n} vs A_{other.n}")

    def scalar_part(self):
        return self.coeffs[0]

    def component(self, mask: int):
        return self.coeffs[mask]

    def is_paravector(self) -> bool:
        allowed = {0} | {1 << j for j in range(self.n)}
        return all(self.coeffs[m] == 0 for m in range(self.dim) if m not in allowed)

    def norm_sq(self):
        return sum(c * c for c in self.coeffs.tolist())

    def norm(self) -> float:
        return float(np.sqrt(float(self.norm_sq())))

    def __abs__(self) -> float:
        return self.norm()

    def conjugate(self) -> "Multivector":
        return Multivector(self.n, self.coeffs * conj_signs(self.n))

    def left_matrix(self) -> np.ndarray:
        """Matrix L with ``(self * b).coeffs == L @ b.coeffs``."""
        idx, sgn = cayley_tables(self.n)
        return sgn * self.coeffs[idx]

    def astype(self, dtype) -> "Multivector":
        return Multivector(self.n, self.coeffs.astype(dtype))

    def to_float(self) -> "Multivector":
        return Multivector(self.n, np.array([float(c) for c in self.coeffs], dtype=np.float64))

    # arithmetic -----------------------------------------------------------
    def __add__(self, other):
        if isinstance(other, (Real, Rational)):
            other = Multivector.scalar(self.n, other)
        self._check(other)
        return Multivector(self.n, self.coeffs + other.coeffs)

    __radd__ = __add__

    def __neg__(self):
        return Multivector(self.n, -self.coeffs)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Multivector):
            return geometric_product(self, other)
        if isinstance(other, (Real, Rational, np.number)):
            return Multivector(self.n, self.coeffs * other)
        return NotImplemented

    def __rmul__(self, other):
        if isinstance(other, (Real, Rational, np.number)):
            return Multivector(self.n, self.coeffs * other)
        return NotImplemented

    def __truediv__(self, other):
        if isinstance(other, (Real, Rational, np.number)):
            if self.coeffs.dtype != np.float64 and isinstance(other, (int, Fraction, np.integer)):
                return Multivector(self.n, np.array([Fraction(c) / other for c in self.coeffs], dtype=object))
            return Multivector(self.n, self.coeffs / other)
        return NotImplemented

    def __eq__(self, other):
        if isinstance(other, (Real, Rational)):
            other = Multivector.scalar(self.n, other)
        if not isinstance(other, Multivector) or other.n != self.n:
            return NotImplemented
        return all(a == b for a, b in zip(self.coeffs.tolist(), other.coeffs.tolist()))

    def __hash__(self):
        return hash((self.n, tuple(self.coeffs.tolist())))

    def allclose(self, other: "Multivector", atol: float = 1e-12, rtol: float = 1e-12) -> bool:
        self._check(other)
        return bool(np.allclose(self.coeffs.astype(float), other.coeffs.astype(float), atol=atol, rtol=rtol))

    def __repr__(self):
        return f"Multivector({self.n}, {render(self)!r})"

    def __str__(self):
        return render(self)


def geometric_product(a: Multivector, b: Multivector) -> Multivector:
    if not isinstance(a, Multivector) or not isinstance(b, Multivector):
        raise TypeError("geometric_product expects two Multivectors")
    if a.n != b.n:
        raise ValueError(f"dimension mismatch: A_{a.n} vs A_{b.n}")
    return Multivector(a.n, a.left_matrix() @ b.coeffs)


def conjugate(a: Multivector) -> Multivector:
    return a.conjugate()


def inner_product_0(x: Multivector, y: Multivector):
    """(x, y)_0 = [x conj(y)]_0 = sum_A x_A y_A."""
    x._check(y)
    return sum(p * q for p, q in zip(x.coeffs.tolist(), y.coeffs.tolist()))


def scalar_part(x: Multivector):
    return x.scalar_part()


def component(x: Multivector, mask: int):
    """[x]_A, computed as the scalar part of x conj(e_A)."""
    return (x * Multivector.blade(x.n, mask).conjugate()).scalar_part()


def render(x: Multivector) -> str:
    """Text form ``c0 + c1*e1 + c12*e12`` in ascending mask order; zeros omitted."""
    parts = []
    for mask, c in enumerate(x.coeffs.tolist()):
        if c == 0:
            continue
        txt = str(c)
        if mask:
            txt = f"{txt}*{blade_name(mask, x.n)}"
        parts.append(txt)
    if not parts:
        return "0"
    out = parts[0]
    for p in parts[1:]:
        out += " - " + p[1:] if p.startswith("-") else " + " + p
    return out


def blade_labels(n: int) -> list[str]:
    return [blade_name(m, n) for m in range(1 << check_dim(n))]


# ---------------------------------------------------------------------------
# batched kernels on coefficient arrays with trailing axis of length 2**n


def product_arrays(a: np.ndarray, b: np.ndarray, n: int) -> np.ndarray:
    """Geometric product of stacked coefficient arrays ``(..., 2**n)``."""
    idx, sgn = cayley_tables(n)
    a = np.asarray(a)
    b = np.asarray(b)
    left = a[..., idx] * sgn
    return np.einsum("...kj,...j->...k", left, b)


def conjugate_arrays(a: np.ndarray, n: int) -> np.ndarray:
    return np.asarray(a) * conj_signs(n)


def norm_sq_arrays(a: np.ndarray) -> np.ndarray:
    return np.sum(np.asarray(a) ** 2, axis=-1)


def module_inner(f, g) -> Multivector:
    """sum_i conj(f_i) g_i for finite sequences of Multivectors."""
    f, g = list(f), list(g)
    if len(f) != len(g) or not f:
        raise ValueError("sequences must be non-empty and of equal length")
    out = Multivector.zero(f[0].n)
    for a, b in zip(f, g):
        out = out + a.conjugate() * b
    return out
