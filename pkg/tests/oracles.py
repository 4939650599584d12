"""Independent reference implementations used only by the tests.

These deliberately avoid the package's bitmask tables: blades are sorted
index lists and products are computed by bubble sort with explicit sign
bookkeeping.
"""

from math import factorial

import numpy as np


def naive_blade_product(a: tuple, b: tuple) -> tuple[int, tuple]:
    """e_a e_b for ascending index tuples; returns (sign, ascending tuple)."""
    word = list(a) + list(b)
    sign = 1
    # bubble sort, counting swaps of distinct generators
    changed = True
    while changed:
        changed = False
        for i in range(len(word) - 1):
            if word[i] > word[i + 1]:
                word[i], word[i + 1] = word[i + 1], word[i]
                sign = -sign
                changed = True
    out = []
    i = 0
    while i < len(word):
        if i + 1 < len(word) and word[i] == word[i + 1]:
            sign = -sign  # e_j e_j = -1
            i += 2
        else:
            out.append(word[i])
            i += 1
    return sign, tuple(out)


def mask_to_tuple(mask: int) -> tuple:
    return tuple(j + 1 for j in range(mask.bit_length()) if mask >> j & 1)


def tuple_to_mask(t) -> int:
    return sum(1 << (j - 1) for j in t)


def naive_product(x, y, n: int) -> list:
    """Geometric product of coefficient lists through naive_blade_product."""
    out = [0] * (1 << n)
    for a, xa in enumerate(x):
        if xa == 0:
            continue
        ta = mask_to_tuple(a)
        for b, yb in enumerate(y):
            if yb == 0:
                continue
            s, t = naive_blade_product(ta, mask_to_tuple(b))
            out[tuple_to_mask(t)] += s * xa * yb
    return out


def naive_conjugate(x, n: int) -> list:
    """Reverse each blade word and negate each generator, then re-sort."""
    out = [0] * (1 << n)
    for a, xa in enumerate(x):
        word = tuple(reversed(mask_to_tuple(a)))
        sign = (-1) ** len(word)
        s, t = naive_blade_product((), word)
        out[tuple_to_mask(t)] += sign * s * xa
    return out


def fock_series(z: np.ndarray, w: np.ndarray, degree: int) -> np.ndarray:
    """(2/pi) sum_{k<=d} (2 z conj(w))^k / k!, summed term by term."""
    s = 2 * z * np.conj(w)
    total = np.zeros_like(s, dtype=complex)
    for k in range(degree + 1):
        total = total + s**k / factorial(k)
    return 2 / np.pi * total


def fock_harmonic_series(z: np.ndarray, w: np.ndarray, degree: int) -> np.ndarray:
    """Real harmonic Fock kernel truncated at degree d: (2/pi)(2 Re S_d - 1)."""
    s = 2 * z * np.conj(w)
    total = np.zeros_like(s, dtype=complex)
    for k in range(degree + 1):
        total = total + s**k / factorial(k)
    return 2 / np.pi * (2 * total.real - 1)
