"""
Exact arithmetic over F_q[t, t^-1] and 3x3 matrices with Laurent entries.

Elementary divisors are computed over the valuation ring F_q[[t]] with
fraction-free elimination, so every intermediate stays a Laurent polynomial.
"""
import logging
import math
import re
from dataclasses import dataclass
from itertools import combinations
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

logger = logging.getLogger(__name__)

MAX_MODULUS = 1 << 15  # keeps numpy.convolve sums inside int64

_TERM_RE = re.compile(r'([+-]?)(\d*)(\*?)(t(?:\^\(?([+-]?\d+)\)?)?)?')


class LaurentArithmeticError(Exception):
    """Custom exception for Laurent polynomial and matrix arithmetic errors"""
    pass


def _is_prime(q: int) -> bool:
    if q < 2:
        return False
    return all(q % p for p in range(2, int(math.isqrt(q)) + 1))


def check_modulus(q: int) -> int:
    """Validate the field size.

    Raises:
        ValueError: If q is not a prime below MAX_MODULUS
    """
    if not isinstance(q, int) or not _is_prime(q) or q >= MAX_MODULUS:
        raise ValueError(f"q must be a prime below {MAX_MODULUS}, got {q!r}")
    return q


@dataclass(frozen=True)
class LaurentPoly:
    """Finitely supported Laurent polynomial over F_q.

    coeffs[i] is the coefficient of t^(val + i). The first and last stored
    coefficients are nonzero; the zero polynomial has no coefficients.
    """
    q: int
    val: int
    coeffs: Tuple[int, ...]

    @classmethod
    def from_array(cls, q: int, val: int, arr: Union[np.ndarray, Sequence[int]]) -> 'LaurentPoly':
        a = np.mod(np.asarray(arr, dtype=np.int64), q)
        nz = np.flatnonzero(a)
        if nz.size == 0:
            return cls(q, 0, ())
        lo, hi = int(nz[0]), int(nz[-1])
        return cls(q, val + lo, tuple(int(c) for c in a[lo:hi + 1]))

    @classmethod
    def zero(cls, q: int) -> 'LaurentPoly':
        return cls(q, 0, ())

    @classmethod
    def monomial(cls, q: int, exponent: int, coefficient: int = 1) -> 'LaurentPoly':
        return cls.from_array(q, exponent, [coefficient])

    @classmethod
    def constant(cls, q: int, c: int) -> 'LaurentPoly':
        return cls.monomial(q, 0, c)

    @classmethod
    def from_terms(cls, q: int, terms: Iterable[Tuple[int, int]]) -> 'LaurentPoly':
        """Build from (exponent, coefficient) pairs; repeated exponents add up."""
        terms = list(terms)
        if not terms:
            return cls.zero(q)
        lo = min(e for e, _ in terms)
        hi = max(e for e, _ in terms)
        arr = np.zeros(hi - lo + 1, dtype=np.int64)
        for e, c in terms:
            arr[e - lo] += c
        return cls.from_array(q, lo, arr)

    # Basic properties

    @property
    def is_zero(self) -> bool:
        return not self.coeffs

    @property
    def valuation(self) -> Union[int, float]:
        """Lowest exponent with nonzero coefficient; +inf for zero."""
        return math.inf if self.is_zero else self.val

    @property
    def degree(self) -> Union[int, float]:
        return -math.inf if self.is_zero else self.val + len(self.coeffs) - 1

    @property
    def is_monomial(self) -> bool:
        return len(self.coeffs) == 1

    @property
    def is_unit(self) -> bool:
        """True for units of the valuation ring (valuation exactly 0)."""
        return not self.is_zero and self.val == 0

    def coefficient(self, exponent: int) -> int:
        i = exponent - self.val
        if self.is_zero or i < 0 or i >= len(self.coeffs):
            return 0
        return self.coeffs[i]

    def array(self) -> np.ndarray:
        return np.asarray(self.coeffs, dtype=np.int64)

    # Ring operations

    def _check(self, other: 'LaurentPoly') -> None:
        if self.q != other.q:
            raise LaurentArithmeticError(f"Mixed moduli: q={self.q} and q={other.q}")

    def _coerce(self, other) -> 'LaurentPoly':
        if isinstance(other, int):
            return LaurentPoly.constant(self.q, other)
        if not isinstance(other, LaurentPoly):
            return NotImplemented
        self._check(other)
        return other

    def __add__(self, other) -> 'LaurentPoly':
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        if self.is_zero:
            return other
        if other.is_zero:
            return self
        lo = min(self.val, other.val)
        hi = max(self.degree, other.degree)
        arr = np.zeros(hi - lo + 1, dtype=np.int64)
        arr[self.val - lo:self.val - lo + len(self.coeffs)] += self.array()
        arr[other.val - lo:other.val - lo + len(other.coeffs)] += other.array()
        return LaurentPoly.from_array(self.q, lo, arr)

    __radd__ = __add__

    def __neg__(self) -> 'LaurentPoly':
        return LaurentPoly.from_array(self.q, self.val, -self.array())

    def __sub__(self, other) -> 'LaurentPoly':
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other) -> 'LaurentPoly':
        return (-self) + other

    def __mul__(self, other) -> 'LaurentPoly':
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        if self.is_zero or other.is_zero:
            return LaurentPoly.zero(self.q)
        if other.is_monomial:
            return self.scale(other.coeffs[0]).shift(other.val)
        if self.is_monomial:
            return other.scale(self.coeffs[0]).shift(self.val)
        arr = np.convolve(self.array(), other.array()) % self.q
        return LaurentPoly.from_array(self.q, self.val + other.val, arr)

    __rmul__ = __mul__

    def shift(self, k: int) -> 'LaurentPoly':
        """Multiply by t^k."""
        if self.is_zero or k == 0:
            return self
        return LaurentPoly(self.q, self.val + k, self.coeffs)

    def scale(self, c: int) -> 'LaurentPoly':
        c %= self.q
        if c == 1:
            return self
        return LaurentPoly.from_array(self.q, self.val, self.array() * c)

    def truncate(self, below: int) -> 'LaurentPoly':
        """Keep only the terms with exponent < below."""
        if self.is_zero or self.degree < below:
            return self
        if self.val >= below:
            return LaurentPoly.zero(self.q)
        return LaurentPoly.from_array(self.q, self.val, self.coeffs[:below - self.val])

    def inverse_series(self, precision: int) -> 'LaurentPoly':
        """Inverse of a unit of F_q[[t]] modulo t^precision.

        Raises:
            LaurentArithmeticError: If self is not a unit of the valuation ring
        """
        if not self.is_unit:
            raise LaurentArithmeticError(f"{self} is not a unit of the valuation ring")
        if precision <= 0:
            return LaurentPoly.zero(self.q)
        q = self.q
        u = np.zeros(precision, dtype=np.int64)
        n = min(precision, len(self.coeffs))
        u[:n] = self.coeffs[:n]
        v = np.zeros(precision, dtype=np.int64)
        v0 = pow(int(u[0]), -1, q)
        v[0] = v0
        for k in range(1, precision):
            m = min(k, n - 1)
            if m <= 0:
                break
            acc = int(np.dot(u[1:m + 1], v[k - 1::-1][:m]) % q)
            v[k] = (-v0 * acc) % q
        return LaurentPoly.from_array(q, 0, v)

    def __str__(self) -> str:
        if self.is_zero:
            return "0"
        parts = []
        for i, c in enumerate(self.coeffs):
            if c == 0:
                continue
            e = self.val + i
            if e == 0:
                parts.append(str(c))
                continue
            base = "t" if e == 1 else f"t^{e}"
            parts.append(base if c == 1 else f"{c}*{base}")
        return " + ".join(parts)

    @classmethod
    def parse(cls, text: str, q: int) -> 'LaurentPoly':
        """Parse strings like ``t^-1 + 1 + t^2`` or ``2*t^3 - t``.

        Raises:
            ValueError: If the text is not a Laurent polynomial
        """
        s = text.replace(" ", "")
        if not s:
            raise ValueError("Empty polynomial")
        terms: List[Tuple[int, int]] = []
        pos = 0
        while pos < len(s):
            m = _TERM_RE.match(s, pos)
            sign, digits, star, tpart, exp = m.groups() if m else (None,) * 5
            if not m or m.end() == pos or (not digits and not tpart) or (star and not (digits and tpart)):
                raise ValueError(f"Cannot parse polynomial {text!r} at offset {pos}")
            if pos > 0 and not sign:
                raise ValueError(f"Missing operator in polynomial {text!r} at offset {pos}")
            coeff = int(digits) if digits else 1
            if sign == "-":
                coeff = -coeff
            exponent = 0 if not tpart else (int(exp) if exp is not None else 1)
            terms.append((exponent, coeff))
            pos = m.end()
        return cls.from_terms(q, terms)


PolyLike = Union[LaurentPoly, int]


def poly_val(p: LaurentPoly) -> Union[int, float]:
    """Valuation with the +inf sentinel for zero."""
    return p.valuation


def times_unit_inverse(a: LaurentPoly, u: LaurentPoly, below: int) -> LaurentPoly:
    """Exact a * u^-1 truncated to exponents < below, for a unit u."""
    if a.is_zero:
        return a
    precision = below - a.val
    if precision <= 0:
        return LaurentPoly.zero(a.q)
    return (a * u.inverse_series(precision)).truncate(below)


@dataclass(frozen=True)
class LaurentMatrix:
    """3x3 matrix with LaurentPoly entries."""
    q: int
    rows: Tuple[Tuple[LaurentPoly, ...], ...]

    @classmethod
    def from_entries(cls, q: int, entries: Sequence[Sequence[PolyLike]]) -> 'LaurentMatrix':
        if len(entries) != 3 or any(len(r) != 3 for r in entries):
            raise ValueError("LaurentMatrix needs exactly 3 rows of 3 entries")
        rows = []
        for r in entries:
            row = []
            for e in r:
                if isinstance(e, int):
                    e = LaurentPoly.constant(q, e)
                elif e.q != q:
                    raise LaurentArithmeticError(f"Entry over q={e.q} in a matrix over q={q}")
                row.append(e)
            rows.append(tuple(row))
        return cls(q, tuple(rows))

    @classmethod
    def identity(cls, q: int) -> 'LaurentMatrix':
        return cls.diag(q, (0, 0, 0))

    @classmethod
    def diag(cls, q: int, exponents: Sequence[int]) -> 'LaurentMatrix':
        """diag(t^e0, t^e1, t^e2)."""
        z = LaurentPoly.zero(q)
        rows = [[z] * 3 for _ in range(3)]
        for i, e in enumerate(exponents):
            rows[i][i] = LaurentPoly.monomial(q, e)
        return cls.from_entries(q, rows)

    @classmethod
    def diag_polys(cls, q: int, polys: Sequence[LaurentPoly]) -> 'LaurentMatrix':
        z = LaurentPoly.zero(q)
        rows = [[z] * 3 for _ in range(3)]
        for i, p in enumerate(polys):
            rows[i][i] = p
        return cls.from_entries(q, rows)

    @classmethod
    def elementary(cls, q: int, i: int, j: int, x: LaurentPoly) -> 'LaurentMatrix':
        """Identity plus x in position (i, j), i != j."""
        if i == j:
            raise ValueError("Elementary matrix needs i != j")
        rows = [list(r) for r in cls.identity(q).rows]
        rows[i][j] = x
        return cls.from_entries(q, rows)

    @classmethod
    def constant_matrix(cls, q: int, entries) -> 'LaurentMatrix':
        return cls.from_entries(q, [[int(c) % q for c in row] for row in np.asarray(entries)])

    def entry(self, i: int, j: int) -> LaurentPoly:
        return self.rows[i][j]

    def __matmul__(self, other: 'LaurentMatrix') -> 'LaurentMatrix':
        if not isinstance(other, LaurentMatrix):
            return NotImplemented
        if self.q != other.q:
            raise LaurentArithmeticError(f"Mixed moduli: q={self.q} and q={other.q}")
        zero = LaurentPoly.zero(self.q)
        out = []
        for i in range(3):
            row = []
            for j in range(3):
                acc = zero
                for k in range(3):
                    a, b = self.rows[i][k], other.rows[k][j]
                    if a.is_zero or b.is_zero:
                        continue
                    acc = acc + a * b
                row.append(acc)
            out.append(tuple(row))
        return LaurentMatrix(self.q, tuple(out))

    def shift(self, k: int) -> 'LaurentMatrix':
        """Multiply every entry by t^k."""
        return LaurentMatrix(self.q, tuple(tuple(e.shift(k) for e in r) for r in self.rows))

    def det(self) -> LaurentPoly:
        m = self.rows
        return (m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]))

    def adjugate(self) -> 'LaurentMatrix':
        m = self.rows
        cof = [[None] * 3 for _ in range(3)]
        for i in range(3):
            for j in range(3):
                r = [x for x in range(3) if x != i]
                c = [y for y in range(3) if y != j]
                minor = m[r[0]][c[0]] * m[r[1]][c[1]] - m[r[0]][c[1]] * m[r[1]][c[0]]
                cof[j][i] = minor if (i + j) % 2 == 0 else -minor
        return LaurentMatrix(self.q, tuple(tuple(r) for r in cof))

    def inverse(self) -> 'LaurentMatrix':
        """Exact inverse, defined when the determinant is a monomial.

        Raises:
            LaurentArithmeticError: If the inverse is not a Laurent matrix
        """
        d = self.det()
        if not d.is_monomial:
            raise LaurentArithmeticError(f"Determinant {d} is not a monomial; inverse is not Laurent")
        scale = pow(d.coeffs[0], -1, self.q)
        adj = self.adjugate()
        return LaurentMatrix(self.q, tuple(tuple(e.scale(scale).shift(-d.val) for e in r) for r in adj.rows))

    def min_valuation(self) -> Union[int, float]:
        return min(e.valuation for r in self.rows for e in r)

    @property
    def is_integral(self) -> bool:
        """All entries lie in the valuation ring."""
        return self.min_valuation() >= 0

    def mod_t(self) -> np.ndarray:
        """Reduction of an integral matrix to F_q."""
        if not self.is_integral:
            raise LaurentArithmeticError("Matrix has entries outside the valuation ring")
        return np.array([[e.coefficient(0) for e in r] for r in self.rows], dtype=np.int64)

    def max_degree(self) -> Union[int, float]:
        return max(e.degree for r in self.rows for e in r)

    def __str__(self) -> str:
        return "[" + ", ".join("[" + ", ".join(str(e) for e in r) + "]" for r in self.rows) + "]"


@dataclass(frozen=True)
class SmithDecomposition:
    """exponents a1 >= a2 >= a3 and a coframe C in GL3(F_q[[t]]) (polynomial entries)
    with M·O^3 = C^-1 · diag(t^a1, t^a2, t^a3) · O^3."""
    exponents: Tuple[int, int, int]
    coframe: Optional[LaurentMatrix]


def _pivot_search(a: List[List[LaurentPoly]], start: int) -> Optional[Tuple[int, int]]:
    best = None
    best_val = math.inf
    for i in range(start, 3):
        for j in range(start, 3):
            v = a[i][j].valuation
            if v < best_val:
                best, best_val = (i, j), v
    return best


def smith_decomposition(m: LaurentMatrix, with_coframe: bool = True) -> SmithDecomposition:
    """Elementary divisors of m over the valuation ring, with the row transform.

    Raises:
        LaurentArithmeticError: If m is singular
    """
    q = m.q
    a = [list(r) for r in m.rows]
    p = [list(r) for r in LaurentMatrix.identity(q).rows] if with_coframe else None
    exps: List[int] = []
    for k in range(3):
        piv = _pivot_search(a, k)
        if piv is None:
            raise LaurentArithmeticError("Singular matrix has no elementary divisors")
        i, j = piv
        if i != k:
            a[i], a[k] = a[k], a[i]
            if p is not None:
                p[i], p[k] = p[k], p[i]
        if j != k:
            for row in a:
                row[j], row[k] = row[k], row[j]
        v = a[k][k].val
        u = a[k][k].shift(-v)
        for r in range(k + 1, 3):
            if a[r][k].is_zero:
                continue
            s = a[r][k].shift(-v)
            a[r] = [u * a[r][c] - s * a[k][c] for c in range(3)]
            if p is not None:
                p[r] = [u * p[r][c] - s * p[k][c] for c in range(3)]
        for c in range(k + 1, 3):
            if a[k][c].is_zero:
                continue
            s = a[k][c].shift(-v)
            for r in range(3):
                a[r][c] = u * a[r][c] - s * a[r][k]
        exps.append(v)
    # ascending pivots; reverse so row 0 carries the largest exponent
    exponents = (exps[2], exps[1], exps[0])
    coframe = None
    if p is not None:
        coframe = LaurentMatrix(q, (tuple(p[2]), tuple(p[1]), tuple(p[0])))
    return SmithDecomposition(exponents, coframe)


def elementary_divisors(m: LaurentMatrix) -> Tuple[int, int, int]:
    """Valuations (a1 >= a2 >= a3) of the Smith form; a1 + a2 + a3 = val det m."""
    return smith_decomposition(m, with_coframe=False).exponents


def minor_divisor_oracle(m: LaurentMatrix) -> Tuple[int, int, int]:
    """Elementary divisors from minimal valuations of i x i minors.

    Raises:
        LaurentArithmeticError: If m is singular
    """
    rows = m.rows
    v1 = min(e.valuation for r in rows for e in r)
    v2 = math.inf
    for ri in combinations(range(3), 2):
        for ci in combinations(range(3), 2):
            minor = rows[ri[0]][ci[0]] * rows[ri[1]][ci[1]] - rows[ri[0]][ci[1]] * rows[ri[1]][ci[0]]
            v2 = min(v2, minor.valuation)
    v3 = m.det().valuation
    if v3 == math.inf:
        raise LaurentArithmeticError("Singular matrix has no elementary divisors")
    asc = (v1, v2 - v1, v3 - v2)
    return (int(asc[2]), int(asc[1]), int(asc[0]))


def random_poly(rng: np.random.Generator, q: int, low: int, high: int) -> LaurentPoly:
    """Random Laurent polynomial supported on exponents [low, high]."""
    coeffs = rng.integers(0, q, size=high - low + 1)
    return LaurentPoly.from_array(q, low, coeffs)
