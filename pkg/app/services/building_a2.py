"""
The affine building of type A~2 for SL3 over F_q((t)).

Vertices are homothety classes of lattices, stored as canonical lower
triangular column Hermite forms. Distances, germs and sectors are all read off
Smith decompositions of transition matrices, so every computation is exact.

Convention: a lattice class [X] is X·O^3. For a transition matrix with
elementary divisors a1 >= a2 >= a3 the vector distance is (a1 - a2, a2 - a3).
Residue flags are read in the row (dual) frame of the Smith coframe.
"""
import logging
import math
from collections import deque
from dataclasses import dataclass
from functools import lru_cache
from itertools import product
from typing import Dict, List, Optional, Sequence, Tuple, Union

import networkx as nx
import numpy as np

from app.core.cache import get_cache
from app.services.laurent import (
    LaurentArithmeticError, LaurentMatrix, LaurentPoly, SmithDecomposition,
    check_modulus, smith_decomposition, times_unit_inverse,
)

logger = logging.getLogger(__name__)

Vector3 = Tuple[int, int, int]


class BuildingError(Exception):
    """Custom exception for building computations"""
    pass


# Lattice classes

@dataclass(frozen=True)
class LatticeClass:
    """Vertex of the building: canonical Hermite form with minimum entry valuation 0."""
    matrix: LaurentMatrix

    @property
    def q(self) -> int:
        return self.matrix.q

    @classmethod
    def standard(cls, q: int) -> 'LatticeClass':
        return cls(LaurentMatrix.identity(q))

    @classmethod
    def of(cls, m: LaurentMatrix) -> 'LatticeClass':
        return canonicalize(m)

    def __str__(self) -> str:
        return str(self.matrix)


Vertex = Union[LatticeClass, LaurentMatrix]


def _matrix(v: Vertex) -> LaurentMatrix:
    return v.matrix if isinstance(v, LatticeClass) else v


def _triangularize(m: LaurentMatrix) -> List[List[LaurentPoly]]:
    """Lower triangular basis of the same lattice via fraction-free column operations."""
    a = [list(r) for r in m.rows]
    for r in range(2):
        candidates = [c for c in range(r, 3) if not a[r][c].is_zero]
        if not candidates:
            raise BuildingError("Singular matrix does not define a lattice")
        c0 = min(candidates, key=lambda c: (a[r][c].val, c))
        if c0 != r:
            for row in a:
                row[r], row[c0] = row[c0], row[r]
        v = a[r][r].val
        u = a[r][r].shift(-v)
        for c in range(r + 1, 3):
            if a[r][c].is_zero:
                continue
            s = a[r][c].shift(-v)
            for i in range(3):
                a[i][c] = u * a[i][c] - s * a[i][r]
    if a[2][2].is_zero:
        raise BuildingError("Singular matrix does not define a lattice")
    return a


def _hermite(m: LaurentMatrix) -> LaurentMatrix:
    q = m.q
    a = _triangularize(m)
    k = [a[i][i].val for i in range(3)]
    u = [a[i][i].shift(-k[i]) for i in range(3)]
    zero = LaurentPoly.zero(q)

    h21 = times_unit_inverse(a[2][1], u[1], k[2])
    below = k[1] + max(0, k[2] - h21.val) if not h21.is_zero else k[1]
    x = times_unit_inverse(a[1][0], u[0], below)
    h10 = x.truncate(k[1])
    s = (x - h10).shift(-k[1])
    y = times_unit_inverse(a[2][0], u[0], k[2])
    h20 = (y - s * h21).truncate(k[2])

    rows = (
        (LaurentPoly.monomial(q, k[0]), zero, zero),
        (h10, LaurentPoly.monomial(q, k[1]), zero),
        (h20, h21, LaurentPoly.monomial(q, k[2])),
    )
    h = LaurentMatrix(q, rows)
    return h.shift(-int(h.min_valuation()))


def canonicalize(m: LaurentMatrix) -> LatticeClass:
    """Canonical representative of the homothety class of m·O^3.

    Raises:
        BuildingError: If m is singular
    """
    cache = get_cache("lattice_canonical")
    return cache.get_or_compute(m, lambda: LatticeClass(_hermite(m)))


# Vector distance and metric

@dataclass(frozen=True)
class VectorDistance:
    a: int
    b: int

    def swap(self) -> 'VectorDistance':
        return VectorDistance(self.b, self.a)

    @property
    def is_regular(self) -> bool:
        return self.a > 0 and self.b > 0

    @property
    def is_zero(self) -> bool:
        return self.a == 0 and self.b == 0

    def as_tuple(self) -> Tuple[int, int]:
        return (self.a, self.b)


def transition(x: Vertex, y: Vertex) -> LaurentMatrix:
    """x^-1 · y for representatives with monomial determinant."""
    try:
        return _matrix(x).inverse() @ _matrix(y)
    except LaurentArithmeticError as e:
        raise BuildingError(f"Cannot form transition matrix: {e}") from e


def vector_from_exponents(exps: Sequence[int]) -> VectorDistance:
    return VectorDistance(exps[0] - exps[1], exps[1] - exps[2])


def _smith(x: Vertex, y: Vertex, with_coframe: bool = True) -> SmithDecomposition:
    return smith_decomposition(transition(x, y), with_coframe=with_coframe)


def vector_distance(x: Vertex, y: Vertex) -> VectorDistance:
    """Weyl-chamber valued distance theta[x, y] = (a, b)."""
    return vector_from_exponents(_smith(x, y, with_coframe=False).exponents)


def cat0_length(v: VectorDistance) -> float:
    return math.sqrt(v.a * v.a + v.a * v.b + v.b * v.b)


def cat0_distance(x: Vertex, y: Vertex) -> float:
    """Euclidean distance with unit edges: sqrt(a^2 + ab + b^2)."""
    return cat0_length(vector_distance(x, y))


def apartment_embedding_distance(a: int, b: int) -> float:
    """Length of a·w1 + b·w2 for unit coweights at angle pi/3 in R^2."""
    w1 = np.array([1.0, 0.0])
    w2 = np.array([0.5, math.sqrt(3.0) / 2.0])
    return float(np.linalg.norm(a * w1 + b * w2))


def vertex_type(x: Vertex) -> int:
    """Colour in {0, 1, 2}: valuation of the determinant mod 3."""
    m = x.matrix if isinstance(x, LatticeClass) else canonicalize(x).matrix
    return int(m.det().valuation) % 3


def is_regular_segment(x: Vertex, y: Vertex) -> bool:
    """True iff [x, y] lies in the interior of a Weyl chamber.

    Raises:
        BuildingError: If x and y are the same vertex
    """
    v = vector_distance(x, y)
    if v.is_zero:
        raise BuildingError("Segment endpoints coincide")
    return v.is_regular


# Residue flags of PG(2, q)

def normalize_vector(v: Sequence[int], q: int) -> Vector3:
    """Scale so the first nonzero coordinate is 1."""
    v = [int(c) % q for c in v]
    for c in v:
        if c:
            inv = pow(c, -1, q)
            return tuple((x * inv) % q for x in v)
    raise BuildingError("Zero vector has no projective class")


def cross_mod(u: Sequence[int], v: Sequence[int], q: int) -> Vector3:
    return (
        (u[1] * v[2] - u[2] * v[1]) % q,
        (u[2] * v[0] - u[0] * v[2]) % q,
        (u[0] * v[1] - u[1] * v[0]) % q,
    )


def dot_mod(u: Sequence[int], v: Sequence[int], q: int) -> int:
    return sum(int(a) * int(b) for a, b in zip(u, v)) % q


def inverse_mod(a: np.ndarray, q: int) -> np.ndarray:
    """Inverse of an invertible 3x3 matrix over F_q."""
    a = np.asarray(a, dtype=np.int64) % q
    m = LaurentMatrix.constant_matrix(q, a)
    d = m.det()
    if d.is_zero or d.val != 0 or not d.is_monomial:
        raise BuildingError("Matrix is not invertible over F_q")
    inv = pow(d.coeffs[0], -1, q)
    adj = m.adjugate()
    return np.array([[(e.coefficient(0) * inv) % q for e in r] for r in adj.rows], dtype=np.int64)


@dataclass(frozen=True)
class Flag:
    """Incident point and line of PG(2, q); the line is stored as a normalized dual vector."""
    q: int
    point: Vector3
    line: Vector3

    def __post_init__(self):
        if dot_mod(self.point, self.line, self.q) != 0:
            raise BuildingError(f"Point {self.point} is not on line {self.line}")

    def transform(self, a: np.ndarray) -> 'Flag':
        """Image under the row-vector action p -> p·a, l -> a^-1·l."""
        a = np.asarray(a, dtype=np.int64) % self.q
        p = normalize_vector(np.asarray(self.point, dtype=np.int64) @ a, self.q)
        l = normalize_vector(inverse_mod(a, self.q) @ np.asarray(self.line, dtype=np.int64), self.q)
        return Flag(self.q, p, l)

    def __str__(self) -> str:
        return f"(point={self.point}, line={self.line})"


@dataclass(frozen=True)
class PartialSimplex:
    """Vertex of a residue: a point or a line, for singular directions."""
    q: int
    point: Optional[Vector3] = None
    line: Optional[Vector3] = None

    def __str__(self) -> str:
        return f"(point={self.point})" if self.point is not None else f"(line={self.line})"


Germ = Union[Flag, PartialSimplex]


@lru_cache(maxsize=None)
def projective_points(q: int) -> Tuple[Vector3, ...]:
    check_modulus(q)
    pts = {normalize_vector(v, q) for v in product(range(q), repeat=3) if any(v)}
    return tuple(sorted(pts))


@lru_cache(maxsize=None)
def all_flags(q: int) -> Tuple[Flag, ...]:
    """All (q^2+q+1)(q+1) flags in lexicographic (point, line) order."""
    pts = projective_points(q)
    flags = [Flag(q, p, l) for p in pts for l in pts if dot_mod(p, l, q) == 0]
    return tuple(sorted(flags, key=lambda f: (f.point, f.line)))


@lru_cache(maxsize=None)
def _flag_index(q: int) -> Dict[Flag, int]:
    return {f: i for i, f in enumerate(all_flags(q))}


def flag_id(f: Flag) -> int:
    return _flag_index(f.q)[f]


def flag_from_id(q: int, i: int) -> Flag:
    flags = all_flags(q)
    if not 0 <= i < len(flags):
        raise ValueError(f"flag id {i} out of range for q={q}")
    return flags[i]


def flags_opposite(f1: Flag, f2: Flag) -> bool:
    """True iff neither point lies on the other flag's line.

    Raises:
        BuildingError: If the flags live over different fields
    """
    if f1.q != f2.q:
        raise BuildingError(f"Flags over different fields: q={f1.q} and q={f2.q}")
    return dot_mod(f1.point, f2.line, f1.q) != 0 and dot_mod(f2.point, f1.line, f1.q) != 0


def gallery_distance_res(f1: Flag, f2: Flag) -> int:
    """Distance in the flag adjacency graph (diameter 3)."""
    if f1 == f2:
        return 0
    if f1.point == f2.point or f1.line == f2.line:
        return 1
    if flags_opposite(f1, f2):
        return 3
    return 2


@lru_cache(maxsize=None)
def flag_graph(q: int) -> nx.Graph:
    """Flags adjacent iff they share the point or the line."""
    g = nx.Graph()
    flags = all_flags(q)
    g.add_nodes_from(flags)
    for i, f in enumerate(flags):
        for h in flags[i + 1:]:
            if f.point == h.point or f.line == h.line:
                g.add_edge(f, h)
    return g


def flag_lift(flag: Flag) -> np.ndarray:
    """Basis rows (p, w, z) of F_q^3 with p the point and span(p, w) the line."""
    q = flag.q
    on_line = [v for v in projective_points(q) if dot_mod(v, flag.line, q) == 0 and v != flag.point]
    off_line = [v for v in projective_points(q) if dot_mod(v, flag.line, q) != 0]
    return np.array([flag.point, on_line[0], off_line[0]], dtype=np.int64)


# Germs

def germ_from_smith(decomp: SmithDecomposition, q: int) -> Germ:
    """Residue simplex spanned by the direction of a segment."""
    v = vector_from_exponents(decomp.exponents)
    if v.is_zero:
        raise BuildingError("Segment endpoints coincide")
    rows = decomp.coframe.mod_t()
    point = normalize_vector(rows[0], q) if v.a > 0 else None
    line = normalize_vector(cross_mod(rows[0], rows[1], q), q) if v.b > 0 else None
    if point is not None and line is not None:
        return Flag(q, point, line)
    return PartialSimplex(q, point, line)


def germ_flag(o: Vertex, y: Vertex) -> Germ:
    """Germ at o of the segment [o, y].

    Returns a Flag for regular segments, a PartialSimplex otherwise.

    Raises:
        BuildingError: If o and y are the same vertex
    """
    return germ_from_smith(_smith(o, y), _matrix(o).q)


def residue_transition(g: LaurentMatrix, x: Vertex) -> np.ndarray:
    """F_q-linear map carrying germs at x to germs at g·x (row-vector convention)."""
    gx = g @ _matrix(x)
    k = transition(gx, canonicalize(gx))
    # drop the homothety factor picked up by normalization
    return k.shift(-int(k.min_valuation())).mod_t()


# Sectors

@dataclass(frozen=True)
class SectorGerm:
    base: LatticeClass
    flag: Flag


def _weyl_diag(q: int, v: VectorDistance) -> LaurentMatrix:
    return LaurentMatrix.diag(q, (v.a + v.b, v.b, 0))


@dataclass(frozen=True)
class Sector:
    """Sector based at base with coframe C; its vertex at (a, b) is
    [X · C^-1 · diag(t^(a+b), t^b, 1)]."""
    base: LatticeClass
    coframe: LaurentMatrix

    @classmethod
    def from_germ(cls, germ: SectorGerm) -> 'Sector':
        lift = LaurentMatrix.constant_matrix(germ.base.q, flag_lift(germ.flag))
        return cls(germ.base, lift)

    def point(self, v: VectorDistance) -> LatticeClass:
        # scalar units act trivially on lattices, so adj(C) stands in for C^-1
        m = self.base.matrix @ self.coframe.adjugate() @ _weyl_diag(self.base.q, v)
        return canonicalize(m)

    def offset_to(self, v: VectorDistance, y: Vertex) -> VectorDistance:
        """vector_distance(point(v), y) without inverting the coframe."""
        q = self.base.q
        d_inv = LaurentMatrix.diag(q, (-(v.a + v.b), -v.b, 0))
        m = d_inv @ self.coframe @ transition(self.base, y)
        return vector_from_exponents(smith_decomposition(m, with_coframe=False).exponents)

    def distance_to(self, v: VectorDistance, y: Vertex) -> float:
        return cat0_length(self.offset_to(v, y))


def sector_point(germ: SectorGerm, v: VectorDistance) -> LatticeClass:
    """Vertex at vector v from the base in the sector with the given germ."""
    return Sector.from_germ(germ).point(v)


def sector_toward(o: LatticeClass, y: Vertex) -> Sector:
    """A sector based at o containing y (from the Smith coframe of [o, y])."""
    return Sector(o, _smith(o, y).coframe)


# Neighbourhoods

def neighbors(x: LatticeClass) -> List[LatticeClass]:
    """The 2(q^2+q+1) vertices adjacent to x."""
    cache = get_cache("building_neighbors")

    def compute() -> List[LatticeClass]:
        q = x.q
        flags = all_flags(q)
        by_point: Dict[Vector3, Flag] = {}
        by_line: Dict[Vector3, Flag] = {}
        for f in flags:
            by_point.setdefault(f.point, f)
            by_line.setdefault(f.line, f)
        out = [sector_point(SectorGerm(x, f), VectorDistance(1, 0)) for f in by_point.values()]
        out += [sector_point(SectorGerm(x, f), VectorDistance(0, 1)) for f in by_line.values()]
        return out

    return cache.get_or_compute(x, compute)


def ball(x: LatticeClass, radius: int) -> List[LatticeClass]:
    """Vertices within combinatorial distance radius of x, in BFS order (x first)."""
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    cache = get_cache("building_ball")

    def compute() -> List[LatticeClass]:
        seen = {x: 0}
        order = [x]
        queue = deque([x])
        while queue:
            v = queue.popleft()
            if seen[v] == radius:
                continue
            for w in neighbors(v):
                if w not in seen:
                    seen[w] = seen[v] + 1
                    order.append(w)
                    queue.append(w)
        return order

    return cache.get_or_compute((x, radius), compute)


# Hyperbolic elements

def _check_sl3(g: LaurentMatrix) -> None:
    d = g.det()
    if d != LaurentPoly.constant(g.q, 1):
        raise BuildingError(f"Element is not in SL3: det = {d}")


def hyperbolic_witness(g: LaurentMatrix, o: LatticeClass) -> Optional[Tuple[Flag, Flag]]:
    """Opposite germs (toward g^-1·o, toward g·o) at o, or None.

    Raises:
        BuildingError: If g is not in SL3
    """
    _check_sl3(g)
    x = o.matrix
    forward = smith_decomposition(x.inverse() @ g @ x)
    fv = vector_from_exponents(forward.exponents)
    if not fv.is_regular:
        return None
    backward = smith_decomposition(x.inverse() @ g.adjugate() @ x)
    if not vector_from_exponents(backward.exponents).is_regular:
        return None
    toward_forward = germ_from_smith(forward, g.q)
    toward_back = germ_from_smith(backward, g.q)
    if flags_opposite(toward_back, toward_forward):
        return (toward_back, toward_forward)
    return None


def hyperbolic_certificate(g: LaurentMatrix, o: LatticeClass) -> bool:
    """True iff the germs at o toward g^-1·o and g·o are opposite chambers.

    A true value certifies that g is hyperbolic.
    """
    return hyperbolic_witness(g, o) is not None


def matrix_power(g: LaurentMatrix, n: int) -> LaurentMatrix:
    result = LaurentMatrix.identity(g.q)
    base = g
    while n > 0:
        if n & 1:
            result = result @ base
        base = base @ base
        n >>= 1
    return result


def displacement_profile(g: LaurentMatrix, o: LatticeClass, n_max: int) -> List[float]:
    """d(g^n·o, o) for n = 1..n_max."""
    if n_max < 1:
        raise ValueError("n_max must be at least 1")
    profile = []
    power = LaurentMatrix.identity(g.q)
    for _ in range(n_max):
        power = power @ g
        profile.append(cat0_distance(o, power @ o.matrix))
    return profile


# Element parsing

def _split_top(text: str, sep: str) -> List[str]:
    parts, depth, start = [], 0, 0
    for i, ch in enumerate(text):
        if ch in "([":
            depth += 1
        elif ch in ")]":
            depth -= 1
        elif ch == sep and depth == 0:
            parts.append(text[start:i])
            start = i + 1
    parts.append(text[start:])
    return [p.strip() for p in parts]


def _parse_factor(text: str, q: int) -> LaurentMatrix:
    s = text.strip()
    if s in ("I", "id", "e"):
        return LaurentMatrix.identity(q)
    if s.startswith("diag(") and s.endswith(")"):
        entries = _split_top(s[5:-1], ",")
        if len(entries) != 3:
            raise ValueError(f"diag needs 3 entries: {text!r}")
        return LaurentMatrix.diag_polys(q, [LaurentPoly.parse(e, q) for e in entries])
    if len(s) > 4 and s[0] == "e" and s[1] in "123" and s[2] in "123" and s[3] == "(" and s.endswith(")"):
        i, j = int(s[1]) - 1, int(s[2]) - 1
        return LaurentMatrix.elementary(q, i, j, LaurentPoly.parse(s[4:-1], q))
    if s.startswith("[") and s.endswith("]"):
        rows = _split_top(s[1:-1], ",")
        if len(rows) != 3 or not all(r.startswith("[") and r.endswith("]") for r in rows):
            raise ValueError(f"Matrix needs 3 bracketed rows: {text!r}")
        entries = [[LaurentPoly.parse(e, q) for e in _split_top(r[1:-1], ",")] for r in rows]
        return LaurentMatrix.from_entries(q, entries)
    raise ValueError(f"Unknown matrix factor {text!r}")


def parse_element(text: str, q: int) -> LaurentMatrix:
    """Parse products like ``diag(t,1,t^-1) * e12(t^-1)``.

    Raises:
        ValueError: If the text is not a matrix expression
    """
    check_modulus(q)
    factors = [f for f in _split_top(text, "*")]
    if not factors or any(not f for f in factors):
        raise ValueError(f"Cannot parse element {text!r}")
    result = LaurentMatrix.identity(q)
    for f in factors:
        result = result @ _parse_factor(f, q)
    return result


def format_element(g: LaurentMatrix) -> str:
    return str(g)
