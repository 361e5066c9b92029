"""
The group Z^2 * Z acting on its tree of flats.

Vertices of the square complex are group elements; flats are cosets of Z^2
(A-syllables) and lines are cosets of Z (B-syllables). Walls are the
hyperplane classes of edges; the chain metric d_L counts chains of pairwise
non-touching, L-separated walls separating two vertices.
"""
import logging
import re
from collections import deque
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from itertools import combinations
from typing import FrozenSet, Iterable, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from app.core.cache import get_cache

logger = logging.getLogger(__name__)

_SYLLABLE_RE = re.compile(r'([AB])\(\s*([+-]?\d+)\s*(?:,\s*([+-]?\d+)\s*)?\)')
HALF = Fraction(1, 2)


class TreeFlatsError(Exception):
    """Custom exception for tree-of-flats errors"""
    pass


@dataclass(frozen=True)
class Syllable:
    """A nonzero element of one free factor: A(m, n) in Z^2 or B(k) in Z."""
    tag: str
    payload: Tuple[int, ...]

    def __post_init__(self):
        if self.tag == "A" and len(self.payload) != 2:
            raise TreeFlatsError(f"A-syllable needs 2 coordinates, got {self.payload}")
        if self.tag == "B" and len(self.payload) != 1:
            raise TreeFlatsError(f"B-syllable needs 1 coordinate, got {self.payload}")
        if self.tag not in ("A", "B"):
            raise TreeFlatsError(f"Unknown syllable tag {self.tag!r}")

    @property
    def is_zero(self) -> bool:
        return not any(self.payload)

    @property
    def length(self) -> int:
        return sum(abs(c) for c in self.payload)

    def merge(self, other: 'Syllable') -> 'Syllable':
        return Syllable(self.tag, tuple(a + b for a, b in zip(self.payload, other.payload)))

    def inverse(self) -> 'Syllable':
        return Syllable(self.tag, tuple(-c for c in self.payload))

    def __str__(self) -> str:
        return f"{self.tag}({','.join(str(c) for c in self.payload)})"


def A(m: int, n: int) -> Syllable:
    return Syllable("A", (m, n))


def B(k: int) -> Syllable:
    return Syllable("B", (k,))


def _reduce(raw: Iterable[Syllable]) -> Tuple[Syllable, ...]:
    stack: List[Syllable] = []
    for s in raw:
        if s.is_zero:
            continue
        if stack and stack[-1].tag == s.tag:
            merged = stack.pop().merge(s)
            if not merged.is_zero:
                stack.append(merged)
        else:
            stack.append(s)
    return tuple(stack)


@dataclass(frozen=True)
class GroupWord:
    """Free-product normal form: alternating tags, no zero syllables."""
    syllables: Tuple[Syllable, ...] = ()

    @classmethod
    def identity(cls) -> 'GroupWord':
        return cls(())

    @classmethod
    def of(cls, *syllables: Syllable) -> 'GroupWord':
        return normalize(syllables)

    @property
    def is_identity(self) -> bool:
        return not self.syllables

    @property
    def length(self) -> int:
        """Word length in the generators A(1,0), A(0,1), B(1)."""
        return sum(s.length for s in self.syllables)

    @property
    def last(self) -> Optional[Syllable]:
        return self.syllables[-1] if self.syllables else None

    @property
    def first(self) -> Optional[Syllable]:
        return self.syllables[0] if self.syllables else None

    def drop_last(self) -> 'GroupWord':
        return GroupWord(self.syllables[:-1])

    def __mul__(self, other: 'GroupWord') -> 'GroupWord':
        if not isinstance(other, GroupWord):
            return NotImplemented
        left = list(self.syllables)
        right = list(other.syllables)
        # only the junction can merge or cancel
        while left and right and left[-1].tag == right[0].tag:
            merged = left.pop().merge(right.pop(0))
            if not merged.is_zero:
                left.append(merged)
                break
        return GroupWord(tuple(left + right))

    def inverse(self) -> 'GroupWord':
        return GroupWord(tuple(s.inverse() for s in reversed(self.syllables)))

    def power(self, n: int) -> 'GroupWord':
        base = self if n >= 0 else self.inverse()
        result = GroupWord.identity()
        for _ in range(abs(n)):
            result = result * base
        return result

    def __str__(self) -> str:
        return ".".join(str(s) for s in self.syllables) if self.syllables else "e"

    @classmethod
    def parse(cls, text: str) -> 'GroupWord':
        """Parse ``A(1,0).B(2).A(-1,3)``; ``e`` or the empty string is the identity.

        Raises:
            ValueError: If the text is not a word
        """
        s = text.strip()
        if s in ("", "e", "1"):
            return cls.identity()
        raw = []
        for part in s.split("."):
            m = _SYLLABLE_RE.fullmatch(part.strip())
            if not m:
                raise ValueError(f"Cannot parse syllable {part!r} in {text!r}")
            tag, x, y = m.groups()
            if tag == "A":
                if y is None:
                    raise ValueError(f"A-syllable needs two coordinates: {part!r}")
                raw.append(A(int(x), int(y)))
            else:
                if y is not None:
                    raise ValueError(f"B-syllable takes one coordinate: {part!r}")
                raw.append(B(int(x)))
        return normalize(raw)


def normalize(raw: Iterable[Syllable]) -> GroupWord:
    """Normal form: drop zero syllables, merge equal neighbours, repeat."""
    return GroupWord(_reduce(raw))


IDENTITY = GroupWord.identity()
GENERATORS: Tuple[GroupWord, ...] = (
    GroupWord.of(A(1, 0)), GroupWord.of(A(-1, 0)),
    GroupWord.of(A(0, 1)), GroupWord.of(A(0, -1)),
    GroupWord.of(B(1)), GroupWord.of(B(-1)),
)


def word_distance(g: GroupWord, h: GroupWord) -> int:
    """|g^-1 h| in the standard generators."""
    return (g.inverse() * h).length


# Flats, lines and walls

class WallFamily(str, Enum):
    """Direction class of a wall."""
    A_HORIZONTAL = "A-horizontal"
    A_VERTICAL = "A-vertical"
    B = "B"

    @property
    def is_flat(self) -> bool:
        return self is not WallFamily.B

    @property
    def axis(self) -> int:
        return 1 if self is WallFamily.A_VERTICAL else 0

    @property
    def tag(self) -> str:
        return "B" if self is WallFamily.B else "A"


@dataclass(frozen=True)
class Wall:
    """Hyperplane of the square complex.

    prefix anchors the flat (A families) or line (B) and never ends with a
    syllable of that factor; offset is the half-integer coordinate crossed.
    """
    prefix: GroupWord
    family: WallFamily
    offset: Fraction

    def __post_init__(self):
        if (self.offset - HALF).denominator != 1:
            raise TreeFlatsError(f"Wall offset must be a half-integer, got {self.offset}")
        if self.prefix.last is not None and self.prefix.last.tag == self.family.tag:
            raise TreeFlatsError(f"Prefix {self.prefix} is not a minimal anchor for {self.family.value}")

    def __str__(self) -> str:
        return f"{self.family.value}[{self.prefix}]@{self.offset}"


def flat_coordinates(v: GroupWord) -> Tuple[GroupWord, Tuple[int, int]]:
    """Anchor of the flat containing v and v's coordinates in it."""
    if v.last is not None and v.last.tag == "A":
        return v.drop_last(), v.last.payload
    return v, (0, 0)


def line_coordinate(v: GroupWord) -> Tuple[GroupWord, int]:
    """Anchor of the B-line containing v and v's coordinate on it."""
    if v.last is not None and v.last.tag == "B":
        return v.drop_last(), v.last.payload[0]
    return v, 0


def _step(family: WallFamily, coordinate: int) -> GroupWord:
    if family is WallFamily.A_HORIZONTAL:
        return GroupWord.of(A(coordinate, 0))
    if family is WallFamily.A_VERTICAL:
        return GroupWord.of(A(0, coordinate))
    return GroupWord.of(B(coordinate))


def dual_edge(w: Wall) -> Tuple[GroupWord, GroupWord]:
    """An edge crossing w: endpoints at coordinates offset - 1/2 and offset + 1/2."""
    j = int(w.offset - HALF)
    return w.prefix * _step(w.family, j), w.prefix * _step(w.family, j + 1)


def wall_of_edge(u: GroupWord, generator: GroupWord) -> Wall:
    """The wall crossed by the edge from u to u·generator.

    Raises:
        TreeFlatsError: If generator is not a standard generator
    """
    if generator.length != 1:
        raise TreeFlatsError(f"{generator} is not a standard generator")
    s = generator.syllables[0]
    if s.tag == "A":
        anchor, coords = flat_coordinates(u)
        family = WallFamily.A_HORIZONTAL if s.payload[0] else WallFamily.A_VERTICAL
        c = coords[family.axis]
        delta = s.payload[family.axis]
    else:
        anchor, c = line_coordinate(u)
        family = WallFamily.B
        delta = s.payload[0]
    return Wall(anchor, family, c + delta * HALF)


def translate_wall(g: GroupWord, w: Wall) -> Wall:
    """Image g·w."""
    a, b = dual_edge(w)
    return wall_of_edge(g * a, a.inverse() * b)


def _coordinate(w: Wall, v: GroupWord) -> int:
    r = w.prefix.inverse() * v
    if r.first is not None and r.first.tag == w.family.tag:
        return r.first.payload[w.family.axis]
    return 0


def side(w: Wall, v: GroupWord) -> int:
    """+1 if v lies in the halfspace of coordinates above the offset, else -1."""
    return 1 if _coordinate(w, v) > w.offset else -1


def walls_along(x: GroupWord, y: GroupWord) -> List[Wall]:
    """Walls crossed by the normal-form geodesic from x to y, in crossing order."""
    walls: List[Wall] = []
    u = x
    for s in (x.inverse() * y).syllables:
        if s.tag == "A":
            anchor, (m0, n0) = flat_coordinates(u)
            for family, start, delta in ((WallFamily.A_HORIZONTAL, m0, s.payload[0]),
                                         (WallFamily.A_VERTICAL, n0, s.payload[1])):
                sign = 1 if delta > 0 else -1
                for i in range(abs(delta)):
                    walls.append(Wall(anchor, family, start + sign * i + sign * HALF))
        else:
            anchor, k0 = line_coordinate(u)
            k = s.payload[0]
            sign = 1 if k > 0 else -1
            for i in range(abs(k)):
                walls.append(Wall(anchor, WallFamily.B, k0 + sign * i + sign * HALF))
        u = u * GroupWord((s,))
    return walls


def walls_separating(x: GroupWord, y: GroupWord) -> FrozenSet[Wall]:
    """Exactly the walls with x and y in different halfspaces."""
    return frozenset(walls_along(x, y))


def are_transverse(w1: Wall, w2: Wall) -> bool:
    """True iff all four halfspace intersections are nonempty.

    Raises:
        TreeFlatsError: If the walls are equal
    """
    if w1 == w2:
        raise TreeFlatsError(f"Transversality is undefined for equal walls {w1}")
    return (w1.family.is_flat and w2.family.is_flat
            and w1.prefix == w2.prefix and w1.family != w2.family)


def _edge_meets_wall(v: GroupWord, w: Wall) -> bool:
    """True iff vertex v is an endpoint of an edge dual to the A-wall w."""
    anchor, coords = flat_coordinates(v)
    return anchor == w.prefix and abs(coords[w.family.axis] - w.offset) == HALF


def walls_touch(w1: Wall, w2: Wall) -> bool:
    """True iff some dual edges of w1 and w2 share a vertex."""
    if w1 == w2:
        return True
    if w1.family.is_flat and w2.family.is_flat:
        if w1.prefix != w2.prefix:
            return False
        return w1.family != w2.family or abs(w1.offset - w2.offset) == 1
    if not w1.family.is_flat and not w2.family.is_flat:
        return w1.prefix == w2.prefix and abs(w1.offset - w2.offset) == 1
    flat_wall, line_wall = (w1, w2) if w1.family.is_flat else (w2, w1)
    return any(_edge_meets_wall(v, flat_wall) for v in dual_edge(line_wall))


def _parallel_in_flat(w1: Wall, w2: Wall) -> bool:
    return w1.family.is_flat and w1.family == w2.family and w1.prefix == w2.prefix


def is_l_separated(w1: Wall, w2: Wall, L: int, search_radius: Optional[int] = None) -> bool:
    """True iff every chain of walls transverse to both has at most L walls.

    Common transversals only exist for parallel walls of one flat, where the
    perpendicular family is an infinite chain. With search_radius set, the
    transversals are instead enumerated among walls dual to edges within that
    radius of w1.

    Raises:
        TreeFlatsError: If the walls are equal or transverse
        ValueError: If L is negative
    """
    if L < 0:
        raise ValueError(f"L must be nonnegative, got {L}")
    if are_transverse(w1, w2):
        raise TreeFlatsError(f"Walls {w1} and {w2} are transverse")
    if search_radius is None:
        return not _parallel_in_flat(w1, w2)
    return transversal_chain_oracle(w1, w2, search_radius) <= L


def transversal_chain_oracle(w1: Wall, w2: Wall, radius: int) -> int:
    """Largest chain of walls transverse to both, among walls near w1."""
    center = dual_edge(w1)[0]
    found = set()
    for v in cayley_ball(radius):
        u = center * v
        for s in GENERATORS:
            found.add(wall_of_edge(u, s))
    common = [w for w in found if w not in (w1, w2) and are_transverse(w, w1) and are_transverse(w, w2)]
    if not common:
        return 0
    g = nx.Graph()
    g.add_nodes_from(range(len(common)))
    for i, j in combinations(range(len(common)), 2):
        if not are_transverse(common[i], common[j]):
            g.add_edge(i, j)
    clique, size = nx.max_weight_clique(g, weight=None)
    return size


def quadrant_oracle(w1: Wall, w2: Wall, vertices: Iterable[GroupWord]) -> bool:
    """Transversality from halfspace intersections observed on a vertex set."""
    seen = {(side(w1, v), side(w2, v)) for v in vertices}
    return len(seen) == 4


# Chain metric

def _chain_compatible(w1: Wall, w2: Wall, L: int) -> bool:
    return (not are_transverse(w1, w2) and not walls_touch(w1, w2)
            and is_l_separated(w1, w2, L))


def longest_l_chain(x: GroupWord, y: GroupWord, L: int = 0) -> List[Wall]:
    """A maximum L-chain of walls separating x from y, in crossing order."""
    walls = walls_along(x, y)
    if not walls:
        return []
    dag = nx.DiGraph()
    dag.add_nodes_from(range(len(walls)))
    for i in range(len(walls)):
        for j in range(i + 1, len(walls)):
            if _chain_compatible(walls[i], walls[j], L):
                dag.add_edge(i, j)
    return [walls[i] for i in nx.dag_longest_path(dag)]


def chain_metric_dL(x: GroupWord, y: GroupWord, L: int = 0) -> int:
    """d_L(x, y): 0 on the diagonal, 1 for adjacent vertices, else 1 + longest L-chain."""
    d = word_distance(x, y)
    if d <= 1:
        return d
    return 1 + len(longest_l_chain(x, y, L))


def chain_bruteforce(x: GroupWord, y: GroupWord, L: int = 0) -> int:
    """Largest pairwise compatible subset of separating walls, by subset enumeration."""
    walls = sorted(walls_separating(x, y), key=str)
    for size in range(len(walls), 0, -1):
        for subset in combinations(walls, size):
            if all(_chain_compatible(a, b, L) for a, b in combinations(subset, 2)):
                return size
    return 0


# Contraction

@dataclass(frozen=True)
class SkeweringWitness:
    """g^power maps the halfspace (wall, side) strictly into itself."""
    wall: Wall
    power: int
    image: Wall
    side: int


def _halfspace_inside(inner: Wall, inner_side: int, outer: Wall, outer_side: int) -> bool:
    a, b = dual_edge(inner)
    c, d = dual_edge(outer)
    return (side(outer, a) == outer_side and side(outer, b) == outer_side
            and side(inner, c) == -inner_side and side(inner, d) == -inner_side)


def _candidate_walls(g: GroupWord, K: int) -> List[Wall]:
    first = walls_along(IDENTITY, g)
    mid = (len(first) - 1) / 2
    ordered = sorted(range(len(first)), key=lambda i: (abs(i - mid), i))
    out = [first[i] for i in ordered]
    seen = set(out)
    for k in range(2, K + 1):
        for w in walls_along(IDENTITY, g.power(k)):
            if w not in seen:
                seen.add(w)
                out.append(w)
    return out


def find_contraction_witness(g: GroupWord, L: int = 0, K: int = 2) -> Optional[SkeweringWitness]:
    """Search walls crossed by [o, g^k o], k <= K, for a skewering power n <= K.

    Raises:
        TreeFlatsError: If g is the identity
        ValueError: If K < 2 or L < 0
    """
    if g.is_identity:
        raise TreeFlatsError("The identity has no contraction certificate")
    if K < 2:
        raise ValueError(f"Power bound K must be at least 2, got {K}")
    if L < 0:
        raise ValueError(f"L must be nonnegative, got {L}")
    powers = [g.power(n) for n in range(1, K + 1)]
    for w in _candidate_walls(g, K):
        a, b = dual_edge(w)
        for n, gn in enumerate(powers, start=1):
            image = translate_wall(gn, w)
            if image == w or not _chain_compatible(w, image, L):
                continue
            for s, v in ((side(w, b), b), (side(w, a), a)):
                if _halfspace_inside(image, side(image, gn * v), w, s):
                    return SkeweringWitness(w, n, image, s)
    return None


def contraction_certificate(g: GroupWord, L: int = 0, K: int = 2) -> bool:
    """True certifies that g acts as a contracting isometry."""
    return find_contraction_witness(g, L, K) is not None


# Enumeration and oracles

def cayley_ball(radius: int) -> List[GroupWord]:
    """All elements of word length <= radius, in BFS order."""
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    cache = get_cache("tree_flats_ball")

    def compute() -> List[GroupWord]:
        seen = {IDENTITY: 0}
        order = [IDENTITY]
        queue = deque([IDENTITY])
        while queue:
            v = queue.popleft()
            if seen[v] == radius:
                continue
            for s in GENERATORS:
                w = v * s
                if w not in seen:
                    seen[w] = seen[v] + 1
                    order.append(w)
                    queue.append(w)
        return order

    return cache.get_or_compute(radius, compute)


def cayley_bfs_distance(x: GroupWord, y: GroupWord, max_radius: int) -> Optional[int]:
    """Graph distance by breadth-first search, or None beyond max_radius."""
    target = x.inverse() * y
    for v in cayley_ball(max_radius):
        if v == target:
            return v.length
    return None


def gallery_walls_oracle(x: GroupWord, y: GroupWord) -> FrozenSet[Wall]:
    """Walls of every edge on every geodesic edge path from x to y."""
    found = set()
    visited = set()
    stack = [x]
    while stack:
        u = stack.pop()
        if u in visited:
            continue
        visited.add(u)
        du = word_distance(u, y)
        for s in GENERATORS:
            v = u * s
            if word_distance(v, y) == du - 1:
                found.add(wall_of_edge(u, s))
                stack.append(v)
    return frozenset(found)


def random_word(rng: np.random.Generator, steps: int, generators: Sequence[GroupWord] = GENERATORS) -> GroupWord:
    """Product of `steps` uniformly drawn generators."""
    w = IDENTITY
    for i in rng.integers(0, len(generators), size=steps):
        w = w * generators[int(i)]
    return w
