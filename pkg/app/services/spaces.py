"""
Concrete backends for the SpaceHandle protocol.

Every backend exposes the metric and group action used by hyperbolic_core,
plus the walk hooks used by walk_engine: observe (displacement and CSV
extras of a position), certify, parsing and formatting of elements.
"""
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Hashable, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from app.services import building_a2 as bt
from app.services import tree_flats as tf
from app.services.laurent import LaurentMatrix, LaurentPoly, check_modulus, smith_decomposition

logger = logging.getLogger(__name__)

Observation = Tuple[Any, Dict[str, Any]]


class LineSpace:
    """Z with translations."""
    name = "line"
    basepoint = 0
    identity = 0

    def distance(self, x: int, y: int) -> int:
        return abs(x - y)

    def act(self, g: int, x: int) -> int:
        return g + x

    def compose(self, g: int, h: int) -> int:
        return g + h

    def inverse(self, g: int) -> int:
        return -g

    def observe(self, g: int) -> Observation:
        return abs(g), {}

    def certify(self, g: int) -> Optional[bool]:
        return None

    def format_element(self, g: int) -> str:
        return str(g)

    def parse_element(self, text: str) -> int:
        return int(text)

    def sample_points(self, rng: np.random.Generator, count: int, scale: int = 20) -> List[int]:
        return [int(v) for v in rng.integers(-scale, scale + 1, size=count)]

    def sample_elements(self, rng: np.random.Generator, count: int, scale: int = 20) -> List[int]:
        return self.sample_points(rng, count, scale)

    def ball(self, radius: int) -> List[int]:
        return list(range(-radius, radius + 1))


class GridSpace:
    """Z^2 with the l1 metric and translations."""
    name = "grid2"
    basepoint = (0, 0)
    identity = (0, 0)

    def distance(self, x: Tuple[int, int], y: Tuple[int, int]) -> int:
        return abs(x[0] - y[0]) + abs(x[1] - y[1])

    def act(self, g: Tuple[int, int], x: Tuple[int, int]) -> Tuple[int, int]:
        return (g[0] + x[0], g[1] + x[1])

    compose = act

    def inverse(self, g: Tuple[int, int]) -> Tuple[int, int]:
        return (-g[0], -g[1])

    def observe(self, g: Tuple[int, int]) -> Observation:
        return self.distance(self.basepoint, g), {}

    def certify(self, g: Tuple[int, int]) -> Optional[bool]:
        return None

    def format_element(self, g: Tuple[int, int]) -> str:
        return f"({g[0]},{g[1]})"

    def parse_element(self, text: str) -> Tuple[int, int]:
        parts = text.strip().strip("()").split(",")
        if len(parts) != 2:
            raise ValueError(f"Cannot parse grid element {text!r}")
        return (int(parts[0]), int(parts[1]))

    def sample_points(self, rng: np.random.Generator, count: int, scale: int = 10) -> List[Tuple[int, int]]:
        return [(int(a), int(b)) for a, b in rng.integers(-scale, scale + 1, size=(count, 2))]

    def sample_elements(self, rng: np.random.Generator, count: int, scale: int = 10) -> List[Tuple[int, int]]:
        return self.sample_points(rng, count, scale)

    def ball(self, radius: int) -> List[Tuple[int, int]]:
        return [(a, b) for a in range(-radius, radius + 1) for b in range(-radius, radius + 1)
                if abs(a) + abs(b) <= radius]


@dataclass(frozen=True)
class Automorphism:
    """Graph automorphism stored as sorted (node, image) pairs."""
    mapping: Tuple[Tuple[Hashable, Hashable], ...]

    @classmethod
    def from_dict(cls, d: Dict[Hashable, Hashable]) -> 'Automorphism':
        return cls(tuple(sorted(d.items())))

    def as_dict(self) -> Dict[Hashable, Hashable]:
        return dict(self.mapping)

    def __call__(self, x: Hashable) -> Hashable:
        return self.as_dict()[x]


@dataclass
class GraphSpace:
    """Finite connected graph with its path metric and a group of automorphisms."""
    graph: nx.Graph
    root: Hashable
    name: str = "graph"
    _lengths: Dict[Hashable, Dict[Hashable, int]] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not nx.is_connected(self.graph):
            raise ValueError("GraphSpace needs a connected graph")
        self._lengths = dict(nx.all_pairs_shortest_path_length(self.graph))

    @property
    def basepoint(self) -> Hashable:
        return self.root

    @property
    def identity(self) -> Automorphism:
        return Automorphism.from_dict({v: v for v in self.graph.nodes})

    def distance(self, x: Hashable, y: Hashable) -> int:
        return self._lengths[x][y]

    def act(self, g: Automorphism, x: Hashable) -> Hashable:
        return g(x)

    def compose(self, g: Automorphism, h: Automorphism) -> Automorphism:
        gd, hd = g.as_dict(), h.as_dict()
        return Automorphism.from_dict({v: gd[hd[v]] for v in hd})

    def inverse(self, g: Automorphism) -> Automorphism:
        return Automorphism.from_dict({b: a for a, b in g.mapping})

    def format_element(self, g: Automorphism) -> str:
        return ",".join(f"{a}->{b}" for a, b in g.mapping if a != b) or "id"

    def geodesic(self, x: Hashable, y: Hashable) -> List[Hashable]:
        return nx.shortest_path(self.graph, x, y)

    def distance_to_set(self, x: Hashable, nodes: Sequence[Hashable]) -> int:
        return min(self._lengths[x][v] for v in nodes)

    def is_automorphism(self, g: Automorphism) -> bool:
        d = g.as_dict()
        return all(self.graph.has_edge(d[a], d[b]) for a, b in self.graph.edges)


def star_tree(leaves: int = 3) -> GraphSpace:
    """Star with center 0 and leaves 1..leaves, based at leaf 1."""
    return GraphSpace(nx.star_graph(leaves), root=1, name=f"star{leaves}")


def regular_tree_ball(degree: int, radius: int) -> GraphSpace:
    """Ball of the given radius in the degree-regular tree, based at its center."""
    g = nx.Graph()
    g.add_node(0)
    frontier = [0]
    next_id = 1
    for depth in range(radius):
        new_frontier = []
        for v in frontier:
            children = degree if depth == 0 else degree - 1
            for _ in range(children):
                g.add_edge(v, next_id)
                new_frontier.append(next_id)
                next_id += 1
        frontier = new_frontier
    return GraphSpace(g, root=0, name=f"tree{degree}_r{radius}")


def swap_leaves(space: GraphSpace, a: Hashable, b: Hashable) -> Automorphism:
    """Order-2 automorphism exchanging two nodes and fixing the rest."""
    d = {v: v for v in space.graph.nodes}
    d[a], d[b] = b, a
    g = Automorphism.from_dict(d)
    if not space.is_automorphism(g):
        raise ValueError(f"Swapping {a} and {b} is not an automorphism")
    return g


class TreeFlatsSpace:
    """Z^2 * Z acting on itself, with the word metric or the chain metric d_L."""

    def __init__(self, metric: str = "word", L: int = 0, K: int = 2):
        if metric not in ("word", "dl"):
            raise ValueError(f"metric must be 'word' or 'dl', got {metric!r}")
        if L < 0:
            raise ValueError("L must be nonnegative")
        self.metric = metric
        self.L = L
        self.K = K
        self.name = "tree_flats" if metric == "word" else f"tree_flats_d{L}"

    basepoint = tf.IDENTITY
    identity = tf.IDENTITY

    def distance(self, x: tf.GroupWord, y: tf.GroupWord) -> int:
        if self.metric == "dl":
            return tf.chain_metric_dL(x, y, self.L)
        return tf.word_distance(x, y)

    def act(self, g: tf.GroupWord, x: tf.GroupWord) -> tf.GroupWord:
        return g * x

    def compose(self, g: tf.GroupWord, h: tf.GroupWord) -> tf.GroupWord:
        return g * h

    def inverse(self, g: tf.GroupWord) -> tf.GroupWord:
        return g.inverse()

    def observe(self, g: tf.GroupWord) -> Observation:
        return self.distance(self.basepoint, g), {}

    def certify(self, g: tf.GroupWord) -> Optional[bool]:
        if g.is_identity:
            return False
        return tf.contraction_certificate(g, self.L, self.K)

    def format_element(self, g: tf.GroupWord) -> str:
        return str(g)

    def parse_element(self, text: str) -> tf.GroupWord:
        return tf.GroupWord.parse(text)

    def sample_points(self, rng: np.random.Generator, count: int, steps: int = 8) -> List[tf.GroupWord]:
        return [tf.random_word(rng, int(rng.integers(0, steps + 1))) for _ in range(count)]

    sample_elements = sample_points

    def ball(self, radius: int) -> List[tf.GroupWord]:
        return tf.cayley_ball(radius)


class BuildingSpace:
    """SL3(F_q((t))) acting on its A~2 building, with the CAT(0) metric."""

    def __init__(self, q: int = 2, base: Optional[bt.LatticeClass] = None):
        self.q = check_modulus(q)
        self.base = base if base is not None else bt.LatticeClass.standard(q)
        self.name = "building_sl3"

    @property
    def basepoint(self) -> bt.LatticeClass:
        return self.base

    @property
    def identity(self) -> LaurentMatrix:
        return LaurentMatrix.identity(self.q)

    def distance(self, x: bt.Vertex, y: bt.Vertex) -> float:
        return bt.cat0_distance(x, y)

    def act(self, g: LaurentMatrix, x: bt.LatticeClass) -> bt.LatticeClass:
        return bt.canonicalize(g @ x.matrix)

    def compose(self, g: LaurentMatrix, h: LaurentMatrix) -> LaurentMatrix:
        return g @ h

    def inverse(self, g: LaurentMatrix) -> LaurentMatrix:
        return g.inverse()

    def observe(self, g: LaurentMatrix) -> Observation:
        """Displacement of g·o with (a, b) and the germ flag id when regular."""
        decomp = smith_decomposition(bt.transition(self.base, g @ self.base.matrix))
        v = bt.vector_from_exponents(decomp.exponents)
        extras: Dict[str, Any] = {"a": v.a, "b": v.b}
        if v.is_regular:
            extras["flag_id"] = bt.flag_id(bt.germ_from_smith(decomp, self.q))
        return bt.cat0_length(v), extras

    def certify(self, g: LaurentMatrix) -> Optional[bool]:
        return bt.hyperbolic_certificate(g, self.base)

    def format_element(self, g: LaurentMatrix) -> str:
        return bt.format_element(g)

    def parse_element(self, text: str) -> LaurentMatrix:
        return bt.parse_element(text, self.q)

    def elementary_generators(self) -> List[LaurentMatrix]:
        """e_ij(c t^k) for i != j, k = +-1 and every nonzero c up to sign."""
        gens = []
        seen = set()
        for i in range(3):
            for j in range(3):
                if i == j:
                    continue
                for k in (1, -1):
                    for c in range(1, self.q):
                        g = LaurentMatrix.elementary(self.q, i, j, LaurentPoly.monomial(self.q, k, c))
                        if g not in seen:
                            seen.add(g)
                            gens.append(g)
        return gens

    def sample_elements(self, rng: np.random.Generator, count: int, steps: int = 6) -> List[LaurentMatrix]:
        """Words of length <= steps in e_ij(1), e_ij(t), e_ij(t^-1)."""
        gens = []
        for i in range(3):
            for j in range(3):
                if i != j:
                    for k in (0, 1, -1):
                        gens.append(LaurentMatrix.elementary(self.q, i, j, LaurentPoly.monomial(self.q, k)))
        out = []
        for _ in range(count):
            g = self.identity
            for idx in rng.integers(0, len(gens), size=int(rng.integers(0, steps + 1))):
                g = g @ gens[int(idx)]
            out.append(g)
        return out

    def sample_points(self, rng: np.random.Generator, count: int, steps: int = 6) -> List[bt.LatticeClass]:
        return [self.act(g, self.base) for g in self.sample_elements(rng, count, steps)]

    def ball(self, radius: int) -> List[bt.LatticeClass]:
        return bt.ball(self.base, radius)
