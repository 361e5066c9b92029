import math

import networkx as nx
import numpy as np
import pytest

from app.services import building_a2 as bt
from app.services.laurent import LaurentMatrix, LaurentPoly, random_poly

# Test data
Q = 2
O = bt.LatticeClass.standard(Q)


def element(text, q=Q):
    return bt.parse_element(text, q)


def vertex(text, q=Q):
    return bt.LatticeClass.of(element(text, q))


def random_sl3(rng, factors=4, q=Q):
    """Product of elementary matrices with random Laurent entries."""
    g = LaurentMatrix.identity(q)
    for _ in range(factors):
        i, j = (int(c) for c in rng.choice(3, size=2, replace=False))
        g = g @ LaurentMatrix.elementary(q, i, j, random_poly(rng, q, -2, 2))
    return g


def unimodular(rng, factors=4, q=Q):
    """Element of GL3(F_q[t]) built from elementary matrices with polynomial entries."""
    k = LaurentMatrix.identity(q)
    for _ in range(factors):
        i, j = (int(c) for c in rng.choice(3, size=2, replace=False))
        k = k @ LaurentMatrix.elementary(q, i, j, random_poly(rng, q, 0, 3))
    return k


def apartment_vertex(i, j):
    return bt.LatticeClass.of(LaurentMatrix.diag(Q, (i, j, 0)))


# Fixtures
@pytest.fixture
def hyperbolic_element():
    return element("diag(t,1,t^-1)")


@pytest.fixture
def elliptic_element():
    return element("e12(t^-1)")


# Tests
@pytest.mark.parametrize("q,flags", [(2, 21), (3, 52)])
def test_flag_counts(q, flags):
    """Test PG(2, q) has (q^2+q+1)(q+1) flags."""
    assert len(bt.all_flags(q)) == flags


@pytest.mark.parametrize("q,opposite", [(2, 8), (3, 27)])
def test_residue_combinatorics(q, opposite):
    """Test q^3 opposite flags per flag and gallery diameter 3."""
    flags = bt.all_flags(q)
    assert {sum(bt.flags_opposite(f, g) for g in flags) for f in flags} == {opposite}
    assert nx.diameter(bt.flag_graph(q)) == 3
    f = flags[0]
    assert bt.gallery_distance_res(f, f) == 0
    assert {bt.gallery_distance_res(f, g) for g in flags} == {0, 1, 2, 3}


def test_flag_ids_round_trip():
    """Test flag ids index all_flags."""
    for i, f in enumerate(bt.all_flags(Q)):
        assert bt.flag_id(f) == i
        assert bt.flag_from_id(Q, i) == f
    with pytest.raises(ValueError, match="out of range"):
        bt.flag_from_id(Q, 21)


def test_flag_requires_incidence():
    """Test a point off the line is not a flag."""
    with pytest.raises(bt.BuildingError, match="not on line"):
        bt.Flag(Q, (1, 0, 0), (1, 0, 0))


def test_homothetic_lattices_coincide():
    """Test t·L and L are the same vertex."""
    assert vertex("diag(t,t,t)") == O
    assert vertex("diag(t^-2,t^-2,t^-2) * e12(1)") == vertex("e12(1)")


def test_vector_distance():
    """Test vector distances read off the Smith exponents."""
    assert bt.vector_distance(O, vertex("diag(t^2,t,1)")) == bt.VectorDistance(1, 1)
    assert bt.vector_distance(O, vertex("diag(t,1,1)")) == bt.VectorDistance(1, 0)
    assert bt.vector_distance(vertex("diag(t,1,1)"), O) == bt.VectorDistance(0, 1)
    assert bt.cat0_distance(O, vertex("diag(t^2,t,1)")) == pytest.approx(math.sqrt(3))


def test_vector_distance_swaps_under_reversal():
    """Test theta[y, x] is theta[x, y] with the entries swapped."""
    for y in bt.ball(O, 2)[1:]:
        assert bt.vector_distance(y, O) == bt.vector_distance(O, y).swap()


def test_cat0_length_matches_planar_embedding():
    """Test sqrt(a^2 + ab + b^2) equals the apartment embedding length."""
    for a in range(5):
        for b in range(5):
            assert bt.cat0_length(bt.VectorDistance(a, b)) == pytest.approx(bt.apartment_embedding_distance(a, b))


def test_vertex_types():
    """Test types are the determinant valuation mod 3."""
    assert bt.vertex_type(O) == 0
    assert bt.vertex_type(vertex("diag(t,1,1)")) == 1
    assert bt.vertex_type(vertex("diag(t,t,1)")) == 2


def test_neighbors():
    """Test each vertex has 2(q^2+q+1) distinct neighbours at unit vector distance."""
    nbrs = bt.neighbors(O)
    assert len(nbrs) == 2 * (Q * Q + Q + 1)
    assert len(set(nbrs)) == len(nbrs)
    assert {bt.vector_distance(O, v).as_tuple() for v in nbrs} == {(1, 0), (0, 1)}
    assert {bt.vertex_type(v) for v in nbrs} == {1, 2}


def test_germ_of_regular_segment():
    """Test a regular segment has a flag germ."""
    germ = bt.germ_flag(O, vertex("diag(t^2,t,1)"))
    assert germ == bt.Flag(Q, (1, 0, 0), (0, 0, 1))


def test_germ_of_singular_segment():
    """Test a singular segment has a point or line germ."""
    germ = bt.germ_flag(O, vertex("diag(t,1,1)"))
    assert isinstance(germ, bt.PartialSimplex)
    assert germ.point == (1, 0, 0)
    assert germ.line is None


def test_germ_needs_distinct_endpoints():
    """Test the germ of a degenerate segment is undefined."""
    with pytest.raises(bt.BuildingError, match="coincide"):
        bt.germ_flag(O, O)


def test_sector_points_have_requested_vector_and_germ():
    """Test the sector vertex at (a, b) is at vector distance (a, b) with the sector's germ."""
    for f in bt.all_flags(Q):
        sector = bt.SectorGerm(O, f)
        for v in (bt.VectorDistance(1, 1), bt.VectorDistance(2, 1)):
            y = bt.sector_point(sector, v)
            assert bt.vector_distance(O, y) == v
            assert bt.germ_flag(O, y) == f


def test_sector_offset_is_zero_on_its_own_points():
    """Test Sector.offset_to vanishes at the sector's own vertices."""
    y = vertex("diag(t^3,t,1) * e21(t)")
    sector = bt.sector_toward(O, y)
    v = bt.vector_distance(O, y)
    assert sector.point(v) == y
    assert sector.distance_to(v, y) == 0


def test_hyperbolic_certificate(hyperbolic_element, elliptic_element):
    """Test diag(t,1,t^-1) is certified and a unipotent element is not."""
    witness = bt.hyperbolic_witness(hyperbolic_element, O)
    assert witness is not None
    assert bt.flags_opposite(*witness)
    assert not bt.hyperbolic_certificate(elliptic_element, O)


def test_hyperbolic_certificate_requires_sl3():
    """Test elements with nontrivial determinant are rejected."""
    with pytest.raises(bt.BuildingError, match="not in SL3"):
        bt.hyperbolic_certificate(element("diag(t,1,1)"), O)


def test_displacement_profile_is_linear(hyperbolic_element):
    """Test d(g^n o, o) = n·sqrt(3) for g = diag(t,1,t^-1)."""
    profile = bt.displacement_profile(hyperbolic_element, O, 4)
    assert profile == pytest.approx([n * math.sqrt(3) for n in range(1, 5)])


def test_parse_element():
    """Test products of factors parse to SL3 elements and garbage is rejected."""
    g = element("diag(t,1,t^-1) * e12(t^-1)")
    assert g.det() == LaurentPoly.constant(Q, 1)
    assert element("I") == LaurentMatrix.identity(Q)
    assert element("[[1,t,0],[0,1,0],[0,0,1]]") == element("e12(t)")
    with pytest.raises(ValueError):
        element("foo")
    with pytest.raises(ValueError, match="diag needs 3"):
        element("diag(t,1)")


@pytest.mark.parametrize("seed", [0, 1, 2, 3])
def test_vector_distance_is_invariant_under_the_action(seed):
    """Test theta[g x, g y] = theta[x, y] for random g."""
    rng = np.random.default_rng(seed)
    g = random_sl3(rng)
    points = bt.ball(O, 1)[::3] + [vertex("diag(t^2,t,1)"), vertex("diag(t^3,t,1) * e21(t)")]
    moved = [bt.canonicalize(g @ x.matrix) for x in points]
    for i in range(len(points)):
        for j in range(i + 1, len(points)):
            assert bt.vector_distance(moved[i], moved[j]) == bt.vector_distance(points[i], points[j])


@pytest.mark.parametrize("text", [
    "diag(t^2,t,1) * e21(t^-1)",
    "e13(t^-2) * diag(t,1,t^-1)",
    "diag(t^3,1,1) * e32(t^-1) * e12(t^-2)",
])
def test_canonical_form_ignores_the_basis(text):
    """Test canonicalize(M k) = canonicalize(M) for k in GL3(F_q[t]) and is idempotent."""
    m = element(text)
    x = bt.canonicalize(m)
    rng = np.random.default_rng(len(text))
    for _ in range(5):
        assert bt.canonicalize(m @ unimodular(rng)) == x
    assert bt.canonicalize(x.matrix) == x


def test_cat0_triangle_inequality():
    """Test the CAT(0) distance satisfies the triangle inequality on random triples."""
    vertices = bt.ball(O, 2)
    rng = np.random.default_rng(9)
    for _ in range(60):
        x, y, z = (vertices[int(i)] for i in rng.integers(0, len(vertices), size=3))
        assert bt.cat0_distance(x, z) <= bt.cat0_distance(x, y) + bt.cat0_distance(y, z) + 1e-9


def test_cat0_midpoint_inequality_in_an_apartment():
    """Test d(z,m)^2 <= (d(z,x)^2 + d(z,y)^2)/2 - d(x,y)^2/4 for apartment midpoints."""
    coords = [(i, j) for i in range(5) for j in range(5)]
    vertices = {c: apartment_vertex(*c) for c in coords}
    dist = {}
    for c1 in coords:
        for c2 in coords:
            if (c2, c1) in dist:
                dist[(c1, c2)] = dist[(c2, c1)]
            else:
                dist[(c1, c2)] = 0.0 if c1 == c2 else bt.cat0_distance(vertices[c1], vertices[c2])
    for x in coords:
        for y in coords:
            if (x[0] - y[0]) % 2 or (x[1] - y[1]) % 2:
                continue
            m = ((x[0] + y[0]) // 2, (x[1] + y[1]) // 2)
            for z in coords:
                bound = (dist[(z, x)] ** 2 + dist[(z, y)] ** 2) / 2 - dist[(x, y)] ** 2 / 4
                assert dist[(z, m)] ** 2 <= bound + 1e-9


@pytest.mark.parametrize("seed", range(5))
def test_sector_points_round_trip(seed):
    """Test sector points at random (a, b) <= (5, 5) sit at (a, b) with the sector's germ."""
    rng = np.random.default_rng(seed)
    flags = bt.all_flags(Q)
    for _ in range(10):
        f = flags[int(rng.integers(0, len(flags)))]
        a, b = (int(c) for c in rng.integers(0, 6, size=2))
        if a == 0 and b == 0:
            continue
        y = bt.sector_point(bt.SectorGerm(O, f), bt.VectorDistance(a, b))
        assert bt.vector_distance(O, y) == bt.VectorDistance(a, b)
        germ = bt.germ_flag(O, y)
        assert germ.point == (f.point if a > 0 else None)
        assert germ.line == (f.line if b > 0 else None)


@pytest.mark.parametrize("text", ["e12(1)", "e13(t)", "diag(t,1,t^-1)", "e21(t^-1) * e32(1)"])
def test_germs_move_by_the_residue_map(text):
    """Test germ(g x, g y) is the residue map of (g, x) applied to germ(x, y)."""
    g = element(text)
    for x in (O, vertex("diag(t,1,1)")):
        gx = bt.canonicalize(g @ x.matrix)
        r = bt.residue_transition(g, x)
        for f in bt.all_flags(Q)[::4]:
            for v in (bt.VectorDistance(1, 1), bt.VectorDistance(2, 1)):
                y = bt.sector_point(bt.SectorGerm(x, f), v)
                gy = bt.canonicalize(g @ y.matrix)
                assert bt.germ_flag(gx, gy) == bt.germ_flag(x, y).transform(r)


# Run tests
if __name__ == "__main__":
    pytest.main(["-v", "tests/test_building_a2.py"])
