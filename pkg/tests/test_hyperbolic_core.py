from fractions import Fraction

import numpy as np
import pytest

from app.services import hyperbolic_core as hc
from app.services import tree_flats as tf
from app.services.presets import build_space
from app.services.spaces import GridSpace, LineSpace, regular_tree_ball, star_tree, swap_leaves

# Test data
BACKENDS = ("line", "grid2", "tree_flats", "building_sl3")


# Fixtures
@pytest.fixture
def tree_ball():
    return regular_tree_ball(3, 3)


# Tests
def test_gromov_product_on_the_line():
    """Test (x|y)_o on Z is exact and half-integral."""
    line = LineSpace()
    assert hc.gromov_product(line, 0, 3, 5) == 3
    assert hc.gromov_product(line, 0, 3, -5) == 0
    assert hc.gromov_product(line, 0, 1, 2) == Fraction(1)
    assert isinstance(hc.gromov_product(GridSpace(), (0, 0), (1, 0), (0, 1)), Fraction)


def test_delta_of_a_tree_is_zero(tree_ball):
    """Test the four-point delta of a tree ball is exactly zero."""
    estimate = hc.estimate_delta(tree_ball, list(tree_ball.graph.nodes), exhaustive=True)
    assert estimate.delta == 0
    assert estimate.delta_exact == "0"
    assert estimate.sample_size == len(tree_ball.graph)


def test_delta_of_a_grid_is_positive():
    """Test a 5x5 grid box is not 0-hyperbolic."""
    grid = GridSpace()
    points = [(a, b) for a in range(5) for b in range(5)]
    estimate = hc.estimate_delta(grid, points)
    assert estimate.delta > 0
    assert hc.hyperbolicity_margin(estimate) == hc.DELTA_MARGIN_FACTOR * estimate.delta


def test_delta_needs_four_points():
    """Test fewer than four points are rejected."""
    with pytest.raises(hc.HyperbolicGeometryError, match="at least 4"):
        hc.estimate_delta(LineSpace(), [0, 1, 2])


@pytest.mark.parametrize("backend", BACKENDS)
def test_busemann_cocycle_residual_vanishes(backend):
    """Test the Busemann cocycle identity holds exactly on every backend."""
    space = build_space(backend)
    rng = np.random.default_rng(3)
    o = space.basepoint
    elements = space.sample_elements(rng, 30)
    for g1, g2, h in zip(elements[0::3], elements[1::3], elements[2::3]):
        assert hc.busemann_cocycle_residual(space, g1, g2, space.act(h, o), o) == 0


@pytest.mark.parametrize("backend", BACKENDS)
def test_metric_axioms_on_samples(backend):
    """Test symmetry, identity, triangle inequality and isometric action on samples."""
    space = build_space(backend)
    rng = np.random.default_rng(4)
    points = space.sample_points(rng, 8)
    elements = space.sample_elements(rng, 3)
    assert hc.metric_violations(space, points, elements, tolerance=1e-9) == []


def test_loxodromic_lower_bound():
    """Test a translation of Z is certified loxodromic and the identity is not."""
    line = LineSpace()
    assert hc.loxodromic_lower_bound(line, 2, 0, 0.0) == 2
    assert hc.loxodromic_lower_bound(line, 0, 0, 0.0) is None
    with pytest.raises(ValueError, match="nonnegative"):
        hc.loxodromic_lower_bound(line, 2, 0, -1.0)


def test_stable_translation_length_of_contracting_word():
    """Test A(1,0).B(1) translates the tree of flats by 2 per step."""
    space = build_space("tree_flats")
    report = hc.translation_report(space, tf.GroupWord.parse("A(1,0).B(1)"), tf.IDENTITY, 6)
    assert report.stable_estimate == 2
    assert report.max_deviation == 0
    assert report.lower_bound == 2
    assert len(report.profile) == 6


def test_shadow_membership():
    """Test shadows on the line contain the points beyond the center."""
    line = LineSpace()
    shadow = hc.Shadow(viewpoint=0, center=5, radius=0)
    assert hc.in_shadow(line, shadow, 9)
    assert not hc.in_shadow(line, shadow, 2)
    with pytest.raises(ValueError, match="nonnegative"):
        hc.Shadow(viewpoint=0, center=5, radius=-1)


def test_graph_space_automorphisms():
    """Test swapping two leaves of a star is an isometry and composes to the identity."""
    star = star_tree(3)
    g = swap_leaves(star, 1, 2)
    assert star.act(g, 1) == 2
    assert star.compose(g, g) == star.identity
    assert star.distance(1, 2) == 2
    assert hc.metric_violations(star, list(star.graph.nodes), [g]) == []
    with pytest.raises(ValueError, match="not an automorphism"):
        swap_leaves(star, 0, 1)


def test_geodesic_triples(line_space, tree_space):
    """Test betweenness on the line and along a normal-form word."""
    assert hc.is_geodesic_triple(line_space, 0, 2, 5)
    assert not hc.is_geodesic_triple(line_space, 0, 7, 5)

    e, b, ba = tf.IDENTITY, tf.GroupWord.parse("B(1)"), tf.GroupWord.parse("B(1).A(1,0)")
    assert hc.is_geodesic_triple(tree_space, e, b, ba)
    assert not hc.is_geodesic_triple(tree_space, b, e, ba)


def test_delta_witness_attains_the_defect():
    """Test the recorded witness quadruple realizes the reported delta."""
    grid = GridSpace()
    points = [(a, b) for a in range(5) for b in range(5)]
    estimate = hc.estimate_delta(grid, points)
    o, x, y, z = (points[i] for i in estimate.witness)
    assert hc.four_point_defect(grid, o, x, y, z) == Fraction(estimate.delta_exact)


def test_delta_is_monotone_in_the_point_set():
    """Test delta never decreases along nested grid boxes."""
    grid = GridSpace()
    deltas = []
    for radius in range(2, 7):
        points = [(a, b) for a in range(radius + 1) for b in range(radius + 1)]
        deltas.append(Fraction(hc.estimate_delta(grid, points).delta_exact))
    assert deltas == sorted(deltas)
    assert deltas[-1] > 0


@pytest.mark.parametrize("backend", ("line", "grid2", "tree_flats"))
def test_busemann_cocycle_is_additive(backend):
    """Test beta(g1 g2, x) = beta(g1, g2 x) + beta(g2, x) exactly."""
    space = build_space(backend)
    rng = np.random.default_rng(5)
    o = space.basepoint
    elements = space.sample_elements(rng, 30)
    points = space.sample_points(rng, 10)
    for g1, g2, x in zip(elements[0::3], elements[1::3], points):
        whole = hc.busemann_cocycle(space, space.compose(g1, g2), x, o)
        split = hc.busemann_cocycle(space, g1, space.act(g2, x), o) + hc.busemann_cocycle(space, g2, x, o)
        assert whole == split


@pytest.mark.parametrize("backend", BACKENDS)
def test_busemann_function_is_1_lipschitz(backend):
    """Test |b_x(y) - b_x(y')| <= d(y, y') on samples."""
    space = build_space(backend)
    rng = np.random.default_rng(6)
    o = space.basepoint
    points = space.sample_points(rng, 15)
    for x, y, y2 in zip(points[0::3], points[1::3], points[2::3]):
        gap = hc.busemann_value(space, x, y, o) - hc.busemann_value(space, x, y2, o)
        assert abs(gap) <= space.distance(y, y2) + 1e-9


@pytest.mark.parametrize("backend,element", [
    ("line", 5),
    ("line", -3),
    ("grid2", (1, 1)),
    ("grid2", (2, -1)),
    ("tree_flats", "A(1,0)"),
    ("tree_flats", "B(1)"),
    ("tree_flats", "A(2,1).B(-1)"),
])
def test_lower_bound_does_not_exceed_translation_length(backend, element):
    """Test the Gromov-product bound stays below the stable translation length."""
    space = build_space(backend)
    g = tf.GroupWord.parse(element) if backend == "tree_flats" else element
    o = space.basepoint
    bound = hc.loxodromic_lower_bound(space, g, o, 0.0)
    gp = hc.gromov_product(space, o, space.act(g, o), space.act(space.inverse(g), o))
    report = hc.stable_translation_length(space, g, o, 20)
    assert bound is not None
    assert report.stable_estimate >= bound - 4 * gp / 20


def test_star_inversion_is_not_loxodromic():
    """Test an order-2 leaf swap gets no loxodromic bound."""
    star = star_tree(3)
    g = swap_leaves(star, 1, 2)
    assert hc.loxodromic_lower_bound(star, g, star.basepoint, 0.0) is None
    assert hc.stable_translation_length(star, g, star.basepoint, 20).stable_estimate == pytest.approx(0.0)


# Run tests
if __name__ == "__main__":
    pytest.main(["-v", "tests/test_hyperbolic_core.py"])
