from fractions import Fraction

import numpy as np
import pytest

from app.services import hyperbolic_core as hc
from app.services import tree_flats as tf
from app.services.presets import build_space
from app.services.tree_flats import A, B, GroupWord, Wall, WallFamily

# Test data
HALF = Fraction(1, 2)
E = tf.IDENTITY


def w(text):
    return GroupWord.parse(text)


# Fixtures
@pytest.fixture
def sample_pairs():
    """Random pairs of words at distance up to 7."""
    rng = np.random.default_rng(11)
    pairs = []
    for _ in range(30):
        x = tf.random_word(rng, int(rng.integers(0, 5)))
        y = x * tf.random_word(rng, int(rng.integers(0, 8)))
        pairs.append((x, y))
    return pairs


# Tests
def test_normal_form_merges_and_cancels():
    """Test adjacent syllables of one factor merge and zero syllables vanish."""
    assert GroupWord.of(A(1, 0), A(0, 1)) == GroupWord.of(A(1, 1))
    assert GroupWord.of(A(1, 0), A(-1, 0)).is_identity
    assert GroupWord.of(B(2), A(0, 0), B(-1)) == GroupWord.of(B(1))
    g = w("A(1,2).B(-3).A(0,1)")
    assert (g * g.inverse()).is_identity
    assert g.length == 7


def test_parse_and_format():
    """Test words print in the same syntax they are parsed from."""
    assert str(w("A(1,0).B(2)")) == "A(1,0).B(2)"
    assert str(w("e")) == "e"
    assert w("B(1).B(-1)").is_identity


@pytest.mark.parametrize("text,message", [
    ("C(1)", "Cannot parse syllable"),
    ("A(1)", "two coordinates"),
    ("B(1,2)", "one coordinate"),
])
def test_parse_errors(text, message):
    """Test malformed words raise ValueError."""
    with pytest.raises(ValueError, match=message):
        w(text)


def test_word_distance():
    """Test the word metric counts generator steps."""
    assert tf.word_distance(E, w("A(2,-1).B(1)")) == 4
    assert tf.word_distance(w("B(1)"), w("B(1).A(1,0)")) == 1


def test_wall_validation():
    """Test walls need half-integer offsets and minimal anchors."""
    with pytest.raises(tf.TreeFlatsError, match="half-integer"):
        Wall(E, WallFamily.B, Fraction(1))
    with pytest.raises(tf.TreeFlatsError, match="minimal anchor"):
        Wall(w("A(1,0)"), WallFamily.A_HORIZONTAL, HALF)


def test_separating_walls_count_word_distance(sample_pairs):
    """Test the walls separating x and y number exactly d(x, y)."""
    for x, y in sample_pairs:
        assert len(tf.walls_separating(x, y)) == tf.word_distance(x, y)


def test_separating_walls_match_gallery_oracle(sample_pairs):
    """Test normal-form walls equal the walls on all geodesic edge paths."""
    for x, y in sample_pairs[:10]:
        assert tf.walls_separating(x, y) == tf.gallery_walls_oracle(x, y)


def test_separating_walls_change_side(sample_pairs):
    """Test x and y lie on opposite sides of every separating wall."""
    for x, y in sample_pairs:
        for wall in tf.walls_separating(x, y):
            assert tf.side(wall, x) != tf.side(wall, y)


def test_transversality():
    """Test perpendicular walls of one flat cross and others do not."""
    h = Wall(E, WallFamily.A_HORIZONTAL, HALF)
    v = Wall(E, WallFamily.A_VERTICAL, HALF)
    line = Wall(E, WallFamily.B, HALF)
    assert tf.are_transverse(h, v)
    assert not tf.are_transverse(h, line)
    with pytest.raises(tf.TreeFlatsError, match="undefined"):
        tf.are_transverse(h, h)


def test_transversality_matches_quadrant_oracle():
    """Test all four halfspace intersections appear exactly for transverse walls."""
    ball = tf.cayley_ball(3)
    h = Wall(E, WallFamily.A_HORIZONTAL, HALF)
    v = Wall(E, WallFamily.A_VERTICAL, -HALF)
    line = Wall(E, WallFamily.B, HALF)
    assert tf.quadrant_oracle(h, v, ball)
    assert not tf.quadrant_oracle(h, line, ball)


def test_translate_wall_commutes_with_edges():
    """Test g·wall_of_edge(u, s) = wall_of_edge(g·u, s)."""
    g = w("A(1,0).B(1)")
    for u in tf.cayley_ball(2):
        for s in tf.GENERATORS:
            assert tf.translate_wall(g, tf.wall_of_edge(u, s)) == tf.wall_of_edge(g * u, s)


def test_chain_metric_small_cases():
    """Test d_L on the diagonal, on edges and inside one flat."""
    assert tf.chain_metric_dL(E, E) == 0
    assert tf.chain_metric_dL(E, w("B(1)")) == 1
    # parallel walls of one flat are never L-separated
    assert tf.chain_metric_dL(E, w("A(3,0)")) == 2


def test_chain_metric_through_lines():
    """Test B-walls on different lines form chains and touching walls do not."""
    assert tf.chain_metric_dL(E, w("B(1).A(1,0).B(1)")) == 3
    y = w("B(1).A(2,0).B(1)")
    assert tf.word_distance(E, y) == 4
    assert tf.chain_metric_dL(E, y) == 3
    assert len(tf.longest_l_chain(E, y)) == 2


def test_chain_metric_matches_bruteforce(sample_pairs):
    """Test the DAG longest path equals the subset brute force."""
    for x, y in sample_pairs:
        d = tf.word_distance(x, y)
        expected = d if d <= 1 else 1 + tf.chain_bruteforce(x, y, 0)
        assert tf.chain_metric_dL(x, y, 0) == expected


def test_l_separation_rejects_negative_l():
    """Test L must be nonnegative."""
    a = Wall(E, WallFamily.B, HALF)
    b = Wall(E, WallFamily.B, Fraction(5, 2))
    with pytest.raises(ValueError, match="nonnegative"):
        tf.is_l_separated(a, b, -1)


def test_contraction_certificates():
    """Test B-powers and mixed words are certified while flat elements are not."""
    witness = tf.find_contraction_witness(w("B(1)"))
    assert witness is not None
    assert witness.power == 2
    assert tf.contraction_certificate(w("A(1,0).B(1)"))
    assert not tf.contraction_certificate(w("A(1,0)"))
    assert not tf.contraction_certificate(w("A(2,-1)"), K=3)


def test_contraction_certificate_errors():
    """Test the identity and bad power bounds are rejected."""
    with pytest.raises(tf.TreeFlatsError, match="identity"):
        tf.find_contraction_witness(E)
    with pytest.raises(ValueError, match="at least 2"):
        tf.find_contraction_witness(w("B(1)"), K=1)


def test_cayley_ball_sizes():
    """Test the ball of radius 1 holds the identity and the six generators."""
    assert len(tf.cayley_ball(1)) == 7
    assert tf.cayley_ball(2)[0] == E
    assert tf.cayley_bfs_distance(E, w("A(1,1).B(1)"), 3) == 3
    assert tf.cayley_bfs_distance(E, w("A(2,2)"), 3) is None


def test_chain_metric_triangle_inequality():
    """Test d_L(x, z) <= d_L(x, y) + d_L(y, z) on random triples."""
    rng = np.random.default_rng(12)
    for L in (0, 1):
        for _ in range(25):
            x, y, z = (tf.random_word(rng, int(rng.integers(0, 9))) for _ in range(3))
            assert tf.chain_metric_dL(x, z, L) <= tf.chain_metric_dL(x, y, L) + tf.chain_metric_dL(y, z, L)


def test_chain_metric_is_invariant_under_translation(sample_pairs):
    """Test d_L(hx, hy) = d_L(x, y) for left translations h."""
    rng = np.random.default_rng(13)
    for x, y in sample_pairs:
        h = tf.random_word(rng, int(rng.integers(1, 7)))
        assert tf.chain_metric_dL(h * x, h * y) == tf.chain_metric_dL(x, y)
        assert tf.word_distance(h * x, h * y) == tf.word_distance(x, y)


@pytest.mark.parametrize("L", [0, 1, 2])
def test_flats_have_bounded_chain_diameter(L):
    """Test any two vertices of a 7x7 patch of one flat are within d_L 2."""
    patch = [GroupWord.of(A(i, j)) for i in range(7) for j in range(7)]
    for x in patch[::3]:
        for y in patch:
            assert tf.chain_metric_dL(x, y, L) <= 2


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_chain_metric_grows_along_a_line(k):
    """Test d_0(e, B(2k)) >= k + 1."""
    assert tf.chain_metric_dL(E, GroupWord.of(B(2 * k))) >= k + 1


@pytest.mark.parametrize("L", [0, 1, 2])
def test_parallel_walls_of_a_flat_are_not_separated(L):
    """Test parallel walls of one flat share an unbounded transverse chain."""
    a = Wall(E, WallFamily.A_HORIZONTAL, HALF)
    b = Wall(E, WallFamily.A_HORIZONTAL, Fraction(3, 2))
    assert not tf.is_l_separated(a, b, L)
    assert not tf.is_l_separated(a, b, L, search_radius=3)


def test_walls_of_different_flats_are_separated():
    """Test walls of the flats at e and at B(1) have no common transversal."""
    a = tf.wall_of_edge(E, w("A(1,0)"))
    b = tf.wall_of_edge(w("B(1)"), w("A(1,0)"))
    assert a.prefix != b.prefix
    assert tf.is_l_separated(a, b, 0)
    assert tf.is_l_separated(a, b, 0, search_radius=6)
    assert tf.transversal_chain_oracle(a, b, 6) == 0


@pytest.mark.parametrize("text", ["B(1)", "A(1,0).B(1)"])
def test_certified_elements_translate_the_chain_metric(text):
    """Test a contraction certificate implies positive stable d_L translation."""
    g = w(text)
    assert tf.contraction_certificate(g)
    space = build_space("tree_flats", metric="dl")
    report = hc.stable_translation_length(space, g, E, 12)
    assert report.stable_estimate > 0


# Run tests
if __name__ == "__main__":
    pytest.main(["-v", "tests/test_tree_flats.py"])
