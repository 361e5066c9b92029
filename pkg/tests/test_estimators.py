import math

import numpy as np
import pytest

from app.services import building_a2 as bt
from app.services import estimators as est
from app.services import tree_flats as tf
from app.services.laurent import LaurentMatrix
from app.services.walk_engine import (
    Checkpoint, InsufficientStabilizationError, WalkEngineError, WalkTrace, geometric_schedule, run_walks,
)

# Test data
Q = 2


def synthetic_trace(trial_id, values, ns=None, certified=None, extras=None, positions=None):
    """WalkTrace with given displacements (and optional verdicts, extras, positions) per checkpoint."""
    ns = ns or list(range(1, len(values) + 1))
    checkpoints = {}
    for i, n in enumerate(ns):
        checkpoints[n] = Checkpoint(
            n=n,
            position=positions[i] if positions else None,
            displacement=values[i],
            extras=extras[i] if extras else {},
            certified=certified[i] if certified else None,
        )
    return WalkTrace(seed=0, trial_id=trial_id, checkpoints=checkpoints)


def flag_trace(trial_id, ids):
    return synthetic_trace(trial_id, [0.0] * len(ids), ns=[8, 16, 32, 64][:len(ids)],
                           extras=[{"flag_id": k} if k is not None else {} for k in ids])


def diag(*exps):
    return LaurentMatrix.diag(Q, exps)


# Fixtures
@pytest.fixture
def ballistic_traces(make_config):
    """Deterministic +1 walks on Z: d(Z_n o, o) = n."""
    return run_walks(make_config("line", "plus1", n_steps=16, n_trials=120, seed=9, checkpoints=(4, 8, 16)))


@pytest.fixture
def building_walks(make_config):
    config = make_config("building_sl3", "elementary", n_steps=200, n_trials=10, seed=31,
                         checkpoints=geometric_schedule(200, 25), q=Q)
    return config, run_walks(config, workers=1)


# Tests
def test_drift_of_a_ballistic_walk(ballistic_traces):
    """Test lambda_hat = 1 with a degenerate interval for the +1 walk."""
    report = est.estimate_drift(ballistic_traces)
    assert report.lambda_hat == 1.0
    assert report.ci95 == (1.0, 1.0)
    assert report.excludes_zero
    assert report.per_n_means == [1.0, 1.0, 1.0]
    assert report.drift_vector is None


def test_drift_from_a_single_trial(ballistic_traces):
    """Test a single trial is flagged and has no interval."""
    report = est.estimate_drift(ballistic_traces[:1])
    assert report.flags == ["single_trial_no_ci"]
    assert report.ci95 is None
    assert not report.excludes_zero


def test_drift_requires_traces():
    """Test the drift estimator rejects an empty batch."""
    with pytest.raises(WalkEngineError, match="No traces"):
        est.estimate_drift([])


def test_drift_vector_from_building_extras():
    """Test (lambda_a, lambda_b) averages the recorded vector distances."""
    traces = [
        synthetic_trace(0, [1.0, 2.0], ns=[1, 2], extras=[{"a": 1, "b": 0}, {"a": 2, "b": 2}]),
        synthetic_trace(1, [1.0, 2.0], ns=[1, 2], extras=[{"a": 0, "b": 1}, {"a": 2, "b": 0}]),
    ]
    report = est.estimate_drift(traces)
    assert report.drift_vector == (1.0, 0.5)
    assert report.drift_vector_ci95 is not None


def test_clt_degenerate_for_deterministic_walk(ballistic_traces):
    """Test constant fluctuations are reported as degenerate rather than tested."""
    report = est.clt_harness(ballistic_traces, 1.0)
    assert report.degenerate
    assert report.sigma_hat == 0.0
    assert not report.gaussian_accepted


def test_clt_needs_enough_trials(ballistic_traces):
    """Test fewer than the minimum number of trials is rejected."""
    with pytest.raises(WalkEngineError, match="at least 100 trials"):
        est.clt_harness(ballistic_traces[:50], 1.0)


def test_clt_on_gaussian_and_two_point_samples():
    """Test the fitted-normal KS statistic is small for Gaussian data and rejects a two-point law."""
    rng = np.random.default_rng(12)
    n = 100
    gaussian = [synthetic_trace(i, [n * 0.5 + math.sqrt(n) * z], ns=[n]) for i, z in enumerate(rng.normal(size=400))]
    report = est.clt_harness(gaussian, 0.5, mc_samples=200)
    assert report.ks_statistic < 0.1
    assert report.sigma_hat == pytest.approx(1.0, abs=0.2)

    two_point = [synthetic_trace(i, [n * 0.5 + math.sqrt(n) * s], ns=[n]) for i, s in enumerate(rng.choice([-1.0, 1.0], 400))]
    rejected = est.clt_harness(two_point, 0.5, mc_samples=200)
    assert rejected.ks_p_value < est.KS_ALPHA
    assert not rejected.gaussian_accepted


def test_drift_consistency_and_subadditivity(ballistic_traces, line_space):
    """Test drift agrees across horizons and the displacement is subadditive."""
    assert est.drift_consistency(ballistic_traces, 8, 16)
    assert est.subadditivity_violations(line_space, ballistic_traces[0]) == []


def test_convergence_profile_of_a_ballistic_walk(ballistic_traces, line_space):
    """Test the Gromov-product ratio is exactly 1 for a geodesic walk."""
    report = est.convergence_profile(ballistic_traces, line_space)
    assert report.n_final == 16
    assert report.checkpoints == [4, 8]
    assert report.ratios == [1.0, 1.0]


def test_contracting_proportion():
    """Test fractions per checkpoint, monotonicity and the log-decay slope."""
    verdicts = [
        [False, False, True],
        [False, True, True],
        [True, True, True],
        [False, False, True],
    ]
    traces = [synthetic_trace(i, [0, 0, 0], certified=v) for i, v in enumerate(verdicts)]
    report = est.contracting_proportion(traces, name="test")
    assert report.fractions == [0.25, 0.5, 1.0]
    assert report.nondecreasing
    assert report.vanished
    assert report.log_slope == pytest.approx(math.log(0.5) - math.log(0.75))


def test_contracting_proportion_with_certifier():
    """Test an explicit certifier overrides the recorded verdicts."""
    traces = [synthetic_trace(i, [0, 0], positions=[i, i + 1]) for i in range(4)]
    report = est.contracting_proportion(traces, certifier=lambda g: g >= 2)
    assert report.fractions == [0.5, 0.75]


def test_contracting_proportion_needs_verdicts():
    """Test traces without verdicts and without a certifier are rejected."""
    with pytest.raises(WalkEngineError, match="no certificate"):
        est.contracting_proportion([synthetic_trace(0, [1.0])])


def test_tv_distance():
    """Test total variation of two finitely supported laws."""
    assert est.tv_distance({1: 0.5, 2: 0.5}, {1: 1.0}) == pytest.approx(0.5)
    assert est.tv_distance({3: 1.0}, {3: 1.0}) == 0.0


def test_hitting_measure_from_recorded_flags(building_space):
    """Test stabilized germs are counted and unstable trials left out."""
    traces = [
        flag_trace(0, [3, 5, 5, 5]),
        flag_trace(1, [5, 5, 5, 5]),
        flag_trace(2, [1, 7, 7, 7]),
        flag_trace(3, [1, 2, 4, None]),
    ]
    report = est.hitting_measure(traces, building_space, min_fraction=0.7)
    assert report.frequencies == {5: pytest.approx(2 / 3), 7: pytest.approx(1 / 3)}
    assert report.stabilization_n == [16, 8, 16, None]
    assert report.stabilized_fraction == 0.75
    assert report.tv_residual is None


def test_hitting_measure_insufficient_stabilization(building_space):
    """Test too few stabilized trials raise with the offending trial ids."""
    traces = [flag_trace(0, [3, 5, 5, 5]), flag_trace(1, [5, 2, 5, 1])]
    with pytest.raises(InsufficientStabilizationError) as exc:
        est.hitting_measure(traces, building_space)
    assert exc.value.trial_ids == [1]


def test_hitting_measure_needs_a_window(building_space):
    """Test fewer checkpoints than the window are rejected."""
    with pytest.raises(WalkEngineError, match="at least 3 checkpoints"):
        est.hitting_measure([flag_trace(0, [1, 1])], building_space)


def test_hitting_measure_on_a_walk(building_walks, building_space):
    """Test the hitting law of a real walk is a probability vector with a valid residual."""
    config, traces = building_walks
    report = est.hitting_measure(traces, building_space, min_fraction=0.0, measure=config.measure)
    if report.frequencies:
        assert sum(report.frequencies.values()) == pytest.approx(1.0)
        assert set(report.frequencies) <= set(range(21))
        assert 0.0 <= report.tv_residual <= 1.0
    other = bt.neighbors(building_space.base)[0]
    moved = est.hitting_measure(traces, building_space, start=other, min_fraction=0.0)
    assert moved.start == str(other)


def test_birkhoff_report(building_walks, building_space, make_config):
    """Test cylinder averages form a sub-probability vector over the 21 flags."""
    config, _ = building_walks
    report = est.birkhoff_report(config, [0, 1], building_space.base, 50)
    assert set(report.averages) == set(range(21))
    assert sum(report.averages.values()) <= 1.0 + 1e-12
    assert report.symmetric_measure
    assert report.warnings == []

    asymmetric = make_config("building_sl3", "diagonal", n_steps=10, n_trials=1, seed=1, q=Q)
    assert est.birkhoff_report(asymmetric, [0], building_space.base, 10).warnings == ["asymmetric_measure"]
    with pytest.raises(ValueError, match="at least 1"):
        est.birkhoff_cylinder_average(config, 0, building_space.base, bt.all_flags(Q)[0], 0)


def test_opposite_pair_frequency(building_space):
    """Test opposite germs are found at the basepoint and equal germs are not opposite."""
    forward, backward = diag(1, 0, -1), diag(-1, 0, 1)
    opposite = (synthetic_trace(0, [0.0], positions=[forward]), synthetic_trace(1, [0.0], positions=[backward]))
    same = (synthetic_trace(2, [0.0], positions=[forward]), synthetic_trace(3, [0.0], positions=[forward]))
    assert est.opposite_pair_frequency([opposite], building_space, radius=0).fraction == 1.0
    assert est.opposite_pair_frequency([same], building_space, radius=0).fraction == 0.0
    assert len(est.pair_traces([opposite[0], opposite[1], same[0], same[1], same[0]])) == 2


def test_first_hyperbolic_time(building_space):
    """Test the first certified checkpoint is reported and never-certified trials give None."""
    identity = LaurentMatrix.identity(Q)
    hyperbolic = diag(1, 0, -1)
    found = synthetic_trace(0, [0.0, 0.0], ns=[1, 2], positions=[identity, hyperbolic], certified=[False, True])
    never = synthetic_trace(1, [0.0], ns=[1], positions=[identity], certified=[False])
    assert est.first_hyperbolic_witness(found, building_space, radius=0) == (2, building_space.base)
    report = est.hyperbolic_time_report([found, never], building_space, radius=0)
    assert report.times == [2, None]
    assert report.finite_fraction == 0.5
    assert report.median_time == 2.0


def test_sublinear_tracking_error_on_a_sector_ray(building_space):
    """Test a walk along a sector ray has zero tracking error."""
    ns = [1, 2, 4]
    trace = synthetic_trace(0, [0.0] * 3, ns=ns, positions=[diag(n, 0, -n) for n in ns])
    report = est.sublinear_tracking_error(trace, (1.0, 1.0), building_space)
    assert report.errors == [0.0, 0.0, 0.0]
    assert not report.singular
    assert est.sublinear_tracking_error(trace, (1.0, 0.0), building_space).singular


def test_subadditivity_violation_is_reported(line_space):
    """Test a displacement larger than the triangle inequality allows is flagged."""
    trace = synthetic_trace(0, [5, 100], positions=[5, 6])
    assert est.subadditivity_violations(line_space, trace) == [(1, 2)]


def test_contracting_proportion_grows_with_the_power_bound(make_config):
    """Test allowing larger powers K never lowers the certified fraction."""
    traces = run_walks(make_config("tree_flats", "standard", n_steps=12, n_trials=24, seed=17,
                                   checkpoints=(4, 8, 12)), workers=1)

    def certifier(K):
        return lambda g: not g.is_identity and tf.contraction_certificate(g, 0, K)

    reports = [est.contracting_proportion(traces, certifier=certifier(K)) for K in (2, 3, 4)]
    for smaller, larger in zip(reports, reports[1:]):
        assert all(a <= b for a, b in zip(smaller.fractions, larger.fractions))


def test_opposite_pair_frequency_reads_the_requested_checkpoint(building_space):
    """Test n selects the checkpoint compared and defaults to the final one."""
    forward, backward = diag(1, 0, -1), diag(-1, 0, 1)
    pair = (synthetic_trace(0, [0.0, 0.0], positions=[forward, forward]),
            synthetic_trace(1, [0.0, 0.0], positions=[backward, forward]))
    early = est.opposite_pair_frequency([pair], building_space, n=1, radius=0)
    assert early.n == 1
    assert early.fraction == 1.0
    final = est.opposite_pair_frequency([pair], building_space, radius=0)
    assert final.n == 2
    assert final.fraction == 0.0


# Run tests
if __name__ == "__main__":
    pytest.main(["-v", "tests/test_estimators.py"])
