"""
Estimators and statistical tests over batches of walk traces.

Every estimator is a deterministic reduction over traces in trial order, so
reports do not depend on how the trials were scheduled.
"""
import logging
import math
from collections import Counter
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import stats

from app.schemas.walk import (
    BirkhoffReport, CltReport, ConvergenceReport, DriftReport, HittingReport,
    HyperbolicTimeReport, OppositeReport, ProportionReport, TrackingReport, TrackingSummary,
)
from app.services import building_a2 as bt
from app.services.walk_engine import (
    InsufficientStabilizationError, StepMeasure, WalkConfig, WalkEngineError, WalkTrace, replay_inverse,
)

logger = logging.getLogger(__name__)

Z_95 = 1.959963984540054
KS_ALPHA = 0.01
LILLIEFORS_MC_SAMPLES = 2000
CLT_MIN_TRIALS = 100
STABILIZATION_WINDOW = 3
STABILIZATION_FRACTION = 0.95
OPPOSITE_SEARCH_RADIUS = 2
HYPERBOLIC_SEARCH_RADIUS = 2
SINGULAR_DRIFT_TOL = 1e-3
SUBADDITIVITY_TOL = 1e-9
DRIFT_CONSISTENCY_SE = 3.0


def constants() -> Dict[str, Any]:
    """Numerical defaults echoed into run manifests."""
    return {
        "ks_alpha": KS_ALPHA,
        "lilliefors_mc_samples": LILLIEFORS_MC_SAMPLES,
        "clt_min_trials": CLT_MIN_TRIALS,
        "stabilization_window": STABILIZATION_WINDOW,
        "stabilization_fraction": STABILIZATION_FRACTION,
        "opposite_search_radius": OPPOSITE_SEARCH_RADIUS,
        "hyperbolic_search_radius": HYPERBOLIC_SEARCH_RADIUS,
        "singular_drift_tol": SINGULAR_DRIFT_TOL,
        "drift_consistency_se": DRIFT_CONSISTENCY_SE,
    }


# Helpers

def _require(traces: Sequence[WalkTrace]) -> None:
    if not traces:
        raise WalkEngineError("No traces to estimate from")


def _horizon(traces: Sequence[WalkTrace], n: Optional[int]) -> int:
    if n is None:
        n = min(t.final.n for t in traces)
    for t in traces:
        t.at(n)
    return n


def common_checkpoints(traces: Sequence[WalkTrace]) -> List[int]:
    ns = set(traces[0].checkpoints)
    for t in traces[1:]:
        ns &= set(t.checkpoints)
    return sorted(ns)


def _mean_se(values: Sequence[float]) -> Tuple[float, Optional[float]]:
    arr = np.asarray(values, dtype=np.float64)
    mean = float(arr.mean())
    if len(arr) < 2:
        return mean, None
    return mean, float(arr.std(ddof=1) / math.sqrt(len(arr)))


def _ci(mean: float, se: Optional[float]) -> Optional[Tuple[float, float]]:
    if se is None:
        return None
    return (mean - Z_95 * se, mean + Z_95 * se)


def _rates(traces: Sequence[WalkTrace], n: int) -> List[float]:
    return [float(t.at(n).displacement) / n for t in traces]


def tv_distance(p: Dict[int, float], q: Dict[int, float]) -> float:
    """Total variation distance between two finitely supported measures."""
    keys = set(p) | set(q)
    return 0.5 * math.fsum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)


def _start_matrix(start: Union[bt.LatticeClass, None], o: bt.LatticeClass):
    return (start if start is not None else o).matrix


def _germ_id(o: bt.LatticeClass, y) -> Optional[int]:
    try:
        g = bt.germ_flag(o, y)
    except bt.BuildingError:
        return None
    return bt.flag_id(g) if isinstance(g, bt.Flag) else None


# Drift and fluctuations

def estimate_drift(traces: Sequence[WalkTrace], n: Optional[int] = None) -> DriftReport:
    """Mean of d(Z_n o, o)/n at the horizon, with a normal 95% interval.

    Raises:
        WalkEngineError: If there are no traces or the horizon is missing
    """
    _require(traces)
    n = _horizon(traces, n)
    flags: List[str] = []
    lam, se = _mean_se(_rates(traces, n))
    if se is None:
        flags.append("single_trial_no_ci")
        logger.warning("Drift estimated from a single trial; no confidence interval")
    checkpoints = common_checkpoints(traces)
    per_n = [max(0.0, _mean_se(_rates(traces, m))[0]) for m in checkpoints]

    drift_vector = None
    drift_vector_ci = None
    if all("a" in t.at(n).extras for t in traces):
        la, sa = _mean_se([t.at(n).extras["a"] / n for t in traces])
        lb, sb = _mean_se([t.at(n).extras["b"] / n for t in traces])
        drift_vector = (la, lb)
        if sa is not None:
            drift_vector_ci = [_ci(la, sa), _ci(lb, sb)]

    return DriftReport(
        n=n, trials=len(traces), lambda_hat=max(lam, 0.0), standard_error=se,
        ci95=_ci(max(lam, 0.0), se), checkpoints=checkpoints, per_n_means=per_n,
        drift_vector=drift_vector, drift_vector_ci95=drift_vector_ci, flags=flags,
    )


def clt_harness(traces: Sequence[WalkTrace], lambda_hat: float, n: Optional[int] = None,
                alpha: float = KS_ALPHA, mc_samples: int = LILLIEFORS_MC_SAMPLES,
                random_state: int = 0, min_trials: int = CLT_MIN_TRIALS) -> CltReport:
    """KS test of (d(Z_n o, o) - n lambda)/sqrt(n) against a centred normal with fitted scale.

    The scale is fitted from the same samples, so the null distribution of
    the statistic is simulated (Lilliefors) rather than read off the KS table.

    Raises:
        WalkEngineError: If fewer than min_trials traces are given
    """
    _require(traces)
    if len(traces) < min_trials:
        raise WalkEngineError(f"CLT harness needs at least {min_trials} trials, got {len(traces)}")
    n = _horizon(traces, n)
    root = math.sqrt(n)
    samples = [(float(t.at(n).displacement) - n * lambda_hat) / root for t in traces]
    sigma = float(np.std(samples, ddof=1)) if len(samples) > 1 else 0.0
    if len(set(samples)) == 1:
        logger.warning("CLT samples are all equal; reporting degeneracy")
        return CltReport(n=n, trials=len(traces), samples=samples, sigma_hat=0.0,
                         degenerate=True, alpha=alpha)
    result = stats.goodness_of_fit(
        stats.norm, np.asarray(samples), known_params={"loc": 0.0},
        statistic="ks", n_mc_samples=mc_samples, random_state=random_state,
    )
    return CltReport(
        n=n, trials=len(traces), samples=samples, sigma_hat=sigma,
        ks_statistic=float(result.statistic), ks_p_value=float(result.pvalue), alpha=alpha,
    )


def drift_consistency(traces: Sequence[WalkTrace], n1: int, n2: int,
                      tolerance: float = DRIFT_CONSISTENCY_SE) -> bool:
    """|lambda(n1) - lambda(n2)| within tolerance pooled standard errors."""
    _require(traces)
    m1, s1 = _mean_se(_rates(traces, n1))
    m2, s2 = _mean_se(_rates(traces, n2))
    pooled = math.sqrt((s1 or 0.0) ** 2 + (s2 or 0.0) ** 2)
    return abs(m1 - m2) <= tolerance * pooled + 1e-12


def subadditivity_violations(space: Any, trace: WalkTrace,
                             tolerance: float = SUBADDITIVITY_TOL) -> List[Tuple[int, int]]:
    """Checkpoint pairs (n, n') breaking d(Z_n' o, o) <= d(Z_n o, o) + d(Z_n^-1 Z_n' o, o)."""
    out = []
    ns = trace.ns
    for i, n in enumerate(ns):
        cn = trace.checkpoints[n]
        inv = space.inverse(cn.position)
        for m in ns[i + 1:]:
            cm = trace.checkpoints[m]
            step, _ = space.observe(space.compose(inv, cm.position))
            if float(cm.displacement) > float(cn.displacement) + float(step) + tolerance:
                out.append((n, m))
    return out


def convergence_profile(traces: Sequence[WalkTrace], space: Any) -> ConvergenceReport:
    """Mean ratio (Z_n o | Z_N o)_o / d(o, Z_n o); tends to 1 as the walk converges."""
    _require(traces)
    n_final = min(t.final.n for t in traces)
    sums: Dict[int, List[float]] = {}
    for t in traces:
        final = t.at(n_final)
        d_final = float(final.displacement)
        for n in t.ns:
            if n >= n_final:
                continue
            cp = t.checkpoints[n]
            dn = float(cp.displacement)
            if dn == 0:
                continue
            between, _ = space.observe(space.compose(space.inverse(cp.position), final.position))
            sums.setdefault(n, []).append((dn + d_final - float(between)) / (2 * dn))
    checkpoints = sorted(sums)
    return ConvergenceReport(n_final=n_final, checkpoints=checkpoints,
                             ratios=[math.fsum(sums[n]) / len(sums[n]) for n in checkpoints])


# Certificates

def contracting_proportion(traces: Sequence[WalkTrace],
                           certifier: Optional[Callable[[Any], bool]] = None,
                           checkpoints: Optional[Sequence[int]] = None,
                           name: str = "checkpoint") -> ProportionReport:
    """Fraction of trials whose Z_n is certified, per checkpoint.

    Without a certifier the verdicts recorded at the checkpoints are used.

    Raises:
        WalkEngineError: If no certifier is given and traces carry no verdicts
    """
    _require(traces)
    ns = list(checkpoints) if checkpoints is not None else common_checkpoints(traces)
    fractions = []
    for n in ns:
        hits = 0
        for t in traces:
            cp = t.at(n)
            if certifier is not None:
                verdict = certifier(cp.position)
            else:
                verdict = cp.certified
                if verdict is None:
                    raise WalkEngineError(f"Trial {t.trial_id} has no certificate at n={n}")
            hits += bool(verdict)
        fractions.append(hits / len(traces))

    nondecreasing = all(b >= a for a, b in zip(fractions, fractions[1:]))
    fit = [(n, math.log(1.0 - f)) for n, f in zip(ns, fractions) if f < 1.0]
    slope = None
    if len(fit) >= 2:
        xs, ys = zip(*fit)
        slope = float(np.polyfit(np.asarray(xs, dtype=np.float64), np.asarray(ys), 1)[0])
    return ProportionReport(
        certifier=name, trials=len(traces), checkpoints=ns, fractions=fractions,
        log_slope=slope, nondecreasing=nondecreasing,
        vanished=bool(fractions) and fractions[-1] == 1.0,
    )


def first_hyperbolic_witness(trace: WalkTrace, space: Any,
                             radius: int = HYPERBOLIC_SEARCH_RADIUS) -> Optional[Tuple[int, bt.LatticeClass]]:
    """(n, v) for the least checkpoint n with Z_n certified at a vertex v near the basepoint.

    Vertices are scanned in BFS order, basepoint first.
    """
    vertices = bt.ball(space.base, radius)
    for n in trace.ns:
        cp = trace.checkpoints[n]
        if cp.certified:
            return n, space.base
        for v in vertices:
            if bt.hyperbolic_certificate(cp.position, v):
                return n, v
    return None


def first_hyperbolic_time(trace: WalkTrace, space: Any,
                          radius: int = HYPERBOLIC_SEARCH_RADIUS) -> Optional[int]:
    """Least checkpoint n with Z_n certified hyperbolic at some vertex near the basepoint."""
    found = first_hyperbolic_witness(trace, space, radius)
    return found[0] if found is not None else None


def hyperbolic_time_report(traces: Sequence[WalkTrace], space: Any,
                           radius: int = HYPERBOLIC_SEARCH_RADIUS) -> HyperbolicTimeReport:
    _require(traces)
    times = [first_hyperbolic_time(t, space, radius) for t in traces]
    finite = [x for x in times if x is not None]
    return HyperbolicTimeReport(
        trials=len(traces), search_radius=radius, times=times,
        finite_fraction=len(finite) / len(traces),
        median_time=float(np.median(finite)) if finite else None,
    )


# Boundary behaviour on the building

def hitting_measure(traces: Sequence[WalkTrace], space: Any,
                    o: Optional[bt.LatticeClass] = None,
                    start: Optional[bt.LatticeClass] = None,
                    window: int = STABILIZATION_WINDOW,
                    min_fraction: float = STABILIZATION_FRACTION,
                    measure: Optional[StepMeasure] = None) -> HittingReport:
    """Empirical law of the eventually constant germ at o of Z_n·start.

    With a step measure, tv_residual compares the law with its push-forward
    by one more left step, computed by re-germing s·Z_N·start for each s in
    the support.

    Raises:
        WalkEngineError: If there are fewer checkpoints than the window
        InsufficientStabilizationError: If too few trials stabilized
    """
    _require(traces)
    o = o if o is not None else space.base
    start_m = _start_matrix(start, o)
    fast = o == space.base and (start is None or start == space.base)
    ns = common_checkpoints(traces)
    if len(ns) < window:
        raise WalkEngineError(f"Need at least {window} checkpoints, got {len(ns)}")

    finals: Dict[int, int] = {}
    stabilization: List[Optional[int]] = []
    unstable: List[int] = []
    for t in traces:
        if fast:
            ids = [t.checkpoints[n].extras.get("flag_id") for n in ns]
        else:
            ids = [_germ_id(o, t.checkpoints[n].position @ start_m) for n in ns]
        last = ids[-1]
        first = None
        if last is not None:
            first = len(ids) - 1
            while first > 0 and ids[first - 1] == last:
                first -= 1
        if last is not None and len(ids) - first >= window:
            finals[t.trial_id] = last
            stabilization.append(ns[first])
        else:
            unstable.append(t.trial_id)
            stabilization.append(None)

    fraction = len(finals) / len(traces)
    if fraction < min_fraction:
        raise InsufficientStabilizationError(
            f"Only {fraction:.1%} of trials stabilized over the last {window} checkpoints "
            f"(need {min_fraction:.0%}); unstable trials: {unstable}", unstable,
        )
    if unstable:
        logger.warning("%d trials did not stabilize and were left out", len(unstable))

    counts = Counter(finals.values())
    total = len(finals)
    frequencies = {k: counts[k] / total for k in sorted(counts)}

    residual = None
    if measure is not None:
        pushed: Dict[int, float] = {}
        mass = 0.0
        by_id = {t.trial_id: t for t in traces}
        for trial_id in finals:
            z = by_id[trial_id].final.position
            for s, w in zip(measure.support, measure.weights):
                k = _germ_id(o, s @ z @ start_m)
                if k is not None:
                    pushed[k] = pushed.get(k, 0.0) + float(w)
                    mass += float(w)
        if mass > 0:
            residual = tv_distance({k: v / mass for k, v in pushed.items()}, frequencies)

    return HittingReport(
        basepoint=str(o), start=str(start if start is not None else o), n=ns[-1],
        trials=len(traces), window=window, frequencies=frequencies,
        stabilization_n=stabilization, stabilized_fraction=fraction, tv_residual=residual,
    )


def cylinder_visit_counts(config: WalkConfig, trial_id: int, o: bt.LatticeClass, n: int) -> Counter:
    """Counts of k <= n with Z_k^-1 o in the cylinder of each flag at o."""
    counts: Counter = Counter()
    for _, z_inv in replay_inverse(config, trial_id, n):
        k = _germ_id(o, z_inv @ o.matrix)
        if k is not None:
            counts[k] += 1
    return counts


def birkhoff_cylinder_average(config: WalkConfig, trial_id: int, o: bt.LatticeClass,
                              flag: bt.Flag, n: int) -> float:
    """(1/n)·#{k <= n : germ at o of Z_k^-1 o is flag}."""
    if n < 1:
        raise ValueError("n must be at least 1")
    if not config.measure.symmetric:
        logger.warning("Birkhoff cylinder averages assume a symmetric step measure")
    return cylinder_visit_counts(config, trial_id, o, n)[bt.flag_id(flag)] / n


def birkhoff_report(config: WalkConfig, trial_ids: Sequence[int], o: bt.LatticeClass, n: int) -> BirkhoffReport:
    """Per-flag Birkhoff averages, averaged over trials."""
    if not trial_ids:
        raise WalkEngineError("No trials for Birkhoff averages")
    warnings = []
    if not config.measure.symmetric:
        warnings.append("asymmetric_measure")
        logger.warning("Birkhoff cylinder averages assume a symmetric step measure")
    totals: Counter = Counter()
    for trial_id in trial_ids:
        totals.update(cylinder_visit_counts(config, trial_id, o, n))
    averages = {k: totals[k] / (n * len(trial_ids)) for k in range(len(bt.all_flags(o.q)))}
    return BirkhoffReport(n=n, trials=len(trial_ids), averages=averages,
                          symmetric_measure=config.measure.symmetric, warnings=warnings)


def pair_traces(traces: Sequence[WalkTrace]) -> List[Tuple[WalkTrace, WalkTrace]]:
    """Consecutive disjoint pairs (0, 1), (2, 3), ..."""
    return [(traces[i], traces[i + 1]) for i in range(0, len(traces) - 1, 2)]


def _opposite_somewhere(y1, y2, vertices: Sequence[bt.LatticeClass]) -> bool:
    for v in vertices:
        try:
            g1 = bt.germ_flag(v, y1)
            g2 = bt.germ_flag(v, y2)
        except bt.BuildingError:
            continue
        if isinstance(g1, bt.Flag) and isinstance(g2, bt.Flag) and bt.flags_opposite(g1, g2):
            return True
    return False


def opposite_pair_frequency(pairs: Sequence[Tuple[WalkTrace, WalkTrace]], space: Any,
                            n: Optional[int] = None,
                            radius: int = OPPOSITE_SEARCH_RADIUS) -> OppositeReport:
    """Fraction of pairs whose germs toward Z_n o and Z'_n o are opposite at some vertex within radius.

    n is the horizon checkpoint (the final one by default), read directly from the
    traces; it is not a stabilization time and no germ stabilization is required.
    """
    if not pairs:
        raise WalkEngineError("No trace pairs given")
    flat = [t for pair in pairs for t in pair]
    n = _horizon(flat, n)
    vertices = bt.ball(space.base, radius)
    o = space.base.matrix
    hits = sum(
        _opposite_somewhere(a.at(n).position @ o, b.at(n).position @ o, vertices)
        for a, b in pairs
    )
    return OppositeReport(n=n, pairs=len(pairs), fraction=hits / len(pairs), search_radius=radius)


def sublinear_tracking_error(trace: WalkTrace, drift_vector: Tuple[float, float], space: Any,
                             sector: Union[bt.Sector, bt.SectorGerm, None] = None) -> TrackingReport:
    """e_n = d(Z_n o, gamma(n))/n with gamma(n) the sector vertex at (floor(la n), floor(lb n)).

    The sector defaults to one based at o containing Z_N o for the final N.
    """
    o = space.base
    if sector is None:
        sector = bt.sector_toward(o, trace.final.position @ o.matrix)
    elif isinstance(sector, bt.SectorGerm):
        sector = bt.Sector.from_germ(sector)
    la, lb = drift_vector
    singular = min(la, lb) < SINGULAR_DRIFT_TOL
    if singular:
        logger.warning("Drift vector (%.4f, %.4f) is singular; tracking is not asserted", la, lb)
    errors = []
    for n in trace.ns:
        v = bt.VectorDistance(int(math.floor(la * n)), int(math.floor(lb * n)))
        errors.append(sector.distance_to(v, trace.checkpoints[n].position @ o.matrix) / n)
    return TrackingReport(trial_id=trace.trial_id, checkpoints=trace.ns, errors=errors,
                          drift_vector=(la, lb), singular=singular)


def tracking_summary(traces: Sequence[WalkTrace], drift_vector: Tuple[float, float], space: Any) -> TrackingSummary:
    _require(traces)
    reports = [sublinear_tracking_error(t, drift_vector, space) for t in traces]
    checkpoints = common_checkpoints(traces)
    medians = []
    for n in checkpoints:
        medians.append(float(np.median([r.errors[r.checkpoints.index(n)] for r in reports])))
    return TrackingSummary(checkpoints=checkpoints, median_errors=medians, trials=len(traces),
                           singular=reports[0].singular)
