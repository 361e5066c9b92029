"""
Seeded Monte-Carlo random walks Z_n = w_1 w_2 ... w_n over any backend.

Increments come from a Philox counter-based generator keyed by
(seed, trial_id); the k-th uniform drives step k, so every trial can be
replayed on its own and results do not depend on the worker count.
"""
import csv
import io
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from functools import partial
from typing import Any, Dict, Iterator, List, Optional, Sequence, TextIO, Tuple

import numpy as np

from app.core.config import settings

logger = logging.getLogger(__name__)

CSV_COLUMNS = ("trial_id", "n", "displacement", "a", "b", "flag_id", "certified")
MAX_SEED = 1 << 64


class WalkEngineError(Exception):
    """Custom exception for random-walk errors"""
    pass


class InsufficientStabilizationError(WalkEngineError):
    """Raised when too few trials have a stabilized germ."""

    def __init__(self, message: str, trial_ids: Sequence[int]):
        super().__init__(message)
        self.trial_ids = list(trial_ids)


@dataclass(frozen=True)
class StepMeasure:
    """Finitely supported probability measure on the acting group."""
    support: Tuple[Any, ...]
    weights: Tuple[Fraction, ...]
    symmetric: bool = False
    labels: Tuple[str, ...] = ()

    def __post_init__(self):
        if not self.support:
            raise WalkEngineError("Step measure has empty support")
        if len(self.weights) != len(self.support):
            raise WalkEngineError("Step measure needs one weight per support element")
        if any(w <= 0 for w in self.weights):
            raise WalkEngineError("Step measure weights must be positive")
        if sum(self.weights) != 1:
            raise WalkEngineError(f"Step measure weights sum to {sum(self.weights)}, not 1")

    @classmethod
    def uniform(cls, support: Sequence[Any], space: Any = None,
                labels: Optional[Sequence[str]] = None) -> 'StepMeasure':
        """Uniform measure; symmetry is checked against space when given."""
        support = tuple(support)
        if not support:
            raise WalkEngineError("Step measure has empty support")
        weights = tuple(Fraction(1, len(support)) for _ in support)
        labels = tuple(labels) if labels is not None else ()
        measure = cls(support, weights, False, labels)
        if space is not None and measure.is_symmetric(space):
            measure = cls(support, weights, True, labels)
        return measure

    def is_symmetric(self, space: Any) -> bool:
        """Support closed under inverses with matching weights."""
        weight_of = {}
        for g, w in zip(self.support, self.weights):
            weight_of[g] = weight_of.get(g, 0) + w
        return all(weight_of.get(space.inverse(g)) == w for g, w in weight_of.items())

    def cumulative(self) -> np.ndarray:
        cum = np.cumsum([float(w) for w in self.weights])
        cum[-1] = 1.0
        return cum

    def sample_indices(self, rng: np.random.Generator, n: int) -> np.ndarray:
        cum = self.cumulative()
        idx = np.searchsorted(cum, rng.random(n), side="right")
        return np.minimum(idx, len(cum) - 1)


@dataclass
class Checkpoint:
    n: int
    position: Any
    displacement: Any
    extras: Dict[str, Any] = field(default_factory=dict)
    certified: Optional[bool] = None


@dataclass
class WalkTrace:
    seed: int
    trial_id: int
    checkpoints: Dict[int, Checkpoint] = field(default_factory=dict)

    @property
    def ns(self) -> List[int]:
        return sorted(self.checkpoints)

    @property
    def final(self) -> Checkpoint:
        return self.checkpoints[max(self.checkpoints)]

    def at(self, n: int) -> Checkpoint:
        try:
            return self.checkpoints[n]
        except KeyError:
            raise WalkEngineError(f"Trial {self.trial_id} has no checkpoint at n={n}") from None


def geometric_schedule(n_steps: int, start: int = 1, factor: int = 2) -> Tuple[int, ...]:
    """start, start*factor, ... below n_steps, plus n_steps itself."""
    if n_steps < 1 or start < 1 or factor < 2:
        raise ValueError("Need n_steps >= 1, start >= 1 and factor >= 2")
    out = []
    n = start
    while n < n_steps:
        out.append(n)
        n *= factor
    out.append(n_steps)
    return tuple(out)


@dataclass(frozen=True)
class WalkConfig:
    """Everything needed to reproduce a batch of trials."""
    space: Any
    measure: StepMeasure
    n_steps: int
    n_trials: int
    seed: int
    checkpoints: Tuple[int, ...] = ()
    certify: bool = True

    def __post_init__(self):
        if self.n_steps < 1:
            raise WalkEngineError("n_steps must be at least 1")
        if self.n_trials < 1:
            raise WalkEngineError("n_trials must be at least 1")
        if not 0 <= self.seed < MAX_SEED:
            raise WalkEngineError("seed must be a 64-bit unsigned integer")
        if not self.checkpoints:
            object.__setattr__(self, "checkpoints", geometric_schedule(self.n_steps))
        cps = tuple(sorted(set(self.checkpoints)))
        if cps[0] < 1 or cps[-1] > self.n_steps:
            raise WalkEngineError(f"Checkpoints must lie in [1, {self.n_steps}]")
        object.__setattr__(self, "checkpoints", cps)


def trial_generator(seed: int, trial_id: int) -> np.random.Generator:
    """Philox stream keyed by (seed, trial_id); draw k is step k."""
    return np.random.Generator(np.random.Philox(key=(seed << 64) | trial_id))


def increment_indices(config: WalkConfig, trial_id: int, n_steps: Optional[int] = None) -> np.ndarray:
    n = config.n_steps if n_steps is None else n_steps
    return config.measure.sample_indices(trial_generator(config.seed, trial_id), n)


def replay(config: WalkConfig, trial_id: int, n_max: Optional[int] = None) -> Iterator[Tuple[int, Any]]:
    """Yield (n, Z_n) for n = 1..n_max."""
    space = config.space
    z = space.identity
    for n, i in enumerate(increment_indices(config, trial_id, n_max), start=1):
        z = space.compose(z, config.measure.support[int(i)])
        yield n, z


def replay_inverse(config: WalkConfig, trial_id: int, n_max: Optional[int] = None) -> Iterator[Tuple[int, Any]]:
    """Yield (n, Z_n^-1) for n = 1..n_max."""
    space = config.space
    inverses = [space.inverse(g) for g in config.measure.support]
    z = space.identity
    for n, i in enumerate(increment_indices(config, trial_id, n_max), start=1):
        z = space.compose(inverses[int(i)], z)
        yield n, z


def run_trial(config: WalkConfig, trial_id: int) -> WalkTrace:
    trace = WalkTrace(seed=config.seed, trial_id=trial_id)
    wanted = set(config.checkpoints)
    for n, z in replay(config, trial_id):
        if n in wanted:
            displacement, extras = config.space.observe(z)
            certified = config.space.certify(z) if config.certify else None
            trace.checkpoints[n] = Checkpoint(n, z, displacement, extras, certified)
    return trace


def run_walks(config: WalkConfig, workers: Optional[int] = None) -> List[WalkTrace]:
    """Run all trials, in parallel when more than one worker is configured.

    Traces come back in trial order regardless of the worker count.
    """
    workers = settings.worker_count if workers is None else max(1, workers)
    started = time.perf_counter()
    logger.info("Running %d trials of %d steps on %s (seed=%d, workers=%d)",
                config.n_trials, config.n_steps, config.space.name, config.seed, workers)
    task = partial(run_trial, config)
    if workers == 1 or config.n_trials == 1:
        traces = [task(i) for i in range(config.n_trials)]
    else:
        chunksize = max(1, config.n_trials // (4 * workers))
        with ProcessPoolExecutor(max_workers=workers) as pool:
            traces = list(pool.map(task, range(config.n_trials), chunksize=chunksize))
    logger.info("Finished %d trials in %.2fs", len(traces), time.perf_counter() - started)
    return traces


# CSV output

def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(traces: Sequence[WalkTrace], stream: TextIO) -> None:
    """One row per (trial, checkpoint) in the frozen column order."""
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for trace in traces:
        for n in trace.ns:
            cp = trace.checkpoints[n]
            writer.writerow([
                _cell(trace.trial_id), _cell(n), _cell(cp.displacement),
                _cell(cp.extras.get("a")), _cell(cp.extras.get("b")),
                _cell(cp.extras.get("flag_id")), _cell(cp.certified),
            ])


def csv_text(traces: Sequence[WalkTrace]) -> str:
    buf = io.StringIO()
    write_csv(traces, buf)
    return buf.getvalue()
