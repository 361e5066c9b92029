"""
Orchestration of simulate runs: build the space and measure, run the walks,
compute the requested estimators and write the CSV plus a self-validating
JSON manifest.
"""
import hashlib
import json
import logging
import time
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple

from pydantic import BaseModel

from app.core.cache import cache_stats
from app.core.config import settings
from app.schemas.experiment import CriterionResult, ExperimentConfig, ReportKind, RunManifest
from app.services import estimators as est
from app.services.presets import build_measure, build_space
from app.services.walk_engine import (
    InsufficientStabilizationError, WalkConfig, WalkEngineError, WalkTrace, csv_text, run_walks,
)

logger = logging.getLogger(__name__)

CSV_NAME = "walks.csv"
MANIFEST_NAME = "manifest.json"


class ExperimentError(Exception):
    """Custom exception for experiment orchestration errors"""
    pass


class ConfigurationError(ExperimentError):
    """Raised when a config cannot be run; the message starts with the offending key."""
    pass


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def canonical_json(data: Any) -> str:
    # normalize non-string keys first so digests survive a JSON round trip
    plain = json.loads(json.dumps(data))
    return json.dumps(plain, sort_keys=True, separators=(",", ":"))


def digest_report(report: BaseModel) -> str:
    """sha256 of the canonical JSON of a report."""
    return sha256_text(canonical_json(report.model_dump(mode="json")))


# Config loading

def load_config_file(path: str) -> Dict[str, Any]:
    """Read a TOML run config; keys may sit at top level or under [experiment].

    Raises:
        ConfigurationError: If the file is missing or not valid TOML
    """
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigurationError(f"config: file not found: {path}") from None
    except tomllib.TOMLDecodeError as e:
        raise ConfigurationError(f"config: invalid TOML in {path}: {e}") from e
    return dict(data.get("experiment", data))


def merge_config(file_values: Optional[Mapping[str, Any]], overrides: Mapping[str, Any]) -> ExperimentConfig:
    """Flags override file values key by key; None means 'not given'.

    Raises:
        pydantic.ValidationError: If the merged config is invalid
    """
    merged: Dict[str, Any] = dict(file_values or {})
    merged.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig.model_validate(merged)


# Runner

class ExperimentRunner:
    """Runs one validated ExperimentConfig end to end."""

    def __init__(self, config: ExperimentConfig, workers: Optional[int] = None):
        """
        Initialize the runner.

        Args:
            config: Validated experiment config
            workers: Trial worker processes (defaults to settings.WORKERS)

        Raises:
            ConfigurationError: If the requested reports cannot be computed for this config
        """
        self.config = config
        self.workers = workers if workers is not None else settings.worker_count
        self.space = build_space(config.backend.value, q=config.q, L=config.L,
                                 metric=config.metric.value, K=config.K)
        self.measure = build_measure(self.space, config.backend.value, config.preset)
        self.walk_config = WalkConfig(
            space=self.space, measure=self.measure, n_steps=config.n_steps,
            n_trials=config.n_trials, seed=config.seed, checkpoints=config.schedule(),
            certify=config.certify,
        )
        self.output_dir: Optional[Path] = None
        self._check_requirements()

    def _check_requirements(self) -> None:
        reports = set(self.config.reports)
        if ReportKind.CLT in reports and self.config.n_trials < est.CLT_MIN_TRIALS:
            raise ConfigurationError(f"n_trials: clt needs at least {est.CLT_MIN_TRIALS} trials")
        if ReportKind.OPPOSITE in reports and self.config.n_trials < 2:
            raise ConfigurationError("n_trials: opposite needs at least 2 trials to form pairs")
        if ReportKind.HITTING in reports and len(self.walk_config.checkpoints) < est.STABILIZATION_WINDOW:
            raise ConfigurationError(
                f"checkpoints: hitting needs at least {est.STABILIZATION_WINDOW} checkpoints"
            )

    def compute_reports(self, traces: List[WalkTrace]) -> Tuple[Dict[str, BaseModel], List[CriterionResult]]:
        """Requested estimators in a fixed order, with their run criteria."""
        reports: Dict[str, BaseModel] = {}
        criteria: List[CriterionResult] = []
        wanted = [r for r in ReportKind if r in set(self.config.reports)]
        drift = None
        if wanted:
            drift = est.estimate_drift(traces)
        for kind in wanted:
            if kind == ReportKind.DRIFT:
                reports["drift"] = drift
                criteria.append(CriterionResult(
                    name="drift_positive", passed=drift.excludes_zero,
                    detail=f"lambda_hat={drift.lambda_hat:.6g} ci95={drift.ci95}",
                    metrics={"lambda_hat": drift.lambda_hat}, seed=self.config.seed,
                ))
            elif kind == ReportKind.CLT:
                clt = est.clt_harness(traces, drift.lambda_hat, random_state=self.config.seed % (1 << 32))
                reports["clt"] = clt
                criteria.append(CriterionResult(
                    name="clt_gaussian", passed=clt.gaussian_accepted,
                    detail=f"sigma_hat={clt.sigma_hat:.6g} p={clt.ks_p_value}",
                    metrics={"ks_p_value": clt.ks_p_value, "degenerate": clt.degenerate},
                    seed=self.config.seed,
                ))
            elif kind == ReportKind.CONTRACTING:
                prop = est.contracting_proportion(traces, name=f"{self.space.name}_certificate")
                reports["contracting"] = prop
                criteria.append(CriterionResult(
                    name="contracting_nondecreasing", passed=prop.nondecreasing,
                    detail=f"fractions={prop.fractions}", metrics={"log_slope": prop.log_slope},
                    seed=self.config.seed,
                ))
            elif kind == ReportKind.HITTING:
                try:
                    hit = est.hitting_measure(traces, self.space, measure=self.measure)
                except InsufficientStabilizationError as e:
                    logger.warning("Hitting measure skipped: %s", e)
                    criteria.append(CriterionResult(
                        name="hitting_stabilized", passed=False, detail=str(e),
                        metrics={"unstable_trials": e.trial_ids}, seed=self.config.seed,
                    ))
                    continue
                reports["hitting"] = hit
                criteria.append(CriterionResult(
                    name="hitting_stabilized", passed=True,
                    detail=f"stabilized={hit.stabilized_fraction:.3f} tv_residual={hit.tv_residual}",
                    metrics={"tv_residual": hit.tv_residual}, seed=self.config.seed,
                ))
            elif kind == ReportKind.OPPOSITE:
                reports["opposite"] = est.opposite_pair_frequency(est.pair_traces(traces), self.space)
            elif kind == ReportKind.TRACKING:
                summary = est.tracking_summary(traces, drift.drift_vector, self.space)
                reports["tracking"] = summary
            elif kind == ReportKind.HYPERBOLIC:
                hyp = est.hyperbolic_time_report(traces, self.space)
                reports["hyperbolic"] = hyp
                criteria.append(CriterionResult(
                    name="hyperbolic_found", passed=hyp.finite_fraction == 1.0,
                    detail=f"finite_fraction={hyp.finite_fraction:.3f} median={hyp.median_time}",
                    metrics={"finite_fraction": hyp.finite_fraction}, seed=self.config.seed,
                ))
            elif kind == ReportKind.CONVERGENCE:
                reports["convergence"] = est.convergence_profile(traces, self.space)
        return reports, criteria

    def run(self, out_dir: Optional[str] = None) -> RunManifest:
        """Run the walks, write walks.csv and manifest.json, return the manifest.

        Raises:
            ExperimentError: If the walks or estimators fail
        """
        started = time.perf_counter()
        target = Path(out_dir or self.config.out_dir or
                      Path(settings.OUTPUT_DIR) / f"{self.config.backend.value}-seed{self.config.seed}")
        self.output_dir = target
        logger.info("Starting %s run (preset=%s, steps=%d, trials=%d) into %s",
                    self.config.backend.value, self.config.preset, self.config.n_steps,
                    self.config.n_trials, target)
        try:
            traces = run_walks(self.walk_config, workers=self.workers)
            reports, criteria = self.compute_reports(traces)
        except WalkEngineError as e:
            logger.error("Run failed: %s", e, exc_info=True)
            raise ExperimentError(f"Run failed: {e}") from e

        target.mkdir(parents=True, exist_ok=True)
        text = csv_text(traces)
        csv_path = target / CSV_NAME
        csv_path.write_text(text, encoding="utf-8", newline="")

        manifest = RunManifest(
            tool=settings.PROJECT_NAME,
            version=settings.PROJECT_VERSION,
            config=self.config.model_dump(mode="json"),
            schedule=list(self.walk_config.checkpoints),
            csv_path=CSV_NAME,
            csv_sha256=sha256_text(text),
            reports={k: v.model_dump(mode="json") for k, v in reports.items()},
            report_digests={k: digest_report(v) for k, v in reports.items()},
            criteria=criteria,
            constants=est.constants(),
            cache=cache_stats(),
            wall_clock_seconds=time.perf_counter() - started,
        )
        write_manifest(manifest, target / MANIFEST_NAME)
        logger.info("Run finished in %.2fs; csv sha256=%s", manifest.wall_clock_seconds, manifest.csv_sha256)
        return manifest


def run_experiment(config: ExperimentConfig, out_dir: Optional[str] = None,
                   workers: Optional[int] = None) -> RunManifest:
    return ExperimentRunner(config, workers=workers).run(out_dir)


# Manifests

def write_manifest(manifest: RunManifest, path: Path) -> None:
    Path(path).write_text(json.dumps(manifest.model_dump(mode="json"), indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")


def verify_manifest(path: str) -> bool:
    """Re-hash the CSV and every report and compare with the recorded digests."""
    manifest_path = Path(path)
    manifest = RunManifest.model_validate_json(manifest_path.read_text(encoding="utf-8"))
    if manifest.csv_path is not None:
        csv_file = manifest_path.parent / manifest.csv_path
        if not csv_file.exists():
            logger.warning("Manifest %s points at missing CSV %s", path, csv_file)
            return False
        if sha256_text(csv_file.read_text(encoding="utf-8")) != manifest.csv_sha256:
            return False
    for name, data in manifest.reports.items():
        if sha256_text(canonical_json(data)) != manifest.report_digests.get(name):
            return False
    return True
