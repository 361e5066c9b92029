"""
simulate: run seeded walks on a backend and write walks.csv plus manifest.json.
"""
import logging
import sys

from pydantic import ValidationError

from app.cli.deps import EXIT_FAILURE, EXIT_OK, UsageError, comma_list, int_list
from app.services.experiment_service import ConfigurationError, ExperimentRunner, load_config_file, merge_config
from app.services.presets import BACKENDS

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    p = subparsers.add_parser("simulate", help="Run random walks and estimators")
    p.add_argument("--config", help="TOML config file; flags override its keys")
    p.add_argument("--backend", choices=BACKENDS)
    p.add_argument("--q", type=int, help="Residue field size for building_sl3 (prime)")
    p.add_argument("--L", type=int, help="Separation constant of the chain metric")
    p.add_argument("--K", type=int, help="Power bound of the contraction search")
    p.add_argument("--metric", choices=("word", "dl"), help="Metric on tree_flats")
    p.add_argument("--preset", help="Step-measure preset")
    p.add_argument("--steps", type=int, help="Walk length n_steps")
    p.add_argument("--trials", type=int, help="Number of independent trials")
    p.add_argument("--seed", type=int, help="64-bit run seed")
    p.add_argument("--checkpoints", help="Comma-separated checkpoint list")
    p.add_argument("--checkpoint-start", type=int)
    p.add_argument("--checkpoint-factor", type=int)
    p.add_argument("--report", help="Comma-separated reports: drift,clt,contracting,hitting,"
                                    "opposite,tracking,hyperbolic,convergence")
    p.add_argument("--out-dir", help="Output directory")
    p.add_argument("--no-certify", action="store_true", help="Skip certificates at checkpoints")
    p.add_argument("--workers", type=int, help="Trial worker processes (default: WORKERS setting)")
    p.set_defaults(handler=handle, command_parser=p)


def format_validation_error(e: ValidationError) -> str:
    err = e.errors()[0]
    key = ".".join(str(part) for part in err["loc"])
    message = err["msg"].removeprefix("Value error, ")
    return f"invalid config: {key}: {message}" if key else f"invalid config: {message}"


def build_config(args):
    file_values = load_config_file(args.config) if args.config else None
    if args.steps is None and "n_steps" not in (file_values or {}):
        raise UsageError("the following arguments are required: --steps")
    overrides = {
        "backend": args.backend,
        "q": args.q,
        "L": args.L,
        "K": args.K,
        "metric": args.metric,
        "preset": args.preset,
        "n_steps": args.steps,
        "n_trials": args.trials,
        "seed": args.seed,
        "checkpoints": int_list(args.checkpoints) if args.checkpoints else None,
        "checkpoint_start": args.checkpoint_start,
        "checkpoint_factor": args.checkpoint_factor,
        "reports": comma_list(args.report) if args.report else None,
        "out_dir": args.out_dir,
        "certify": False if args.no_certify else None,
    }
    try:
        return merge_config(file_values, overrides)
    except ValidationError as e:
        raise UsageError(format_validation_error(e)) from e


def handle(args) -> int:
    try:
        config = build_config(args)
        runner = ExperimentRunner(config, workers=args.workers)
    except ConfigurationError as e:
        raise UsageError(str(e)) from e
    manifest = runner.run()
    out = sys.stdout
    out.write(f"csv: {runner.output_dir / manifest.csv_path}\n")
    out.write(f"sha256: {manifest.csv_sha256}\n")
    for name, digest in manifest.report_digests.items():
        out.write(f"report {name}: {digest[:16]}\n")
    for c in manifest.criteria:
        out.write(f"{'PASS' if c.passed else 'FAIL'} {c.name}: {c.detail}\n")
    if "drift" in manifest.reports:
        out.write(f"lambda_hat: {manifest.reports['drift']['lambda_hat']}\n")
    return EXIT_OK if manifest.passed else EXIT_FAILURE
