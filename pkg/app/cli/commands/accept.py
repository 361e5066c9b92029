"""
accept: run an acceptance suite and print a pass/fail table.
"""
import sys

from app.cli.deps import EXIT_FAILURE, EXIT_OK, UsageError, emit
from app.schemas.experiment import SuiteReport
from app.services.acceptance import run_suite


def register(subparsers) -> None:
    p = subparsers.add_parser("accept", help="Run the acceptance suites")
    p.add_argument("--suite", required=True, help="oracles, limits or all")
    p.add_argument("--seed", type=int, help="Override every pinned criterion seed")
    p.add_argument("--scale", type=float, default=1.0, help="Multiply trial counts (smoke runs)")
    p.add_argument("--workers", type=int)
    p.add_argument("--json", action="store_true")
    p.set_defaults(handler=handle, command_parser=p)


def render(report: SuiteReport) -> str:
    width = max((len(r.name) for r in report.results), default=4)
    lines = [f"{'criterion'.ljust(width)}  result  seconds  detail"]
    for r in report.results:
        lines.append(f"{r.name.ljust(width)}  {'PASS' if r.passed else 'FAIL':6}  "
                     f"{r.elapsed_seconds:7.1f}  {r.detail}")
    lines.append(f"suite {report.suite}: {'PASS' if report.passed else 'FAIL'}")
    return "\n".join(lines)


def handle(args) -> int:
    if args.scale <= 0:
        raise UsageError("--scale must be positive")
    try:
        results = run_suite(args.suite, seed=args.seed, scale=args.scale, workers=args.workers)
    except ValueError as e:
        raise UsageError(str(e)) from e
    report = SuiteReport(suite=args.suite, seed=args.seed, scale=args.scale, results=results)
    emit(report, render(report), args.json, sys.stdout)
    return EXIT_OK if report.passed else EXIT_FAILURE
