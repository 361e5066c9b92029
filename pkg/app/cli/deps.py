"""
Helpers shared by the subcommands: space construction, element parsing and output.
"""
import json
import logging
import sys
from typing import Any, Callable, TextIO

from pydantic import BaseModel

from app.services.presets import build_space

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


class UsageError(Exception):
    """Raised for bad user input; the CLI exits with status 2."""
    pass


def get_space(args) -> Any:
    """Backend space from --backend/--q/--L/--metric."""
    try:
        return build_space(args.backend, q=getattr(args, "q", 2), L=getattr(args, "L", 0),
                           metric=getattr(args, "metric", "word"))
    except ValueError as e:
        raise UsageError(str(e)) from e


def parse_with(parser: Callable[[str], Any], text: str, what: str = "element") -> Any:
    """Run a parser, turning any parse failure into a UsageError."""
    try:
        return parser(text)
    except (ValueError, ArithmeticError) as e:
        raise UsageError(f"Cannot parse {what} {text!r}: {e}") from e


def comma_list(text: str) -> list:
    return [part.strip() for part in text.split(",") if part.strip()]


def int_list(text: str) -> list:
    try:
        return [int(part) for part in comma_list(text)]
    except ValueError as e:
        raise UsageError(f"Expected a comma-separated list of integers, got {text!r}") from e


def emit(report: BaseModel, text: str, as_json: bool, stream: TextIO = None) -> None:
    """Print the human-readable text, or the report as JSON."""
    stream = stream or sys.stdout
    if as_json:
        stream.write(json.dumps(report.model_dump(mode="json"), indent=2, sort_keys=True) + "\n")
    else:
        stream.write(text.rstrip("\n") + "\n")
