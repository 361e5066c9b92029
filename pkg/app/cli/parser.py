import argparse

from app.cli.commands import accept, building, certify, dl, simulate
from app.core.config import settings


def build_parser() -> argparse.ArgumentParser:
    """Top-level parser with every subcommand registered."""
    parser = argparse.ArgumentParser(
        prog="curtainwalk",
        description="Random walks, curtain metrics and the A~2 building, checked at desk scale.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {settings.PROJECT_VERSION}")
    subparsers = parser.add_subparsers(dest="command", required=True)

    # Include all subcommands
    simulate.register(subparsers)
    certify.register(subparsers)
    dl.register(subparsers)
    building.register(subparsers)
    accept.register(subparsers)
    return parser
