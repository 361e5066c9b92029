import logging
import sys
from typing import List, Optional

from app.cli.deps import EXIT_FAILURE, EXIT_USAGE, UsageError
from app.cli.parser import build_parser
from app.core.config import settings

# Configure logging (stderr; stdout carries command results only)
logging.basicConfig(
    level=settings.LOG_LEVEL,
    format="%(asctime)s %(levelname)s %(name)s: %(message)s",
)
logger = logging.getLogger(__name__)


def main(argv: Optional[List[str]] = None) -> int:
    """Parse argv, dispatch to the subcommand and return its exit status."""
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except UsageError as e:
        args.command_parser.print_usage(sys.stderr)
        print(f"{args.command_parser.prog}: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as e:
        logger.error("Command %s failed: %s", args.command, e, exc_info=True)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
