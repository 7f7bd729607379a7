# svann-interpretation/main.py

import argparse
import sys
from typing import List, Optional

from pydantic import ValidationError

from config import settings
from controller import experiment_controller, model_controller, pinn_controller, raster_controller
from utility.exceptions import EXIT_DATA, EXIT_OK, SvannError, UsageError
from utility.logging import setup_logger

logger = setup_logger(__name__)


class _Parser(argparse.ArgumentParser):
    """argparse that reports bad flags as a UsageError instead of exiting."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


# --- Command Registration ---

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="svann",
        description="Spatial-variability-aware networks, rule-based wetland mapping and PINN interpretation.",
    )
    parser.add_argument("--version", action="version", version=f"{settings.APP_NAME} {settings.APP_VERSION}")
    subparsers = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    raster_controller.register_routes(subparsers)
    model_controller.register_routes(subparsers)
    experiment_controller.register_routes(subparsers)
    pinn_controller.register_routes(subparsers)
    return parser


def dispatch(argv: Optional[List[str]] = None) -> int:
    """Parses argv, runs the selected command and maps errors to exit codes."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.handler(args)
    except SystemExit as e:
        # --help and --version
        return e.code if isinstance(e.code, int) else EXIT_OK
    except SvannError as e:
        logger.error(e.detail)
        return e.exit_code
    except (ValidationError, FileNotFoundError) as e:
        logger.error(f"Invalid input: {e}")
        return EXIT_DATA
    except Exception as e:
        logger.critical(f"Unhandled error: {e}")
        return EXIT_DATA


# --- Entry Point ---
if __name__ == "__main__":
    sys.exit(dispatch())
