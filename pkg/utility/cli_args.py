# svann-interpretation/utility/cli_args.py

import argparse
import os
from typing import Callable, Optional, Type, TypeVar

from pydantic import BaseModel, ValidationError

from config import settings
from models.experiment_models import ExperimentConfig
from utility.exceptions import DataError, SvannError
from utility.logging import setup_logger
from utility.storage import load_model_json

logger = setup_logger(__name__)

M = TypeVar("M", bound=BaseModel)


# --- Shared flags ---

def add_config_flag(parser: argparse.ArgumentParser, required: bool = True) -> None:
    parser.add_argument("--config", required=required, help="JSON config path")


def add_seed_flag(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=None, help="u64 seed; overrides the config seed")


def add_out_flag(parser: argparse.ArgumentParser, default: Optional[str] = None) -> None:
    parser.add_argument("--out", default=default, help="output directory")


# --- Resolution ---

def resolve_seed(args: argparse.Namespace, fallback: Optional[int] = None) -> int:
    if getattr(args, "seed", None) is not None:
        return args.seed
    return fallback if fallback is not None else settings.DEFAULT_SEED


def resolve_out(args: argparse.Namespace, fallback: str = "out") -> str:
    out = getattr(args, "out", None) or fallback
    os.makedirs(out, exist_ok=True)
    return out


def load_config(args: argparse.Namespace, model_cls: Type[M]) -> M:
    """Validated config from --config, or the model defaults when the flag was omitted."""
    path = getattr(args, "config", None)
    if path is None:
        return model_cls()
    return load_model_json(path, model_cls)


def load_experiment(args: argparse.Namespace) -> ExperimentConfig:
    return load_config(args, ExperimentConfig)


# --- Handler guard ---

def guarded(action: str, handler: Callable[[argparse.Namespace], int]) -> Callable[[argparse.Namespace], int]:
    """Lets toolkit errors through and turns anything else into a logged data error."""
    def run(args: argparse.Namespace) -> int:
        try:
            return handler(args)
        except SvannError:
            raise
        except ValidationError as e:
            raise DataError(f"invalid input for {action}: {e}")
        except FileNotFoundError as e:
            raise DataError(f"{action}: file not found: {e.filename}")
        except Exception as e:
            logger.critical(f"Unhandled error during {action}: {e}")
            raise DataError(f"An unexpected error occurred during {action}: {e}")
    return run
