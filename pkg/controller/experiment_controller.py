# svann-interpretation/controller/experiment_controller.py

import argparse
import os

from services.experiment_services import svann_vs_osfa, upsampling_experiment, write_svann_vs_osfa
from utility.cli_args import (
    add_config_flag, add_out_flag, add_seed_flag, guarded, load_experiment, resolve_out, resolve_seed,
)
from utility.logging import setup_logger
from utility.storage import write_csv

logger = setup_logger(__name__)


def upsampling(args: argparse.Namespace) -> int:
    """Same zonal models with and without upsampling of the scene."""
    config = load_experiment(args)
    seed = resolve_seed(args, config.seed)
    out = resolve_out(args, config.output_dir)
    frame = upsampling_experiment(config, seed)
    write_csv(frame, os.path.join(out, "upsampling.csv"))
    return 0


def svann_osfa(args: argparse.Namespace) -> int:
    config = load_experiment(args)
    seed = resolve_seed(args, config.seed)
    out = resolve_out(args, config.output_dir)
    result = svann_vs_osfa(config, seed)
    write_svann_vs_osfa(result, out)
    for zone, name in result.selection.items():
        logger.info(f"Zone {zone}: selected {name}")
    return 0


def register_routes(subparsers) -> None:
    parent = subparsers.add_parser("experiment", help="reproducible end-to-end studies")
    studies = parent.add_subparsers(dest="study", required=True, metavar="{upsampling,svann-vs-osfa}")

    p = studies.add_parser("upsampling", help="zonal models with vs without upsampling")
    add_config_flag(p)
    add_seed_flag(p)
    add_out_flag(p)
    p.set_defaults(handler=guarded("experiment upsampling", upsampling))

    p = studies.add_parser("svann-vs-osfa", help="zonal models vs one model for all zones, with interpretation")
    add_config_flag(p)
    add_seed_flag(p)
    add_out_flag(p)
    p.set_defaults(handler=guarded("experiment svann-vs-osfa", svann_osfa))
