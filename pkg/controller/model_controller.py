# svann-interpretation/controller/model_controller.py

import argparse
import os

from models.svann_models import ModelFamily, ZonalMode
from services.experiment_services import prepare, registry_models, rule_classifiers, zone_test_tiles
from services.metric_services import rows_to_frame
from services.svann_services import (
    agreement_frame, compare_report, evaluate, load_registry, save_registry, summary_text, train_zonal,
)
from utility.cli_args import (
    add_config_flag, add_out_flag, add_seed_flag, guarded, load_experiment, resolve_out, resolve_seed,
)
from utility.logging import setup_logger
from utility.storage import write_csv, write_text

logger = setup_logger(__name__)

MODES = [m.value for m in ZonalMode]


def _registry_path(args: argparse.Namespace, out: str) -> str:
    return args.models or os.path.join(out, "registry.json")


def train(args: argparse.Namespace) -> int:
    config = load_experiment(args)
    seed = resolve_seed(args, config.seed)
    out = resolve_out(args, config.output_dir)
    spec = config.registry
    if args.mode:
        spec = spec.model_copy(update={"mode": ZonalMode(args.mode)})

    tileset, assignment = prepare(config, seed)
    registry = train_zonal(spec, assignment, tileset, config.train, seed)
    save_registry(registry, out)
    return 0


def evaluate_models(args: argparse.Namespace) -> int:
    config = load_experiment(args)
    seed = resolve_seed(args, config.seed)
    out = resolve_out(args, config.output_dir)
    registry = load_registry(_registry_path(args, out))

    tileset, assignment = prepare(config, seed)
    zones = assignment.zone_ids()
    rules = rule_classifiers(config)
    models = {z: registry_models(registry, [z])[z] + rules for z in zones}
    rows = evaluate(models, zone_test_tiles(tileset, assignment))
    write_csv(rows_to_frame(rows), os.path.join(out, "metrics.csv"))
    return 0


def compare(args: argparse.Namespace) -> int:
    config = load_experiment(args)
    seed = resolve_seed(args, config.seed)
    out = resolve_out(args, config.output_dir)
    registry = load_registry(_registry_path(args, out))

    tileset, assignment = prepare(config, seed)
    zones = assignment.zone_ids()
    rules = rule_classifiers(config)
    family = ModelFamily.OSFA if registry.mode == ZonalMode.OSFA else ModelFamily.SVANN
    families = {e.name: family for e in registry.entries}
    families.update({r.name: ModelFamily.RULE for r in rules})
    report = compare_report(registry_models(registry, zones), rules, zone_test_tiles(tileset, assignment), families)

    write_csv(agreement_frame(report), os.path.join(out, "comparison.csv"))
    write_text(summary_text(report), os.path.join(out, "summary.txt"))
    return 0


def register_routes(subparsers) -> None:
    p = subparsers.add_parser("train", help="train a zonal model registry")
    add_config_flag(p)
    add_seed_flag(p)
    add_out_flag(p)
    p.add_argument("--mode", choices=MODES, default=None, help="overrides the config registry mode")
    p.set_defaults(handler=guarded("train", train))

    p = subparsers.add_parser("evaluate", help="score a trained registry and the rule models on test tiles")
    add_config_flag(p)
    add_seed_flag(p)
    add_out_flag(p)
    p.add_argument("--models", default=None, help="registry.json (default: <out>/registry.json)")
    p.set_defaults(handler=guarded("evaluate", evaluate_models))

    p = subparsers.add_parser("compare", help="interpret a trained registry against the rule models")
    add_config_flag(p)
    add_seed_flag(p)
    add_out_flag(p)
    p.add_argument("--models", default=None, help="registry.json (default: <out>/registry.json)")
    p.set_defaults(handler=guarded("compare", compare))
