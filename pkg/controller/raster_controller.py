# svann-interpretation/controller/raster_controller.py

import argparse
import os

import pandas as pd

from services import index_services, raster_services, rule_services
from services.experiment_services import prepare
from services.render_services import render_mask_png
from services.scene_services import generate_synthetic_scene
from utility.cli_args import (
    add_config_flag, add_out_flag, add_seed_flag, guarded, load_experiment, resolve_out, resolve_seed,
)
from utility.exceptions import DataError
from utility.logging import setup_logger
from utility.storage import write_csv

logger = setup_logger(__name__)


def synth(args: argparse.Namespace) -> int:
    """Synthetic multi-zone scene with rule-generated ground truth."""
    config = load_experiment(args)
    if config.scene is None:
        raise DataError(f"{args.config}: 'synth' needs a synthetic 'scene' section")
    seed = resolve_seed(args, config.seed)
    out = resolve_out(args, config.output_dir)

    scene = generate_synthetic_scene(config.scene, seed)
    raster_services.write_raster(scene.raster, os.path.join(out, "scene.svr"))
    raster_services.write_mask(scene.truth, os.path.join(out, "truth_mask.svr"))
    render_mask_png(scene.truth, os.path.join(out, "truth_mask.png"))
    raster_services.write_polygons(scene.polygons, os.path.join(out, "zones.geojson"))
    logger.info(f"Synthetic scene ({scene.raster.width}x{scene.raster.height}, seed {seed}) written to {out}")
    return 0


def preprocess(args: argparse.Namespace) -> int:
    config = load_experiment(args)
    seed = resolve_seed(args, config.seed)
    out = resolve_out(args, config.output_dir)

    tileset, assignment = prepare(config, seed)
    zone_of = {t.key: zone for zone, tiles in assignment.tiles.items() for t in tiles}
    tile_dir = os.path.join(out, "tiles")
    rows = []
    for t in tileset.tiles:
        stem = f"r{t.row:03d}_c{t.col:03d}"
        raster_services.write_raster(t.raster, os.path.join(tile_dir, f"{stem}.svr"))
        raster_services.write_mask(t.mask, os.path.join(tile_dir, f"{stem}_mask.svr"))
        rows.append({
            "tile": stem, "row": t.row, "col": t.col,
            "split": tileset.split_assignment[t.key].value, "zone": zone_of.get(t.key, ""),
        })
    write_csv(pd.DataFrame(rows, columns=["tile", "row", "col", "split", "zone"]), os.path.join(out, "split.csv"))
    return 0


def index(args: argparse.Namespace) -> int:
    raster = raster_services.read_raster(args.input)
    band = index_services.compute_index(raster, args.index)
    out = resolve_out(args)
    index_services.write_index_band(band, os.path.join(out, f"{args.index.lower()}.svr"), raster.transform)
    return 0


def rules(args: argparse.Namespace) -> int:
    raster = raster_services.read_raster(args.input)
    ruleset = rule_services.resolve_ruleset(args.ruleset or f"{args.index.lower()}_default")
    if ruleset.index_id.upper() != args.index.upper():
        raise DataError(f"ruleset {ruleset.display_name} classifies {ruleset.index_id}, not {args.index}")
    mask = rule_services.classify_raster(raster, ruleset)
    out = resolve_out(args)
    stem = os.path.join(out, f"{args.index.lower()}_rules_mask")
    raster_services.write_mask(mask, f"{stem}.svr")
    render_mask_png(mask, f"{stem}.png")
    logger.info(f"{ruleset.display_name}: {int((mask.values == 1).sum())} wetland pixels of {mask.values.size}")
    return 0


def register_routes(subparsers) -> None:
    p = subparsers.add_parser("synth", help="generate a synthetic zoned scene")
    add_config_flag(p)
    add_seed_flag(p)
    add_out_flag(p)
    p.set_defaults(handler=guarded("synth", synth))

    p = subparsers.add_parser("preprocess", help="crop, upsample, rasterize, tile and split a scene")
    add_config_flag(p)
    add_seed_flag(p)
    add_out_flag(p)
    p.set_defaults(handler=guarded("preprocess", preprocess))

    p = subparsers.add_parser("index", help="compute a remote sensing index band")
    p.add_argument("--input", required=True, help="SVR1 raster")
    p.add_argument("--index", required=True, type=str.lower, choices=["ndvi", "ndwi", "ndmi"])
    add_out_flag(p)
    p.set_defaults(handler=guarded("index", index))

    p = subparsers.add_parser("rules", help="classify a raster with a rule-based index classifier")
    p.add_argument("--input", required=True, help="SVR1 raster")
    p.add_argument("--index", required=True, type=str.lower, choices=["ndvi", "ndwi"])
    p.add_argument("--ruleset", default=None, help="builtin ruleset id or ruleset JSON path")
    add_out_flag(p)
    p.set_defaults(handler=guarded("rules", rules))
