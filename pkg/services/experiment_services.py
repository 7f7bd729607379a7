# svann-interpretation/services/experiment_services.py

import os
from typing import Dict, List, Optional, Tuple, Union

import pandas as pd
from pydantic import BaseModel, ConfigDict

from models.experiment_models import ExperimentConfig
from models.metric_models import METRIC_COLUMNS
from models.raster_models import Mask, PolygonSet, Raster, Split, TileSet
from models.svann_models import (
    ComparativeReport, ModelFamily, RegistrySpec, Zone, ZonalMode, ZonalRegistry, ZoneAssignment,
)
from services.metric_services import rows_to_frame
from services.raster_services import load_polygons, preprocess_scene, read_mask, read_raster
from services.rule_services import resolve_ruleset
from services.scene_services import generate_synthetic_scene
from services.svann_services import (
    RuleClassifier, agreement_frame, assign_zones, compare_report, entry_classifier, evaluate, select_best,
    summary_text, tiles_in_split, train_zonal,
)
from utility.exceptions import DataError
from utility.logging import setup_logger
from utility.storage import write_csv, write_text

logger = setup_logger(__name__)

# --- Study loading ---

class Study(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    raster: Raster
    truth: Union[Mask, PolygonSet]
    zones: List[Zone]


def load_study(config: ExperimentConfig, seed: int) -> Study:
    """Synthetic scene from the config, or the raster and ground truth it points to."""
    if config.scene is not None:
        scene = generate_synthetic_scene(config.scene, seed)
        return Study(raster=scene.raster, truth=scene.truth, zones=scene.zones)

    for path in (config.scene_path, config.truth_path):
        if not os.path.exists(path):
            raise DataError(f"{config.name}: referenced file not found: {path}")
    raster = read_raster(config.scene_path)
    if config.truth_path.lower().endswith((".geojson", ".json")):
        truth: Union[Mask, PolygonSet] = load_polygons(config.truth_path)
    else:
        truth = read_mask(config.truth_path)
    zones = [Zone(id=z.id, extent=z.bbox) for z in config.zones]
    return Study(raster=raster, truth=truth, zones=zones)


def prepare(
    config: ExperimentConfig, seed: int, upsample_factor: Optional[int] = None
) -> Tuple[TileSet, ZoneAssignment]:
    study = load_study(config, seed)
    p = config.preprocess
    tileset = preprocess_scene(
        study.raster, study.truth, bbox=p.bbox,
        upsample_factor=p.upsample_factor if upsample_factor is None else upsample_factor,
        tile_size=p.tile_size, fractions=p.split, seed=seed, drop_partial=p.drop_partial,
    )
    return tileset, assign_zones(tileset, study.zones)


def rule_classifiers(config: ExperimentConfig) -> List[RuleClassifier]:
    return [RuleClassifier(resolve_ruleset(ref)) for ref in config.rulesets]


def zone_test_tiles(tileset: TileSet, assignment: ZoneAssignment) -> Dict[str, list]:
    """Test tiles per zone; a zone without any falls back to all of its tiles."""
    out = {}
    for zone in assignment.zone_ids():
        tiles = tiles_in_split(tileset, assignment.tiles[zone], Split.TEST)
        if not tiles:
            logger.warning(f"Zone {zone} has no test tiles; scoring on all of its tiles")
            tiles = assignment.tiles[zone]
        out[zone] = tiles
    return out


def registry_models(registry: ZonalRegistry, zones: List[str]) -> Dict[str, list]:
    return {z: [entry_classifier(e) for e in registry.entries_for(z)] for z in zones}


# --- Upsampling study ---

UPSAMPLING_COLUMNS = ["model", "entry", "upsample_factor"] + METRIC_COLUMNS[1:] + ["val_accuracy"]


def upsampling_experiment(config: ExperimentConfig, seed: int) -> pd.DataFrame:
    """
    The same zonal models trained with and without upsampling. Rows are named
    "Up-Model k" (configured factor) and "Model k" (native resolution).
    """
    factors = [config.preprocess.upsample_factor, 1]
    if factors[0] == 1:
        logger.warning("Configured upsample factor is 1; both arms of the study run at native resolution")
    spec = config.registry.model_copy(update={"mode": ZonalMode.SVANN_I, "zone_hidden": {}}) \
        if config.registry.mode == ZonalMode.OSFA else config.registry

    rows = []
    for factor in factors:
        tileset, assignment = prepare(config, seed, upsample_factor=factor)
        registry = train_zonal(spec, assignment, tileset, config.train, seed)
        tiles = zone_test_tiles(tileset, assignment)
        prefix = "Up-Model" if factor > 1 else "Model"
        for k, entry in enumerate(registry.entries, start=1):
            metric = evaluate({entry.zone: [entry_classifier(entry)]}, tiles)[0]
            rows.append({
                "model": f"{prefix} {k}", "entry": entry.name, "upsample_factor": factor,
                **metric.model_dump(exclude={"model"}),
                "val_accuracy": entry.val_metrics.accuracy,
            })
    frame = pd.DataFrame(rows, columns=UPSAMPLING_COLUMNS)
    logger.info(f"Upsampling study: {len(frame)} rows over factors {factors}")
    return frame


# --- SVANN vs OSFA ---

class SvannVsOsfaResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    registry: ZonalRegistry
    osfa: ZonalRegistry
    selection: Dict[str, str]
    report: ComparativeReport
    metrics: pd.DataFrame
    comparison: pd.DataFrame
    selection_frame: pd.DataFrame
    summary: str


def svann_vs_osfa(config: ExperimentConfig, seed: int) -> SvannVsOsfaResult:
    """
    Trains the zonal registry and an OSFA model on the same tiles, selects the best
    zonal model per zone on validation F1, scores everything on the test tiles and
    interprets every black-box model against the rule models.
    """
    tileset, assignment = prepare(config, seed)
    zones = assignment.zone_ids()
    spec = config.registry
    if spec.mode == ZonalMode.OSFA:
        spec = spec.model_copy(update={"mode": ZonalMode.SVANN_I})
    registry = train_zonal(spec, assignment, tileset, config.train, seed)
    osfa = train_zonal(
        RegistrySpec(mode=ZonalMode.OSFA, indices=spec.indices, hidden=spec.hidden),
        assignment, tileset, config.train, seed,
    )
    chosen = select_best(registry, zones)

    tiles = zone_test_tiles(tileset, assignment)
    black_boxes = {z: registry_models(registry, [z])[z] + registry_models(osfa, [z])[z] for z in zones}
    families = {e.name: ModelFamily.SVANN for e in registry.entries}
    families.update({e.name: ModelFamily.OSFA for e in osfa.entries})
    rules = rule_classifiers(config)
    families.update({r.name: ModelFamily.RULE for r in rules})
    report = compare_report(black_boxes, rules, tiles, families)

    comparison = agreement_frame(report)
    selection_frame = pd.DataFrame(
        [{
            "zone": z, "candidate": e.name, "val_f1": e.val_metrics.f1, "val_accuracy": e.val_metrics.accuracy,
            "selected": e.name == chosen[z].name,
        } for z in zones for e in registry.entries_for(z)],
        columns=["zone", "candidate", "val_f1", "val_accuracy", "selected"],
    )
    text = summary_text(report)
    text += "\nSelected zonal models\n" + "".join(f"zone {z}: {e.name}\n" for z, e in chosen.items())
    return SvannVsOsfaResult(
        registry=registry, osfa=osfa, selection={z: e.name for z, e in chosen.items()}, report=report,
        metrics=rows_to_frame(report.metrics), comparison=comparison, selection_frame=selection_frame,
        summary=text,
    )


def write_svann_vs_osfa(result: SvannVsOsfaResult, out_dir: str) -> None:
    write_csv(result.metrics, os.path.join(out_dir, "metrics.csv"))
    write_csv(result.comparison, os.path.join(out_dir, "comparison.csv"))
    write_csv(result.selection_frame, os.path.join(out_dir, "selection.csv"))
    write_text(result.summary, os.path.join(out_dir, "summary.txt"))
