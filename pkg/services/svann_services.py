# svann-interpretation/services/svann_services.py

import os
from typing import Dict, List, Mapping, Optional, Protocol, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel

from config import settings
from models.metric_models import MetricRow, MetricSummary
from models.network_models import Activation, Architecture, InitKind, InitScheme, Network, TrainConfig, TrainingData
from models.raster_models import MASK_NODATA, Mask, Raster, Split, Tile, TileSet
from models.rule_models import RuleSet
from models.svann_models import (
    INTERPRETABILITY_PROFILE, AgreementEntry, ComparativeReport, ModelFamily, RegistryEntry, RegistrySpec, Zone,
    ZonalMode, ZonalRegistry, ZoneAssignment,
)
from services.index_services import compute_index
from services.metric_services import confusion, metric_row, summarize
from services.network_services import init_network, load_network, predict, save_network, train
from services.rule_services import classify_raster
from services.scene_services import check_zones_disjoint
from utility.exceptions import DataError
from utility.logging import setup_logger
from utility.seeding import derive_seed, numpy_generator
from utility.storage import atomic_write, load_model_json

logger = setup_logger(__name__)

FEATURE_BANDS = ("Red", "Green", "Blue")

# --- Classifiers ---

class Classifier(Protocol):
    name: str

    def predict_mask(self, raster: Raster) -> Mask:
        ...


def pixel_features(raster: Raster, indices: Sequence[str]) -> Tuple[np.ndarray, np.ndarray]:
    """(H*W, 3 + k) matrix of Red, Green, Blue and the index channels, plus a validity flag per pixel."""
    columns = [raster.band(b).astype(np.float64).ravel() for b in FEATURE_BANDS]
    valid = np.ones(raster.width * raster.height, dtype=bool)
    for c in columns:
        valid &= np.isfinite(c)
        if raster.nodata is not None:
            valid &= c != raster.nodata
    for index_id in indices:
        band = compute_index(raster, index_id)
        columns.append(band.values.ravel())
        valid &= ~band.nodata.ravel()
    return np.column_stack(columns), valid


class PixelClassifier:
    """Per-pixel network over Red, Green, Blue plus index features; output >= threshold is wetland."""

    def __init__(self, name: str, network: Network, features: Sequence[str], threshold: float = 0.5):
        self.name = name
        self.network = network
        self.features = list(features)
        self.threshold = threshold

    def predict_mask(self, raster: Raster) -> Mask:
        X, valid = pixel_features(raster, self.features)
        out = np.full(X.shape[0], MASK_NODATA, dtype=np.uint8)
        if valid.any():
            scores = predict(self.network, X[valid])[:, 0]
            out[valid] = (scores >= self.threshold).astype(np.uint8)
        return Mask.from_array(out.reshape(raster.height, raster.width), transform=raster.transform)


class RuleClassifier:
    def __init__(self, ruleset: RuleSet, name: Optional[str] = None):
        self.ruleset = ruleset
        self.name = name or ruleset.display_name

    def predict_mask(self, raster: Raster) -> Mask:
        return classify_raster(raster, self.ruleset)


def entry_classifier(entry: RegistryEntry) -> PixelClassifier:
    if entry.network is None:
        raise DataError(f"registry entry {entry.name} has no trained network")
    return PixelClassifier(entry.name, entry.network, entry.features)


# --- Zones ---

def assign_zones(tileset: TileSet, zones: Sequence[Zone]) -> ZoneAssignment:
    """Each tile goes to the zone containing its centre; zones must not overlap."""
    zones = list(zones)
    check_zones_disjoint(zones)
    tiles: Dict[str, List[Tile]] = {z.id: [] for z in zones}
    unassigned: List[Tuple[int, int]] = []
    for t in sorted(tileset.tiles, key=lambda t: t.key):
        x, y = t.center()
        owner = next((z for z in zones if z.extent.contains(x, y)), None)
        if owner is None:
            unassigned.append(t.key)
        else:
            tiles[owner.id].append(t)
    if unassigned:
        logger.warning(f"{len(unassigned)} tiles fall outside every zone")
    logger.info(f"Zone assignment: {({k: len(v) for k, v in tiles.items()})}")
    return ZoneAssignment(zones=zones, tiles=tiles, unassigned=unassigned)


def tiles_in_split(tileset: TileSet, tiles: Sequence[Tile], split: Split) -> List[Tile]:
    return [t for t in tiles if tileset.split_assignment.get(t.key) == split]


def _mosaic(masks: Sequence[Mask]) -> Mask:
    """Stacks same-width tile masks vertically so a zone can be scored as one grid."""
    return Mask.from_array(np.vstack([m.values for m in masks]))


def zone_truth(tiles: Sequence[Tile]) -> Mask:
    return _mosaic([t.mask for t in tiles])


def zone_prediction(clf: Classifier, tiles: Sequence[Tile]) -> Mask:
    return _mosaic([clf.predict_mask(t.raster) for t in tiles])


# --- Training ---

def zone_training_data(
    tiles: Sequence[Tile], features: Sequence[str], seed: int, stream: str,
    cap: int = settings.MAX_TRAIN_PIXELS_PER_ZONE,
) -> TrainingData:
    """Labelled, valid pixels of the given tiles; at most `cap` of them, drawn without replacement."""
    xs, ys = [], []
    for t in tiles:
        X, valid = pixel_features(t.raster, features)
        labels = t.mask.values.ravel()
        keep = valid & (labels != MASK_NODATA)
        xs.append(X[keep])
        ys.append(labels[keep].astype(np.float64))
    X = np.vstack(xs) if xs else np.zeros((0, len(FEATURE_BANDS) + len(features)))
    y = np.concatenate(ys) if ys else np.zeros(0)
    if X.shape[0] > cap:
        rng = numpy_generator(seed, f"pixels:{stream}")
        idx = np.sort(rng.choice(X.shape[0], cap, replace=False))
        X, y = X[idx], y[idx]
    return TrainingData(features=X, targets=y)


def _validation_tiles(tileset: TileSet, tiles: Sequence[Tile], zone: str) -> List[Tile]:
    val = tiles_in_split(tileset, tiles, Split.VAL)
    if not val:
        logger.warning(f"Zone {zone} has no validation tiles; validating on its training tiles")
        val = tiles_in_split(tileset, tiles, Split.TRAIN)
    return val


def _fit_entry(
    name: str,
    zone: Optional[str],
    features: List[str],
    hidden: List[int],
    data: TrainingData,
    val_tiles: Sequence[Tile],
    config: TrainConfig,
    seed: int,
    stream: str,
) -> RegistryEntry:
    if data.size == 0:
        raise DataError(f"{name}: no labelled training pixels")
    arch = Architecture.dense([len(FEATURE_BANDS) + len(features), *hidden, 1], Activation.SIGMOID, Activation.SIGMOID)
    net = init_network(
        arch, InitScheme(kind=InitKind.XAVIER), seed=derive_seed(seed, f"init:{stream}"), use_bias=config.use_bias,
    )
    run_config = config.model_copy(update={"seed": derive_seed(seed, f"batches:{stream}")})
    trained, history = train(net, data, run_config, context=f"{name}: ")

    entry = RegistryEntry(
        name=name, zone=zone, features=features, architecture=arch, network=trained,
        model_ref=f"networks/{name}.json",
    )
    clf = entry_classifier(entry)
    entry.val_metrics = summarize(confusion(zone_prediction(clf, val_tiles), zone_truth(val_tiles)))
    logger.info(
        f"Trained {name} on {data.size} pixels: final loss {history.final_loss:.4f}, "
        f"val F1 {entry.val_metrics.f1:.3f}"
    )
    return entry


def entry_name(mode: ZonalMode, zone: Optional[str], features: Sequence[str]) -> str:
    if mode == ZonalMode.OSFA:
        return "osfa"
    return f"svann-{zone}-{'+'.join(f.lower() for f in features)}"


def train_zonal(
    spec: RegistrySpec,
    assignment: ZoneAssignment,
    tileset: TileSet,
    config: TrainConfig,
    seed: int = settings.DEFAULT_SEED,
) -> ZonalRegistry:
    """
    SVANN modes: one network per (zone, index feature), trained on that zone's training
    tiles only. OSFA: one network on every zone's training pixels with all index features.
    """
    zone_train: Dict[str, List[Tile]] = {}
    for zone in assignment.zone_ids():
        train_tiles = tiles_in_split(tileset, assignment.tiles[zone], Split.TRAIN)
        if not train_tiles:
            raise DataError(f"zone {zone} has no training tiles")
        zone_train[zone] = train_tiles

    entries: List[RegistryEntry] = []
    if spec.mode == ZonalMode.OSFA:
        features = list(spec.indices)
        parts = [zone_training_data(zone_train[z], features, seed, f"osfa:{z}") for z in assignment.zone_ids()]
        pooled = TrainingData(
            features=np.vstack([p.features for p in parts]), targets=np.vstack([p.targets for p in parts]),
        )
        val_tiles = [t for z in assignment.zone_ids() for t in _validation_tiles(tileset, assignment.tiles[z], z)]
        entries.append(_fit_entry("osfa", None, features, spec.hidden, pooled, val_tiles, config, seed, "osfa"))
    else:
        for zone in assignment.zone_ids():
            hidden = spec.zone_hidden.get(zone, spec.hidden)
            val_tiles = _validation_tiles(tileset, assignment.tiles[zone], zone)
            for feature in spec.indices:
                stream = f"{zone}:{feature}"
                data = zone_training_data(zone_train[zone], [feature], seed, stream)
                entries.append(_fit_entry(
                    entry_name(spec.mode, zone, [feature]), zone, [feature], hidden, data, val_tiles,
                    config, seed, stream,
                ))

    registry = ZonalRegistry(mode=spec.mode, entries=entries)
    logger.info(f"Trained {spec.mode.value} registry with {len(entries)} models")
    return registry


# --- Selection ---

def select_best(
    registry: ZonalRegistry, zones: Optional[Sequence[str]] = None, criterion: str = "f1"
) -> Dict[str, RegistryEntry]:
    """
    Highest validation `criterion` per zone. Candidates are scanned in listed order and
    only a strictly better score replaces the incumbent, so ties keep the first listed.
    """
    if criterion not in MetricSummary.model_fields or criterion == "degenerate":
        raise DataError(f"unknown selection criterion '{criterion}'")
    chosen: Dict[str, RegistryEntry] = {}
    for zone in (zones if zones is not None else registry.zones()):
        best: Optional[RegistryEntry] = None
        best_score = -np.inf
        for entry in registry.entries_for(zone):
            if entry.val_metrics is None:
                raise DataError(f"{entry.name} has no validation metrics")
            score = getattr(entry.val_metrics, criterion)
            if score > best_score:
                best, best_score = entry, score
        if best is None:
            raise DataError(f"no model in the registry serves zone {zone}")
        chosen[zone] = best
        logger.info(f"Zone {zone}: selected {best.name} ({criterion} {best_score:.3f})")
    return chosen


# --- Evaluation ---

def evaluate(
    models: Mapping[str, Sequence[Classifier]], zone_tiles: Mapping[str, Sequence[Tile]]
) -> List[MetricRow]:
    """One metric row per (zone, model) over the zone's tiles, scored against their truth masks."""
    rows: List[MetricRow] = []
    for zone, classifiers in models.items():
        tiles = zone_tiles.get(zone)
        if not tiles:
            raise DataError(f"no ground truth tiles for zone {zone}")
        truth = zone_truth(tiles)
        for clf in classifiers:
            rows.append(metric_row(clf.name, zone, confusion(zone_prediction(clf, tiles), truth)))
    return rows


def agreement_rate(a: Mask, b: Mask) -> float:
    """Share of pixels valid in both masks on which the two predictions agree."""
    if a.values.shape != b.values.shape:
        raise DataError(f"agreement: mask shapes differ {a.values.shape} vs {b.values.shape}")
    both = a.valid() & b.valid()
    n = int(np.count_nonzero(both))
    if n == 0:
        logger.warning("agreement: no pixel is valid in both masks")
        return 0.0
    return float(np.count_nonzero(both & (a.values == b.values))) / n


def compare_report(
    black_boxes: Mapping[str, Sequence[Classifier]],
    interpretable: Sequence[Classifier],
    zone_tiles: Mapping[str, Sequence[Tile]],
    families: Optional[Mapping[str, ModelFamily]] = None,
) -> ComparativeReport:
    """
    For every (black-box model, zone) ranks the interpretable models by pixel agreement
    (descending), then |F1 gap| (ascending), then listed order. Rank 1 is the model's
    physical interpretation in that zone.
    """
    report = ComparativeReport(families=dict(families or {}))
    for zone, boxes in black_boxes.items():
        tiles = zone_tiles.get(zone)
        if not tiles:
            raise DataError(f"no ground truth tiles for zone {zone}")
        truth = zone_truth(tiles)
        ref_masks: List[Mask] = []
        ref_f1: List[float] = []
        for clf in interpretable:
            pred = zone_prediction(clf, tiles)
            row = metric_row(clf.name, zone, confusion(pred, truth))
            report.metrics.append(row)
            ref_masks.append(pred)
            ref_f1.append(row.f1)

        for box in boxes:
            pred = zone_prediction(box, tiles)
            row = metric_row(box.name, zone, confusion(pred, truth))
            report.metrics.append(row)
            scored = [
                (agreement_rate(pred, ref_masks[i]), abs(row.f1 - ref_f1[i]), i)
                for i in range(len(interpretable))
            ]
            scored.sort(key=lambda s: (-s[0], s[1], s[2]))
            for rank, (agree, gap, i) in enumerate(scored, start=1):
                report.agreements.append(AgreementEntry(
                    black_box=box.name, interpretable=interpretable[i].name, zone=zone,
                    agreement=agree, f1_gap=gap, rank=rank,
                ))
            best = scored[0]
            logger.info(
                f"Zone {zone}: {box.name} behaves most like {interpretable[best[2]].name} "
                f"(agreement {best[0]:.3f})"
            )
    return report


AGREEMENT_COLUMNS = ["black_box", "interpretable", "zone", "agreement", "f1_gap", "rank"]


def agreement_frame(report: ComparativeReport) -> pd.DataFrame:
    return pd.DataFrame([a.model_dump() for a in report.agreements], columns=AGREEMENT_COLUMNS)


def summary_text(report: ComparativeReport) -> str:
    lines = ["Comparative physical interpretation", ""]
    for box in report.black_boxes():
        zones = [a.zone for a in report.agreements if a.black_box == box and a.rank == 1]
        for zone in zones:
            top = report.interpretation(box, zone)
            lines.append(
                f"zone {zone}: {box} -> {top.interpretable} "
                f"(agreement {top.agreement:.3f}, F1 gap {top.f1_gap:.3f})"
            )
    lines += ["", "Interpretability (simulatability / decomposability / algorithmic transparency)"]
    for family, (sim, dec, alg) in INTERPRETABILITY_PROFILE.items():
        lines.append(f"{family.value}: {sim} / {dec} / {alg}")
    return "\n".join(lines) + "\n"


# --- Persistence ---

class RegistryDocument(BaseModel):
    mode: ZonalMode
    entries: List[RegistryEntry]


def save_registry(registry: ZonalRegistry, directory: str) -> str:
    """registry.json plus one network JSON per entry under networks/. Returns the registry path."""
    for entry in registry.entries:
        save_network(entry.network, os.path.join(directory, entry.model_ref))
    doc = RegistryDocument(
        mode=registry.mode,
        entries=[e.model_copy(update={"network": None}) for e in registry.entries],
    )
    path = os.path.join(directory, "registry.json")
    with atomic_write(path, "w") as fh:
        fh.write(doc.model_dump_json(indent=2, exclude={"entries": {"__all__": {"network"}}}))
    logger.info(f"Saved {len(registry.entries)} registry entries to {path}")
    return path


def load_registry(path: str) -> ZonalRegistry:
    doc = load_model_json(path, RegistryDocument)
    base = os.path.dirname(os.path.abspath(path))
    entries = []
    for e in doc.entries:
        net = load_network(os.path.join(base, e.model_ref))
        if net.architecture.layer_sizes != e.architecture.layer_sizes:
            raise DataError(f"{e.model_ref}: network shape does not match registry entry {e.name}")
        entries.append(e.model_copy(update={"network": net}))
    return ZonalRegistry(mode=doc.mode, entries=entries)
