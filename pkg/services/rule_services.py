# svann-interpretation/services/rule_services.py

import json
import os
from typing import Union

import numpy as np
from pydantic import ValidationError

from models.index_models import IndexBand
from models.raster_models import MASK_NODATA, Mask, Raster
from models.rule_models import NON_WETLAND, WETLAND, BuiltinRuleSet, Interval, RuleSet, interval_problems
from services.index_services import compute_index
from utility.exceptions import ClassificationError, DataError, RuleSetValidationError
from utility.logging import setup_logger
from utility.storage import atomic_write

logger = setup_logger(__name__)

# --- Built-in rule sets ---

def builtin_ruleset(ruleset_id: Union[str, BuiltinRuleSet]) -> RuleSet:
    key = ruleset_id.value if isinstance(ruleset_id, BuiltinRuleSet) else str(ruleset_id).lower()
    if key == BuiltinRuleSet.NDVI_DEFAULT.value:
        return RuleSet(
            index="NDVI",
            name="rule-ndvi",
            intervals=[
                Interval(lo=-1.0, hi=-0.1, label="Water"),
                Interval(lo=-0.1, hi=0.1, label="Rocks, clouds, buildings, etc"),
                Interval(lo=0.1, hi=0.73, label="Sparse Wetland Vegetation"),
                Interval(lo=0.73, hi=1.0, label="Dense Non-Wetland Vegetation"),
            ],
            binary={
                "Water": NON_WETLAND,
                "Rocks, clouds, buildings, etc": NON_WETLAND,
                "Sparse Wetland Vegetation": WETLAND,
                "Dense Non-Wetland Vegetation": NON_WETLAND,
            },
        )
    if key == BuiltinRuleSet.NDWI_DEFAULT.value:
        return RuleSet(
            index="NDWI",
            name="rule-ndwi",
            intervals=[
                Interval(lo=-1.0, hi=-0.6, label="Non-Wetland"),
                Interval(lo=-0.6, hi=1.0, label="Wetland"),
            ],
            binary={"Non-Wetland": NON_WETLAND, "Wetland": WETLAND},
        )
    raise DataError(f"unknown builtin ruleset '{ruleset_id}'")


# --- Loading ---

def load_ruleset(path: str) -> RuleSet:
    """Loads a RuleSet JSON document; interval defects are reported pair by pair."""
    if not os.path.exists(path):
        raise DataError(f"ruleset file not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except ValueError as e:
            raise DataError(f"{path}: invalid JSON: {e}")

    try:
        intervals = [Interval(**iv) for iv in doc.get("intervals", [])]
    except (ValidationError, TypeError) as e:
        raise RuleSetValidationError(f"{path}: malformed interval: {e}")
    pairs = interval_problems(intervals)
    if pairs:
        logger.warning(f"Rejected ruleset {path}: {pairs}")
        raise RuleSetValidationError(f"{path}: invalid intervals: {'; '.join(pairs)}", pairs=pairs)
    try:
        return RuleSet.model_validate(doc)
    except ValidationError as e:
        raise RuleSetValidationError(f"{path}: {e}")


def save_ruleset(ruleset: RuleSet, path: str) -> None:
    with atomic_write(path, "w") as fh:
        fh.write(ruleset.model_dump_json(by_alias=True, indent=2))


def resolve_ruleset(ref: str) -> RuleSet:
    """A builtin id or a path to a ruleset JSON."""
    if ref.lower() in {b.value for b in BuiltinRuleSet}:
        return builtin_ruleset(ref)
    return load_ruleset(ref)


# --- Classification ---

def label_indices(values: np.ndarray, ruleset: RuleSet) -> np.ndarray:
    """Position of the interval holding each value; [lo, hi) except the closed last interval."""
    lows = np.array([iv.lo for iv in ruleset.intervals], dtype=np.float64)
    return np.clip(np.searchsorted(lows, values, side="right") - 1, 0, len(lows) - 1)


def classify(index_band: IndexBand, ruleset: RuleSet) -> Mask:
    if index_band.index_id.upper() != ruleset.index_id.upper():
        raise ClassificationError(
            f"ruleset for {ruleset.index_id} cannot classify a {index_band.index_id} band"
        )
    valid = ~index_band.nodata
    values = index_band.values
    bad = valid & ~((values >= -1.0) & (values <= 1.0))
    if bad.any():
        raise ClassificationError(
            f"{int(bad.sum())} {index_band.index_id} values outside [-1, 1] (corrupted input?)"
        )

    binary = np.array([ruleset.binary_map[iv.label] for iv in ruleset.intervals], dtype=np.uint8)
    out = binary[label_indices(values, ruleset)]
    out[~valid] = MASK_NODATA
    return Mask.from_array(out)


def classify_raster(raster: Raster, ruleset: RuleSet) -> Mask:
    """compute_index + classify, carrying the raster transform onto the mask."""
    mask = classify(compute_index(raster, ruleset.index_id), ruleset)
    return Mask.from_array(mask.values, transform=raster.transform)
