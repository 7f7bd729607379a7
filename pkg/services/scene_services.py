# svann-interpretation/services/scene_services.py

from typing import List

import numpy as np
from pydantic import BaseModel, ConfigDict

from models.experiment_models import SCENE_BANDS, SceneSpec
from models.raster_models import MASK_NODATA, Band, GeoTransform, Mask, Polygon, PolygonSet, Raster
from models.svann_models import Zone
from services.rule_services import builtin_ruleset, classify_raster
from utility.exceptions import GeometryError
from utility.logging import setup_logger
from utility.seeding import numpy_generator

logger = setup_logger(__name__)


class SyntheticScene(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    raster: Raster
    truth: Mask
    zones: List[Zone]
    polygons: PolygonSet


def check_zones_disjoint(zones: List[Zone]) -> None:
    for i, a in enumerate(zones):
        for b in zones[i + 1:]:
            if a.extent.overlaps(b.extent):
                raise GeometryError(f"zones '{a.id}' and '{b.id}' overlap")


def generate_synthetic_scene(spec: SceneSpec, seed: int) -> SyntheticScene:
    """
    Uniform random Blue/Green/Red/NIR reflectances with per-zone ground truth from the
    zone's rule set, each label flipped with the zone's noise probability. Pixels whose
    centre lies in no zone are nodata in the truth mask.
    """
    zones = [Zone(id=z.id, extent=z.bbox) for z in spec.zones]
    check_zones_disjoint(zones)

    rng = numpy_generator(seed, "synth")
    shape = (spec.height, spec.width)
    lo, hi = spec.value_range
    data = {b: rng.uniform(lo, hi, size=shape) for b in SCENE_BANDS}

    transform = GeoTransform(
        origin_x=0.0, origin_y=spec.height * spec.pixel_size,
        pixel_size_x=spec.pixel_size, pixel_size_y=spec.pixel_size,
    )
    cols = (np.arange(spec.width) + 0.5) * spec.pixel_size
    rows = transform.origin_y - (np.arange(spec.height) + 0.5) * spec.pixel_size
    px, py = np.meshgrid(cols, rows)

    inside = []
    for z in spec.zones:
        cell = z.bbox.contains(px, py)
        for band in SCENE_BANDS:
            if band in z.band_ranges:
                b_lo, b_hi = z.band_ranges[band]
                data[band][cell] = rng.uniform(b_lo, b_hi, size=int(cell.sum()))
        inside.append(cell)

    raster = Raster(
        width=spec.width, height=spec.height,
        bands=tuple(Band(name=b, data=data[b]) for b in SCENE_BANDS),
        transform=transform,
    )

    truth = np.full(shape, MASK_NODATA, dtype=np.uint8)
    for z, cell in zip(spec.zones, inside):
        labels = classify_raster(raster, builtin_ruleset(z.rule)).values
        zone_labels = labels[cell].copy()
        if z.noise > 0:
            # nodata labels stay nodata
            flip = (rng.random(zone_labels.size) < z.noise) & (zone_labels != MASK_NODATA)
            zone_labels[flip] = 1 - zone_labels[flip]
        truth[cell] = zone_labels
        logger.info(
            f"Zone {z.id}: {int(cell.sum())} pixels labelled by {z.rule.value}, "
            f"{int((zone_labels == 1).sum())} wetland (noise {z.noise})"
        )

    polygons = PolygonSet(polygons=[
        Polygon(
            exterior=[
                (z.bbox.min_x, z.bbox.min_y), (z.bbox.max_x, z.bbox.min_y),
                (z.bbox.max_x, z.bbox.max_y), (z.bbox.min_x, z.bbox.max_y),
            ],
            label=z.id,
        )
        for z in spec.zones
    ])
    return SyntheticScene(
        raster=raster, truth=Mask.from_array(truth, transform=transform), zones=zones, polygons=polygons,
    )
