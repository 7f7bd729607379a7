# svann-interpretation/services/index_services.py

from typing import Dict, Optional, Union

import numpy as np

from models.index_models import IndexBand, IndexDefinition, IndexId
from models.raster_models import Band, GeoTransform, Raster
from services.raster_services import read_raster, write_raster
from utility.exceptions import DataError
from utility.logging import setup_logger

logger = setup_logger(__name__)

INDEX_NODATA_SENTINEL = -9999.0

# --- Registry ---

INDEX_REGISTRY: Dict[str, IndexDefinition] = {
    IndexId.NDVI.value: IndexDefinition(
        index_id="NDVI", band_a="NIR", band_b="Red",
        description="vegetation density; sensitive to chlorophyll content",
    ),
    IndexId.NDWI.value: IndexDefinition(
        index_id="NDWI", band_a="Green", band_b="NIR",
        description="open water; positive values indicate water",
    ),
    IndexId.NDMI.value: IndexDefinition(
        index_id="NDMI", band_a="NIR", band_b="SWIR1",
        description="vegetation moisture",
    ),
}


def register_index(index_id: str, band_a: str, band_b: str, description: str = "") -> IndexDefinition:
    key = index_id.upper()
    definition = IndexDefinition(index_id=key, band_a=band_a, band_b=band_b, description=description)
    INDEX_REGISTRY[key] = definition
    logger.info(f"Registered index {key} = ({band_a} - {band_b}) / ({band_a} + {band_b})")
    return definition


def get_index_definition(index_id: Union[str, IndexId]) -> IndexDefinition:
    key = (index_id.value if isinstance(index_id, IndexId) else str(index_id)).upper()
    if key not in INDEX_REGISTRY:
        raise DataError(f"unknown index '{index_id}'; known: {sorted(INDEX_REGISTRY)}")
    return INDEX_REGISTRY[key]


# --- Computation ---

def normalized_difference(
    a: np.ndarray, b: np.ndarray, index_id: str = "ND", invalid: Optional[np.ndarray] = None
) -> IndexBand:
    """(a - b) / (a + b) per pixel; a zero denominator gives 0 with the nodata flag set."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DataError(f"normalized_difference: band shapes differ {a.shape} vs {b.shape}")
    denom = a + b
    zero = denom == 0
    values = np.divide(a - b, denom, out=np.zeros_like(denom), where=~zero)
    nodata = zero if invalid is None else (zero | invalid)
    values[nodata] = 0.0
    return IndexBand(index_id=index_id, values=values, nodata=nodata)


def compute_index(raster: Raster, index_id: Union[str, IndexId]) -> IndexBand:
    definition = get_index_definition(index_id)
    a = raster.band(definition.band_a)
    b = raster.band(definition.band_b)
    invalid = None
    if raster.nodata is not None:
        invalid = (a == raster.nodata) | (b == raster.nodata)
    if np.issubdtype(a.dtype, np.floating):
        nan_mask = np.isnan(a) | np.isnan(b)
        invalid = nan_mask if invalid is None else (invalid | nan_mask)
    band = normalized_difference(a, b, index_id=definition.index_id, invalid=invalid)
    logger.info(f"Computed {definition.index_id}: {int(band.nodata.sum())} nodata of {band.values.size} pixels")
    return band


# --- Serialization ---

def write_index_band(band: IndexBand, path: str, transform: Optional[GeoTransform] = None) -> None:
    data = np.where(band.nodata, INDEX_NODATA_SENTINEL, band.values).astype(np.float32)
    h, w = band.shape
    raster = Raster(
        width=w, height=h, bands=(Band(name=band.index_id, data=data),),
        transform=transform or GeoTransform(origin_x=0.0, origin_y=0.0, pixel_size_x=1.0, pixel_size_y=1.0),
        nodata=INDEX_NODATA_SENTINEL,
    )
    write_raster(raster, path)


def read_index_band(path: str) -> IndexBand:
    raster = read_raster(path)
    if len(raster.bands) != 1:
        raise DataError(f"{path}: index container must hold exactly one band")
    data = raster.bands[0].data.astype(np.float64)
    sentinel = raster.nodata if raster.nodata is not None else INDEX_NODATA_SENTINEL
    nodata = data == sentinel
    return IndexBand(index_id=raster.bands[0].name, values=np.where(nodata, 0.0, data), nodata=nodata)
