# svann-interpretation/services/render_services.py

import imageio.v3 as iio
import numpy as np

from models.raster_models import MASK_NODATA, Mask
from utility.exceptions import DataError
from utility.logging import setup_logger
from utility.storage import atomic_write

logger = setup_logger(__name__)

WETLAND_GRAY = 255
NON_WETLAND_GRAY = 0
NODATA_GRAY = 128


def mask_to_gray(mask: Mask) -> np.ndarray:
    """8-bit grayscale: wetland 255, non-wetland 0, nodata 128."""
    lut = np.zeros(256, dtype=np.uint8)
    lut[1] = WETLAND_GRAY
    lut[0] = NON_WETLAND_GRAY
    lut[MASK_NODATA] = NODATA_GRAY
    return lut[mask.values]


def render_mask_png(mask: Mask, path: str) -> None:
    if mask.width == 0 or mask.height == 0:
        raise DataError("cannot render an empty mask")
    gray = mask_to_gray(mask)
    try:
        with atomic_write(path, "wb") as fh:
            iio.imwrite(fh, gray, extension=".png")
    except OSError as e:
        raise DataError(f"cannot write {path}: {e}")
    logger.info(f"Rendered {mask.width}x{mask.height} mask to {path}")
