# svann-interpretation/models/index_models.py

from enum import Enum

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

# --- Enums ---

class IndexId(str, Enum):
    """Remote sensing indices shipped in the registry."""
    NDVI = "NDVI"
    NDWI = "NDWI"
    NDMI = "NDMI"


class IndexDefinition(BaseModel):
    """A normalized difference (a - b) / (a + b) over two named bands."""
    model_config = ConfigDict(frozen=True)

    index_id: str
    band_a: str = Field(..., description="Minuend band, e.g. NIR for NDVI")
    band_b: str = Field(..., description="Subtrahend band, e.g. Red for NDVI")
    description: str = ""


class IndexBand(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    index_id: str
    values: np.ndarray
    nodata: np.ndarray

    @field_validator("values")
    @classmethod
    def check_values(cls, v):
        v = np.asarray(v, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError("index values must be a 2-D grid")
        return v

    @field_validator("nodata")
    @classmethod
    def check_nodata(cls, v):
        return np.asarray(v, dtype=bool)

    @model_validator(mode="after")
    def check_shape(self):
        if self.values.shape != self.nodata.shape:
            raise ValueError("nodata flags must match the index grid")
        return self

    @property
    def shape(self):
        return self.values.shape
