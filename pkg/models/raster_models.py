# svann-interpretation/models/raster_models.py

from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from utility.exceptions import MissingBandError

MASK_NODATA = 255
MASK_VALUES = (0, 1, MASK_NODATA)


def _frozen_view(array: np.ndarray) -> np.ndarray:
    view = array.view()
    view.flags.writeable = False
    return view


# --- Geometry ---

class GeoTransform(BaseModel):
    """North-up affine transform: x = ox + col * psx, y = oy - row * psy."""
    model_config = ConfigDict(frozen=True)

    origin_x: float
    origin_y: float
    pixel_size_x: float = Field(..., gt=0)
    pixel_size_y: float = Field(..., gt=0)

    def pixel_center(self, col: float, row: float) -> Tuple[float, float]:
        return (
            self.origin_x + (col + 0.5) * self.pixel_size_x,
            self.origin_y - (row + 0.5) * self.pixel_size_y,
        )

    def shifted(self, col0: int, row0: int) -> "GeoTransform":
        return GeoTransform(
            origin_x=self.origin_x + col0 * self.pixel_size_x,
            origin_y=self.origin_y - row0 * self.pixel_size_y,
            pixel_size_x=self.pixel_size_x,
            pixel_size_y=self.pixel_size_y,
        )

    def as_list(self) -> List[float]:
        return [self.origin_x, self.origin_y, self.pixel_size_x, self.pixel_size_y]

    @classmethod
    def from_list(cls, values: List[float]) -> "GeoTransform":
        ox, oy, psx, psy = values
        return cls(origin_x=ox, origin_y=oy, pixel_size_x=psx, pixel_size_y=psy)


class BBox(BaseModel):
    """World-coordinate rectangle, half-open on its max edges."""
    model_config = ConfigDict(frozen=True)

    min_x: float
    min_y: float
    max_x: float
    max_y: float

    @model_validator(mode="after")
    def check_extent(self):
        if self.min_x >= self.max_x or self.min_y >= self.max_y:
            raise ValueError("bbox must have min < max on both axes")
        return self

    def overlaps(self, other: "BBox") -> bool:
        return (
            self.min_x < other.max_x and other.min_x < self.max_x
            and self.min_y < other.max_y and other.min_y < self.max_y
        )

    def contains(self, x, y):
        return (x >= self.min_x) & (x < self.max_x) & (y >= self.min_y) & (y < self.max_y)


# --- Raster ---

class Band(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    name: str
    data: np.ndarray

    @field_validator("name")
    @classmethod
    def check_name(cls, v):
        if not v.strip():
            raise ValueError("band name cannot be empty")
        return v

    @field_validator("data")
    @classmethod
    def check_data(cls, v):
        v = np.asarray(v, dtype=np.float32)
        if v.ndim != 2:
            raise ValueError("band data must be a 2-D (height, width) grid")
        return _frozen_view(v)


class Raster(BaseModel):
    """Multi-band raster on a north-up grid. Band data is float32, row-major."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    width: int = Field(..., ge=0)
    height: int = Field(..., ge=0)
    bands: Tuple[Band, ...]
    transform: GeoTransform
    nodata: Optional[float] = None

    @model_validator(mode="after")
    def check_bands(self):
        names = [b.name for b in self.bands]
        if len(set(names)) != len(names):
            raise ValueError(f"band names must be unique, got {names}")
        for b in self.bands:
            if b.data.shape != (self.height, self.width):
                raise ValueError(
                    f"band '{b.name}' has shape {b.data.shape}, expected {(self.height, self.width)}"
                )
        return self

    @property
    def band_names(self) -> List[str]:
        return [b.name for b in self.bands]

    def band(self, name: str) -> np.ndarray:
        for b in self.bands:
            if b.name == name:
                return b.data
        raise MissingBandError(name)

    def with_bands(self, arrays: Dict[str, np.ndarray], transform: Optional[GeoTransform] = None) -> "Raster":
        first = next(iter(arrays.values()))
        return Raster(
            width=first.shape[1],
            height=first.shape[0],
            bands=tuple(Band(name=n, data=a) for n, a in arrays.items()),
            transform=transform or self.transform,
            nodata=self.nodata,
        )

    def pixel_centers(self) -> Tuple[np.ndarray, np.ndarray]:
        """World x of every column center and world y of every row center."""
        cols = np.arange(self.width, dtype=np.float64)
        rows = np.arange(self.height, dtype=np.float64)
        xs = self.transform.origin_x + (cols + 0.5) * self.transform.pixel_size_x
        ys = self.transform.origin_y - (rows + 0.5) * self.transform.pixel_size_y
        return xs, ys

    def extent(self) -> BBox:
        t = self.transform
        return BBox(
            min_x=t.origin_x,
            min_y=t.origin_y - self.height * t.pixel_size_y,
            max_x=t.origin_x + self.width * t.pixel_size_x,
            max_y=t.origin_y,
        )


class Mask(BaseModel):
    """Binary wetland mask: 0 non-wetland, 1 wetland, 255 nodata."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    width: int = Field(..., ge=0)
    height: int = Field(..., ge=0)
    values: np.ndarray
    transform: Optional[GeoTransform] = None

    @field_validator("values")
    @classmethod
    def check_values(cls, v):
        v = np.asarray(v)
        if v.ndim != 2:
            raise ValueError("mask values must be a 2-D grid")
        if v.size and not np.isin(v, MASK_VALUES).all():
            raise ValueError("mask values restricted to {0, 1, 255}")
        if v.dtype != np.uint8:
            v = v.astype(np.uint8)
        return _frozen_view(v)

    @model_validator(mode="after")
    def check_shape(self):
        if self.values.shape != (self.height, self.width):
            raise ValueError(f"mask shape {self.values.shape} != {(self.height, self.width)}")
        return self

    @classmethod
    def from_array(cls, values: np.ndarray, transform: Optional[GeoTransform] = None) -> "Mask":
        values = np.asarray(values)
        return cls(width=values.shape[1], height=values.shape[0], values=values, transform=transform)

    def valid(self) -> np.ndarray:
        return self.values != MASK_NODATA


# --- Tiling ---

class Split(str, Enum):
    TRAIN = "train"
    VAL = "val"
    TEST = "test"


class Tile(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    row: int = Field(..., ge=0)
    col: int = Field(..., ge=0)
    raster: Raster
    mask: Mask

    @property
    def key(self) -> Tuple[int, int]:
        return (self.row, self.col)

    def center(self) -> Tuple[float, float]:
        return self.raster.transform.pixel_center(self.raster.width / 2 - 0.5, self.raster.height / 2 - 0.5)


class TileSet(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    tile_size: int = Field(..., ge=1)
    tiles: List[Tile]
    split_assignment: Dict[Tuple[int, int], Split] = Field(default_factory=dict)

    @model_validator(mode="after")
    def check_tiles(self):
        seen = set()
        for t in self.tiles:
            if t.key in seen:
                raise ValueError(f"duplicate tile position {t.key}")
            seen.add(t.key)
            if (t.raster.height, t.raster.width) != (self.tile_size, self.tile_size):
                raise ValueError(f"tile {t.key} is not {self.tile_size}x{self.tile_size}")
            if t.mask.values.shape != (self.tile_size, self.tile_size):
                raise ValueError(f"tile {t.key} mask is not {self.tile_size}x{self.tile_size}")
        unknown = set(self.split_assignment) - seen
        if unknown:
            raise ValueError(f"split assignment names unknown tiles {sorted(unknown)[:3]}")
        return self

    def subset(self, split: Split) -> List[Tile]:
        return [t for t in self.tiles if self.split_assignment.get(t.key) == split]

    def counts(self) -> Dict[Split, int]:
        return {s: len(self.subset(s)) for s in Split}


# --- Vector data ---

Ring = List[Tuple[float, float]]


class Polygon(BaseModel):
    model_config = ConfigDict(frozen=True)

    exterior: Ring
    holes: List[Ring] = Field(default_factory=list)
    label: str = "wetland"

    def rings(self) -> List[Ring]:
        return [self.exterior, *self.holes]


class PolygonSet(BaseModel):
    model_config = ConfigDict(frozen=True)

    polygons: List[Polygon] = Field(default_factory=list)

    def labels(self) -> List[str]:
        return [p.label for p in self.polygons]
