# svann-interpretation/services/raster_services.py

import json
import math
import os
import struct
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from config import settings
from models.raster_models import (
    MASK_NODATA, BBox, Band, GeoTransform, Mask, Polygon, PolygonSet, Raster, Ring,
    Split, Tile, TileSet,
)
from utility.exceptions import (
    BadMagicError, DataError, GeometryError, HeaderDecodeError,
    PayloadLengthMismatchError, TruncatedPayloadError,
)
from utility.logging import setup_logger
from utility.seeding import shuffled_indices
from utility.storage import atomic_write

logger = setup_logger(__name__)

SVR_MAGIC = b"SVRASTER\n"
_LEN_FIELD = struct.Struct("<I")
_PAYLOAD_DTYPE = np.dtype("<f4")
_EDGE_EPS = 1e-9

# --- SVR1 container ---

def encode_raster(raster: Raster) -> bytes:
    header = {
        "width": raster.width,
        "height": raster.height,
        "bands": raster.band_names,
        "transform": raster.transform.as_list(),
        "nodata": raster.nodata,
    }
    header_bytes = json.dumps(header, separators=(",", ":")).encode("utf-8")
    parts = [SVR_MAGIC, _LEN_FIELD.pack(len(header_bytes)), header_bytes]
    for band in raster.bands:
        parts.append(np.ascontiguousarray(band.data, dtype=_PAYLOAD_DTYPE).tobytes())
    return b"".join(parts)


def decode_raster(blob: bytes, source: str = "<bytes>") -> Raster:
    if not blob.startswith(SVR_MAGIC):
        raise BadMagicError(f"{source}: bad magic, not an SVR1 raster")
    offset = len(SVR_MAGIC)
    if len(blob) < offset + _LEN_FIELD.size:
        raise TruncatedPayloadError(f"{source}: truncated payload (no header length field)")
    (header_len,) = _LEN_FIELD.unpack_from(blob, offset)
    offset += _LEN_FIELD.size
    if len(blob) < offset + header_len:
        raise TruncatedPayloadError(f"{source}: truncated payload (header cut short)")
    try:
        header = json.loads(blob[offset:offset + header_len].decode("utf-8"))
        width, height = int(header["width"]), int(header["height"])
        names = list(header["bands"])
        transform = GeoTransform.from_list(header["transform"])
        nodata = header.get("nodata")
    except (ValueError, KeyError, TypeError) as e:
        raise HeaderDecodeError(f"{source}: unreadable header: {e}")
    offset += header_len

    band_bytes = width * height * _PAYLOAD_DTYPE.itemsize
    expected = offset + band_bytes * len(names)
    if len(blob) < expected:
        raise TruncatedPayloadError(
            f"{source}: truncated payload ({len(blob) - offset} of {expected - offset} payload bytes)"
        )
    if len(blob) != expected:
        raise PayloadLengthMismatchError(
            f"{source}: header/payload length mismatch ({len(blob) - expected} trailing bytes)"
        )

    bands = []
    for i, name in enumerate(names):
        start = offset + i * band_bytes
        data = np.frombuffer(blob, dtype=_PAYLOAD_DTYPE, count=width * height, offset=start)
        bands.append(Band(name=name, data=data.reshape(height, width)))
    return Raster(width=width, height=height, bands=tuple(bands), transform=transform, nodata=nodata)


def write_raster(raster: Raster, path: str) -> None:
    """Writes an SVR1 container atomically."""
    with atomic_write(path) as fh:
        fh.write(encode_raster(raster))
    logger.info(f"Wrote raster {raster.width}x{raster.height} ({len(raster.bands)} bands) to {path}")


def read_raster(path: str) -> Raster:
    if not os.path.exists(path):
        raise DataError(f"raster file not found: {path}")
    with open(path, "rb") as fh:
        blob = fh.read()
    return decode_raster(blob, source=path)


def write_mask(mask: Mask, path: str) -> None:
    transform = mask.transform or GeoTransform(origin_x=0.0, origin_y=0.0, pixel_size_x=1.0, pixel_size_y=1.0)
    raster = Raster(
        width=mask.width, height=mask.height,
        bands=(Band(name="mask", data=mask.values.astype(np.float32)),),
        transform=transform, nodata=float(MASK_NODATA),
    )
    write_raster(raster, path)


def read_mask(path: str) -> Mask:
    raster = read_raster(path)
    if len(raster.bands) != 1:
        raise DataError(f"{path}: mask container must hold exactly one band, found {len(raster.bands)}")
    values = raster.bands[0].data
    if not np.isin(values, (0, 1, MASK_NODATA)).all():
        raise DataError(f"{path}: mask values outside {{0, 1, 255}}")
    return Mask.from_array(values.astype(np.uint8), transform=raster.transform)


# --- Crop / resample ---

def crop(raster: Raster, bbox: BBox) -> Raster:
    """
    Copies the pixels whose cells fall within `bbox`. Values are never resampled;
    the window snaps outward to whole pixels.
    """
    t = raster.transform
    col0 = max(0, math.floor((bbox.min_x - t.origin_x) / t.pixel_size_x + _EDGE_EPS))
    col1 = min(raster.width, math.ceil((bbox.max_x - t.origin_x) / t.pixel_size_x - _EDGE_EPS))
    row0 = max(0, math.floor((t.origin_y - bbox.max_y) / t.pixel_size_y + _EDGE_EPS))
    row1 = min(raster.height, math.ceil((t.origin_y - bbox.min_y) / t.pixel_size_y - _EDGE_EPS))
    if col1 <= col0 or row1 <= row0:
        logger.warning(f"Crop bbox {bbox.model_dump()} does not intersect raster extent")
        raise GeometryError("crop: bbox does not intersect the raster extent (empty intersection)")

    arrays = {b.name: np.array(b.data[row0:row1, col0:col1]) for b in raster.bands}
    cropped = Raster(
        width=col1 - col0, height=row1 - row0,
        bands=tuple(Band(name=n, data=a) for n, a in arrays.items()),
        transform=t.shifted(col0, row0), nodata=raster.nodata,
    )
    logger.info(f"Cropped {raster.width}x{raster.height} -> {cropped.width}x{cropped.height}")
    return cropped


def crop_mask(mask: Mask, reference: Raster, bbox: BBox) -> Mask:
    """Crops a mask aligned with `reference` to the same window crop() would take."""
    stand_in = Raster(
        width=mask.width, height=mask.height,
        bands=(Band(name="mask", data=mask.values.astype(np.float32)),),
        transform=reference.transform,
    )
    out = crop(stand_in, bbox)
    return Mask.from_array(out.bands[0].data.astype(np.uint8), transform=out.transform)


def _sample_positions(n_in: int, factor: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    # pixel-center convention, clamped to the border samples
    pos = (np.arange(n_in * factor, dtype=np.float64) + 0.5) / factor - 0.5
    pos = np.clip(pos, 0.0, n_in - 1)
    i0 = np.floor(pos).astype(np.int64)
    i1 = np.minimum(i0 + 1, n_in - 1)
    return i0, i1, pos - i0


def _bilinear(data: np.ndarray, rows, cols) -> np.ndarray:
    r0, r1, wr = rows
    c0, c1, wc = cols
    top = data[r0][:, c0] * (1.0 - wc) + data[r0][:, c1] * wc
    bottom = data[r1][:, c0] * (1.0 - wc) + data[r1][:, c1] * wc
    return top * (1.0 - wr)[:, None] + bottom * wr[:, None]


def bilinear_upsample(raster: Raster, factor: int) -> Raster:
    if not isinstance(factor, (int, np.integer)) or factor < 1:
        raise DataError(f"upsample factor must be a positive integer, got {factor}")
    if factor == 1:
        return raster
    rows = _sample_positions(raster.height, factor)
    cols = _sample_positions(raster.width, factor)

    arrays: Dict[str, np.ndarray] = {}
    for b in raster.bands:
        data = b.data.astype(np.float64)
        if raster.nodata is not None:
            invalid = data == raster.nodata
            out = _bilinear(np.where(invalid, 0.0, data), rows, cols)
            touched = _bilinear(invalid.astype(np.float64), rows, cols) > 0.0
            out[touched] = raster.nodata
        else:
            out = _bilinear(data, rows, cols)
        arrays[b.name] = out.astype(np.float32)

    t = raster.transform
    transform = GeoTransform(
        origin_x=t.origin_x, origin_y=t.origin_y,
        pixel_size_x=t.pixel_size_x / factor, pixel_size_y=t.pixel_size_y / factor,
    )
    logger.info(f"Upsampled x{factor}: {raster.width}x{raster.height} -> {raster.width * factor}x{raster.height * factor}")
    return Raster(
        width=raster.width * factor, height=raster.height * factor,
        bands=tuple(Band(name=n, data=a) for n, a in arrays.items()),
        transform=transform, nodata=raster.nodata,
    )


def upsample_mask_nearest(mask: Mask, factor: int) -> Mask:
    """Each native pixel becomes a factor x factor block (pixel-center rasterization of its square)."""
    if factor < 1:
        raise DataError(f"upsample factor must be a positive integer, got {factor}")
    values = np.repeat(np.repeat(mask.values, factor, axis=0), factor, axis=1)
    transform = None
    if mask.transform is not None:
        t = mask.transform
        transform = GeoTransform(
            origin_x=t.origin_x, origin_y=t.origin_y,
            pixel_size_x=t.pixel_size_x / factor, pixel_size_y=t.pixel_size_y / factor,
        )
    return Mask.from_array(values, transform=transform)


# --- Tiling ---

def tile_grid_shape(width: int, height: int, tile_size: int, drop_partial: bool = True) -> Tuple[int, int]:
    """(rows, cols) of the tile grid."""
    if tile_size < 1:
        raise DataError("tile_size must be >= 1")
    if drop_partial:
        return height // tile_size, width // tile_size
    return -(-height // tile_size), -(-width // tile_size)


def _pad(data: np.ndarray, tile_size: int, fill) -> np.ndarray:
    h, w = data.shape
    if h == tile_size and w == tile_size:
        return data
    out = np.full((tile_size, tile_size), fill, dtype=data.dtype)
    out[:h, :w] = data
    return out


def tile(raster: Raster, mask: Mask, tile_size: int, drop_partial: bool = True) -> TileSet:
    if (mask.height, mask.width) != (raster.height, raster.width):
        raise DataError(
            f"mask {mask.width}x{mask.height} does not match raster {raster.width}x{raster.height}"
        )
    n_rows, n_cols = tile_grid_shape(raster.width, raster.height, tile_size, drop_partial)
    band_fill = raster.nodata if raster.nodata is not None else np.nan

    tiles: List[Tile] = []
    for r in range(n_rows):
        for c in range(n_cols):
            rs = slice(r * tile_size, (r + 1) * tile_size)
            cs = slice(c * tile_size, (c + 1) * tile_size)
            transform = raster.transform.shifted(c * tile_size, r * tile_size)
            fragment = Raster(
                width=tile_size, height=tile_size,
                bands=tuple(Band(name=b.name, data=_pad(b.data[rs, cs], tile_size, band_fill)) for b in raster.bands),
                transform=transform, nodata=raster.nodata,
            )
            mask_fragment = Mask.from_array(_pad(mask.values[rs, cs], tile_size, MASK_NODATA), transform=transform)
            tiles.append(Tile(row=r, col=c, raster=fragment, mask=mask_fragment))

    logger.info(
        f"Tiled {raster.width}x{raster.height} into {n_rows}x{n_cols} = {len(tiles)} tiles "
        f"of {tile_size}px (drop_partial={drop_partial})"
    )
    return TileSet(tile_size=tile_size, tiles=tiles)


# --- Rasterization ---

def normalize_ring(ring: Sequence[Tuple[float, float]], polygon_index: int) -> np.ndarray:
    """Returns the ring closed (first == last) as an (n+1, 2) array."""
    pts = np.asarray(ring, dtype=np.float64).reshape(-1, 2)
    if len(pts) and np.array_equal(pts[0], pts[-1]):
        pts = pts[:-1]
    distinct = {tuple(p) for p in pts}
    if len(distinct) < 3:
        raise GeometryError(f"polygon {polygon_index}: ring has fewer than 3 distinct vertices")
    return np.vstack([pts, pts[:1]])


def validate_polygons(polygons: PolygonSet) -> None:
    for i, poly in enumerate(polygons.polygons):
        for ring in poly.rings():
            normalize_ring(ring, i)


def _crossing_parity(closed_ring: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Crossing-number parity of every (ys[r], xs[c]) pixel center against one ring."""
    inside = np.zeros((len(ys), len(xs)), dtype=bool)
    for (x0, y0), (x1, y1) in zip(closed_ring[:-1], closed_ring[1:]):
        crosses = (y0 <= ys) != (y1 <= ys)
        if not crosses.any():
            continue
        rows = np.nonzero(crosses)[0]
        x_int = x0 + (ys[rows] - y0) / (y1 - y0) * (x1 - x0)
        inside[rows] ^= xs[None, :] < x_int[:, None]
    return inside


def point_in_polygon(x: float, y: float, polygon: Polygon, polygon_index: int = 0) -> bool:
    """Even-odd test of a single point against all rings of a polygon."""
    parity = False
    for ring in polygon.rings():
        closed = normalize_ring(ring, polygon_index)
        parity ^= bool(_crossing_parity(closed, np.array([x]), np.array([y]))[0, 0])
    return parity


def rasterize_polygons(
    polygons: PolygonSet, grid: Union[Raster, Mask], labels: Optional[Sequence[str]] = None
) -> Mask:
    """
    Burns polygons into a mask: a pixel is 1 iff its center lies inside any polygon under
    the even-odd rule (holes subtract). `labels` restricts which categories count.
    """
    if isinstance(grid, Mask):
        if grid.transform is None:
            raise DataError("rasterize_polygons: grid mask carries no transform")
        width, height, transform = grid.width, grid.height, grid.transform
    else:
        width, height, transform = grid.width, grid.height, grid.transform
    xs = transform.origin_x + (np.arange(width) + 0.5) * transform.pixel_size_x
    ys = transform.origin_y - (np.arange(height) + 0.5) * transform.pixel_size_y

    burned = np.zeros((height, width), dtype=bool)
    for i, poly in enumerate(polygons.polygons):
        closed_rings = [normalize_ring(r, i) for r in poly.rings()]
        if labels is not None and poly.label not in labels:
            continue
        parity = np.zeros((height, width), dtype=bool)
        for closed in closed_rings:
            parity ^= _crossing_parity(closed, xs, ys)
        burned |= parity

    logger.info(f"Rasterized {len(polygons.polygons)} polygons: {int(burned.sum())} of {burned.size} pixels set")
    return Mask.from_array(burned.astype(np.uint8), transform=transform)


# --- GeoJSON ---

def _polygon_from_coords(coords, label: str) -> Polygon:
    rings = [[(float(p[0]), float(p[1])) for p in ring] for ring in coords]
    if not rings:
        raise GeometryError("polygon feature without rings")
    return Polygon(exterior=rings[0], holes=rings[1:], label=label)


def load_polygons(path: str) -> PolygonSet:
    if not os.path.exists(path):
        raise DataError(f"polygon file not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except ValueError as e:
            raise DataError(f"{path}: invalid GeoJSON: {e}")
    if doc.get("type") != "FeatureCollection":
        raise DataError(f"{path}: expected a GeoJSON FeatureCollection")

    polygons: List[Polygon] = []
    for feature in doc.get("features", []):
        geometry = feature.get("geometry") or {}
        label = str((feature.get("properties") or {}).get("label", "wetland"))
        kind = geometry.get("type")
        if kind == "Polygon":
            polygons.append(_polygon_from_coords(geometry["coordinates"], label))
        elif kind == "MultiPolygon":
            polygons.extend(_polygon_from_coords(c, label) for c in geometry["coordinates"])
        else:
            raise DataError(f"{path}: unsupported geometry type {kind!r}")
    result = PolygonSet(polygons=polygons)
    validate_polygons(result)
    logger.info(f"Loaded {len(polygons)} polygons from {path}")
    return result


def polygons_to_geojson(polygons: PolygonSet) -> dict:
    features = []
    for poly in polygons.polygons:
        rings = []
        for ring in poly.rings():
            pts = [list(p) for p in ring]
            if pts and pts[0] != pts[-1]:
                pts.append(pts[0])
            rings.append(pts)
        features.append({
            "type": "Feature",
            "properties": {"label": poly.label},
            "geometry": {"type": "Polygon", "coordinates": rings},
        })
    return {"type": "FeatureCollection", "features": features}


def write_polygons(polygons: PolygonSet, path: str) -> None:
    with atomic_write(path, "w") as fh:
        json.dump(polygons_to_geojson(polygons), fh, separators=(",", ":"))


# --- Dataset split ---

def split_dataset(
    tileset: TileSet, fractions: Sequence[float] = (0.8, 0.1, 0.1), seed: int = settings.DEFAULT_SEED
) -> TileSet:
    """
    Deterministic train/val/test assignment. Counts are floor allocations for val and
    test; the remainder goes to train.
    """
    if len(fractions) != 3 or any(f <= 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise DataError(f"split fractions must be three positive numbers summing to 1, got {tuple(fractions)}")

    ordered = sorted(tileset.tiles, key=lambda t: t.key)
    n = len(ordered)
    if n < 3:
        logger.warning(f"Only {n} tiles available; assigning all of them to train")
        assignment = {t.key: Split.TRAIN for t in ordered}
        return tileset.model_copy(update={"split_assignment": assignment})

    # round first so 0.29 * 100 counts as 29, not 28
    n_val = math.floor(round(n * fractions[1], 9))
    n_test = math.floor(round(n * fractions[2], 9))
    n_train = n - n_val - n_test

    order = shuffled_indices(n, seed)
    assignment: Dict[Tuple[int, int], Split] = {}
    for rank, idx in enumerate(order):
        if rank < n_train:
            split = Split.TRAIN
        elif rank < n_train + n_val:
            split = Split.VAL
        else:
            split = Split.TEST
        assignment[ordered[idx].key] = split

    logger.info(f"Split {n} tiles (seed {seed}): train={n_train} val={n_val} test={n_test}")
    return tileset.model_copy(update={"split_assignment": assignment})


# --- Pipeline ---

def preprocess_scene(
    raster: Raster,
    truth: Union[PolygonSet, Mask],
    bbox: Optional[BBox] = None,
    upsample_factor: int = settings.DEFAULT_UPSAMPLE_FACTOR,
    tile_size: int = settings.DEFAULT_TILE_SIZE,
    fractions: Sequence[float] = settings.DEFAULT_SPLIT,
    seed: int = settings.DEFAULT_SEED,
    drop_partial: bool = True,
    wetland_labels: Optional[Sequence[str]] = None,
) -> TileSet:
    """Crop -> upsample -> rasterize ground truth -> tile -> split."""
    mask_in = truth if isinstance(truth, Mask) else None
    if bbox is not None:
        if mask_in is not None:
            mask_in = crop_mask(mask_in, raster, bbox)
        raster = crop(raster, bbox)

    raster = bilinear_upsample(raster, upsample_factor)
    if mask_in is not None:
        mask = upsample_mask_nearest(mask_in, upsample_factor)
    else:
        mask = rasterize_polygons(truth, raster, labels=wetland_labels)

    tiles = tile(raster, mask, tile_size, drop_partial=drop_partial)
    return split_dataset(tiles, fractions, seed)
