import numpy as np
import pytest
from pydantic import ValidationError

from models.experiment_models import SceneSpec, ZoneSpec
from models.raster_models import MASK_NODATA, BBox, Band, GeoTransform, Mask, Polygon, PolygonSet, Raster, Split
from services import raster_services
from services.metric_services import confusion, summarize
from services.rule_services import builtin_ruleset, classify_raster
from services.scene_services import generate_synthetic_scene
from utility.exceptions import (
    BadMagicError, DataError, GeometryError, PayloadLengthMismatchError, TruncatedPayloadError,
)

# --- HELPERS ---

def make_raster(arrays, origin=(0.0, 0.0), pixel=1.0, nodata=None):
    first = next(iter(arrays.values()))
    first = np.asarray(first)
    return Raster(
        width=first.shape[1], height=first.shape[0],
        bands=tuple(Band(name=n, data=np.asarray(a, dtype=np.float32)) for n, a in arrays.items()),
        transform=GeoTransform(origin_x=origin[0], origin_y=origin[1], pixel_size_x=pixel, pixel_size_y=pixel),
        nodata=nodata,
    )


def zero_tileset(rows, cols, tile_size=2):
    raster = make_raster({"B": np.zeros((rows * tile_size, cols * tile_size))})
    mask = Mask.from_array(np.zeros((rows * tile_size, cols * tile_size), dtype=np.uint8))
    return raster_services.tile(raster, mask, tile_size)


def two_zone_spec(noise=0.0):
    return SceneSpec(
        width=32, height=16, pixel_size=30.0,
        zones=[
            ZoneSpec(id="A", bbox=BBox(min_x=0, min_y=0, max_x=480, max_y=480), rule="ndvi_default", noise=noise),
            ZoneSpec(
                id="B", bbox=BBox(min_x=480, min_y=0, max_x=960, max_y=480), rule="ndwi_default",
                band_ranges={"Green": (0.02, 0.2), "NIR": (0.1, 0.6)},
            ),
        ],
    )


# ----------------------------------------------------------------------
# --- SVR1 CONTAINER ---
# ----------------------------------------------------------------------

def test_write_read_preserves_values(tmp_path):
    """#1 Success: a 2x2 raster written and read back keeps its values, header and nodata."""
    raster = make_raster({"B1": [[1, 2], [3, 4]]}, origin=(10.0, 20.0), pixel=30.0, nodata=-9999.0)
    path = str(tmp_path / "r.svr")
    raster_services.write_raster(raster, path)
    back = raster_services.read_raster(path)

    assert back.band_names == ["B1"]
    assert back.band("B1").tolist() == [[1.0, 2.0], [3.0, 4.0]]
    assert back.transform == raster.transform
    assert back.nodata == -9999.0


def test_payload_size_for_four_bands():
    """#2 Success: a 4-band 256x256 raster carries 4*256*256*4 payload bytes after the header."""
    raster = make_raster({b: np.zeros((256, 256)) for b in ("Blue", "Green", "Red", "NIR")})
    blob = raster_services.encode_raster(raster)
    header_len = int.from_bytes(blob[9:13], "little")
    assert blob[:9] == b"SVRASTER\n"
    assert len(blob) - 13 - header_len == 4 * 256 * 256 * 4


def test_bad_magic_is_reported():
    """#3 Failure: a blob starting with XXRASTER is rejected as bad magic."""
    blob = raster_services.encode_raster(make_raster({"B": [[1.0]]}))
    with pytest.raises(BadMagicError) as exc:
        raster_services.decode_raster(b"XXRASTER\n" + blob[9:])
    assert "bad magic" in str(exc.value)


def test_truncated_and_trailing_payloads_are_distinct():
    """#4 Failure: missing payload bytes and extra payload bytes raise different errors."""
    blob = raster_services.encode_raster(make_raster({"B": [[1.0, 2.0]]}))
    with pytest.raises(TruncatedPayloadError):
        raster_services.decode_raster(blob[:-1])
    with pytest.raises(PayloadLengthMismatchError):
        raster_services.decode_raster(blob + b"\x00")


def test_read_missing_file(tmp_path):
    """#5 Failure: reading a path that does not exist is a data error."""
    with pytest.raises(DataError):
        raster_services.read_raster(str(tmp_path / "nope.svr"))


def test_mask_rejects_other_values():
    """#6 Failure: mask values outside {0, 1, 255} fail validation."""
    with pytest.raises(ValidationError):
        Mask.from_array(np.array([[0, 2]], dtype=np.uint8))


# ----------------------------------------------------------------------
# --- CROP AND UPSAMPLE ---
# ----------------------------------------------------------------------

def test_crop_full_extent_is_identity():
    """#7 Success: cropping to the raster's own extent returns the same pixels and transform."""
    data = np.arange(12, dtype=np.float32).reshape(3, 4)
    raster = make_raster({"B": data}, origin=(0.0, 3.0))
    out = raster_services.crop(raster, raster.extent())
    assert np.array_equal(out.band("B"), data)
    assert out.transform == raster.transform


def test_crop_left_half():
    """#8 Success: a 10x10 raster cropped to its left half is 5 wide and 10 high."""
    raster = make_raster({"B": np.arange(100).reshape(10, 10)}, origin=(0.0, 10.0))
    out = raster_services.crop(raster, BBox(min_x=0, min_y=0, max_x=5, max_y=10))
    assert (out.width, out.height) == (5, 10)
    assert np.array_equal(out.band("B"), raster.band("B")[:, :5])


def test_crop_shifts_origin():
    """#9 Success: with pixel size 30, a bbox x in [300, 600) gives origin_x 300 and width 10."""
    raster = make_raster({"B": np.ones((10, 30))}, origin=(0.0, 0.0), pixel=30.0)
    out = raster_services.crop(raster, BBox(min_x=300, min_y=-300, max_x=600, max_y=0))
    assert out.transform.origin_x == 300.0
    assert out.width == 10


def test_crop_outside_extent():
    """#10 Failure: a bbox with no overlap raises a geometry error."""
    raster = make_raster({"B": np.ones((4, 4))}, origin=(0.0, 4.0))
    with pytest.raises(GeometryError):
        raster_services.crop(raster, BBox(min_x=100, min_y=100, max_x=200, max_y=200))


def test_bilinear_pixel_center_convention():
    """#11 Success: [0, 1] upsampled by 2 gives [0, 0.25, 0.75, 1]."""
    raster = make_raster({"B": [[0.0, 1.0]]})
    out = raster_services.bilinear_upsample(raster, 2)
    assert (out.width, out.height) == (4, 2)
    assert np.allclose(out.band("B")[0], [0.0, 0.25, 0.75, 1.0])
    assert out.transform.pixel_size_x == 0.5


def test_bilinear_factor_four_and_bounds():
    """#12 Success: factor 4 multiplies the pixel count by 16 and never overshoots the input range."""
    rng = np.random.default_rng(3)
    data = rng.uniform(-2.0, 5.0, size=(5, 7))
    out = raster_services.bilinear_upsample(make_raster({"B": data}), 4)
    assert out.width * out.height == 16 * 5 * 7
    band = out.band("B")
    assert band.min() >= data.min() - 1e-5
    assert band.max() <= data.max() + 1e-5


def test_bilinear_constant_band():
    """#13 Success: a constant band stays constant."""
    out = raster_services.bilinear_upsample(make_raster({"B": np.full((3, 3), 0.4)}), 3)
    assert np.allclose(out.band("B"), 0.4)


def test_bilinear_zero_factor():
    """#14 Failure: factor 0 is rejected."""
    with pytest.raises(DataError):
        raster_services.bilinear_upsample(make_raster({"B": [[1.0]]}), 0)


# ----------------------------------------------------------------------
# --- TILING AND SPLIT ---
# ----------------------------------------------------------------------

@pytest.mark.parametrize("width,height,expected", [(8306, 5434, (21, 32)), (9046, 5709, (22, 35)), (256, 256, (1, 1))])
def test_tile_grid_drops_partials(width, height, expected):
    """#15 Success: scene sizes give 672, 770 and 1 full tiles."""
    assert raster_services.tile_grid_shape(width, height, 256, drop_partial=True) == expected


def test_tile_keeps_partials_padded():
    """#16 Success: without drop_partial, edge tiles are padded with nodata."""
    raster = make_raster({"B": np.ones((3, 5))})
    mask = Mask.from_array(np.ones((3, 5), dtype=np.uint8))
    tiles = raster_services.tile(raster, mask, 2, drop_partial=False)
    assert len(tiles.tiles) == 2 * 3
    corner = next(t for t in tiles.tiles if t.key == (1, 2))
    assert corner.mask.values.tolist() == [[1, 255], [255, 255]]


@pytest.mark.parametrize("rows,cols,expected", [(21, 32, (538, 67, 67)), (22, 35, (616, 77, 77))])
def test_split_floor_counts(rows, cols, expected):
    """#17 Success: 672 and 770 tiles split 80/10/10 with the remainder in train."""
    split = raster_services.split_dataset(zero_tileset(rows, cols, tile_size=1), (0.8, 0.1, 0.1), seed=7)
    counts = split.counts()
    assert (counts[Split.TRAIN], counts[Split.VAL], counts[Split.TEST]) == expected
    assert len(split.split_assignment) == rows * cols


def test_split_is_deterministic():
    """#18 Success: the same seed reproduces the assignment, another seed changes it."""
    tiles = zero_tileset(5, 6)
    a = raster_services.split_dataset(tiles, seed=11).split_assignment
    b = raster_services.split_dataset(tiles, seed=11).split_assignment
    c = raster_services.split_dataset(tiles, seed=12).split_assignment
    assert a == b
    assert a != c


def test_split_few_tiles_warns(mocker):
    """#19 Edge: with fewer than 3 tiles everything goes to train and a warning is logged."""
    mock_logger = mocker.patch("services.raster_services.logger")
    split = raster_services.split_dataset(zero_tileset(1, 2), seed=1)
    assert set(split.split_assignment.values()) == {Split.TRAIN}
    mock_logger.warning.assert_called_once()


def test_split_bad_fractions():
    """#20 Failure: fractions that do not sum to 1 are rejected."""
    with pytest.raises(DataError):
        raster_services.split_dataset(zero_tileset(2, 2), (0.5, 0.3, 0.3))


def test_split_counts_survive_float_products():
    """#31 Edge: 29% of 100 tiles is 29 even though 0.29 * 100 is just below 29 in floating point."""
    split = raster_services.split_dataset(zero_tileset(10, 10, tile_size=1), (0.42, 0.29, 0.29), seed=3)
    counts = split.counts()
    assert (counts[Split.TRAIN], counts[Split.VAL], counts[Split.TEST]) == (42, 29, 29)


# ----------------------------------------------------------------------
# --- RASTERIZATION ---
# ----------------------------------------------------------------------

def grid_10x10():
    return make_raster({"B": np.zeros((10, 10))}, origin=(0.0, 10.0))


def test_rasterize_square():
    """#21 Success: a square over pixel centres (0..4)^2 sets exactly 25 pixels."""
    square = Polygon(exterior=[(0, 5), (5, 5), (5, 10), (0, 10)])
    mask = raster_services.rasterize_polygons(PolygonSet(polygons=[square]), grid_10x10())
    assert int(mask.values.sum()) == 25
    assert mask.values[:5, :5].all()


def test_rasterize_empty_and_self_hole():
    """#22 Success: no polygons, or a hole equal to the exterior, burn nothing."""
    ring = [(1, 1), (8, 1), (8, 8), (1, 8)]
    empty = raster_services.rasterize_polygons(PolygonSet(), grid_10x10())
    cancelled = raster_services.rasterize_polygons(
        PolygonSet(polygons=[Polygon(exterior=ring, holes=[ring])]), grid_10x10()
    )
    assert int(empty.values.sum()) == 0
    assert int(cancelled.values.sum()) == 0


def test_rasterize_matches_point_tests():
    """#23 Success: the burned mask agrees with a per-pixel point-in-polygon check."""
    poly = Polygon(exterior=[(0.3, 0.2), (9.1, 1.7), (6.4, 9.6), (2.2, 6.1)], holes=[[(4, 3), (6, 3), (5, 5)]])
    grid = grid_10x10()
    mask = raster_services.rasterize_polygons(PolygonSet(polygons=[poly]), grid)
    xs, ys = grid.pixel_centers()
    for r, y in enumerate(ys):
        for c, x in enumerate(xs):
            assert mask.values[r, c] == int(raster_services.point_in_polygon(x, y, poly))


def test_rasterize_degenerate_ring():
    """#24 Failure: a ring with fewer than 3 distinct vertices names the polygon."""
    good = Polygon(exterior=[(0, 0), (1, 0), (1, 1)])
    bad = Polygon(exterior=[(0, 0), (1, 1), (0, 0)])
    with pytest.raises(GeometryError) as exc:
        raster_services.rasterize_polygons(PolygonSet(polygons=[good, bad]), grid_10x10())
    assert "polygon 1" in str(exc.value)


# ----------------------------------------------------------------------
# --- SYNTHETIC SCENES ---
# ----------------------------------------------------------------------

def test_synthetic_scene_is_deterministic():
    """#25 Success: the same seed gives a bit-identical scene and truth."""
    a = generate_synthetic_scene(two_zone_spec(), seed=5)
    b = generate_synthetic_scene(two_zone_spec(), seed=5)
    for band in a.raster.band_names:
        assert np.array_equal(a.raster.band(band), b.raster.band(band))
    assert np.array_equal(a.truth.values, b.truth.values)
    assert a.raster.band_names == ["Blue", "Green", "Red", "NIR"]


def test_synthetic_truth_follows_zone_rule():
    """#26 Success: without noise the NDVI rule reproduces zone A's truth exactly."""
    scene = generate_synthetic_scene(two_zone_spec(), seed=1)
    predicted = classify_raster(scene.raster, builtin_ruleset("ndvi_default"))
    zone_a = np.zeros_like(scene.truth.values)
    zone_a[:, :16] = scene.truth.values[:, :16]
    pred_a = np.zeros_like(zone_a)
    pred_a[:, :16] = predicted.values[:, :16]
    summary = summarize(confusion(Mask.from_array(pred_a), Mask.from_array(zone_a)))
    assert summary.f1 == pytest.approx(1.0)


def test_synthetic_noise_half_flips():
    """#27 Edge: label noise 0.5 leaves the rule classifier near 50% accuracy on that zone."""
    spec = SceneSpec(
        width=60, height=60, pixel_size=1.0,
        zones=[ZoneSpec(id="A", bbox=BBox(min_x=0, min_y=0, max_x=60, max_y=60), rule="ndvi_default", noise=0.5)],
    )
    scene = generate_synthetic_scene(spec, seed=2)
    predicted = classify_raster(scene.raster, builtin_ruleset("ndvi_default"))
    accuracy = float((predicted.values == scene.truth.values).mean())
    assert accuracy == pytest.approx(0.5, abs=0.05)


def test_synthetic_overlapping_zones():
    """#28 Failure: overlapping zone rectangles are rejected."""
    spec = SceneSpec(
        width=10, height=10, pixel_size=1.0,
        zones=[
            ZoneSpec(id="A", bbox=BBox(min_x=0, min_y=0, max_x=6, max_y=10)),
            ZoneSpec(id="B", bbox=BBox(min_x=5, min_y=0, max_x=10, max_y=10)),
        ],
    )
    with pytest.raises(GeometryError):
        generate_synthetic_scene(spec, seed=0)


def test_synthetic_noise_keeps_nodata(mocker):
    """#29 Edge: label noise never turns a nodata label into a class value."""
    spec = SceneSpec(
        width=8, height=8, pixel_size=1.0,
        zones=[ZoneSpec(id="A", bbox=BBox(min_x=0, min_y=0, max_x=8, max_y=8), noise=0.9)],
    )
    labels = np.zeros((8, 8), dtype=np.uint8)
    labels[:4] = MASK_NODATA
    mocker.patch("services.scene_services.classify_raster", return_value=Mask.from_array(labels))
    scene = generate_synthetic_scene(spec, seed=4)
    assert (scene.truth.values[:4] == MASK_NODATA).all()
    assert set(np.unique(scene.truth.values[4:])) <= {0, 1}
    assert (scene.truth.values[4:] == 1).any()


@pytest.mark.parametrize("noise", [1.0, -0.1])
def test_zone_noise_range(noise):
    """#30 Failure: zone label noise must lie in [0, 1)."""
    with pytest.raises(ValidationError):
        ZoneSpec(id="A", bbox=BBox(min_x=0, min_y=0, max_x=1, max_y=1), noise=noise)
