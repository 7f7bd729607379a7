import json

import numpy as np
import pytest

from models.index_models import IndexBand
from models.raster_models import Band, GeoTransform, Raster
from services import index_services, rule_services
from utility.exceptions import ClassificationError, DataError, MissingBandError, RuleSetValidationError

# --- HELPERS ---

def scene(**bands):
    arrays = {name: np.asarray(values, dtype=np.float32) for name, values in bands.items()}
    first = next(iter(arrays.values()))
    return Raster(
        width=first.shape[1], height=first.shape[0],
        bands=tuple(Band(name=n, data=a) for n, a in arrays.items()),
        transform=GeoTransform(origin_x=0.0, origin_y=0.0, pixel_size_x=30.0, pixel_size_y=30.0),
    )


def index_band(index_id, values, nodata=None):
    values = np.asarray(values, dtype=np.float64)
    return IndexBand(
        index_id=index_id, values=values,
        nodata=np.zeros(values.shape, dtype=bool) if nodata is None else nodata,
    )


# ----------------------------------------------------------------------
# --- NORMALIZED DIFFERENCE ---
# ----------------------------------------------------------------------

def test_equal_bands_give_zero():
    """#1 Success: identical non-zero bands give 0 everywhere."""
    a = np.full((2, 3), 0.3)
    band = index_services.normalized_difference(a, a)
    assert np.all(band.values == 0.0)
    assert not band.nodata.any()


def test_direct_arithmetic():
    """#2 Success: a = 0.6 and b = 0.2 give 0.5."""
    band = index_services.normalized_difference(np.array([[0.6]]), np.array([[0.2]]))
    assert band.values[0, 0] == pytest.approx(0.5)


def test_zero_denominator_flags_nodata():
    """#3 Edge: a + b = 0 gives value 0 with the nodata flag set."""
    band = index_services.normalized_difference(np.array([[0.0, 0.4]]), np.array([[0.0, 0.1]]))
    assert band.values[0, 0] == 0.0
    assert band.nodata.tolist() == [[True, False]]


def test_shape_mismatch():
    """#4 Failure: bands of different shapes are rejected."""
    with pytest.raises(DataError):
        index_services.normalized_difference(np.zeros((2, 2)), np.zeros((2, 3)))


def test_antisymmetry_scale_and_range():
    """#5 Success: swapping bands negates the index; scaling both bands changes nothing; values stay in [-1, 1]."""
    rng = np.random.default_rng(0)
    a = rng.uniform(0.01, 1.0, size=(6, 6))
    b = rng.uniform(0.01, 1.0, size=(6, 6))
    ab = index_services.normalized_difference(a, b).values
    ba = index_services.normalized_difference(b, a).values
    scaled = index_services.normalized_difference(a * 7.5, b * 7.5).values
    assert np.allclose(ab, -ba, atol=1e-12)
    assert np.allclose(ab, scaled, atol=1e-12)
    assert ab.min() >= -1.0 and ab.max() <= 1.0


# ----------------------------------------------------------------------
# --- INDEX REGISTRY ---
# ----------------------------------------------------------------------

def test_ndvi_band_order():
    """#6 Success: NIR 0.5 and Red 0.1 give NDVI 0.6667."""
    band = index_services.compute_index(scene(Red=[[0.1]], NIR=[[0.5]]), "ndvi")
    assert band.index_id == "NDVI"
    assert band.values[0, 0] == pytest.approx(0.4 / 0.6, abs=1e-6)


def test_ndwi_band_order():
    """#7 Success: Green 0.4 and NIR 0.1 give NDWI 0.6, and Green = NIR gives 0."""
    band = index_services.compute_index(scene(Green=[[0.4, 0.3]], NIR=[[0.1, 0.3]]), "NDWI")
    assert band.values[0, 0] == pytest.approx(0.6, abs=1e-6)
    assert band.values[0, 1] == 0.0


def test_missing_band_is_named():
    """#8 Failure: an index over a raster without its band names the band."""
    with pytest.raises(MissingBandError) as exc:
        index_services.compute_index(scene(Red=[[0.1]], Green=[[0.2]]), "NDVI")
    assert exc.value.band == "NIR"


def test_unknown_index():
    """#9 Failure: an unregistered index id is a data error."""
    with pytest.raises(DataError):
        index_services.get_index_definition("EVI")


def test_index_band_file(tmp_path):
    """#10 Success: an index band written to disk keeps its values and nodata flags."""
    band = index_services.normalized_difference(np.array([[0.6, 0.0]]), np.array([[0.2, 0.0]]), index_id="NDVI")
    path = str(tmp_path / "ndvi.svr")
    index_services.write_index_band(band, path)
    back = index_services.read_index_band(path)
    assert back.index_id == "NDVI"
    assert back.values[0, 0] == pytest.approx(0.5)
    assert back.nodata.tolist() == [[False, True]]


# ----------------------------------------------------------------------
# --- RULE SETS ---
# ----------------------------------------------------------------------

def test_builtin_ndvi_boundaries():
    """#11 Success: the NDVI rule set has 4 intervals bounded by -1, -0.1, 0.1, 0.73, 1."""
    rs = rule_services.builtin_ruleset("ndvi_default")
    assert rs.boundaries == [-1.0, -0.1, 0.1, 0.73, 1.0]
    assert rs.binary_map["Sparse Wetland Vegetation"] == 1
    assert rs.binary_map["Water"] == 0


def test_builtin_ndwi_boundaries():
    """#12 Success: the NDWI rule set has 2 intervals split at -0.6."""
    rs = rule_services.builtin_ruleset("ndwi_default")
    assert rs.boundaries == [-1.0, -0.6, 1.0]


def test_ndvi_classification():
    """#13 Success: 0.5 and 0.1 are wetland, 0.8 and 1.0 are not, nodata becomes 255."""
    nodata = np.array([[False, False, False, False, True]])
    band = index_band("NDVI", [[0.5, 0.8, 0.1, 1.0, 0.5]], nodata)
    mask = rule_services.classify(band, rule_services.builtin_ruleset("ndvi_default"))
    assert mask.values.tolist() == [[1, 0, 1, 0, 255]]


def test_ndwi_classification():
    """#14 Success: NDWI -0.7 is non-wetland and 0.0 is wetland."""
    mask = rule_services.classify(index_band("NDWI", [[-0.7, 0.0]]), rule_services.builtin_ruleset("ndwi_default"))
    assert mask.values.tolist() == [[0, 1]]


def test_every_value_gets_one_label():
    """#15 Success: a sweep over [-1, 1] lands in a valid interval every time, and repeats identically."""
    rs = rule_services.builtin_ruleset("ndvi_default")
    values = np.linspace(-1.0, 1.0, 401).reshape(1, -1)
    first = rule_services.classify(index_band("NDVI", values), rs)
    second = rule_services.classify(index_band("NDVI", values), rs)
    positions = rule_services.label_indices(values, rs)
    assert positions.min() >= 0 and positions.max() <= 3
    assert np.array_equal(first.values, second.values)


def test_classify_index_mismatch():
    """#16 Failure: an NDWI rule set cannot classify an NDVI band."""
    with pytest.raises(ClassificationError):
        rule_services.classify(index_band("NDVI", [[0.2]]), rule_services.builtin_ruleset("ndwi_default"))


def test_classify_corrupted_values():
    """#17 Failure: values outside [-1, 1] are reported as corrupted input."""
    with pytest.raises(ClassificationError):
        rule_services.classify(index_band("NDVI", [[1.5]]), rule_services.builtin_ruleset("ndvi_default"))


def test_load_overlapping_ruleset(tmp_path):
    """#18 Failure: overlapping intervals are rejected with the offending pair listed."""
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({
        "index": "NDVI",
        "intervals": [{"lo": -1, "hi": 0.2, "label": "low"}, {"lo": 0.1, "hi": 1, "label": "high"}],
        "binary": {"low": 0, "high": 1},
    }))
    with pytest.raises(RuleSetValidationError) as exc:
        rule_services.load_ruleset(str(path))
    assert len(exc.value.pairs) == 1
    assert "overlap" in exc.value.pairs[0]


def test_saved_ruleset_loads_back(tmp_path):
    """#19 Success: a saved built-in rule set loads back with the same intervals and mapping."""
    path = str(tmp_path / "ndwi.json")
    rule_services.save_ruleset(rule_services.builtin_ruleset("ndwi_default"), path)
    loaded = rule_services.resolve_ruleset(path)
    assert loaded.index_id == "NDWI"
    assert loaded.boundaries == [-1.0, -0.6, 1.0]
    assert loaded.binary_map == {"Non-Wetland": 0, "Wetland": 1}


def test_unknown_builtin():
    """#20 Failure: an unknown built-in id is a data error."""
    with pytest.raises(DataError):
        rule_services.builtin_ruleset("evi_default")


@pytest.mark.parametrize("index_id,ruleset,values,expected", [
    ("NDVI", "ndvi_default", [-0.5, 0.0, 0.1, 0.5, 0.73, 0.9], [0, 0, 1, 1, 0, 0]),
    ("NDWI", "ndwi_default", [-0.7, -0.6, 0.0], [0, 1, 1]),
])
def test_interval_edges(index_id, ruleset, values, expected):
    """#21 Success: interval lower bounds are inclusive, so 0.1 and -0.6 fall in the wetland class and 0.73 does not."""
    mask = rule_services.classify(index_band(index_id, [values]), rule_services.builtin_ruleset(ruleset))
    assert mask.values.tolist() == [expected]
