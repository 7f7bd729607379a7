import json
import os

import numpy as np
import pytest
import imageio.v3 as iio
from pydantic import ValidationError

from models.experiment_models import ExperimentConfig, PreprocessSpec, SceneSpec, ZoneSpec
from models.metric_models import MetricSummary
from models.network_models import Activation, Architecture, InitScheme, LossKind, OptimizerKind, TrainConfig
from models.raster_models import BBox, Band, GeoTransform, Mask, Raster, Tile
from models.svann_models import RegistryEntry, RegistrySpec, Zone, ZonalMode, ZonalRegistry
from services import experiment_services as es
from services import svann_services as sv
from services.network_services import init_network
from services.render_services import mask_to_gray, render_mask_png
from utility.exceptions import DataError, GeometryError

ACCEPTANCE = pytest.mark.skipif(
    not os.getenv("SVANN_ACCEPTANCE"), reason="long acceptance run; set SVANN_ACCEPTANCE=1",
)

# --- HELPERS ---

ARCH = Architecture.dense([4, 3, 1], Activation.SIGMOID, Activation.SIGMOID)


def small_config(upsample=1, epochs=20):
    return ExperimentConfig(
        name="small",
        scene=SceneSpec(
            width=32, height=16, pixel_size=30.0,
            zones=[
                ZoneSpec(id="A", bbox=BBox(min_x=0, min_y=0, max_x=480, max_y=480), rule="ndvi_default"),
                ZoneSpec(
                    id="B", bbox=BBox(min_x=480, min_y=0, max_x=960, max_y=480), rule="ndwi_default",
                    band_ranges={"Green": (0.02, 0.2), "NIR": (0.1, 0.6)},
                ),
            ],
        ),
        preprocess=PreprocessSpec(upsample_factor=upsample, tile_size=4),
        registry=RegistrySpec(hidden=[4]),
        train=TrainConfig(learning_rate=0.05, epochs=epochs, loss=LossKind.BCE, optimizer=OptimizerKind.ADAM, use_bias=True),
    )


def summary(f1, accuracy=0.5):
    return MetricSummary(precision=f1, recall=f1, f1=f1, accuracy=accuracy)


def entry(name, zone, val_f1=None, features=("NDVI",)):
    return RegistryEntry(
        name=name, zone=zone, features=list(features), architecture=ARCH,
        val_metrics=None if val_f1 is None else summary(val_f1),
    )


def rgbn_raster(red, green, blue, nir):
    bands = {"Red": red, "Green": green, "Blue": blue, "NIR": nir}
    return Raster(
        width=len(red[0]), height=len(red),
        bands=tuple(Band(name=n, data=np.asarray(v, dtype=np.float32)) for n, v in bands.items()),
        transform=GeoTransform(origin_x=0.0, origin_y=2.0, pixel_size_x=1.0, pixel_size_y=1.0),
    )


class FixedClassifier:
    """Predicts the same pattern for every tile."""

    def __init__(self, name, pattern):
        self.name = name
        self.pattern = np.array(pattern, dtype=np.uint8)

    def predict_mask(self, raster):
        return Mask.from_array(self.pattern)


def single_tile(truth):
    flat = [[0.1, 0.1], [0.1, 0.1]]
    return Tile(row=0, col=0, raster=rgbn_raster(flat, flat, flat, flat), mask=Mask.from_array(np.array(truth, dtype=np.uint8)))


@pytest.fixture(scope="module")
def small_prepared():
    config = small_config()
    return config, *es.prepare(config, seed=3)


# ----------------------------------------------------------------------
# --- ZONES AND REGISTRY SHAPE ---
# ----------------------------------------------------------------------

def test_tiles_assigned_by_centre(small_prepared):
    """#1 Success: a 32x16 scene in 4-pixel tiles puts 16 tiles in each half."""
    _, tileset, assignment = small_prepared
    assert assignment.counts() == {"A": 16, "B": 16}
    assert assignment.unassigned == []
    assert all(t.col < 4 for t in assignment.tiles["A"])


def test_unclaimed_tiles_are_reported(small_prepared, mocker):
    """#2 Edge: tiles outside every zone are listed as unassigned and logged."""
    _, tileset, _ = small_prepared
    mock_logger = mocker.patch("services.svann_services.logger")
    only_a = sv.assign_zones(tileset, [Zone(id="A", extent=BBox(min_x=0, min_y=0, max_x=480, max_y=480))])
    assert len(only_a.unassigned) == 16
    mock_logger.warning.assert_called_once()


def test_overlapping_zones_rejected(small_prepared):
    """#3 Failure: zone rectangles must be disjoint."""
    _, tileset, _ = small_prepared
    zones = [
        Zone(id="A", extent=BBox(min_x=0, min_y=0, max_x=600, max_y=480)),
        Zone(id="B", extent=BBox(min_x=480, min_y=0, max_x=960, max_y=480)),
    ]
    with pytest.raises(GeometryError):
        sv.assign_zones(tileset, zones)


def test_registry_spec_rules():
    """#4 Failure: per-zone architectures need svann-e, and an index cannot be listed twice."""
    assert RegistrySpec(indices=["ndvi"]).indices == ["NDVI"]
    with pytest.raises(ValidationError):
        RegistrySpec(mode=ZonalMode.SVANN_I, zone_hidden={"A": [4]})
    with pytest.raises(ValidationError):
        RegistrySpec(indices=["NDVI", "ndvi"])
    assert RegistrySpec(mode=ZonalMode.SVANN_E, zone_hidden={"A": [4]}).zone_hidden == {"A": [4]}


def test_registry_mode_constraints():
    """#5 Failure: OSFA holds one unzoned model; svann-i needs one shared architecture."""
    with pytest.raises(ValidationError):
        ZonalRegistry(mode=ZonalMode.OSFA, entries=[entry("a", None), entry("b", None)])
    with pytest.raises(ValidationError):
        ZonalRegistry(mode=ZonalMode.OSFA, entries=[entry("a", "A")])
    other = RegistryEntry(
        name="wide", zone="B", features=["NDVI"],
        architecture=Architecture.dense([4, 6, 1], Activation.SIGMOID, Activation.SIGMOID),
    )
    with pytest.raises(ValidationError):
        ZonalRegistry(mode=ZonalMode.SVANN_I, entries=[entry("a", "A"), other])
    assert ZonalRegistry(mode=ZonalMode.SVANN_E, entries=[entry("a", "A"), other]).zones() == ["A", "B"]


# ----------------------------------------------------------------------
# --- SELECTION ---
# ----------------------------------------------------------------------

def test_select_best_per_zone():
    """#6 Success: each zone keeps its own highest-F1 model."""
    registry = ZonalRegistry(mode=ZonalMode.SVANN_I, entries=[
        entry("A-ndvi", "A", 0.9), entry("A-ndwi", "A", 0.6),
        entry("B-ndvi", "B", 0.4), entry("B-ndwi", "B", 0.8),
    ])
    chosen = sv.select_best(registry)
    assert {z: e.name for z, e in chosen.items()} == {"A": "A-ndvi", "B": "B-ndwi"}


def test_select_best_tie_keeps_first():
    """#7 Edge: equal scores keep the first listed candidate."""
    registry = ZonalRegistry(mode=ZonalMode.SVANN_I, entries=[entry("first", "A", 0.7), entry("second", "A", 0.7)])
    assert sv.select_best(registry)["A"].name == "first"


def test_select_best_osfa_serves_every_zone():
    """#8 Success: the OSFA model is the only candidate in every zone."""
    registry = ZonalRegistry(mode=ZonalMode.OSFA, entries=[entry("osfa", None, 0.5)])
    chosen = sv.select_best(registry, ["A", "B"])
    assert chosen["A"].name == chosen["B"].name == "osfa"


def test_select_best_failures():
    """#9 Failure: unknown criteria, missing metrics and unserved zones are data errors."""
    registry = ZonalRegistry(mode=ZonalMode.SVANN_I, entries=[entry("a", "A", 0.5)])
    with pytest.raises(DataError):
        sv.select_best(registry, criterion="degenerate")
    with pytest.raises(DataError):
        sv.select_best(registry, ["B"])
    with pytest.raises(DataError):
        sv.select_best(ZonalRegistry(mode=ZonalMode.SVANN_I, entries=[entry("a", "A")]))


# ----------------------------------------------------------------------
# --- AGREEMENT AND COMPARISON ---
# ----------------------------------------------------------------------

def test_agreement_rate_counts_valid_pixels():
    """#10 Success: agreement is measured over pixels valid in both masks."""
    a = Mask.from_array(np.array([[1, 0, 1, 255]], dtype=np.uint8))
    b = Mask.from_array(np.array([[1, 1, 255, 0]], dtype=np.uint8))
    assert sv.agreement_rate(a, b) == 0.5
    assert sv.agreement_rate(a, a) == 1.0


def test_agreement_rate_no_overlap(mocker):
    """#11 Edge: masks with no commonly valid pixel agree at 0 with a warning."""
    mock_logger = mocker.patch("services.svann_services.logger")
    a = Mask.from_array(np.array([[1, 255]], dtype=np.uint8))
    b = Mask.from_array(np.array([[255, 0]], dtype=np.uint8))
    assert sv.agreement_rate(a, b) == 0.0
    mock_logger.warning.assert_called_once()


def test_agreement_rate_shape_mismatch():
    """#12 Failure: masks of different shapes cannot be compared."""
    with pytest.raises(DataError):
        sv.agreement_rate(Mask.from_array(np.zeros((1, 2), dtype=np.uint8)), Mask.from_array(np.zeros((2, 2), dtype=np.uint8)))


def test_compare_report_ranking():
    """#13 Success: agreement ranks first, and the F1 gap breaks an agreement tie."""
    tiles = {"A": [single_tile([[1, 1], [1, 1]])]}
    box = FixedClassifier("box", [[1, 1], [0, 0]])
    ones = FixedClassifier("ones", [[1, 1], [1, 1]])
    zeros = FixedClassifier("zeros", [[0, 0], [0, 0]])
    copy = FixedClassifier("copy", [[1, 1], [0, 0]])

    report = sv.compare_report({"A": [box]}, [zeros, ones, copy], tiles)
    ranked = [a.interpretable for a in sorted(report.agreements, key=lambda a: a.rank)]
    assert ranked == ["copy", "ones", "zeros"]
    assert report.interpretation("box", "A").agreement == 1.0
    by_name = {a.interpretable: a for a in report.agreements}
    assert by_name["ones"].agreement == by_name["zeros"].agreement == 0.5
    assert by_name["ones"].f1_gap == pytest.approx(1.0 / 3.0)
    assert len(report.metrics) == 4


def test_compare_report_text_and_frame():
    """#14 Success: the summary names each black box's closest interpretable model."""
    tiles = {"A": [single_tile([[1, 0], [1, 0]])]}
    report = sv.compare_report(
        {"A": [FixedClassifier("box", [[1, 0], [1, 0]])]},
        [FixedClassifier("rule-x", [[1, 0], [1, 0]]), FixedClassifier("rule-y", [[0, 0], [0, 0]])],
        tiles,
    )
    assert "zone A: box -> rule-x" in sv.summary_text(report)
    frame = sv.agreement_frame(report)
    assert list(frame.columns) == sv.AGREEMENT_COLUMNS
    assert frame["rank"].tolist() == [1, 2]


def test_evaluate_needs_truth():
    """#15 Failure: evaluating a zone without tiles is a data error."""
    with pytest.raises(DataError):
        sv.evaluate({"A": [FixedClassifier("box", [[1]])]}, {})


# ----------------------------------------------------------------------
# --- CLASSIFIERS AND TRAINING ---
# ----------------------------------------------------------------------

def test_pixel_classifier_marks_nodata():
    """#16 Edge: a pixel whose index is undefined is nodata in the prediction."""
    raster = rgbn_raster(
        red=[[0.0, 0.1]], green=[[0.2, 0.2]], blue=[[0.1, 0.1]], nir=[[0.0, 0.5]],
    )
    net = init_network(Architecture.dense([4, 1], Activation.SIGMOID, Activation.SIGMOID), InitScheme.constant(0.0))
    mask = sv.PixelClassifier("flat", net, ["NDVI"]).predict_mask(raster)
    assert mask.values.tolist() == [[255, 1]]


def test_training_pixels_capped(small_prepared):
    """#17 Success: the per-zone sample cap draws the same pixels every time."""
    _, _, assignment = small_prepared
    tiles = assignment.tiles["A"]
    first = sv.zone_training_data(tiles, ["NDVI"], seed=1, stream="A", cap=10)
    second = sv.zone_training_data(tiles, ["NDVI"], seed=1, stream="A", cap=10)
    assert first.size == 10
    assert first.features.shape == (10, 4)
    assert np.array_equal(first.features, second.features)


def test_train_zonal_svann_and_osfa(small_prepared):
    """#18 Success: svann-i trains one model per (zone, index); OSFA trains one on everything."""
    config, tileset, assignment = small_prepared
    svann = sv.train_zonal(config.registry, assignment, tileset, config.train, seed=3)
    assert [e.name for e in svann.entries] == ["svann-A-ndvi", "svann-A-ndwi", "svann-B-ndvi", "svann-B-ndwi"]
    assert all(e.val_metrics is not None for e in svann.entries)

    osfa = sv.train_zonal(RegistrySpec(mode=ZonalMode.OSFA, hidden=[4]), assignment, tileset, config.train, seed=3)
    assert [e.name for e in osfa.entries] == ["osfa"]
    assert osfa.entries[0].zone is None
    assert osfa.entries[0].architecture.layer_sizes == [5, 4, 1]


def test_train_zonal_empty_zone(small_prepared):
    """#19 Failure: a zone that owns no training tiles cannot be trained."""
    config, tileset, _ = small_prepared
    zones = [
        Zone(id="A", extent=BBox(min_x=0, min_y=0, max_x=480, max_y=480)),
        Zone(id="far", extent=BBox(min_x=5000, min_y=0, max_x=6000, max_y=480)),
    ]
    assignment = sv.assign_zones(tileset, zones)
    with pytest.raises(DataError):
        sv.train_zonal(config.registry, assignment, tileset, config.train, seed=3)


def test_registry_files(tmp_path):
    """#20 Success: a saved registry writes one network file per entry and loads back the same weights."""
    entries = [
        entry("a", "A", 0.7).model_copy(update={"network": init_network(ARCH, InitScheme.uniform(-1, 1), seed=1), "model_ref": "networks/a.json"}),
        entry("b", "B", 0.6).model_copy(update={"network": init_network(ARCH, InitScheme.uniform(-1, 1), seed=2), "model_ref": "networks/b.json"}),
    ]
    registry = ZonalRegistry(mode=ZonalMode.SVANN_I, entries=entries)
    path = sv.save_registry(registry, str(tmp_path))
    assert os.path.exists(tmp_path / "networks" / "a.json")
    with open(path) as fh:
        assert "weights" not in json.load(fh)["entries"][0]

    loaded = sv.load_registry(path)
    assert [e.name for e in loaded.entries] == ["a", "b"]
    assert loaded.entries[1].val_metrics.f1 == 0.6
    assert np.array_equal(loaded.entries[1].network.weights[0], entries[1].network.weights[0])


# ----------------------------------------------------------------------
# --- RENDERING ---
# ----------------------------------------------------------------------

def test_mask_grayscale_levels(tmp_path):
    """#21 Success: wetland renders 255, non-wetland 0 and nodata 128 in an 8-bit PNG."""
    mask = Mask.from_array(np.array([[1, 0, 255]], dtype=np.uint8))
    assert mask_to_gray(mask).tolist() == [[255, 0, 128]]
    path = str(tmp_path / "mask.png")
    render_mask_png(mask, path)
    image = iio.imread(path)
    assert image.dtype == np.uint8
    assert image.tolist() == [[255, 0, 128]]


# ----------------------------------------------------------------------
# --- EXPERIMENTS ---
# ----------------------------------------------------------------------

def test_upsampling_study_rows():
    """#22 Success: the study reports every zonal model with and without upsampling."""
    frame = es.upsampling_experiment(small_config(upsample=2, epochs=10), seed=3)
    assert list(frame.columns) == es.UPSAMPLING_COLUMNS
    assert frame["model"].tolist() == [f"Up-Model {k}" for k in range(1, 5)] + [f"Model {k}" for k in range(1, 5)]
    assert frame["upsample_factor"].tolist() == [2] * 4 + [1] * 4


def test_svann_vs_osfa_outputs(tmp_path):
    """#23 Success: the comparison scores 3 black boxes against 2 rule models in each zone and writes its files."""
    result = es.svann_vs_osfa(small_config(), seed=3)
    assert set(result.selection) == {"A", "B"}
    assert len(result.comparison) == 2 * 3 * 2
    assert result.selection_frame["selected"].sum() == 2
    es.write_svann_vs_osfa(result, str(tmp_path))
    for name in ("metrics.csv", "comparison.csv", "selection.csv", "summary.txt"):
        assert (tmp_path / name).exists()


def two_zone_config():
    with open(os.path.join(os.path.dirname(__file__), "configs", "two_zone.json")) as fh:
        return ExperimentConfig.model_validate_json(fh.read())


def interprets_zones(result):
    """Selected models follow NDVI in A and NDWI in B, on different index features."""
    features = {z: name.rsplit("-", 1)[1] for z, name in result.selection.items()}
    return (
        result.report.interpretation(result.selection["A"], "A").interpretable == "rule-ndvi"
        and result.report.interpretation(result.selection["B"], "B").interpretable == "rule-ndwi"
        and features["A"] != features["B"]
    )


def test_two_zone_interpretation():
    """#24 Success: the selected model follows the NDVI rule in zone A and the NDWI rule in zone B."""
    config = two_zone_config()
    result = es.svann_vs_osfa(config, seed=config.seed)

    assert result.report.interpretation(result.selection["A"], "A").interpretable == "rule-ndvi"
    assert result.report.interpretation(result.selection["B"], "B").interpretable == "rule-ndwi"
    features = {z: name.rsplit("-", 1)[1] for z, name in result.selection.items()}
    assert features["A"] != features["B"]


@ACCEPTANCE
def test_two_zone_interpretation_across_seeds():
    """#25 Success: the zone interpretation and distinct feature selection hold in at least 9 of seeds 0..9."""
    config = two_zone_config()
    held = sum(interprets_zones(es.svann_vs_osfa(config, seed=seed)) for seed in range(10))
    assert held >= 9
