import json

import pandas as pd
import pytest

from main import dispatch
from utility.exceptions import EXIT_DATA, EXIT_OK, EXIT_USAGE

# --- HELPERS ---

SMALL_EXPERIMENT = {
    "name": "cli-small",
    "scene": {
        "width": 16, "height": 8, "pixel_size": 30.0,
        "zones": [
            {"id": "A", "bbox": {"min_x": 0, "min_y": 0, "max_x": 240, "max_y": 240}, "rule": "ndvi_default"},
            {"id": "B", "bbox": {"min_x": 240, "min_y": 0, "max_x": 480, "max_y": 240}, "rule": "ndwi_default",
             "band_ranges": {"Green": [0.02, 0.2], "NIR": [0.1, 0.6]}},
        ],
    },
    "preprocess": {"upsample_factor": 2, "tile_size": 4},
    "registry": {"hidden": [3]},
    "train": {"learning_rate": 0.05, "epochs": 5, "loss": "binary_cross_entropy", "optimizer": "adam", "use_bias": True},
    "seed": 4,
}


def write_json(path, doc):
    path.write_text(json.dumps(doc))
    return str(path)


# ----------------------------------------------------------------------
# --- EXIT CODES ---
# ----------------------------------------------------------------------

def test_unknown_flag_is_usage_error():
    """#1 Failure: an unknown flag exits with the usage code."""
    assert dispatch(["pinn", "paper-trace", "--bogus"]) == EXIT_USAGE


def test_missing_command_is_usage_error():
    """#2 Failure: a command group without its subcommand exits with the usage code."""
    assert dispatch(["pinn"]) == EXIT_USAGE


def test_missing_config_is_data_error(tmp_path):
    """#3 Failure: a config path that does not exist exits with the data code."""
    assert dispatch(["synth", "--config", str(tmp_path / "absent.json"), "--out", str(tmp_path)]) == EXIT_DATA


def test_invalid_config_is_data_error(tmp_path):
    """#4 Failure: a config that fails validation exits with the data code."""
    path = write_json(tmp_path / "bad.json", {"scene": {"width": 0, "height": 4, "zones": []}})
    assert dispatch(["synth", "--config", path, "--out", str(tmp_path)]) == EXIT_DATA


def test_version_flag():
    """#5 Success: --version exits cleanly."""
    assert dispatch(["--version"]) == EXIT_OK


# ----------------------------------------------------------------------
# --- PINN AND AD COMMANDS ---
# ----------------------------------------------------------------------

def test_paper_trace_to_stdout(capsys):
    """#6 Success: paper-trace writes the trace CSV to stdout when no output directory is given."""
    assert dispatch(["pinn", "paper-trace", "--iters", "2"]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "loop,w1,w2,w3,w4,w5,w6,y_hat,loss"
    assert len(lines) == 4
    assert lines[1].startswith("0,0.500000,")


def test_paper_trace_negative_iterations():
    """#7 Failure: a negative iteration count exits with the data code."""
    assert dispatch(["pinn", "paper-trace", "--iters", "-1"]) == EXIT_DATA


def test_ad_trace_file(tmp_path):
    """#8 Success: the toy trace lists every node with the output adjoint of 1."""
    assert dispatch(["ad", "trace", "--out", str(tmp_path)]) == EXIT_OK
    frame = pd.read_csv(tmp_path / "ad_trace.csv")
    assert list(frame.columns) == ["node", "kind", "value", "adjoint"]
    assert frame.set_index("node").loc["y_hat", "adjoint"] == 1.0


def test_heterogeneity_command(tmp_path):
    """#9 Success: one seed gives six error cells and a postulate row per zone."""
    path = write_json(tmp_path / "het.json", {"hidden_layers": [3], "collocation_points": 6, "epochs": 5, "eval_points": 11})
    assert dispatch(["pinn", "heterogeneity", "--config", path, "--seeds", "1", "--out", str(tmp_path)]) == EXIT_OK
    assert len(pd.read_csv(tmp_path / "heterogeneity.csv")) == 6
    postulate = pd.read_csv(tmp_path / "postulate.csv")
    assert postulate["zone"].tolist() == ["flat", "stepped"]
    assert postulate["seeds"].tolist() == [1, 1]


def test_demo_transport_outputs(tmp_path):
    """#10 Success: a short transport run writes its report, loss curve and network."""
    path = write_json(tmp_path / "transport.json", {
        "hidden_layers": [4], "collocation_x": 4, "collocation_t": 3, "initial_points": 5,
        "boundary_points": 2, "eval_nx": 5, "eval_nt": 3,
    })
    assert dispatch(["pinn", "demo-transport", "--config", path, "--epochs", "3", "--out", str(tmp_path)]) == EXIT_OK
    assert len(pd.read_csv(tmp_path / "transport_loss.csv")) == 3
    report = pd.read_csv(tmp_path / "transport_report.csv").set_index("metric")
    assert report.loc["eval_points", "value"] == 15
    assert (tmp_path / "transport_network.json").exists()


# ----------------------------------------------------------------------
# --- RASTER AND MODEL COMMANDS ---
# ----------------------------------------------------------------------

@pytest.fixture
def scene_dir(tmp_path):
    config = write_json(tmp_path / "experiment.json", SMALL_EXPERIMENT)
    out = tmp_path / "out"
    assert dispatch(["synth", "--config", config, "--out", str(out)]) == EXIT_OK
    return config, out


def test_synth_outputs(scene_dir):
    """#11 Success: synth writes the scene, its truth mask, a preview and the zone polygons."""
    _, out = scene_dir
    for name in ("scene.svr", "truth_mask.svr", "truth_mask.png", "zones.geojson"):
        assert (out / name).exists()


def test_preprocess_split_table(scene_dir):
    """#12 Success: preprocess writes every tile and a split table that names its zone."""
    config, out = scene_dir
    assert dispatch(["preprocess", "--config", config, "--out", str(out)]) == EXIT_OK
    split = pd.read_csv(out / "split.csv")
    assert len(split) == 32
    assert set(split["split"]) <= {"train", "val", "test"}
    assert set(split["zone"]) == {"A", "B"}
    assert (out / "tiles" / "r000_c000.svr").exists()


def test_index_and_rules(scene_dir):
    """#13 Success: an index band and a rule mask are written from the synthetic scene."""
    _, out = scene_dir
    scene = str(out / "scene.svr")
    assert dispatch(["index", "--input", scene, "--index", "NDVI", "--out", str(out)]) == EXIT_OK
    assert (out / "ndvi.svr").exists()
    assert dispatch(["rules", "--input", scene, "--index", "ndwi", "--out", str(out)]) == EXIT_OK
    assert (out / "ndwi_rules_mask.png").exists()


def test_rules_index_mismatch(scene_dir):
    """#14 Failure: an NDVI rule set cannot serve the NDWI command."""
    _, out = scene_dir
    code = dispatch(["rules", "--input", str(out / "scene.svr"), "--index", "ndwi", "--ruleset", "ndvi_default"])
    assert code == EXIT_DATA


def test_train_evaluate_compare(scene_dir):
    """#15 Success: a trained registry is scored and interpreted from its saved files."""
    config, out = scene_dir
    assert dispatch(["train", "--config", config, "--out", str(out)]) == EXIT_OK
    assert (out / "registry.json").exists()
    assert dispatch(["evaluate", "--config", config, "--out", str(out)]) == EXIT_OK
    metrics = pd.read_csv(out / "metrics.csv")
    assert set(metrics["model"]) >= {"rule-ndvi", "rule-ndwi", "svann-A-ndvi"}
    assert dispatch(["compare", "--config", config, "--out", str(out)]) == EXIT_OK
    assert "rank" in pd.read_csv(out / "comparison.csv").columns
    assert (out / "summary.txt").read_text().startswith("Comparative physical interpretation")
