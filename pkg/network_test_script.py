import numpy as np
import pytest
from pydantic import ValidationError

from models.network_models import (
    Activation, Architecture, InitScheme, LossKind, OptimizerKind, TrainConfig, TrainingData,
)
from services import network_services as ns
from services.autodiff_services import Tape, check_gradients
from utility.exceptions import DataError, TrainingDivergedError

# --- HELPERS ---

TOY_ARCH = Architecture(layer_sizes=[2, 2, 1], activations=[Activation.SIGMOID, Activation.LINEAR])


def separable_dataset(n=200, seed=0, margin=0.2):
    rng = np.random.default_rng(seed)
    points = rng.uniform(-1.0, 1.0, size=(4 * n, 2))
    score = points[:, 0] + points[:, 1]
    keep = np.abs(score) > margin
    points, score = points[keep][:n], score[keep][:n]
    return TrainingData(features=points, targets=(score > 0).astype(np.float64))


def logistic_arch():
    return Architecture(layer_sizes=[2, 1], activations=[Activation.SIGMOID])


# ----------------------------------------------------------------------
# --- ARCHITECTURE AND INITIALIZATION ---
# ----------------------------------------------------------------------

def test_constant_init_reproduces_toy_start():
    """#1 Success: constant(0.5) on [2, 2, 1] gives six weights of 0.5 and no biases."""
    net = ns.init_network(TOY_ARCH, InitScheme.constant(0.5))
    assert net.parameter_count() == 6
    assert all(np.all(w == 0.5) for w in net.weights)
    assert net.biases is None


def test_uniform_init_is_seeded():
    """#2 Success: the same seed gives identical uniform weights; another seed differs."""
    a = ns.init_network(TOY_ARCH, InitScheme.uniform(-0.5, 0.5), seed=3)
    b = ns.init_network(TOY_ARCH, InitScheme.uniform(-0.5, 0.5), seed=3)
    c = ns.init_network(TOY_ARCH, InitScheme.uniform(-0.5, 0.5), seed=4)
    assert all(np.array_equal(x, y) for x, y in zip(a.weights, b.weights))
    assert not all(np.array_equal(x, y) for x, y in zip(a.weights, c.weights))
    assert all(np.all((w >= -0.5) & (w <= 0.5)) for w in a.weights)


def test_single_layer_architecture_rejected():
    """#3 Failure: an architecture with one layer is invalid."""
    with pytest.raises(ValidationError):
        Architecture(layer_sizes=[2], activations=[])


def test_uniform_bounds_rejected():
    """#4 Failure: uniform(lo, hi) needs lo < hi."""
    with pytest.raises(ValidationError):
        InitScheme.uniform(0.5, -0.5)


# ----------------------------------------------------------------------
# --- FORWARD PASS ---
# ----------------------------------------------------------------------

def test_toy_forward():
    """#5 Success: the all-0.5 toy network maps (0.1, 0.1) to 0.5250."""
    net = ns.init_network(TOY_ARCH, InitScheme.constant(0.5))
    out = ns.forward_network(net, [0.1, 0.1]).outputs[0]
    assert out == pytest.approx(0.5250, abs=5e-5)


def test_zero_weights_linear_output():
    """#6 Success: all-zero weights with a linear output give 0."""
    net = ns.init_network(TOY_ARCH, InitScheme.constant(0.0))
    assert ns.forward_network(net, [0.3, -2.0]).outputs[0] == 0.0


def test_single_linear_layer_is_dot_product():
    """#7 Success: a [3, 1] linear network equals the inner product of weights and inputs exactly."""
    arch = Architecture(layer_sizes=[3, 1], activations=[Activation.LINEAR])
    net = ns.init_network(arch, InitScheme.uniform(-2.0, 2.0), seed=9)
    x = [0.2, -1.5, 3.0]
    w = net.weights[0][0]
    expected = (w[0] * x[0] + w[1] * x[1]) + w[2] * x[2]
    assert ns.forward_network(net, x).outputs[0] == expected


def test_forward_length_mismatch():
    """#8 Failure: the input vector must match the first layer size."""
    net = ns.init_network(TOY_ARCH, InitScheme.constant(0.5))
    with pytest.raises(DataError):
        ns.forward_network(net, [0.1])


def test_predict_batches():
    """#9 Success: batched prediction returns one row per sample and matches single evaluations."""
    net = ns.init_network(TOY_ARCH, InitScheme.uniform(-1.0, 1.0), seed=1)
    features = np.array([[0.1, 0.1], [0.5, -0.2], [-1.0, 2.0]])
    out = ns.predict(net, features)
    assert out.shape == (3, 1)
    for row, value in zip(features, out[:, 0]):
        assert value == pytest.approx(ns.forward_network(net, list(row)).outputs[0])


# ----------------------------------------------------------------------
# --- TRAINING ---
# ----------------------------------------------------------------------

def test_separable_data_reaches_high_accuracy():
    """#10 Success: a logistic unit separates a linearly separable set after 500 epochs."""
    data = separable_dataset()
    net = ns.init_network(logistic_arch(), InitScheme.uniform(-0.5, 0.5), seed=2, use_bias=True)
    config = TrainConfig(learning_rate=1.0, epochs=500, loss=LossKind.BCE, optimizer=OptimizerKind.SGD, use_bias=True)
    trained, history = ns.train(net, data, config)
    assert ns.accuracy(trained, data) >= 0.99
    assert len(history.losses) == 500
    assert history.losses[-1] < history.losses[0]


def test_zero_learning_rate_keeps_weights():
    """#11 Success: learning rate 0 leaves every weight unchanged."""
    net = ns.init_network(logistic_arch(), InitScheme.uniform(-0.5, 0.5), seed=2, use_bias=True)
    config = TrainConfig(learning_rate=0.0, epochs=3, loss=LossKind.BCE)
    trained, _ = ns.train(net, separable_dataset(n=20), config)
    assert all(np.array_equal(a, b) for a, b in zip(net.weights, trained.weights))
    assert all(np.array_equal(a, b) for a, b in zip(net.biases, trained.biases))


def test_training_is_deterministic():
    """#12 Success: the same seed and config reproduce the loss history exactly with mini-batches."""
    data = separable_dataset(n=60)
    net = ns.init_network(TOY_ARCH, InitScheme.uniform(-0.5, 0.5), seed=5)
    config = TrainConfig(learning_rate=0.05, epochs=20, batch_size=16, loss=LossKind.MSE,
                         optimizer=OptimizerKind.ADAM, seed=11)
    _, first = ns.train(net, data, config)
    _, second = ns.train(net, data, config)
    assert first.losses == second.losses


def test_nan_loss_aborts():
    """#13 Failure: a NaN loss stops training with a diagnostic."""
    data = TrainingData(features=np.array([[np.nan, 0.0], [0.1, 0.2]]), targets=np.array([1.0, 0.0]))
    net = ns.init_network(logistic_arch(), InitScheme.constant(0.1))
    with pytest.raises(TrainingDivergedError) as exc:
        ns.train(net, data, TrainConfig(epochs=2))
    assert "epoch 0" in str(exc.value)


def test_empty_dataset_rejected():
    """#14 Failure: training needs at least one sample."""
    data = TrainingData(features=np.zeros((0, 2)), targets=np.zeros((0, 1)))
    net = ns.init_network(logistic_arch(), InitScheme.constant(0.1))
    with pytest.raises(DataError):
        ns.train(net, data, TrainConfig())


def test_bce_on_linear_output_warns(mocker):
    """#15 Edge: cross-entropy on a non-sigmoid output trains but logs a warning."""
    mock_logger = mocker.patch("services.network_services.logger")
    net = ns.init_network(TOY_ARCH, InitScheme.constant(0.1))
    ns.train(net, separable_dataset(n=10), TrainConfig(learning_rate=0.01, epochs=1, loss=LossKind.MSE))
    mock_logger.warning.assert_not_called()
    ns.train(net, separable_dataset(n=10), TrainConfig(learning_rate=0.0, epochs=1, loss=LossKind.BCE))
    mock_logger.warning.assert_called_once()


def test_loss_gradients_match_differences():
    """#16 Success: gradients of a batched training loss agree with central differences."""
    arch = Architecture(layer_sizes=[2, 3, 1], activations=[Activation.TANH, Activation.SIGMOID])
    net = ns.init_network(arch, InitScheme.uniform(-1.0, 1.0), seed=8, use_bias=True)
    data = separable_dataset(n=12, seed=4)

    tape = Tape()
    f_ids = [tape.input("f0"), tape.input("f1")]
    y_id = tape.input("y0")
    graph = ns.build_network_graph(tape, arch, f_ids, use_bias=True)
    loss_id = ns.build_loss(tape, graph.output_ids, [y_id], LossKind.BCE)

    params = ns.network_assignments(net)
    inputs = {**params, "f0": data.features[:, 0], "f1": data.features[:, 1], "y0": data.targets[:, 0]}
    report = check_gradients(tape, loss_id, inputs, h=1e-5, tolerance=1e-4, wrt=list(params))
    assert report.passed
    assert len(report.entries) == net.parameter_count()


def test_custom_loss_needs_builder():
    """#17 Failure: a custom loss without a builder is rejected."""
    net = ns.init_network(logistic_arch(), InitScheme.constant(0.1))
    with pytest.raises(DataError):
        ns.train(net, separable_dataset(n=10), TrainConfig(loss=LossKind.CUSTOM))


def test_learning_rate_decay_slows_updates():
    """#18 Success: a decaying schedule moves the weights less than a constant one."""
    data = separable_dataset(n=40)
    net = ns.init_network(logistic_arch(), InitScheme.constant(0.0))
    steady, _ = ns.train(net, data, TrainConfig(learning_rate=0.1, epochs=10))
    decayed, _ = ns.train(net, data, TrainConfig(learning_rate=0.1, epochs=10, lr_decay=0.5))
    assert np.abs(decayed.weights[0]).sum() < np.abs(steady.weights[0]).sum()


# ----------------------------------------------------------------------
# --- SERIALIZATION ---
# ----------------------------------------------------------------------

def test_network_document_fields(tmp_path):
    """#19 Success: a saved network carries arch, activations, weights and seed and loads back equal."""
    net = ns.init_network(TOY_ARCH, InitScheme.uniform(-0.5, 0.5), seed=6, use_bias=True)
    doc = ns.network_to_dict(net)
    assert doc["arch"] == [2, 2, 1]
    assert doc["activations"] == ["sigmoid", "linear"]
    assert doc["seed"] == 6

    path = str(tmp_path / "net.json")
    ns.save_network(net, path)
    loaded = ns.load_network(path)
    assert all(np.array_equal(a, b) for a, b in zip(net.weights, loaded.weights))
    assert all(np.array_equal(a, b) for a, b in zip(net.biases, loaded.biases))


def test_invalid_network_document():
    """#20 Failure: a document with inconsistent weights is a data error."""
    with pytest.raises(DataError):
        ns.network_from_dict({"arch": [2, 1], "activations": ["linear"], "weights": [[1.0, 2.0, 3.0]]})
