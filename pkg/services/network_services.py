# svann-interpretation/services/network_services.py

import json
import os
from typing import Any, Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, ValidationError

from models.network_models import (
    Activation, Architecture, InitKind, InitScheme, LossKind, Network, OptimizerKind,
    TrainConfig, TrainingData, TrainingHistory,
)
from services.autodiff_services import Tape, backward, forward
from utility.exceptions import DataError, TrainingDivergedError
from utility.logging import setup_logger
from utility.seeding import numpy_generator
from utility.storage import atomic_write

logger = setup_logger(__name__)

BCE_EPS = 1e-12

# --- Parameter naming ---

def weight_name(layer: int, unit: int, source: int, prefix: str = "") -> str:
    return f"{prefix}W{layer}_{unit}_{source}"


def bias_name(layer: int, unit: int, prefix: str = "") -> str:
    return f"{prefix}b{layer}_{unit}"


def parameter_names(architecture: Architecture, use_bias: bool = False, prefix: str = "") -> List[str]:
    sizes = architecture.layer_sizes
    names = []
    for layer in range(len(sizes) - 1):
        for j in range(sizes[layer + 1]):
            names.extend(weight_name(layer, j, i, prefix) for i in range(sizes[layer]))
    if use_bias:
        for layer in range(len(sizes) - 1):
            names.extend(bias_name(layer, j, prefix) for j in range(sizes[layer + 1]))
    return names


def network_assignments(net: Network, prefix: str = "") -> Dict[str, float]:
    """Current parameter values keyed by their tape input names."""
    values: Dict[str, float] = {}
    for layer, w in enumerate(net.weights):
        for j in range(w.shape[0]):
            for i in range(w.shape[1]):
                values[weight_name(layer, j, i, prefix)] = float(w[j, i])
    if net.biases is not None:
        for layer, b in enumerate(net.biases):
            for j in range(b.shape[0]):
                values[bias_name(layer, j, prefix)] = float(b[j])
    return values


def network_from_assignments(
    architecture: Architecture, params: Mapping[str, float], use_bias: bool, seed: Optional[int], prefix: str = ""
) -> Network:
    sizes = architecture.layer_sizes
    weights = [
        np.array([[params[weight_name(l, j, i, prefix)] for i in range(sizes[l])] for j in range(sizes[l + 1])])
        for l in range(len(sizes) - 1)
    ]
    biases = None
    if use_bias:
        biases = [np.array([params[bias_name(l, j, prefix)] for j in range(sizes[l + 1])]) for l in range(len(sizes) - 1)]
    return Network(architecture=architecture, weights=weights, biases=biases, seed=seed)


# --- Initialization ---

def init_network(
    architecture: Architecture,
    scheme: InitScheme = InitScheme.uniform(-0.5, 0.5),
    seed: int = 0,
    use_bias: bool = False,
) -> Network:
    """Deterministic for a given seed; constant(0.5) reproduces the worked-example start state."""
    rng = numpy_generator(seed, "init")
    sizes = architecture.layer_sizes
    weights = []
    for layer in range(len(sizes) - 1):
        shape = (sizes[layer + 1], sizes[layer])
        if scheme.kind == InitKind.CONSTANT:
            weights.append(np.full(shape, scheme.value, dtype=np.float64))
        elif scheme.kind == InitKind.UNIFORM:
            weights.append(rng.uniform(scheme.low, scheme.high, size=shape))
        else:
            limit = np.sqrt(6.0 / (shape[0] + shape[1]))
            weights.append(rng.uniform(-limit, limit, size=shape))
    biases = [np.zeros(sizes[l + 1]) for l in range(len(sizes) - 1)] if use_bias else None
    return Network(architecture=architecture, weights=weights, biases=biases, seed=seed)


# --- Graph construction ---

class NetworkGraph(BaseModel):
    """Ids of one network evaluation inside a tape."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    tape: Any
    architecture: Architecture
    input_ids: List[int]
    output_ids: List[int]
    weight_ids: List[List[List[int]]]
    bias_ids: Optional[List[List[int]]] = None
    layer_ids: List[List[int]]

    def parameter_ids(self) -> List[int]:
        ids = [i for layer in self.weight_ids for row in layer for i in row]
        if self.bias_ids is not None:
            ids.extend(i for layer in self.bias_ids for i in layer)
        return ids


def _activate(tape: Tape, z: int, activation: Activation) -> int:
    if activation == Activation.SIGMOID:
        return tape.sigmoid(z)
    if activation == Activation.TANH:
        return tape.tanh(z)
    return z


def build_network_graph(
    tape: Tape,
    architecture: Architecture,
    input_ids: Sequence[int],
    use_bias: bool = False,
    shared: Optional[NetworkGraph] = None,
    prefix: str = "",
) -> NetworkGraph:
    """
    Appends one dense forward pass. Passing `shared` reuses that graph's weight nodes,
    so the same network can be evaluated on several sample sets in one tape.
    """
    sizes = architecture.layer_sizes
    if len(input_ids) != sizes[0]:
        raise DataError(f"network expects {sizes[0]} inputs, got {len(input_ids)}")

    if shared is not None:
        weight_ids = shared.weight_ids
        bias_ids = shared.bias_ids
    else:
        weight_ids = [
            [[tape.input(weight_name(l, j, i, prefix)) for i in range(sizes[l])] for j in range(sizes[l + 1])]
            for l in range(len(sizes) - 1)
        ]
        bias_ids = None
        if use_bias:
            bias_ids = [[tape.input(bias_name(l, j, prefix)) for j in range(sizes[l + 1])] for l in range(len(sizes) - 1)]

    activations = list(input_ids)
    layers = [activations]
    for l in range(len(sizes) - 1):
        nxt = []
        for j in range(sizes[l + 1]):
            z = tape.dot(weight_ids[l][j], activations)
            if bias_ids is not None:
                z = tape.add(z, bias_ids[l][j])
            nxt.append(_activate(tape, z, architecture.activations[l]))
        activations = nxt
        layers.append(activations)

    return NetworkGraph(
        tape=tape, architecture=architecture, input_ids=list(input_ids), output_ids=activations,
        weight_ids=weight_ids, bias_ids=bias_ids, layer_ids=layers,
    )


class NetworkEvaluation(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    graph: NetworkGraph
    outputs: List[Any]


def forward_network(net: Network, inputs: Sequence[Any]) -> NetworkEvaluation:
    """Evaluates the network on one input vector (entries may be sample batches) via a fresh tape."""
    if len(inputs) != net.architecture.n_inputs:
        raise DataError(f"input length {len(inputs)} != network input size {net.architecture.n_inputs}")
    tape = Tape()
    input_ids = [tape.input(f"x{i}") for i in range(len(inputs))]
    graph = build_network_graph(tape, net.architecture, input_ids, use_bias=net.use_bias)
    assignments = network_assignments(net)
    assignments.update({f"x{i}": v for i, v in enumerate(inputs)})
    values = forward(tape, assignments)
    return NetworkEvaluation(graph=graph, outputs=[values[o] for o in graph.output_ids])


def predict(net: Network, features: np.ndarray) -> np.ndarray:
    """Batched forward: (N, n_in) features -> (N, n_out) outputs."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[1] != net.architecture.n_inputs:
        raise DataError(f"features must be (N, {net.architecture.n_inputs}), got {features.shape}")
    if features.shape[0] == 0:
        return np.zeros((0, net.architecture.n_outputs))
    evaluation = forward_network(net, [features[:, i] for i in range(features.shape[1])])
    return np.column_stack([np.broadcast_to(o, (features.shape[0],)) for o in evaluation.outputs])


# --- Losses ---

def build_loss(tape: Tape, output_ids: Sequence[int], target_ids: Sequence[int], loss: LossKind) -> int:
    """Mean over samples (and output units) of the per-sample loss."""
    terms = []
    one = tape.constant(1.0)
    eps = tape.constant(BCE_EPS)
    for o, y in zip(output_ids, target_ids):
        if loss == LossKind.MSE:
            terms.append(tape.pow_int(tape.sub(o, y), 2))
        elif loss == LossKind.BCE:
            pos = tape.mul(y, tape.log(tape.add(o, eps)))
            neg = tape.mul(tape.sub(one, y), tape.log(tape.add(tape.sub(one, o), eps)))
            terms.append(tape.neg(tape.add(pos, neg)))
        else:
            raise DataError(f"build_loss cannot construct a {loss.value} loss; pass a custom builder")
    per_sample = tape.sum_of(terms)
    if len(terms) > 1:
        per_sample = tape.div(per_sample, tape.constant(float(len(terms))))
    return tape.mean(per_sample)


# --- Optimization ---

def fit_parameters(
    tape: Tape,
    loss_id: int,
    params: Dict[str, float],
    fixed: Mapping[str, Any],
    config: TrainConfig,
    batches: Optional[Callable[[int], Iterable[Tuple[Dict[str, Any], int]]]] = None,
    epochs: Optional[int] = None,
    context: str = "",
) -> Tuple[Dict[str, float], TrainingHistory]:
    """
    Gradient descent over named scalar parameters on a prebuilt tape. `batches(epoch)`
    yields (sample assignments, batch size); without it every epoch is one full-batch step.
    """
    params = dict(params)
    names = list(params)
    ids = [tape.input_id(n) for n in names]
    n_epochs = config.epochs if epochs is None else epochs
    lr = config.learning_rate

    m = {n: 0.0 for n in names}
    v = {n: 0.0 for n in names}
    step = 0
    history = TrainingHistory()

    for epoch in range(n_epochs):
        total, seen = 0.0, 0
        for b, (samples, size) in enumerate(batches(epoch) if batches else [({}, 1)]):
            assignments = {**fixed, **samples, **params}
            values = forward(tape, assignments)
            loss = float(values[loss_id])
            if not np.isfinite(loss):
                logger.error(f"{context}Loss diverged at epoch {epoch}, batch {b}: {loss}")
                raise TrainingDivergedError(
                    f"{context}loss became {loss} at epoch {epoch}, batch {b}; lower the learning rate"
                )
            grads = backward(tape, loss_id)
            step += 1
            for name, nid in zip(names, ids):
                g = float(grads[nid])
                if config.optimizer == OptimizerKind.ADAM:
                    m[name] = config.beta1 * m[name] + (1 - config.beta1) * g
                    v[name] = config.beta2 * v[name] + (1 - config.beta2) * g * g
                    m_hat = m[name] / (1 - config.beta1 ** step)
                    v_hat = v[name] / (1 - config.beta2 ** step)
                    params[name] -= lr * m_hat / (np.sqrt(v_hat) + config.epsilon)
                else:
                    params[name] -= lr * g
            total += loss * size
            seen += size
        history.losses.append(total / seen)
        lr *= config.lr_decay

    if history.losses:
        logger.info(
            f"{context}Trained {len(names)} parameters for {n_epochs} epochs "
            f"({config.optimizer.value}, lr={config.learning_rate}): loss {history.losses[0]:.6f} -> {history.losses[-1]:.6f}"
        )
    return params, history


def train(
    net: Network,
    dataset: TrainingData,
    config: TrainConfig,
    loss_builder: Optional[Callable[[Tape, NetworkGraph, List[int]], int]] = None,
    context: str = "",
) -> Tuple[Network, TrainingHistory]:
    """Mini-batch (or full-batch) gradient descent with reverse-mode gradients."""
    arch = net.architecture
    if dataset.size == 0:
        raise DataError(f"{context}cannot train on an empty dataset")
    if dataset.features.shape[1] != arch.n_inputs:
        raise DataError(f"{context}dataset has {dataset.features.shape[1]} features, network expects {arch.n_inputs}")
    if dataset.targets.shape[1] != arch.n_outputs:
        raise DataError(f"{context}dataset has {dataset.targets.shape[1]} targets, network emits {arch.n_outputs}")
    if config.loss == LossKind.BCE and arch.activations[-1] != Activation.SIGMOID:
        logger.warning(f"{context}binary cross-entropy on a {arch.activations[-1].value} output layer")

    tape = Tape()
    feature_ids = [tape.input(f"f{i}") for i in range(arch.n_inputs)]
    target_ids = [tape.input(f"y{k}") for k in range(arch.n_outputs)]
    graph = build_network_graph(tape, arch, feature_ids, use_bias=net.use_bias)
    if config.loss == LossKind.CUSTOM:
        if loss_builder is None:
            raise DataError("custom loss selected but no loss builder supplied")
        loss_id = loss_builder(tape, graph, target_ids)
    else:
        loss_id = build_loss(tape, graph.output_ids, target_ids, config.loss)

    rng = numpy_generator(config.seed, "batches")
    n = dataset.size
    batch_size = config.batch_size or n

    def batches(epoch: int):
        order = rng.permutation(n) if batch_size < n else np.arange(n)
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            samples = {f"f{i}": dataset.features[idx, i] for i in range(arch.n_inputs)}
            samples.update({f"y{k}": dataset.targets[idx, k] for k in range(arch.n_outputs)})
            yield samples, len(idx)

    params, history = fit_parameters(
        tape, loss_id, network_assignments(net), {}, config, batches=batches, context=context,
    )
    return network_from_assignments(arch, params, net.use_bias, net.seed), history


def accuracy(net: Network, dataset: TrainingData, threshold: float = 0.5) -> float:
    preds = predict(net, dataset.features) >= threshold
    return float(np.mean(preds == (dataset.targets >= 0.5)))


# --- Serialization ---

def network_to_dict(net: Network) -> dict:
    doc = {
        "arch": list(net.architecture.layer_sizes),
        "activations": [a.value for a in net.architecture.activations],
        "weights": [w.tolist() for w in net.weights],
        "seed": net.seed,
    }
    if net.biases is not None:
        doc["biases"] = [b.tolist() for b in net.biases]
    return doc


def network_from_dict(doc: dict) -> Network:
    try:
        arch = Architecture(layer_sizes=doc["arch"], activations=doc["activations"])
        biases = [np.asarray(b, dtype=np.float64) for b in doc["biases"]] if doc.get("biases") is not None else None
        return Network(
            architecture=arch,
            weights=[np.asarray(w, dtype=np.float64).reshape(arch.layer_sizes[l + 1], arch.layer_sizes[l])
                     for l, w in enumerate(doc["weights"])],
            biases=biases,
            seed=doc.get("seed"),
        )
    except (KeyError, ValueError, ValidationError) as e:
        raise DataError(f"invalid network document: {e}")


def save_network(net: Network, path: str) -> None:
    with atomic_write(path, "w") as fh:
        json.dump(network_to_dict(net), fh, indent=2)


def load_network(path: str) -> Network:
    if not os.path.exists(path):
        raise DataError(f"network file not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        return network_from_dict(json.load(fh))
