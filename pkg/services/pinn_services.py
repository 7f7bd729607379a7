# svann-interpretation/services/pinn_services.py

import math
from concurrent.futures import ProcessPoolExecutor, as_completed
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from models.network_models import (
    Activation, Architecture, InitKind, InitScheme, LossKind, Network, OptimizerKind, TrainConfig, TrainingHistory,
)
from models.pinn_models import (
    ConditionSample, ErrorCell, HeterogeneityConfig, HeterogeneityReport, LossMode, Model, PDEProblem, PinnLoss,
    SigmoidRule, SolutionConvention, TraceRow, TransportConfig, TransportReport, ZoneProblemSpec,
)
from services.autodiff_services import Tape, derive, forward
from services.network_services import (
    NetworkGraph, build_network_graph, fit_parameters, init_network, network_assignments,
    network_from_assignments, predict,
)
from utility.exceptions import DataError, TapeError
from utility.logging import setup_logger

logger = setup_logger(__name__)

MAX_PARTIAL_ORDER = 2

# --- Partial derivatives ---

class Partials:
    """
    Lazily appends d^k u / d var^k nodes to the tape and caches them, so a residual
    asking for u_x twice shares one subgraph.
    """

    def __init__(
        self, tape: Tape, graph: NetworkGraph, variables: Sequence[str], rule: SigmoidRule = SigmoidRule.CALCULUS
    ):
        self.tape = tape
        self.graph = graph
        self.u = graph.output_ids[0]
        self.coords = dict(zip(variables, graph.input_ids))
        self.variables = list(variables)
        self.rule = rule
        self._cache: Dict[Tuple[str, int], int] = {}

    def __call__(self, var: str, order: int = 1) -> int:
        if var not in self.coords:
            raise TapeError(f"unknown coordinate {var!r}; the problem defines {self.variables}")
        if order < 1 or order > MAX_PARTIAL_ORDER:
            raise TapeError(f"partial derivative of order {order} is unavailable (orders 1..{MAX_PARTIAL_ORDER})")
        key = (var, order)
        if key not in self._cache:
            if self.rule == SigmoidRule.SHIFTED:
                if order > 1:
                    raise TapeError("the sigma*(1+sigma) rule only defines first partials")
                self._cache[key] = self._closed_form_first(var)
            elif order == 1:
                self._cache[key] = derive(self.tape, self.u, self.coords[var])
            else:
                self._cache[key] = derive(self.tape, self(var, 1), self.coords[var])
        return self._cache[key]

    def _closed_form_first(self, var: str) -> int:
        arch = self.graph.architecture
        if len(arch.layer_sizes) != 3 or arch.activations != [Activation.SIGMOID, Activation.LINEAR]:
            raise TapeError("the sigma*(1+sigma) rule needs one sigmoid hidden layer and a linear output")
        tape = self.tape
        one = tape.constant(1.0)
        i = self.variables.index(var)
        hidden = self.graph.layer_ids[1]
        w_in = self.graph.weight_ids[0]
        w_out = self.graph.weight_ids[1][0]
        terms = []
        for k, s in enumerate(hidden):
            slope = tape.mul(s, tape.add(one, s))
            terms.append(tape.mul(tape.mul(w_out[k], slope), w_in[k][i]))
        return tape.sum_of(terms)


# --- Loss construction ---

def build_pinn_loss(
    problem: PDEProblem,
    net: Network,
    mode: LossMode = LossMode.SQUARED,
    sigmoid_rule: SigmoidRule = SigmoidRule.CALCULUS,
) -> PinnLoss:
    """
    squared: mean(residual^2) over collocation points + mean(mismatch^2) over condition samples.
    paper_linear: residual + mismatch at the first collocation point and first condition
    sample, unsquared.
    """
    arch = net.architecture
    if arch.n_inputs != problem.dimension:
        raise DataError(
            f"{problem.name}: network takes {arch.n_inputs} inputs but the problem has {problem.dimension} coordinates"
        )
    if arch.n_outputs != 1:
        raise DataError(f"{problem.name}: a PINN approximates one scalar field, network has {arch.n_outputs} outputs")

    tape = Tape()
    coord_ids = [tape.input(f"c_{v}") for v in problem.variables]
    coef_ids = {k: tape.input(f"k_{k}") for k in problem.coefficients}
    graph = build_network_graph(tape, arch, coord_ids, use_bias=net.use_bias)
    partials = Partials(tape, graph, problem.variables, sigmoid_rule)
    residual_id = problem.residual(tape, graph.output_ids[0], partials, coef_ids)

    cond_ids = [tape.input(f"b_{v}") for v in problem.variables]
    target_id = tape.input("b_target")
    cond_graph = build_network_graph(tape, arch, cond_ids, use_bias=net.use_bias, shared=graph)
    mismatch = tape.sub(cond_graph.output_ids[0], target_id)

    coords, targets = problem.condition_arrays()
    if mode == LossMode.SQUARED:
        residual_term = tape.mean(tape.pow_int(residual_id, 2))
        condition_term = tape.mean(tape.pow_int(mismatch, 2))
        fixed = {f"c_{v}": problem.collocation[:, i] for i, v in enumerate(problem.variables)}
        fixed.update({f"k_{k}": np.asarray(a, dtype=np.float64) for k, a in problem.coefficients.items()})
        fixed.update({f"b_{v}": coords[:, i] for i, v in enumerate(problem.variables)})
        fixed["b_target"] = targets
    else:
        if problem.collocation.shape[0] > 1 or len(problem.conditions) > 1:
            logger.warning(f"{problem.name}: paper_linear loss uses only the first collocation and condition sample")
        residual_term = residual_id
        condition_term = mismatch
        fixed = {f"c_{v}": float(problem.collocation[0, i]) for i, v in enumerate(problem.variables)}
        fixed.update({f"k_{k}": float(a[0]) for k, a in problem.coefficients.items()})
        fixed.update({f"b_{v}": float(coords[0, i]) for i, v in enumerate(problem.variables)})
        fixed["b_target"] = float(targets[0])
    loss_id = tape.add(residual_term, condition_term)

    logger.debug(f"{problem.name}: {mode.value} loss tape with {len(tape)} nodes")
    return PinnLoss(
        tape=tape, mode=mode, loss_id=loss_id, residual_id=residual_id, residual_term_id=residual_term,
        condition_term_id=condition_term, output_id=graph.output_ids[0], fixed=fixed,
        parameter_names=list(network_assignments(net)),
    )


def evaluate_pinn_loss(pinn_loss: PinnLoss, net: Network) -> Dict[str, float]:
    """Loss and its two terms for the given network parameters."""
    values = forward(pinn_loss.tape, {**pinn_loss.fixed, **network_assignments(net)})
    return {
        "loss": float(values[pinn_loss.loss_id]),
        "residual_term": float(values[pinn_loss.residual_term_id]),
        "condition_term": float(values[pinn_loss.condition_term_id]),
    }


def residual_values(pinn_loss: PinnLoss, net: Network) -> np.ndarray:
    values = forward(pinn_loss.tape, {**pinn_loss.fixed, **network_assignments(net)})
    return np.atleast_1d(np.asarray(values[pinn_loss.residual_id], dtype=np.float64))


def fit_pinn(
    pinn_loss: PinnLoss,
    net: Network,
    learning_rate: float,
    epochs: int,
    optimizer: OptimizerKind = OptimizerKind.ADAM,
    lr_decay: float = 1.0,
    context: str = "",
) -> Tuple[Network, TrainingHistory]:
    """Zero epochs returns the network unchanged with an empty history."""
    config = TrainConfig(
        learning_rate=learning_rate, epochs=max(epochs, 1), loss=LossKind.CUSTOM, optimizer=optimizer,
        use_bias=net.use_bias, seed=net.seed or 0, lr_decay=lr_decay,
    )
    params, history = fit_parameters(
        pinn_loss.tape, pinn_loss.loss_id, network_assignments(net), pinn_loss.fixed, config,
        epochs=epochs, context=context,
    )
    return network_from_assignments(net.architecture, params, net.use_bias, net.seed), history


# --- Worked transport example ---

def _sig(z: float) -> float:
    return 1.0 / (1.0 + math.exp(-z))


def _worked_state(w: List[float], x: float, t: float, velocity: float) -> Tuple[float, float, List[float]]:
    """Prediction, loss and the six closed-form gradients of the hand-worked example."""
    w1, w2, w3, w4, w5, w6 = w
    f13 = _sig(w1 * x + w3 * t)
    f24 = _sig(w2 * x + w4 * t)
    f1 = _sig(w1 * x)
    f2 = _sig(w2 * x)
    a13 = velocity * w1 + w3
    a24 = velocity * w2 + w4

    y_hat = w5 * f13 + w6 * f24
    loss = (
        w5 * f13 * (1 + f13) * a13 + w6 * f24 * (1 + f24) * a24
        + f1 * w5 + f2 * w6 - x * math.exp(-x * x)
    )
    g1 = (x * w5 * a13 * f13 * (1 + f13) ** 2
          + w5 * f13 * (1 + f13) * (x * a13 * f13 + velocity)
          + x * w5 * f1 * (1 + f1))
    g2 = (x * w6 * a24 * f24 * (1 + f24) ** 2
          + w6 * f24 * (1 + f24) * (x * a24 * f24 + velocity)
          + x * w6 * f2 * (1 + f2))
    g3 = t * w5 * a13 * f13 * (1 + f13) ** 2 + w5 * f13 * (1 + f13) * (t * a13 * f13 + 1)
    g4 = t * w6 * a24 * f24 * (1 + f24) ** 2 + w6 * f24 * (1 + f24) * (t * a24 * f24 + 1)
    g5 = f13 * (1 + f13) * a13 + f1
    g6 = f24 * (1 + f24) * a24 + f2
    return y_hat, loss, [g1, g2, g3, g4, g5, g6]


def run_paper_trace(
    iterations: int,
    learning_rate: float = 0.1,
    x: float = 0.1,
    t: float = 0.1,
    velocity: float = 3.0,
    initial_weight: float = 0.5,
) -> List[TraceRow]:
    """
    Replays the hand-worked weight updates: w1..w4 move by lr * dL/dw * x, w5 and w6 by
    lr * dL/dw * (their hidden unit's activation). Updates descend.
    Row 0 is the initial state; row k follows k updates.
    """
    if iterations < 0:
        raise DataError(f"iterations must be >= 0, got {iterations}")
    w = [initial_weight] * 6
    rows: List[TraceRow] = []
    for loop in range(iterations + 1):
        y_hat, loss, grads = _worked_state(w, x, t, velocity)
        rows.append(TraceRow(loop=loop, w1=w[0], w2=w[1], w3=w[2], w4=w[3], w5=w[4], w6=w[5], y_hat=y_hat, loss=loss))
        if loop == iterations:
            break
        h13 = _sig(w[0] * x + w[2] * t)
        h24 = _sig(w[1] * x + w[3] * t)
        factors = [x, x, x, x, h13, h24]
        w = [wi - learning_rate * g * f for wi, g, f in zip(w, grads, factors)]
    logger.info(f"Worked trace: {iterations} updates at lr={learning_rate}, final loss {rows[-1].loss:.5f}")
    return rows


def worked_transport_problem(x: float = 0.1, t: float = 0.1, velocity: float = 3.0) -> PDEProblem:
    """Single-sample transport problem used by the paper_linear loss mode."""
    return PDEProblem(
        name="transport-sample",
        variables=["x", "t"],
        bounds=[(min(0.0, x), max(1.0, x)), (min(0.0, t), max(0.5, t))],
        collocation=np.array([[x, t]]),
        conditions=[ConditionSample(coords=(x, 0.0), target=x * math.exp(-x * x))],
        residual=_transport_residual(velocity),
    )


def toy_network(weight: float = 0.5) -> Network:
    """[2, 2, 1] sigmoid/linear net without biases; W0 = [[w1, w3], [w2, w4]], W1 = [[w5, w6]]."""
    arch = Architecture.dense([2, 2, 1], Activation.SIGMOID, Activation.LINEAR)
    return init_network(arch, InitScheme.constant(weight), use_bias=False)


# --- Transport equation ---

def exact_transport(x, t, velocity: float = 3.0, convention: SolutionConvention = SolutionConvention.DECAYING):
    """u(x, t) = u0(x - v t) with u0(s) = s exp(-s^2) (decaying) or s exp(+s^2) (as printed)."""
    s = np.asarray(x, dtype=np.float64) - velocity * np.asarray(t, dtype=np.float64)
    sign = -1.0 if SolutionConvention(convention) == SolutionConvention.DECAYING else 1.0
    u = s * np.exp(sign * s * s)
    return float(u) if np.ndim(u) == 0 else u


def _transport_residual(velocity: float):
    def residual(tape: Tape, u: int, partials: Partials, coefficients: Dict[str, int]) -> int:
        return tape.add(partials("t"), tape.mul(tape.constant(velocity), partials("x")))
    return residual


def _centers(lo: float, hi: float, n: int) -> np.ndarray:
    return lo + (np.arange(n) + 0.5) * (hi - lo) / n


def transport_problem(config: TransportConfig) -> PDEProblem:
    """u_t + v u_x = 0 with the initial profile at t = t0 and inflow values at x = x0."""
    (x0, x1), (t0, t1) = config.x_range, config.t_range
    xs = _centers(x0, x1, config.collocation_x)
    ts = _centers(t0, t1, config.collocation_t)
    grid_x, grid_t = np.meshgrid(xs, ts, indexing="ij")
    collocation = np.column_stack([grid_x.ravel(), grid_t.ravel()])

    conditions = [
        ConditionSample(coords=(float(x), t0), target=exact_transport(float(x), t0, config.velocity))
        for x in np.linspace(x0, x1, config.initial_points)
    ]
    if config.boundary_points:
        inflow = x0 if config.velocity >= 0 else x1
        for t in np.linspace(t0, t1, config.boundary_points + 1)[1:]:
            conditions.append(ConditionSample(coords=(inflow, float(t)), target=exact_transport(inflow, float(t), config.velocity)))

    return PDEProblem(
        name="transport", variables=["x", "t"], bounds=[config.x_range, config.t_range],
        collocation=collocation, conditions=conditions, residual=_transport_residual(config.velocity),
    )


def solve_transport(config: Optional[TransportConfig] = None) -> Tuple[Network, TransportReport]:
    config = config or TransportConfig()
    arch = Architecture.dense([2, *config.hidden_layers, 1], config.activation, Activation.LINEAR)
    net = init_network(arch, InitScheme(kind=InitKind.XAVIER), seed=config.seed, use_bias=True)
    problem = transport_problem(config)
    pinn_loss = build_pinn_loss(problem, net)
    logger.info(
        f"Transport solve: {problem.collocation.shape[0]} collocation points, {len(problem.conditions)} "
        f"condition samples, {net.parameter_count()} parameters, {config.epochs} epochs"
    )

    trained, history = fit_pinn(
        pinn_loss, net, config.learning_rate, config.epochs, config.optimizer, config.lr_decay, context="transport: ",
    )

    xs = np.linspace(*config.x_range, config.eval_nx)
    ts = np.linspace(*config.t_range, config.eval_nt)
    grid_x, grid_t = np.meshgrid(xs, ts, indexing="ij")
    features = np.column_stack([grid_x.ravel(), grid_t.ravel()])
    err = predict(trained, features)[:, 0] - exact_transport(features[:, 0], features[:, 1], config.velocity)

    terms = evaluate_pinn_loss(pinn_loss, trained)
    residual = residual_values(pinn_loss, trained)
    report = TransportReport(
        rmse=float(np.sqrt(np.mean(err ** 2))),
        max_abs_error=float(np.max(np.abs(err))),
        final_loss=terms["loss"],
        residual_mean_abs=float(np.mean(np.abs(residual))),
        residual_rms=float(np.sqrt(np.mean(residual ** 2))),
        epochs=config.epochs,
        collocation_points=int(problem.collocation.shape[0]),
        eval_points=int(features.shape[0]),
        loss_history=history.losses,
    )
    logger.info(f"Transport solve: RMSE {report.rmse:.5f}, max error {report.max_abs_error:.5f}")
    return trained, report


# --- Zonal heterogeneity ---

def zone_exact(spec: ZoneProblemSpec, x):
    """Q = A + B exp(-x) + b x solves Q'' + Q' = b with Q(0) = left, Q(1) = right."""
    b = spec.forcing
    B = (spec.right - b - spec.left) / (math.exp(-1.0) - 1.0)
    A = spec.left - B
    return A + B * np.exp(-np.asarray(x, dtype=np.float64)) + b * np.asarray(x, dtype=np.float64)


def _zone_residual(tape: Tape, u: int, partials: Partials, coefficients: Dict[str, int]) -> int:
    return tape.sub(tape.add(partials("x", 2), partials("x", 1)), coefficients["b"])


def zone_problem(spec: ZoneProblemSpec, n_points: int) -> PDEProblem:
    return PDEProblem(
        name=spec.name, variables=["x"], bounds=[(0.0, 1.0)],
        collocation=_centers(0.0, 1.0, n_points),
        conditions=[ConditionSample(coords=(0.0,), target=spec.left), ConditionSample(coords=(1.0,), target=spec.right)],
        coefficients={"b": np.full(n_points, spec.forcing)},
        residual=_zone_residual,
    )


def pooled_problem(specs: Sequence[ZoneProblemSpec], n_points: int) -> PDEProblem:
    """Every zone's collocation points and conditions in one problem, each point keeping its zone's forcing."""
    parts = [zone_problem(s, n_points) for s in specs]
    return PDEProblem(
        name="pooled", variables=["x"], bounds=[(0.0, 1.0)],
        collocation=np.vstack([p.collocation for p in parts]),
        conditions=[c for p in parts for c in p.conditions],
        coefficients={"b": np.concatenate([p.coefficients["b"] for p in parts])},
        residual=_zone_residual,
    )


def _run_seed(config: HeterogeneityConfig, seed: int) -> List[ErrorCell]:
    arch = Architecture.dense([1, *config.hidden_layers, 1], config.activation, Activation.LINEAR)
    start = init_network(arch, InitScheme(kind=InitKind.XAVIER), seed=seed, use_bias=True)
    zone_a, zone_b = config.zones
    problems = {
        Model.M1: zone_problem(zone_a, config.collocation_points),
        Model.M2: zone_problem(zone_b, config.collocation_points),
        Model.M3: pooled_problem(config.zones, config.collocation_points),
    }
    grid = np.linspace(0.0, 1.0, config.eval_points)
    cells: List[ErrorCell] = []
    for model, problem in problems.items():
        trained, _ = fit_pinn(
            build_pinn_loss(problem, start), start, config.learning_rate, config.epochs,
            lr_decay=config.lr_decay, context=f"seed {seed} {model.value}: ",
        )
        q_hat = predict(trained, grid.reshape(-1, 1))[:, 0]
        for zone in config.zones:
            error = float(np.mean(np.abs(q_hat - zone_exact(zone, grid))))
            cells.append(ErrorCell(seed=seed, model=model, zone=zone.name, error_avg=error))
    return cells


def heterogeneity_experiment(config: Optional[HeterogeneityConfig] = None) -> HeterogeneityReport:
    """
    Trains M1 on zone 1, M2 on zone 2 and M3 on both pooled, from the same initial
    weights and budget, and reports the mean absolute error of each on each zone.
    """
    config = config or HeterogeneityConfig()
    by_seed: Dict[int, List[ErrorCell]] = {}
    if config.workers > 1 and len(config.seeds) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as ex:
            futures = {ex.submit(_run_seed, config, s): s for s in config.seeds}
            for f in as_completed(futures):
                by_seed[futures[f]] = f.result()
    else:
        for s in config.seeds:
            by_seed[s] = _run_seed(config, s)

    report = HeterogeneityReport(
        zones=[z.name for z in config.zones],
        cells=[c for s in config.seeds for c in by_seed[s]],
    )
    counts = report.postulate_counts()
    logger.info(f"Heterogeneity: pooled model worse than the zone model in {counts} of {len(config.seeds)} seeds")
    return report
