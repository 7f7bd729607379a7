# svann-interpretation/services/autodiff_services.py

from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from config import settings
from models.autodiff_models import (
    ARITY, GradientCheckEntry, GradientCheckReport, GradientRecord, GraphSpec, Node, NodeKind,
)
from utility.exceptions import TapeError
from utility.logging import setup_logger

logger = setup_logger(__name__)

K = NodeKind


def _sigmoid(z):
    # tanh form: no overflow for large |z|
    return 0.5 * (1.0 + np.tanh(0.5 * z))


_UNARY = {
    K.NEG: np.negative,
    K.EXP: np.exp,
    K.LOG: np.log,
    K.SIN: np.sin,
    K.COS: np.cos,
    K.SIGMOID: _sigmoid,
    K.TANH: np.tanh,
    K.MEAN: np.mean,
}

_BINARY = {
    K.ADD: np.add,
    K.SUB: np.subtract,
    K.MUL: np.multiply,
    K.DIV: np.divide,
}


class Tape:
    """
    Append-only computational graph of scalar operations. A node value may be a
    1-D batch of samples; every node is still a scalar function applied per sample.
    Primal values from the last forward() are cached in `values`.
    """

    def __init__(self):
        self.nodes: List[Node] = []
        self.input_names: Dict[str, int] = {}
        self.values: Optional[List[Any]] = None
        self._constants: Dict[float, int] = {}

    def __len__(self) -> int:
        return len(self.nodes)

    # --- construction ---

    def build(self, kind: Union[str, NodeKind], operands: Sequence[int] = (), param: Any = None) -> int:
        try:
            kind = NodeKind(kind)
        except ValueError:
            raise TapeError(f"unknown node kind {kind!r}")
        operands = tuple(int(o) for o in operands)
        if len(operands) != ARITY[kind]:
            raise TapeError(f"{kind.value} takes {ARITY[kind]} operands, got {len(operands)}")
        for o in operands:
            if o < 0 or o >= len(self.nodes):
                raise TapeError(f"unknown operand id {o} (tape has {len(self.nodes)} nodes)")
        if kind is K.POW_INT and (param is None or int(param) != param):
            raise TapeError(f"pow_int needs an integer power, got {param!r}")
        if kind is K.CONSTANT:
            param = float(param)
        if kind is K.INPUT:
            if not param or param in self.input_names:
                raise TapeError(f"input nodes need a unique name, got {param!r}")

        node = Node(len(self.nodes), kind, operands, int(param) if kind is K.POW_INT else param)
        self.nodes.append(node)
        if kind is K.INPUT:
            self.input_names[param] = node.id
        return node.id

    def input(self, name: str) -> int:
        return self.build(K.INPUT, (), name)

    def constant(self, value: float) -> int:
        value = float(value)
        if value not in self._constants:
            self._constants[value] = self.build(K.CONSTANT, (), value)
        return self._constants[value]

    def input_id(self, name: str) -> int:
        if name not in self.input_names:
            raise TapeError(f"no input named {name!r}")
        return self.input_names[name]

    def add(self, a: int, b: int) -> int:
        return self.build(K.ADD, (a, b))

    def sub(self, a: int, b: int) -> int:
        return self.build(K.SUB, (a, b))

    def mul(self, a: int, b: int) -> int:
        return self.build(K.MUL, (a, b))

    def div(self, a: int, b: int) -> int:
        return self.build(K.DIV, (a, b))

    def neg(self, a: int) -> int:
        return self.build(K.NEG, (a,))

    def exp(self, a: int) -> int:
        return self.build(K.EXP, (a,))

    def log(self, a: int) -> int:
        return self.build(K.LOG, (a,))

    def pow_int(self, a: int, n: int) -> int:
        return self.build(K.POW_INT, (a,), n)

    def sin(self, a: int) -> int:
        return self.build(K.SIN, (a,))

    def cos(self, a: int) -> int:
        return self.build(K.COS, (a,))

    def sigmoid(self, a: int) -> int:
        return self.build(K.SIGMOID, (a,))

    def tanh(self, a: int) -> int:
        return self.build(K.TANH, (a,))

    def mean(self, a: int) -> int:
        return self.build(K.MEAN, (a,))

    def sum_of(self, ids: Iterable[int]) -> int:
        ids = list(ids)
        if not ids:
            return self.constant(0.0)
        total = ids[0]
        for i in ids[1:]:
            total = self.add(total, i)
        return total

    def dot(self, weights: Sequence[int], inputs: Sequence[int]) -> int:
        return self.sum_of(self.mul(w, x) for w, x in zip(weights, inputs))


# --- Forward ---

def _as_value(v):
    arr = np.asarray(v, dtype=np.float64)
    return float(arr) if arr.ndim == 0 else arr


def forward(tape: Tape, assignments: Mapping[Union[str, int], Any]) -> List[Any]:
    """Evaluates every node in id order; returns (and caches) the list of primal values."""
    by_id: Dict[int, Any] = {}
    for key, value in assignments.items():
        nid = tape.input_id(key) if isinstance(key, str) else int(key)
        by_id[nid] = _as_value(value)

    values: List[Any] = [None] * len(tape.nodes)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        for node in tape.nodes:
            kind = node.kind
            if kind is K.INPUT:
                if node.id not in by_id:
                    raise TapeError(f"input {node.param!r} (node {node.id}) is unassigned")
                values[node.id] = by_id[node.id]
            elif kind is K.CONSTANT:
                values[node.id] = node.param
            elif kind in _BINARY:
                values[node.id] = _BINARY[kind](values[node.operands[0]], values[node.operands[1]])
            elif kind is K.POW_INT:
                values[node.id] = np.power(values[node.operands[0]], float(node.param))
            else:
                values[node.id] = _UNARY[kind](values[node.operands[0]])
    tape.values = values
    return values


# --- Backward ---

def _reduce_to(grad, like):
    """Sums a batch adjoint onto a scalar operand, or broadcasts a scalar onto a batch one."""
    if np.ndim(like) == 0:
        return float(np.sum(grad)) if np.ndim(grad) else grad
    if np.ndim(grad) == 0:
        return np.full(np.shape(like), grad)
    return grad


def _local_adjoints(node: Node, g, values) -> Tuple[Tuple[int, Any], ...]:
    kind = node.kind
    ops = node.operands
    v = values[node.id]
    if kind is K.ADD:
        return (ops[0], g), (ops[1], g)
    if kind is K.SUB:
        return (ops[0], g), (ops[1], -g)
    if kind is K.MUL:
        return (ops[0], g * values[ops[1]]), (ops[1], g * values[ops[0]])
    a = values[ops[0]]
    if kind is K.DIV:
        b = values[ops[1]]
        return (ops[0], g / b), (ops[1], -g * v / b)
    if kind is K.NEG:
        return ((ops[0], -g),)
    if kind is K.EXP:
        return ((ops[0], g * v),)
    if kind is K.LOG:
        return ((ops[0], g / a),)
    if kind is K.POW_INT:
        n = node.param
        return ((ops[0], g * n * np.power(a, float(n - 1))),)
    if kind is K.SIN:
        return ((ops[0], g * np.cos(a)),)
    if kind is K.COS:
        return ((ops[0], -g * np.sin(a)),)
    if kind is K.SIGMOID:
        return ((ops[0], g * v * (1.0 - v)),)
    if kind is K.TANH:
        return ((ops[0], g * (1.0 - v * v)),)
    if kind is K.MEAN:
        size = np.size(a)
        return ((ops[0], np.full(np.shape(a), g / size) if np.ndim(a) else g),)
    raise TapeError(f"no adjoint rule for {kind.value}")


def backward(tape: Tape, output_id: int) -> GradientRecord:
    """
    One reverse sweep from `output_id`. A batched output is differentiated as the sum
    over its samples; scalar operands collect the summed adjoint.
    """
    values = tape.values
    if values is None:
        raise TapeError("backward called before forward")
    if output_id < 0 or output_id >= len(values):
        raise TapeError(f"node {output_id} has no forward value; run forward after extending the tape")

    adj: List[Any] = [None] * (output_id + 1)
    out = values[output_id]
    adj[output_id] = np.ones_like(out) if np.ndim(out) else 1.0
    nodes = tape.nodes
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        for i in range(output_id, -1, -1):
            g = adj[i]
            if g is None:
                continue
            node = nodes[i]
            if not node.operands:
                continue
            for oid, contrib in _local_adjoints(node, g, values):
                contrib = _reduce_to(contrib, values[oid])
                adj[oid] = contrib if adj[oid] is None else adj[oid] + contrib
    return GradientRecord.model_construct(
        output_id=output_id, adjoints={i: a for i, a in enumerate(adj) if a is not None}
    )


# --- Symbolic differentiation ---

def _dependents(tape: Tape, wrt: int, upto: int) -> List[bool]:
    depends = [False] * (upto + 1)
    for i in range(wrt, upto + 1):
        node = tape.nodes[i]
        depends[i] = i == wrt or any(depends[o] for o in node.operands)
    return depends


def derive(tape: Tape, output_id: int, wrt_id: int) -> int:
    """
    Appends nodes computing d(output)/d(wrt) per sample and returns the id of the
    result, which can itself be differentiated again.
    """
    nodes = tape.nodes
    if wrt_id < 0 or wrt_id >= len(nodes) or nodes[wrt_id].kind is not K.INPUT:
        raise TapeError(f"derive: node {wrt_id} is not an input node")
    if output_id < 0 or output_id >= len(nodes):
        raise TapeError(f"derive: unknown output node {output_id}")
    if output_id < wrt_id:
        return tape.constant(0.0)

    depends = _dependents(tape, wrt_id, output_id)
    if not depends[output_id]:
        return tape.constant(0.0)

    one = tape.constant(1.0)

    def scale(g: int, factor: int) -> int:
        return factor if g == one else tape.mul(g, factor)

    adj: Dict[int, int] = {output_id: one}
    for i in range(output_id, wrt_id, -1):
        if i not in adj or not depends[i]:
            continue
        g = adj[i]
        node = nodes[i]
        kind = node.kind
        ops = node.operands
        contribs: List[Tuple[int, int]] = []
        if kind is K.ADD:
            contribs = [(ops[0], g), (ops[1], g)]
        elif kind is K.SUB:
            contribs = [(ops[0], g), (ops[1], tape.neg(g))] if depends[ops[1]] else [(ops[0], g)]
        elif kind is K.MUL:
            if depends[ops[0]]:
                contribs.append((ops[0], scale(g, ops[1])))
            if depends[ops[1]]:
                contribs.append((ops[1], scale(g, ops[0])))
        elif kind is K.DIV:
            if depends[ops[0]]:
                contribs.append((ops[0], tape.div(g, ops[1])))
            if depends[ops[1]]:
                contribs.append((ops[1], tape.neg(tape.div(scale(g, i), ops[1]))))
        elif kind is K.NEG:
            contribs = [(ops[0], tape.neg(g))]
        elif kind is K.EXP:
            contribs = [(ops[0], scale(g, i))]
        elif kind is K.LOG:
            contribs = [(ops[0], tape.div(g, ops[0]))]
        elif kind is K.POW_INT:
            n = node.param
            if n == 0:
                continue
            if n == 1:
                factor = one
            elif n == 2:
                factor = tape.mul(tape.constant(2.0), ops[0])
            else:
                factor = tape.mul(tape.constant(float(n)), tape.pow_int(ops[0], n - 1))
            contribs = [(ops[0], scale(g, factor))]
        elif kind is K.SIN:
            contribs = [(ops[0], scale(g, tape.cos(ops[0])))]
        elif kind is K.COS:
            contribs = [(ops[0], tape.neg(scale(g, tape.sin(ops[0]))))]
        elif kind is K.SIGMOID:
            contribs = [(ops[0], scale(g, tape.mul(i, tape.sub(one, i))))]
        elif kind is K.TANH:
            contribs = [(ops[0], scale(g, tape.sub(one, tape.mul(i, i))))]
        elif kind is K.MEAN:
            raise TapeError("derive: cannot differentiate per sample through a batch mean")

        for oid, c in contribs:
            if not depends[oid]:
                continue
            adj[oid] = c if oid not in adj else tape.add(adj[oid], c)

    return adj.get(wrt_id, tape.constant(0.0))


# --- Gradient oracle ---

def relative_error(a: float, b: float) -> float:
    return abs(a - b) / max(1.0, abs(a), abs(b))


def _scalar(value) -> float:
    return float(np.sum(value))


def check_gradients(
    tape: Tape,
    output_id: int,
    inputs: Mapping[str, Any],
    h: float = settings.GRADCHECK_STEP,
    tolerance: float = settings.GRADCHECK_TOLERANCE,
    wrt: Optional[Sequence[str]] = None,
) -> GradientCheckReport:
    """Compares backward adjoints of inputs with central differences (f(x+h) - f(x-h)) / 2h."""
    if h <= 0:
        raise TapeError("check_gradients: step h must be positive")
    forward(tape, inputs)
    grads = backward(tape, output_id)

    entries: List[GradientCheckEntry] = []
    for name in (wrt if wrt is not None else list(inputs)):
        nid = tape.input_id(name)
        base = np.array(inputs[name], dtype=np.float64)
        analytic = np.broadcast_to(np.asarray(grads[nid], dtype=np.float64), base.shape)
        for idx in np.ndindex(base.shape):
            probe = dict(inputs)
            plus = base.copy()
            plus[idx] += h
            probe[name] = plus
            f_plus = _scalar(forward(tape, probe)[output_id])
            minus = base.copy()
            minus[idx] -= h
            probe[name] = minus
            f_minus = _scalar(forward(tape, probe)[output_id])
            numeric = (f_plus - f_minus) / (2.0 * h)
            a = float(analytic[idx])
            label = name if base.ndim == 0 else f"{name}{list(idx)}"
            entries.append(GradientCheckEntry(
                name=label, analytic=a, numeric=numeric, relative_error=relative_error(a, numeric),
            ))
    forward(tape, inputs)

    worst = max((e.relative_error for e in entries), default=0.0)
    if worst > tolerance:
        logger.warning(f"Gradient check failed: max relative error {worst:.3e} > {tolerance:.1e}")
    return GradientCheckReport(entries=entries, max_relative_error=worst, tolerance=tolerance, step=h)


# --- Worked example graph and traces ---

def build_toy_graph() -> Tuple[Tape, Dict[str, int]]:
    """
    The 2-input, 2-sigmoid-hidden, 1-linear-output network written out node by node:
    v1 = w1*x, v2 = w2*x, v3 = w3*t, v4 = w4*t, v5 = v1+v3, v6 = v2+v4,
    v7 = sig(v5), v8 = sig(v6), v9 = v7*w5, v10 = v8*w6, y_hat = v9+v10.
    """
    tape = Tape()
    n: Dict[str, int] = {}
    for name in ("w1", "x", "w2", "w3", "t", "w4", "w5", "w6"):
        n[name] = tape.input(name)
    n["v1"] = tape.mul(n["w1"], n["x"])
    n["v2"] = tape.mul(n["w2"], n["x"])
    n["v3"] = tape.mul(n["w3"], n["t"])
    n["v4"] = tape.mul(n["w4"], n["t"])
    n["v5"] = tape.add(n["v1"], n["v3"])
    n["v6"] = tape.add(n["v2"], n["v4"])
    n["v7"] = tape.sigmoid(n["v5"])
    n["v8"] = tape.sigmoid(n["v6"])
    n["v9"] = tape.mul(n["v7"], n["w5"])
    n["v10"] = tape.mul(n["v8"], n["w6"])
    n["y_hat"] = tape.add(n["v9"], n["v10"])
    return tape, n


TOY_INPUTS = {"w1": 0.5, "w2": 0.5, "w3": 0.5, "w4": 0.5, "w5": 0.5, "w6": 0.5, "x": 0.1, "t": 0.1}


def tape_from_spec(spec: GraphSpec) -> Tuple[Tape, Dict[str, int], Dict[str, float]]:
    """Builds a tape from a JSON graph description; returns (tape, names, input assignments)."""
    tape = Tape()
    names: Dict[str, int] = {}
    for name in spec.inputs:
        names[name] = tape.input(name)
    for name, value in spec.constants.items():
        names[name] = tape.constant(value)
    for node in spec.nodes:
        if node.name in names:
            raise TapeError(f"duplicate node name {node.name!r}")
        try:
            operands = [names[o] for o in node.operands]
        except KeyError as e:
            raise TapeError(f"node {node.name!r} refers to unknown operand {e.args[0]!r}")
        param = int(node.param) if node.kind is K.POW_INT and node.param is not None else node.param
        names[node.name] = tape.build(node.kind, operands, param)
    if spec.output not in names:
        raise TapeError(f"output {spec.output!r} is not a node")
    return tape, names, dict(spec.inputs)


def trace_table(tape: Tape, output_id: int, names: Optional[Mapping[str, int]] = None) -> pd.DataFrame:
    """Forward value and adjoint of every node up to `output_id` (needs a prior forward)."""
    grads = backward(tape, output_id)
    label = {v: k for k, v in (names or {}).items()}
    rows = []
    for node in tape.nodes[:output_id + 1]:
        value = tape.values[node.id]
        if np.ndim(value):
            raise TapeError("trace_table needs a single-sample evaluation")
        name = label.get(node.id) or (node.param if node.kind is K.INPUT else f"n{node.id}")
        rows.append({
            "node": name,
            "kind": node.kind.value,
            "value": float(value),
            "adjoint": float(grads[node.id]),
        })
    return pd.DataFrame(rows, columns=["node", "kind", "value", "adjoint"])
