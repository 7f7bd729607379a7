import numpy as np
import pytest

from models.autodiff_models import GraphSpec
from services.autodiff_services import (
    TOY_INPUTS, Tape, backward, build_toy_graph, check_gradients, derive, forward, tape_from_spec, trace_table,
)
from utility.exceptions import TapeError

# --- HELPERS ---

def toy():
    tape, names = build_toy_graph()
    values = forward(tape, TOY_INPUTS)
    return tape, names, values


def random_graph(seed, n_inputs=4, n_nodes=50):
    """Random bounded graph: every binary result passes through tanh so values stay in [-1, 1]."""
    rng = np.random.default_rng(seed)
    tape = Tape()
    ids = [tape.input(f"x{i}") for i in range(n_inputs)]
    unary = [tape.sin, tape.cos, tape.tanh, tape.sigmoid, tape.neg]
    binary = [tape.add, tape.sub, tape.mul]
    while len(tape) < n_nodes:
        if rng.random() < 0.5:
            op = binary[rng.integers(len(binary))]
            a, b = rng.choice(ids, size=2)
            ids.append(tape.tanh(op(int(a), int(b))))
        else:
            op = unary[rng.integers(len(unary))]
            ids.append(op(int(rng.choice(ids))))
    inputs = {f"x{i}": float(v) for i, v in enumerate(rng.uniform(-1.0, 1.0, size=n_inputs))}
    return tape, ids[-1], inputs


# ----------------------------------------------------------------------
# --- GRAPH CONSTRUCTION AND FORWARD ---
# ----------------------------------------------------------------------

def test_add_forward():
    """#1 Success: add(a, b) with a=2, b=3 evaluates to 5."""
    tape = Tape()
    a, b = tape.input("a"), tape.input("b")
    s = tape.add(a, b)
    assert forward(tape, {"a": 2.0, "b": 3.0})[s] == 5.0


@pytest.mark.parametrize("x,expected", [(0.0, 0.5), (0.1, 0.52498)])
def test_sigmoid_forward(x, expected):
    """#2 Success: sigmoid(0) = 0.5 and sigmoid(0.1) = 0.52498."""
    tape = Tape()
    s = tape.sigmoid(tape.input("x"))
    assert forward(tape, {"x": x})[s] == pytest.approx(expected, abs=1e-5)


def test_build_rejects_bad_operands():
    """#3 Failure: unknown operand ids and wrong arity are tape errors."""
    tape = Tape()
    x = tape.input("x")
    with pytest.raises(TapeError):
        tape.add(x, 7)
    with pytest.raises(TapeError):
        tape.build("sigmoid", [x, x])
    with pytest.raises(TapeError):
        tape.build("unknown_op", [x])


def test_unassigned_input():
    """#4 Failure: forward with an input left unassigned names it."""
    tape = Tape()
    tape.add(tape.input("a"), tape.input("b"))
    with pytest.raises(TapeError) as exc:
        forward(tape, {"a": 1.0})
    assert "'b'" in str(exc.value)


def test_toy_forward_column():
    """#5 Success: the toy network's forward values are 0.05, 0.1, 0.5250, 0.2625 and 0.5250."""
    _, n, values = toy()
    assert values[n["v1"]] == pytest.approx(0.05)
    assert values[n["v5"]] == pytest.approx(0.1)
    assert values[n["v7"]] == pytest.approx(0.5250, abs=5e-5)
    assert values[n["v9"]] == pytest.approx(0.2625, abs=5e-5)
    assert values[n["y_hat"]] == pytest.approx(0.5250, abs=5e-5)


def test_toy_zero_output_weights():
    """#6 Edge: with all inputs 0 the toy output is 0."""
    tape, n = build_toy_graph()
    values = forward(tape, {k: 0.0 for k in TOY_INPUTS})
    assert values[n["y_hat"]] == 0.0


# ----------------------------------------------------------------------
# --- REVERSE SWEEP ---
# ----------------------------------------------------------------------

def test_toy_backward_column():
    """#7 Success: adjoints of v9, v7, w5, v5 and x match the worked example."""
    tape, n, _ = toy()
    g = backward(tape, n["y_hat"])
    assert g[n["y_hat"]] == 1.0
    assert g[n["v9"]] == pytest.approx(1.0)
    assert g[n["v7"]] == pytest.approx(0.5)
    assert g[n["w5"]] == pytest.approx(0.5250, abs=5e-5)
    assert g[n["v5"]] == pytest.approx(0.12469, abs=5e-6)
    assert g[n["x"]] == pytest.approx(0.12469, abs=5e-6)


def test_backward_before_forward():
    """#8 Failure: a reverse sweep needs cached forward values."""
    tape, n = build_toy_graph()
    with pytest.raises(TapeError):
        backward(tape, n["y_hat"])


def test_sum_of_products_adjoints_exact():
    """#9 Success: for y = sum c_i x_i the adjoint of x_i is exactly c_i."""
    tape = Tape()
    coeffs = [2.5, -1.25, 0.75]
    xs = [tape.input(f"x{i}") for i in range(3)]
    y = tape.dot([tape.constant(c) for c in coeffs], xs)
    forward(tape, {"x0": 0.3, "x1": -1.7, "x2": 4.0})
    g = backward(tape, y)
    assert [g[x] for x in xs] == coeffs


def test_backward_is_deterministic_and_read_only():
    """#10 Success: repeated sweeps give identical adjoints and leave the tape unchanged."""
    tape, n, _ = toy()
    size = len(tape)
    first = backward(tape, n["y_hat"])
    second = backward(tape, n["y_hat"])
    assert first.adjoints == second.adjoints
    assert len(tape) == size


def test_batched_values_sum_adjoints():
    """#11 Edge: a batched output is differentiated as the sum over samples."""
    tape = Tape()
    w, x = tape.input("w"), tape.input("x")
    y = tape.mul(w, x)
    forward(tape, {"w": 2.0, "x": np.array([1.0, 2.0, 3.0])})
    g = backward(tape, y)
    assert g[w] == pytest.approx(6.0)
    assert np.allclose(g[x], [2.0, 2.0, 2.0])


# ----------------------------------------------------------------------
# --- SYMBOLIC DERIVATIVES ---
# ----------------------------------------------------------------------

def test_derive_square():
    """#12 Success: d(x*x)/dx at 3 is 6."""
    tape = Tape()
    x = tape.input("x")
    d = derive(tape, tape.mul(x, x), x)
    assert forward(tape, {"x": 3.0})[d] == pytest.approx(6.0)


def test_derive_twice_cube():
    """#13 Success: the second derivative of x^3 at 2 is 12."""
    tape = Tape()
    x = tape.input("x")
    cube = tape.mul(tape.mul(x, x), x)
    d2 = derive(tape, derive(tape, cube, x), x)
    assert forward(tape, {"x": 2.0})[d2] == pytest.approx(12.0)


def test_derive_sin():
    """#14 Success: d(sin x)/dx at 0 is 1."""
    tape = Tape()
    x = tape.input("x")
    d = derive(tape, tape.sin(x), x)
    assert forward(tape, {"x": 0.0})[d] == pytest.approx(1.0)


def test_second_derivative_matches_differences():
    """#15 Success: derive twice agrees with a central difference of the first derivative."""
    tape = Tape()
    x = tape.input("x")
    f = tape.tanh(tape.add(tape.mul(x, x), tape.sin(x)))
    d1 = derive(tape, f, x)
    d2 = derive(tape, d1, x)
    h = 1e-5
    exact = forward(tape, {"x": 0.4})[d2]
    plus = forward(tape, {"x": 0.4 + h})[d1]
    minus = forward(tape, {"x": 0.4 - h})[d1]
    assert exact == pytest.approx((plus - minus) / (2 * h), rel=1e-4, abs=1e-4)


def test_derive_wrt_non_input():
    """#16 Failure: differentiating with respect to an interior node is rejected."""
    tape = Tape()
    x = tape.input("x")
    y = tape.sin(x)
    with pytest.raises(TapeError):
        derive(tape, tape.cos(y), y)


def test_derive_independent_output():
    """#17 Edge: an output that does not depend on the input has derivative 0."""
    tape = Tape()
    x, y = tape.input("x"), tape.input("y")
    d = derive(tape, tape.sin(y), x)
    assert forward(tape, {"x": 1.0, "y": 2.0})[d] == 0.0


# ----------------------------------------------------------------------
# --- GRADIENT ORACLE ---
# ----------------------------------------------------------------------

def test_toy_gradients_pass_oracle():
    """#18 Success: the toy network passes the central-difference check at h=1e-5."""
    tape, n = build_toy_graph()
    report = check_gradients(tape, n["y_hat"], TOY_INPUTS, h=1e-5)
    assert report.passed
    assert report.max_relative_error < 1e-6
    assert len(report.entries) == len(TOY_INPUTS)


def test_linear_graph_exact():
    """#19 Success: y = 3x agrees with finite differences to machine precision."""
    tape = Tape()
    x = tape.input("x")
    y = tape.mul(tape.constant(3.0), x)
    report = check_gradients(tape, y, {"x": 0.7})
    assert report.entries[0].analytic == 3.0
    assert report.max_relative_error < 1e-9


@pytest.mark.parametrize("seed", range(100))
def test_random_graphs_pass_oracle(seed):
    """#20 Success: random 50-node graphs pass the oracle at 1e-6."""
    tape, output, inputs = random_graph(seed)
    report = check_gradients(tape, output, inputs, h=1e-5, tolerance=1e-6)
    assert report.passed, report.entries


def test_oracle_rejects_bad_step():
    """#21 Failure: a non-positive step is rejected."""
    tape, n = build_toy_graph()
    with pytest.raises(TapeError):
        check_gradients(tape, n["y_hat"], TOY_INPUTS, h=0.0)


# ----------------------------------------------------------------------
# --- TRACE TABLE ---
# ----------------------------------------------------------------------

def test_trace_table_rows():
    """#22 Success: the trace lists each node with its value and adjoint."""
    tape, n, _ = toy()
    table = trace_table(tape, n["y_hat"], n)
    assert list(table.columns) == ["node", "kind", "value", "adjoint"]
    by_node = table.set_index("node")
    assert by_node.loc["y_hat", "adjoint"] == 1.0
    assert by_node.loc["w5", "adjoint"] == pytest.approx(0.5250, abs=5e-5)
    assert by_node.loc["v1", "value"] == pytest.approx(0.05)


def test_graph_from_json_description():
    """#23 Success: a JSON graph builds into a tape with the named nodes."""
    spec = GraphSpec.model_validate({
        "inputs": {"a": 2.0, "b": 3.0},
        "nodes": [{"name": "s", "kind": "add", "operands": ["a", "b"]},
                  {"name": "q", "kind": "pow_int", "operands": ["s"], "param": 2}],
        "output": "q",
    })
    tape, names, inputs = tape_from_spec(spec)
    values = forward(tape, inputs)
    assert values[names["q"]] == 25.0
    assert backward(tape, names["q"])[names["a"]] == pytest.approx(10.0)


def test_graph_with_unknown_operand():
    """#24 Failure: a JSON node that refers to an unknown name is rejected."""
    spec = GraphSpec.model_validate({
        "inputs": {"a": 1.0},
        "nodes": [{"name": "s", "kind": "add", "operands": ["a", "zz"]}],
        "output": "s",
    })
    with pytest.raises(TapeError):
        tape_from_spec(spec)
