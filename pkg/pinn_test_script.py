import os

import numpy as np
import pytest
from pydantic import ValidationError

from models.network_models import Activation, Architecture, InitKind, InitScheme, Network
from models.pinn_models import (
    TRACE_COLUMNS, ConditionSample, HeterogeneityConfig, LossMode, Model, PDEProblem, SigmoidRule,
    SolutionConvention, TransportConfig, ZoneProblemSpec,
)
from services import pinn_services as ps
from services.network_services import init_network, predict
from utility.exceptions import DataError, TapeError

ACCEPTANCE = pytest.mark.skipif(
    not os.getenv("SVANN_ACCEPTANCE"), reason="long acceptance run; set SVANN_ACCEPTANCE=1",
)

# Hand-worked weight updates at lr 0.1, x = t = 0.1, all weights starting at 0.5.
# Kept as printed so the tolerance follows the number of decimals.
# loop 1 loss evaluates to 1.514 against a printed 1.52; 2-decimal entries get 0.01.
PRINTED_TRACE = [
    ["0", ".5", ".5", ".5", ".5", ".5", ".5", ".525", "2.01"],
    ["1", ".487", ".487", ".495", ".495", ".389", ".389", ".408", "1.52"],
    ["2", ".476", ".476", ".491", ".491", ".28", ".28", ".294", "1.05"],
    ["3", ".469", ".469", ".488", ".488", ".173", ".173", ".182", ".6"],
    ["4", ".464", ".464", ".486", ".487", ".067", ".067", ".07", ".17"],
    ["5", ".462", ".462", ".486", ".486", "-.038", "-.038", "-.04", "-.25"],
]


def printed_tolerance(text):
    decimals = len(text.split(".")[1]) if "." in text else 0
    return 0.0055 if decimals >= 3 else 0.01


def constant_field_network(value):
    """[1, 2, 1] tanh network whose output is the constant `value`."""
    arch = Architecture.dense([1, 2, 1], Activation.TANH, Activation.LINEAR)
    return Network(
        architecture=arch, weights=[np.zeros((2, 1)), np.zeros((1, 2))],
        biases=[np.zeros(2), np.array([value])],
    )


def small_transport(**overrides):
    settings = dict(hidden_layers=[6], collocation_x=6, collocation_t=4, initial_points=8,
                    boundary_points=4, epochs=150, eval_nx=11, eval_nt=6, seed=3)
    settings.update(overrides)
    return TransportConfig(**settings)


def small_heterogeneity(**overrides):
    settings = dict(hidden_layers=[4], collocation_points=8, epochs=40, seeds=[0], eval_points=21)
    settings.update(overrides)
    return HeterogeneityConfig(**settings)


# ----------------------------------------------------------------------
# --- LOSS CONSTRUCTION ---
# ----------------------------------------------------------------------

def test_paper_linear_loss_at_start():
    """#1 Success: the unsquared loss of the all-0.5 toy net at (0.1, 0.1) is 2.015."""
    pl = ps.build_pinn_loss(ps.worked_transport_problem(), ps.toy_network(0.5), LossMode.PAPER_LINEAR, SigmoidRule.SHIFTED)
    terms = ps.evaluate_pinn_loss(pl, ps.toy_network(0.5))
    _, closed_form, _ = ps._worked_state([0.5] * 6, 0.1, 0.1, 3.0)
    assert terms["loss"] == pytest.approx(2.01, abs=0.01)
    assert terms["loss"] == pytest.approx(closed_form, abs=1e-12)
    assert terms["loss"] == pytest.approx(terms["residual_term"] + terms["condition_term"])


def test_calculus_rule_changes_the_residual():
    """#2 Success: the calculus sigmoid derivative gives a different unsquared loss than sigma*(1+sigma)."""
    net = ps.toy_network(0.5)
    calculus = ps.build_pinn_loss(ps.worked_transport_problem(), net, LossMode.PAPER_LINEAR, SigmoidRule.CALCULUS)
    shifted = ps.build_pinn_loss(ps.worked_transport_problem(), net, LossMode.PAPER_LINEAR, SigmoidRule.SHIFTED)
    calc_terms = ps.evaluate_pinn_loss(calculus, net)
    shifted_terms = ps.evaluate_pinn_loss(shifted, net)
    assert calc_terms["condition_term"] == pytest.approx(shifted_terms["condition_term"])
    assert calc_terms["residual_term"] < shifted_terms["residual_term"]


def test_squared_loss_zero_for_exact_solution():
    """#3 Success: a constant field solving Q'' + Q' = 0 with matching ends has squared loss 0."""
    problem = ps.zone_problem(ZoneProblemSpec(name="still", forcing=0.0, left=0.7, right=0.7), 6)
    net = constant_field_network(0.7)
    terms = ps.evaluate_pinn_loss(ps.build_pinn_loss(problem, net), net)
    assert terms["loss"] == pytest.approx(0.0, abs=1e-15)


def test_squared_loss_non_negative():
    """#4 Success: squared losses of random networks are never negative."""
    problem = ps.transport_problem(small_transport())
    arch = Architecture.dense([2, 5, 1], Activation.TANH, Activation.LINEAR)
    for seed in range(5):
        net = init_network(arch, InitScheme.uniform(-2.0, 2.0), seed=seed, use_bias=True)
        terms = ps.evaluate_pinn_loss(ps.build_pinn_loss(problem, net), net)
        assert terms["residual_term"] >= 0.0
        assert terms["condition_term"] >= 0.0


def test_second_partials_match_differences():
    """#5 Success: Q'' + Q' - b from the tape agrees with finite differences of the network."""
    spec = ZoneProblemSpec(name="z", forcing=1.5, left=0.0, right=1.0)
    problem = ps.zone_problem(spec, 5)
    arch = Architecture.dense([1, 4, 1], Activation.TANH, Activation.LINEAR)
    net = init_network(arch, InitScheme(kind=InitKind.XAVIER), seed=2, use_bias=True)
    residual = ps.residual_values(ps.build_pinn_loss(problem, net), net)

    x = problem.collocation[:, 0]
    h = 1e-4
    f = lambda z: predict(net, z.reshape(-1, 1))[:, 0]
    d1 = (f(x + h) - f(x - h)) / (2 * h)
    d2 = (f(x + h) - 2 * f(x) + f(x - h)) / (h * h)
    assert np.allclose(residual, d2 + d1 - 1.5, atol=1e-5)


def test_third_order_partial_rejected():
    """#6 Failure: a residual that asks for a third derivative is rejected."""
    problem = PDEProblem(
        name="third", variables=["x"], bounds=[(0.0, 1.0)], collocation=np.array([0.5]),
        conditions=[ConditionSample(coords=(0.0,), target=0.0)],
        residual=lambda tape, u, partials, coefficients: partials("x", 3),
    )
    with pytest.raises(TapeError):
        ps.build_pinn_loss(problem, constant_field_network(0.0))


def test_input_arity_mismatch():
    """#7 Failure: a 1-input network cannot solve a problem in (x, t)."""
    with pytest.raises(DataError):
        ps.build_pinn_loss(ps.worked_transport_problem(), constant_field_network(0.0))


def test_shifted_rule_needs_toy_shape():
    """#8 Failure: the sigma*(1+sigma) rule only applies to one sigmoid layer with a linear output."""
    arch = Architecture.dense([2, 3, 1], Activation.TANH, Activation.LINEAR)
    net = init_network(arch, InitScheme.constant(0.5))
    with pytest.raises(TapeError):
        ps.build_pinn_loss(ps.worked_transport_problem(), net, LossMode.PAPER_LINEAR, SigmoidRule.SHIFTED)


def test_paper_linear_warns_on_extra_samples(mocker):
    """#9 Edge: the unsquared loss over many samples uses the first one and logs a warning."""
    mock_logger = mocker.patch("services.pinn_services.logger")
    problem = ps.transport_problem(small_transport())
    ps.build_pinn_loss(problem, ps.toy_network(0.5), LossMode.PAPER_LINEAR)
    mock_logger.warning.assert_called_once()


def test_collocation_outside_domain():
    """#10 Failure: collocation points must lie inside the bounds."""
    with pytest.raises(ValidationError):
        PDEProblem(
            name="bad", variables=["x"], bounds=[(0.0, 1.0)], collocation=np.array([0.5, 1.5]),
            conditions=[ConditionSample(coords=(0.0,), target=0.0)],
            residual=lambda tape, u, partials, coefficients: u,
        )


# ----------------------------------------------------------------------
# --- HAND-WORKED TRACE ---
# ----------------------------------------------------------------------

def test_trace_matches_printed_table():
    """#11 Success: six loops at lr 0.1 match every printed entry to its rounding."""
    rows = ps.run_paper_trace(5, 0.1)
    assert len(rows) == 6
    for row, printed in zip(rows, PRINTED_TRACE):
        doc = row.model_dump()
        assert doc["loop"] == int(printed[0])
        for column, text in zip(TRACE_COLUMNS[1:], printed[1:]):
            assert doc[column] == pytest.approx(float(text), abs=printed_tolerance(text)), (row.loop, column)


def test_trace_first_update():
    """#12 Success: one update moves w5 to 0.389 and the prediction to 0.408."""
    row = ps.run_paper_trace(1, 0.1)[1]
    assert row.w5 == pytest.approx(0.389, abs=5e-4)
    assert row.y_hat == pytest.approx(0.408, abs=5e-4)


def test_trace_zero_iterations():
    """#13 Edge: zero iterations give only the initial state."""
    rows = ps.run_paper_trace(0)
    assert len(rows) == 1
    assert [rows[0].w1, rows[0].w6] == [0.5, 0.5]
    assert rows[0].y_hat == pytest.approx(0.525, abs=5e-4)


def test_trace_is_deterministic():
    """#14 Success: the trace is identical across calls."""
    assert ps.run_paper_trace(5) == ps.run_paper_trace(5)


def test_trace_negative_iterations():
    """#15 Failure: a negative iteration count is rejected."""
    with pytest.raises(DataError):
        ps.run_paper_trace(-1)


# ----------------------------------------------------------------------
# --- TRANSPORT EQUATION ---
# ----------------------------------------------------------------------

def test_exact_transport_conventions():
    """#16 Success: at (0.1, 0.1) the printed form gives -0.208 and the decaying form -0.1922."""
    assert ps.exact_transport(0.1, 0.1, convention=SolutionConvention.PAPER) == pytest.approx(-0.208, abs=1e-3)
    assert ps.exact_transport(0.1, 0.1, convention=SolutionConvention.DECAYING) == pytest.approx(-0.1922, abs=1e-4)


def test_exact_transport_initial_profile():
    """#17 Success: at t = 0 each convention reduces to its own initial profile."""
    x = np.linspace(-1.0, 1.0, 9)
    zeros = np.zeros_like(x)
    assert np.allclose(ps.exact_transport(x, zeros), x * np.exp(-x * x))
    assert np.allclose(ps.exact_transport(x, zeros, convention="paper"), x * np.exp(x * x))


def test_transport_problem_layout():
    """#18 Success: interior collocation grid, initial samples at t0 and inflow samples at x0 after t0."""
    config = small_transport()
    problem = ps.transport_problem(config)
    assert problem.collocation.shape == (6 * 4, 2)
    coords, targets = problem.condition_arrays()
    initial = coords[coords[:, 1] == 0.0]
    inflow = coords[(coords[:, 0] == 0.0) & (coords[:, 1] > 0.0)]
    assert len(initial) == 8 and len(inflow) == 4
    assert np.allclose(targets, ps.exact_transport(coords[:, 0], coords[:, 1]))


def test_zero_epochs_reports_untrained_error():
    """#19 Edge: with no training the RMSE is that of the initial network."""
    config = small_transport(epochs=0)
    trained, report = ps.solve_transport(config)
    start = init_network(
        Architecture.dense([2, 6, 1], Activation.TANH, Activation.LINEAR),
        InitScheme(kind=InitKind.XAVIER), seed=3, use_bias=True,
    )
    xs, ts = np.meshgrid(np.linspace(0, 1, 11), np.linspace(0, 0.5, 6), indexing="ij")
    features = np.column_stack([xs.ravel(), ts.ravel()])
    err = predict(start, features)[:, 0] - ps.exact_transport(features[:, 0], features[:, 1])
    assert report.rmse == pytest.approx(float(np.sqrt(np.mean(err ** 2))))
    assert report.loss_history == []
    assert all(np.array_equal(a, b) for a, b in zip(trained.weights, start.weights))


def test_short_solve_improves_and_is_consistent():
    """#20 Success: training lowers the error, and the residual report agrees with the loss terms."""
    untrained = ps.solve_transport(small_transport(epochs=0))[1]
    trained = ps.solve_transport(small_transport(epochs=300))[1]
    assert trained.rmse < untrained.rmse
    assert trained.final_loss < trained.loss_history[0]
    assert trained.residual_mean_abs <= trained.residual_rms + 1e-12
    assert trained.residual_rms ** 2 <= trained.final_loss + 1e-12
    assert trained.eval_points == 11 * 6


def test_report_frame():
    """#21 Success: the report renders as metric/value rows without the loss history."""
    _, report = ps.solve_transport(small_transport(epochs=2))
    frame = report.to_frame()
    assert list(frame.columns) == ["metric", "value"]
    assert "rmse" in set(frame["metric"])
    assert "loss_history" not in set(frame["metric"])


@ACCEPTANCE
def test_default_transport_config_accuracy():
    """#22 Success: the default configuration reaches RMSE <= 0.05 on the 50x25 grid."""
    _, report = ps.solve_transport(TransportConfig())
    assert report.eval_points == 50 * 25
    assert report.rmse <= 0.05


# ----------------------------------------------------------------------
# --- ZONAL HETEROGENEITY ---
# ----------------------------------------------------------------------

def test_zone_exact_solution():
    """#23 Success: the exact zone profile meets both ends and satisfies Q'' + Q' = b."""
    spec = ZoneProblemSpec(name="stepped", forcing=-4.0, left=1.0, right=0.0)
    assert ps.zone_exact(spec, 0.0) == pytest.approx(1.0)
    assert ps.zone_exact(spec, 1.0) == pytest.approx(0.0)
    x, h = np.linspace(0.1, 0.9, 5), 1e-4
    d1 = (ps.zone_exact(spec, x + h) - ps.zone_exact(spec, x - h)) / (2 * h)
    d2 = (ps.zone_exact(spec, x + h) - 2 * ps.zone_exact(spec, x) + ps.zone_exact(spec, x - h)) / (h * h)
    assert np.allclose(d2 + d1, -4.0, atol=1e-4)


def test_pooled_problem_keeps_zone_forcing():
    """#24 Success: pooling stacks both zones' points with their own forcing values."""
    config = HeterogeneityConfig()
    pooled = ps.pooled_problem(config.zones, 8)
    assert pooled.collocation.shape == (16, 1)
    assert pooled.coefficients["b"].tolist() == [1.0] * 8 + [-4.0] * 8
    assert len(pooled.conditions) == 4


def test_report_shape():
    """#25 Success: every seed reports 3 models x 2 zones."""
    report = ps.heterogeneity_experiment(small_heterogeneity(seeds=[0, 1]))
    assert len(report.cells) == 12
    frame = report.to_frame()
    assert list(frame.columns) == ["seed", "model", "zone", "error_avg"]
    assert set(frame["model"]) == {"M1", "M2", "M3"}
    assert set(report.postulate_counts()) == {"flat", "stepped"}


def test_identical_zones_give_identical_models():
    """#26 Edge: without heterogeneity the zone models coincide and the pooled one matches them."""
    same = ZoneProblemSpec(name="a", forcing=1.0, left=0.0, right=1.0)
    twin = ZoneProblemSpec(name="b", forcing=1.0, left=0.0, right=1.0)
    report = ps.heterogeneity_experiment(small_heterogeneity(zones=[same, twin]))
    for zone in ("a", "b"):
        m1 = report.error(0, Model.M1, zone)
        assert report.error(0, Model.M2, zone) == m1
        assert report.error(0, Model.M3, zone) == pytest.approx(m1, rel=1e-6, abs=1e-9)


def test_parallel_seeds_match_sequential():
    """#27 Success: running seeds in worker processes gives the same report."""
    sequential = ps.heterogeneity_experiment(small_heterogeneity(seeds=[0, 1], workers=1))
    parallel = ps.heterogeneity_experiment(small_heterogeneity(seeds=[0, 1], workers=2))
    assert sequential.cells == parallel.cells


def test_heterogeneity_config_needs_two_zones():
    """#28 Failure: the experiment compares exactly two distinctly named zones."""
    z = ZoneProblemSpec(name="a", forcing=1.0, left=0.0, right=1.0)
    with pytest.raises(ValidationError):
        HeterogeneityConfig(zones=[z])
    with pytest.raises(ValidationError):
        HeterogeneityConfig(zones=[z, z])


@ACCEPTANCE
def test_pooled_model_loses_in_most_seeds():
    """#29 Success: over 10 seeds the pooled model is worse than each zone's own model at least 9 times."""
    report = ps.heterogeneity_experiment(HeterogeneityConfig())
    counts = report.postulate_counts()
    assert all(n >= 9 for n in counts.values()), counts
