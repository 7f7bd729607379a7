# svann-interpretation/controller/pinn_controller.py

import argparse
import os
import sys

import pandas as pd

from models.autodiff_models import GraphSpec
from models.pinn_models import TRACE_COLUMNS, HeterogeneityConfig, TransportConfig
from services.autodiff_services import TOY_INPUTS, build_toy_graph, forward, tape_from_spec, trace_table
from services.network_services import save_network
from services.pinn_services import heterogeneity_experiment, run_paper_trace, solve_transport
from utility.cli_args import add_config_flag, add_out_flag, add_seed_flag, guarded, load_config, resolve_out
from utility.logging import setup_logger
from utility.storage import frame_to_csv_text, load_model_json, write_csv

logger = setup_logger(__name__)


def _emit(frame: pd.DataFrame, args: argparse.Namespace, filename: str) -> None:
    """CSV to <out>/<filename>, or to stdout when --out is absent."""
    if args.out:
        write_csv(frame, os.path.join(resolve_out(args), filename))
    else:
        sys.stdout.write(frame_to_csv_text(frame))
        sys.stdout.flush()


def demo_transport(args: argparse.Namespace) -> int:
    config = load_config(args, TransportConfig)
    updates = {}
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.epochs is not None:
        updates["epochs"] = args.epochs
    if args.lr is not None:
        updates["learning_rate"] = args.lr
    if updates:
        config = TransportConfig.model_validate({**config.model_dump(), **updates})

    net, report = solve_transport(config)
    out = resolve_out(args)
    write_csv(report.to_frame(), os.path.join(out, "transport_report.csv"))
    history = pd.DataFrame({"epoch": range(1, len(report.loss_history) + 1), "loss": report.loss_history})
    write_csv(history, os.path.join(out, "transport_loss.csv"))
    save_network(net, os.path.join(out, "transport_network.json"))
    logger.info(f"Transport demo: RMSE {report.rmse:.5f} against the exact solution")
    return 0


def paper_trace(args: argparse.Namespace) -> int:
    rows = run_paper_trace(args.iters, args.lr)
    _emit(pd.DataFrame([r.model_dump() for r in rows], columns=TRACE_COLUMNS), args, "paper_trace.csv")
    return 0


def heterogeneity(args: argparse.Namespace) -> int:
    config = load_config(args, HeterogeneityConfig)
    updates = {}
    if args.seeds is not None:
        updates["seeds"] = list(range(args.seeds))
    if args.workers is not None:
        updates["workers"] = args.workers
    if updates:
        config = HeterogeneityConfig.model_validate({**config.model_dump(), **updates})

    report = heterogeneity_experiment(config)
    out = resolve_out(args)
    write_csv(report.to_frame(), os.path.join(out, "heterogeneity.csv"))
    counts = report.postulate_counts()
    postulate = pd.DataFrame(
        [{"zone": z, "holds": n, "seeds": len(report.seeds())} for z, n in counts.items()],
        columns=["zone", "holds", "seeds"],
    )
    write_csv(postulate, os.path.join(out, "postulate.csv"))
    return 0


def ad_trace(args: argparse.Namespace) -> int:
    """Forward values and adjoints of every node, for the toy network or a JSON graph."""
    if args.config:
        spec = load_model_json(args.config, GraphSpec)
        tape, names, inputs = tape_from_spec(spec)
        output = names[spec.output]
    else:
        tape, names = build_toy_graph()
        inputs = TOY_INPUTS
        output = names["y_hat"]
    forward(tape, inputs)
    _emit(trace_table(tape, output, names), args, "ad_trace.csv")
    return 0


def register_routes(subparsers) -> None:
    parent = subparsers.add_parser("pinn", help="physics-informed network solvers")
    commands = parent.add_subparsers(dest="pinn_command", required=True,
                                     metavar="{demo-transport,paper-trace,heterogeneity}")

    p = commands.add_parser("demo-transport", help="solve u_t + 3 u_x = 0 and score against the exact solution")
    add_config_flag(p, required=False)
    add_seed_flag(p)
    add_out_flag(p)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.set_defaults(handler=guarded("pinn demo-transport", demo_transport))

    p = commands.add_parser("paper-trace", help="replay the hand-worked weight updates as CSV")
    p.add_argument("--iters", type=int, default=5)
    p.add_argument("--lr", type=float, default=0.1)
    add_out_flag(p)
    p.set_defaults(handler=guarded("pinn paper-trace", paper_trace))

    p = commands.add_parser("heterogeneity", help="zone-local vs pooled PINNs on two zones")
    add_config_flag(p, required=False)
    add_out_flag(p)
    p.add_argument("--seeds", type=int, default=None, help="run seeds 0..N-1")
    p.add_argument("--workers", type=int, default=None, help="parallel processes")
    p.set_defaults(handler=guarded("pinn heterogeneity", heterogeneity))

    parent = subparsers.add_parser("ad", help="automatic differentiation tools")
    commands = parent.add_subparsers(dest="ad_command", required=True, metavar="{trace}")
    p = commands.add_parser("trace", help="forward values and adjoints per node")
    add_config_flag(p, required=False)
    add_out_flag(p)
    p.set_defaults(handler=guarded("ad trace", ad_trace))
