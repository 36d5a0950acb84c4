"""Command-line harness: data generation, pre-training, training, evaluation.

Exit codes: 0 success, 1 usage error, 2 solver infeasibility, 3 IO error.
"""

import argparse
import sys
import time
from dataclasses import replace
from pathlib import Path

from . import experiment, milp, network, pretrain, reference_solver, trainer
from .experiment import ExperimentConfig
from .heat_model import Domain, PhysicalParams
from .losses import LossSpec
from .milp import INFEASIBLE
from .reference_solver import CsvFormatError


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="heatpinn", description=__doc__)
    parser.add_argument("--config", help="JSON experiment config file")
    parser.add_argument("--seed", type=int, default=0, help="run seed")
    parser.add_argument("--jobs", type=int, default=1, help="parallel runs for compare")
    parser.add_argument("--out", default="out", help="output directory")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic scenario and reference field")
    g.add_argument("--horizon-hours", type=float, default=100.0)
    g.add_argument("--step-minutes", type=float, default=15.0)
    g.add_argument("--nx", type=int, default=50)
    g.add_argument("--nt", type=int, default=100)

    p = sub.add_parser("pretrain", help="solve a pre-training MILP, write a checkpoint")
    p.add_argument("--mode", choices=("boundary", "full"), required=True)
    p.add_argument("--n-hidden", type=int, default=32)
    p.add_argument("--data", required=True, help="scenario CSV")
    p.add_argument("--field", help="reference field CSV (defaults to a fresh solve)")
    p.add_argument("--n-boundary", type=int, default=10)
    p.add_argument("--n-collocation", type=int, default=5)
    p.add_argument("--max-nodes", type=int, default=12)
    p.add_argument("--max-seconds", type=float, default=120.0)

    t = sub.add_parser("train", help="run the training pipeline from a checkpoint or scratch")
    t.add_argument("--mode", choices=trainer.MODES, required=True)
    t.add_argument("--n-hidden", type=int, default=32)
    t.add_argument("--epochs", type=int, default=5000)
    t.add_argument("--lbfgs-iters", type=int, default=0)
    t.add_argument("--data", required=True, help="scenario CSV")
    t.add_argument("--field", help="reference field CSV (defaults to a fresh solve)")
    t.add_argument("--checkpoint", help="pre-training checkpoint (required for pre-trained modes)")
    t.add_argument("--n-boundary", type=int, default=10)
    t.add_argument("--n-collocation", type=int, default=5)
    t.add_argument("--eval-nx", type=int, default=50)
    t.add_argument("--eval-nt", type=int, default=100)

    e = sub.add_parser("evaluate", help="compare a checkpoint (or grid) against a reference field")
    e.add_argument("--checkpoint", help="network checkpoint JSON")
    e.add_argument("--predicted", help="predicted field CSV (alternative to --checkpoint)")
    e.add_argument("--reference", required=True, help="reference field CSV")
    e.add_argument("--data", help="scenario CSV (required with --checkpoint)")

    c = sub.add_parser("compare", help="full sweep over modes, widths and seeds")

    x = sub.add_parser("export-lp", help="write a pre-training model in CPLEX LP format")
    x.add_argument("--mode", choices=("boundary", "full"), required=True)
    x.add_argument("--n-hidden", type=int, default=8)
    x.add_argument("--data", required=True, help="scenario CSV")
    x.add_argument("--field", help="reference field CSV (defaults to a fresh solve)")
    x.add_argument("--n-boundary", type=int, default=10)
    x.add_argument("--n-collocation", type=int, default=5)
    return parser


def _load_data(args, phys, eval_nx=50, eval_nt=100):
    scenario = reference_solver.load_scenario_csv(args.data)
    if getattr(args, "field", None):
        field = reference_solver.load_field_csv(args.field)
    else:
        grid = reference_solver.Grid(
            eval_nx, eval_nt,
            Domain(0.0, 1.0, scenario.t0, scenario.t_end),
        )
        field = reference_solver.solve(phys, scenario, grid)
    return scenario, field


def _sample(args, scenario, field, phys, seed):
    return reference_solver.sample_training_points(
        field, scenario, args.n_boundary, args.n_collocation, seed, phys
    )


def cmd_generate(args) -> int:
    layout = experiment.out_layout(args.out)
    scenario = reference_solver.generate_scenario(
        args.seed, args.horizon_hours, args.step_minutes
    )
    scen_path = layout["scenario"] / f"scenario_{args.seed}.csv"
    reference_solver.save_scenario_csv(scen_path, scenario)
    grid = reference_solver.Grid(
        args.nx, args.nt, Domain(0.0, 1.0, scenario.t0, scenario.t_end)
    )
    field = reference_solver.solve(PhysicalParams(), scenario, grid)
    field_path = layout["scenario"] / f"reference_{args.seed}_{args.nx}x{args.nt}.csv"
    reference_solver.save_field_csv(field_path, field)
    print(f"wrote {scen_path} ({scenario.times.size} rows) and {field_path}")
    return 0


def _build_pretrain_model(args, phys, seed):
    scenario, field = _load_data(args, phys)
    batch = _sample(args, scenario, field, phys, seed)
    scaler = pretrain.build_scaler(batch, scenario)
    base = network.glorot_init(seed, args.n_hidden)
    cfg = pretrain.PretrainConfig(mode=args.mode, w2_fixed=base.W2)
    if args.mode == "boundary":
        pm = pretrain.build_boundary_model(batch, scaler, cfg)
    else:
        pm = pretrain.build_full_model(batch, scaler, phys, cfg)
    return pm, scaler


def cmd_pretrain(args) -> int:
    phys = PhysicalParams()
    layout = experiment.out_layout(args.out)
    pm, scaler = _build_pretrain_model(args, phys, args.seed)
    budget = milp.SolveBudget(max_nodes=args.max_nodes, max_seconds=args.max_seconds)
    t0 = time.perf_counter()
    solution = milp.solve_milp(pm.milp, budget)
    elapsed = time.perf_counter() - t0
    if solution.status == INFEASIBLE:
        print("pre-training model is infeasible", file=sys.stderr)
        return 2
    result = pretrain.decode_solution(pm, solution)
    tag = f"pretrain_{args.mode}_{args.n_hidden}n_{args.seed}"
    ckpt = layout["checkpoints"] / f"{tag}.json"
    network.save_checkpoint(ckpt, result.params, scaler)
    lp_path = layout["summary"] / f"{tag}.lp"
    milp.write_lp(lp_path, pm.milp)
    print(f"status={solution.status} objective={solution.objective:.9g} "
          f"nodes={solution.node_count} seconds={elapsed:.3f}")
    print(f"wrote {ckpt} and {lp_path}")
    return 0


def cmd_train(args) -> int:
    phys = PhysicalParams()
    layout = experiment.out_layout(args.out)
    scenario, field = _load_data(args, phys, args.eval_nx, args.eval_nt)
    batch = _sample(args, scenario, field, phys, args.seed)
    tc = trainer.TrainConfig(
        mode=args.mode, n_hidden=args.n_hidden, adam_epochs=args.epochs,
        lbfgs_max_iters=args.lbfgs_iters, seed=args.seed,
        loss_spec=LossSpec(1.0, 1.0, "mse"),
    )
    if args.mode == trainer.MODE_VANILLA:
        scaler = pretrain.build_scaler(batch, scenario)
        initial = network.glorot_init(args.seed, args.n_hidden)
    else:
        if not args.checkpoint:
            raise UsageError("pre-trained modes require --checkpoint from 'pretrain'")
        initial, scaler = network.load_checkpoint(args.checkpoint)
        if initial.n_hidden != args.n_hidden:
            raise UsageError("checkpoint width does not match --n-hidden")
    trace = trainer.train_pipeline(batch, scaler, phys, tc, initial_params=initial)
    tag = f"{args.mode}_{args.n_hidden}n_{args.seed}"
    write_path = layout["traces"] / f"trace_{tag}.csv"
    experiment.write_trace_csv(write_path, trace, args.mode, args.seed, args.n_hidden)
    ckpt = layout["checkpoints"] / f"{tag}.json"
    network.save_checkpoint(ckpt, trace.final_params, scaler)
    grid = reference_solver.Grid(
        args.eval_nx, args.eval_nt,
        Domain(0.0, 1.0, scenario.t0, scenario.t_end),
    )
    pred = experiment.predict_field(trace.final_params, scaler, scenario, phys, grid)
    grid_path = layout["grids"] / f"predicted_{tag}.csv"
    reference_solver.save_field_csv(grid_path, pred)
    final = trace.final_losses
    print(f"final: total={final.total:.9g} mse_u={final.data_term:.9g} "
          f"mse_f={final.residual_term:.9g} ({final.epoch} epochs, "
          f"{final.elapsed_s:.2f}s, status={trace.final_status})")
    print(f"wrote {write_path}, {ckpt}, {grid_path}")
    return 0


def cmd_evaluate(args) -> int:
    phys = PhysicalParams()
    ref = reference_solver.load_field_csv(args.reference)
    if args.predicted:
        pred = reference_solver.load_field_csv(args.predicted)
        span = float(ref.values.max() - ref.values.min()) or 1.0
    elif args.checkpoint:
        if not args.data:
            raise UsageError("--checkpoint evaluation needs --data (scenario CSV)")
        params, scaler = network.load_checkpoint(args.checkpoint)
        scenario = reference_solver.load_scenario_csv(args.data)
        pred = experiment.predict_field(params, scaler, scenario, phys, ref.grid)
        span = scaler.output_span
    else:
        raise UsageError("evaluate needs --checkpoint or --predicted")
    total = experiment.normalized_mse(pred, ref, span)
    layout = experiment.out_layout(args.out)
    paths = experiment.write_time_slices(layout["summary"], pred, ref)
    print(f"normalized total MSE: {total:.9g}")
    print(f"wrote {len(paths)} slice files to {layout['summary']}")
    return 0


def cmd_compare(args) -> int:
    if args.config:
        config = ExperimentConfig.from_json(args.config)
        config = replace(config, out_dir=args.out, jobs=args.jobs)
    else:
        config = ExperimentConfig(out_dir=args.out, jobs=args.jobs)
    results = experiment.run_sweep(config)
    failures = [r for r in results if r.status != "ok"]
    for row in experiment.aggregate(results):
        print(f"{row['mode']:>8} H={row['n_hidden']:<3} n={row['n_runs']} "
              f"total={row['mean_final_total']:.6g}+-{row['std_final_total']:.6g}")
    if failures:
        print(f"{len(failures)} run(s) failed; see runs.csv", file=sys.stderr)
    print(f"summary written to {Path(config.out_dir) / 'summary'}")
    return 0


def cmd_export_lp(args) -> int:
    phys = PhysicalParams()
    layout = experiment.out_layout(args.out)
    pm, _ = _build_pretrain_model(args, phys, args.seed)
    path = layout["summary"] / f"pretrain_{args.mode}_{args.n_hidden}n_{args.seed}.lp"
    milp.write_lp(path, pm.milp)
    print(f"wrote {path} ({pm.milp.n_vars} variables, {pm.milp.n_constraints} constraints)")
    return 0


_COMMANDS = {
    "generate": cmd_generate,
    "pretrain": cmd_pretrain,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "compare": cmd_compare,
    "export-lp": cmd_export_lp,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except trainer.PipelineError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 2
    except (OSError, CsvFormatError, milp.LpParseError) as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
