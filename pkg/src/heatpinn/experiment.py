"""Experiment harness: sweeps, aggregation, grid prediction and evaluation."""

import csv
import json
import math
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import milp, network, pretrain, reference_solver, trainer
from .heat_model import Domain, PhysicalParams
from .losses import Batch, LossSpec
from .network import NetworkParams, Scaler
from .reference_solver import Grid, Scenario, TemperatureField


class GridMismatch(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    """Sweep settings; defaults follow the reference experimental protocol."""

    n_hidden: tuple = (32, 60)
    repetitions: int = 5
    n_boundary: int = 10
    n_collocation: int = 5
    eval_nx: int = 50
    eval_nt: int = 100
    seeds: tuple | None = None
    modes: tuple = ("vanilla", "boundary", "full")
    adam_epochs: int = 5000
    adam_lr: float = 1e-2
    lbfgs_max_iters: int = 0
    lambda_u: float = 1.0
    lambda_f: float = 1.0
    scenario_seed: int = 7
    horizon_hours: float = 100.0
    step_minutes: float = 15.0
    data_seed: int = 1234
    pretrain_max_nodes: int = 12
    pretrain_max_seconds: float = 120.0
    pretrain_weight_box: float = 5.0
    out_dir: str = "out"
    jobs: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "n_hidden", tuple(self.n_hidden))
        object.__setattr__(self, "modes", tuple(self.modes))
        if self.seeds is not None:
            object.__setattr__(self, "seeds", tuple(self.seeds))
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        for name in ("n_boundary", "n_collocation", "eval_nx", "eval_nt"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        for mode in self.modes:
            if mode not in trainer.MODES:
                raise ValueError(f"unknown mode {mode!r}")

    @property
    def run_seeds(self) -> tuple:
        if self.seeds is not None:
            if len(self.seeds) != self.repetitions:
                raise ValueError("seeds length must equal repetitions")
            return self.seeds
        return tuple(range(self.repetitions))

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
        known = {f.name for f in fields(cls)}
        unknown = set(payload) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**payload)

    def budget(self) -> milp.SolveBudget:
        return milp.SolveBudget(
            max_nodes=self.pretrain_max_nodes,
            max_seconds=self.pretrain_max_seconds,
        )


def out_layout(out_dir) -> dict:
    base = Path(out_dir)
    layout = {name: base / name for name in
              ("scenario", "checkpoints", "traces", "grids", "summary")}
    for p in layout.values():
        p.mkdir(parents=True, exist_ok=True)
    return layout


def eval_grid(config: ExperimentConfig, scenario: Scenario) -> Grid:
    domain = Domain(0.0, 1.0, scenario.t0, scenario.t_end)
    return Grid(config.eval_nx, config.eval_nt, domain)


def predict_field(params: NetworkParams, scaler: Scaler, scenario: Scenario,
                  phys: PhysicalParams, grid: Grid) -> TemperatureField:
    """Evaluate the network on every grid node."""
    X = reference_solver.grid_inputs(scenario, phys, grid)
    values = network.forward(params, X, scaler).reshape(grid.nx, grid.nt)
    return TemperatureField(grid, values)


def normalized_mse(pred: TemperatureField, ref: TemperatureField, span: float) -> float:
    """Mean squared error between two fields in normalised output units."""
    if pred.values.shape != ref.values.shape:
        raise GridMismatch(
            f"field shapes differ: {pred.values.shape} vs {ref.values.shape}"
        )
    if (not np.allclose(pred.grid.xs, ref.grid.xs)
            or not np.allclose(pred.grid.ts, ref.grid.ts)):
        raise GridMismatch("field coordinates differ")
    diff = (pred.values - ref.values) / span
    return float(np.mean(diff * diff))


def write_trace_csv(path, trace: trainer.TrainingTrace, mode: str, seed: int,
                    n_hidden: int) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# mode={mode} seed={seed} n_hidden={n_hidden}\n")
        writer = csv.writer(fh)
        writer.writerow(["epoch", "total", "mse_u", "mse_f", "elapsed_s"])
        for r in trace.records:
            writer.writerow([r.epoch, repr(r.total), repr(r.data_term),
                             repr(r.residual_term), repr(r.elapsed_s)])


@dataclass
class RunResult:
    mode: str
    n_hidden: int
    seed: int
    status: str
    pretrain_s: float
    train_s: float
    final_total: float
    final_mse_u: float
    final_mse_f: float
    error: str = ""


def run_single(spec: dict) -> RunResult:
    """One (mode, width, seed) training run; isolated enough to run in a
    worker process.  ``spec`` carries paths plus scalar settings only."""
    mode = spec["mode"]
    n_hidden = spec["n_hidden"]
    seed = spec["seed"]
    try:
        scenario = reference_solver.load_scenario_csv(spec["scenario_path"])
        field_ = reference_solver.load_field_csv(spec["field_path"])
        phys = PhysicalParams()
        batch = reference_solver.sample_training_points(
            field_, scenario, spec["n_boundary"], spec["n_collocation"],
            spec["data_seed"], phys,
        )
        scaler = pretrain.build_scaler(batch, scenario)
        tc = trainer.TrainConfig(
            mode=mode,
            n_hidden=n_hidden,
            adam_epochs=spec["adam_epochs"],
            adam_lr=spec["adam_lr"],
            lbfgs_max_iters=spec["lbfgs_max_iters"],
            seed=seed,
            loss_spec=LossSpec(spec["lambda_u"], spec["lambda_f"], "mse"),
        )
        budget = milp.SolveBudget(
            max_nodes=spec["pretrain_max_nodes"],
            max_seconds=spec["pretrain_max_seconds"],
        )
        trace = trainer.train_pipeline(batch, scaler, phys, tc, pretrain_budget=budget)
        final = trace.final_losses
        out = spec.get("out_dir")
        if out:
            layout = out_layout(out)
            tag = f"{mode}_{n_hidden}n_{seed}"
            write_trace_csv(layout["traces"] / f"trace_{tag}.csv", trace, mode, seed, n_hidden)
            network.save_checkpoint(layout["checkpoints"] / f"{tag}.json",
                                    trace.final_params, scaler)
        return RunResult(
            mode=mode, n_hidden=n_hidden, seed=seed, status="ok",
            pretrain_s=trace.pretrain_seconds or 0.0,
            train_s=final.elapsed_s,
            final_total=final.total,
            final_mse_u=final.data_term,
            final_mse_f=final.residual_term,
        )
    except Exception as exc:  # sweep keeps going; the failure is recorded
        return RunResult(mode=mode, n_hidden=n_hidden, seed=seed, status="failed",
                         pretrain_s=math.nan, train_s=math.nan,
                         final_total=math.nan, final_mse_u=math.nan,
                         final_mse_f=math.nan, error=f"{type(exc).__name__}: {exc}")


def _mean_std(values) -> tuple[float, float]:
    values = [v for v in values if not math.isnan(v)]
    if not values:
        return math.nan, math.nan
    mean = statistics.fmean(values)
    std = statistics.stdev(values) if len(values) > 1 else 0.0
    return mean, std


def aggregate(results) -> list[dict]:
    """Mean and sample standard deviation per (mode, n_hidden) cell."""
    cells: dict[tuple, list[RunResult]] = {}
    for r in results:
        if r.status == "ok":
            cells.setdefault((r.mode, r.n_hidden), []).append(r)
    rows = []
    for (mode, width), rs in sorted(cells.items()):
        row = {"mode": mode, "n_hidden": width, "n_runs": len(rs)}
        for name in ("final_total", "final_mse_u", "final_mse_f", "train_s", "pretrain_s"):
            mean, std = _mean_std([getattr(r, name) for r in rs])
            row[f"mean_{name}"] = mean
            row[f"std_{name}"] = std
        rows.append(row)
    return rows


def write_runs_csv(path, results) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["mode", "n_hidden", "seed", "status", "pretrain_s",
                         "train_s", "final_total", "final_mse_u", "final_mse_f",
                         "error"])
        for r in results:
            writer.writerow([r.mode, r.n_hidden, r.seed, r.status,
                             repr(r.pretrain_s), repr(r.train_s),
                             repr(r.final_total), repr(r.final_mse_u),
                             repr(r.final_mse_f), r.error])


def write_aggregates_csv(path, rows) -> None:
    header = ["mode", "n_hidden", "n_runs",
              "mean_final_total", "std_final_total",
              "mean_final_mse_u", "std_final_mse_u",
              "mean_final_mse_f", "std_final_mse_f",
              "mean_train_s", "std_train_s",
              "mean_pretrain_s", "std_pretrain_s"]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([row["mode"], row["n_hidden"], row["n_runs"]] +
                            [repr(row[k]) for k in header[3:]])


def write_boxplot_csv(path, results) -> None:
    """Per-run final losses grouped by mode and width, box-plot ready."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["mode", "n_hidden", "seed", "final_total"])
        for r in sorted(results, key=lambda r: (r.mode, r.n_hidden, r.seed)):
            if r.status == "ok":
                writer.writerow([r.mode, r.n_hidden, r.seed, repr(r.final_total)])


def prepare_data(config: ExperimentConfig) -> tuple[Path, Path]:
    """Generate (or reuse) the sweep's scenario and reference field files."""
    layout = out_layout(config.out_dir)
    scen_path = layout["scenario"] / f"scenario_{config.scenario_seed}.csv"
    field_path = layout["scenario"] / (
        f"reference_{config.scenario_seed}_{config.eval_nx}x{config.eval_nt}.csv"
    )
    scenario = reference_solver.generate_scenario(
        config.scenario_seed, config.horizon_hours, config.step_minutes
    )
    reference_solver.save_scenario_csv(scen_path, scenario)
    field_ = reference_solver.solve(PhysicalParams(), scenario, eval_grid(config, scenario))
    reference_solver.save_field_csv(field_path, field_)
    return scen_path, field_path


def run_sweep(config: ExperimentConfig) -> list[RunResult]:
    """Full comparison sweep; writes runs/aggregates/boxplot CSVs."""
    scen_path, field_path = prepare_data(config)
    specs = []
    for mode in config.modes:
        for width in config.n_hidden:
            for seed in config.run_seeds:
                specs.append({
                    "mode": mode,
                    "n_hidden": width,
                    "seed": seed,
                    "scenario_path": str(scen_path),
                    "field_path": str(field_path),
                    "n_boundary": config.n_boundary,
                    "n_collocation": config.n_collocation,
                    "data_seed": config.data_seed,
                    "adam_epochs": config.adam_epochs,
                    "adam_lr": config.adam_lr,
                    "lbfgs_max_iters": config.lbfgs_max_iters,
                    "lambda_u": config.lambda_u,
                    "lambda_f": config.lambda_f,
                    "pretrain_max_nodes": config.pretrain_max_nodes,
                    "pretrain_max_seconds": config.pretrain_max_seconds,
                    "out_dir": config.out_dir,
                })
    if config.jobs > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            results = list(pool.map(run_single, specs))
    else:
        results = [run_single(spec) for spec in specs]

    layout = out_layout(config.out_dir)
    write_runs_csv(layout["summary"] / "runs.csv", results)
    write_aggregates_csv(layout["summary"] / "aggregates.csv", aggregate(results))
    write_boxplot_csv(layout["summary"] / "boxplot.csv", results)
    return results


SLICE_HOURS = (15.0, 30.0, 50.0, 65.0, 80.0)


def write_time_slices(out_dir, pred: TemperatureField, ref: TemperatureField,
                      hours=SLICE_HOURS) -> list[Path]:
    """One CSV per requested instant with x, reference and predicted rows."""
    paths = []
    ts_h = ref.grid.ts / 3600.0
    for t_h in hours:
        if t_h < ts_h[0] - 1e-9 or t_h > ts_h[-1] + 1e-9:
            continue
        j = int(np.argmin(np.abs(ts_h - t_h)))
        path = Path(out_dir) / f"slice_t{t_h:g}h.csv"
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["x_m", "u_ref", "u_pred"])
            for i, x in enumerate(ref.grid.xs):
                writer.writerow([repr(float(x)), repr(float(ref.values[i, j])),
                                 repr(float(pred.values[i, j]))])
        paths.append(path)
    return paths
