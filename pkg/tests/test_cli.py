import csv
import json
import math
from pathlib import Path

import numpy as np
import pytest

from heatpinn import experiment, network, reference_solver
from heatpinn.cli import main
from heatpinn.experiment import (ExperimentConfig, GridMismatch, RunResult,
                                 aggregate, normalized_mse, predict_field,
                                 run_sweep)
from heatpinn.heat_model import Domain, PhysicalParams
from heatpinn.network import NetworkParams, Scaler
from heatpinn.reference_solver import Grid, TemperatureField


def read_rows(path):
    with open(path, newline="") as fh:
        return [row for row in csv.reader(fh) if row and not row[0].startswith("#")]


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Generated scenario + reference field shared across CLI tests."""
    out = tmp_path_factory.mktemp("cliout")
    rc = main(["--seed", "3", "--out", str(out), "generate",
               "--horizon-hours", "24", "--step-minutes", "30",
               "--nx", "24", "--nt", "30"])
    assert rc == 0
    return out


def scenario_path(out):
    return str(out / "scenario" / "scenario_3.csv")


def field_path(out):
    return str(out / "scenario" / "reference_3_24x30.csv")


class TestGenerate:
    def test_outputs_exist(self, workspace):
        assert Path(scenario_path(workspace)).exists()
        assert Path(field_path(workspace)).exists()

    def test_scenario_row_count_100h(self, tmp_path):
        rc = main(["--seed", "1", "--out", str(tmp_path), "generate",
                   "--nx", "12", "--nt", "10"])
        assert rc == 0
        rows = read_rows(tmp_path / "scenario" / "scenario_1.csv")
        assert len(rows) == 402  # header + 401 samples at 15 min over 100 h

    def test_deterministic_rerun(self, tmp_path):
        args = ["--seed", "5", "--out", str(tmp_path), "generate",
                "--horizon-hours", "6", "--step-minutes", "60",
                "--nx", "8", "--nt", "6"]
        assert main(args) == 0
        first = (tmp_path / "scenario" / "scenario_5.csv").read_bytes()
        assert main(args) == 0
        assert (tmp_path / "scenario" / "scenario_5.csv").read_bytes() == first

    def test_field_boundary_rows_match_scenario(self, workspace):
        sc = reference_solver.load_scenario_csv(scenario_path(workspace))
        field = reference_solver.load_field_csv(field_path(workspace))
        assert np.allclose(field.values[0], sc.ambient_at(field.grid.ts), atol=1e-9)
        assert np.allclose(field.values[-1], sc.top_oil_at(field.grid.ts), atol=1e-9)


class TestPretrainCmd:
    def test_boundary_pretrain_writes_artifacts(self, workspace):
        rc = main(["--seed", "2", "--out", str(workspace), "pretrain",
                   "--mode", "boundary", "--n-hidden", "3",
                   "--data", scenario_path(workspace),
                   "--field", field_path(workspace),
                   "--n-boundary", "4", "--n-collocation", "2",
                   "--max-nodes", "4", "--max-seconds", "20"])
        assert rc == 0
        ckpt = workspace / "checkpoints" / "pretrain_boundary_3n_2.json"
        assert ckpt.exists()
        params, scaler = network.load_checkpoint(ckpt)
        assert params.n_hidden == 3
        lp = workspace / "summary" / "pretrain_boundary_3n_2.lp"
        assert "Minimize" in lp.read_text()

    def test_full_pretrain_runs(self, workspace):
        rc = main(["--seed", "2", "--out", str(workspace), "pretrain",
                   "--mode", "full", "--n-hidden", "2",
                   "--data", scenario_path(workspace),
                   "--field", field_path(workspace),
                   "--n-boundary", "3", "--n-collocation", "1",
                   "--max-nodes", "3", "--max-seconds", "30"])
        assert rc == 0


class TestTrainCmd:
    def test_vanilla_trace_rows(self, workspace, capsys):
        rc = main(["--seed", "4", "--out", str(workspace), "train",
                   "--mode", "vanilla", "--n-hidden", "3", "--epochs", "10",
                   "--data", scenario_path(workspace),
                   "--field", field_path(workspace),
                   "--n-boundary", "4", "--n-collocation", "2",
                   "--eval-nx", "24", "--eval-nt", "30"])
        assert rc == 0
        rows = read_rows(workspace / "traces" / "trace_vanilla_3n_4.csv")
        assert rows[0] == ["epoch", "total", "mse_u", "mse_f", "elapsed_s"]
        assert len(rows) == 12  # header + initial + 10 epochs

    def test_predicted_grid_dimensions(self, workspace):
        field = reference_solver.load_field_csv(
            workspace / "grids" / "predicted_vanilla_3n_4.csv")
        assert field.values.shape == (24, 30)

    def test_same_invocation_same_losses(self, workspace):
        args = ["--seed", "6", "--out", str(workspace), "train",
                "--mode", "vanilla", "--n-hidden", "2", "--epochs", "5",
                "--data", scenario_path(workspace),
                "--field", field_path(workspace),
                "--n-boundary", "3", "--n-collocation", "1",
                "--eval-nx", "24", "--eval-nt", "30"]
        assert main(args) == 0
        first = read_rows(workspace / "traces" / "trace_vanilla_2n_6.csv")
        assert main(args) == 0
        second = read_rows(workspace / "traces" / "trace_vanilla_2n_6.csv")
        # loss columns identical; elapsed times may differ
        assert [r[:4] for r in first] == [r[:4] for r in second]

    def test_pretrained_mode_requires_checkpoint(self, workspace):
        rc = main(["--seed", "1", "--out", str(workspace), "train",
                   "--mode", "boundary", "--n-hidden", "3", "--epochs", "2",
                   "--data", scenario_path(workspace),
                   "--field", field_path(workspace)])
        assert rc == 1

    def test_train_from_pretrain_checkpoint(self, workspace):
        ckpt = workspace / "checkpoints" / "pretrain_boundary_3n_2.json"
        rc = main(["--seed", "2", "--out", str(workspace), "train",
                   "--mode", "boundary", "--n-hidden", "3", "--epochs", "3",
                   "--data", scenario_path(workspace),
                   "--field", field_path(workspace),
                   "--checkpoint", str(ckpt),
                   "--n-boundary", "4", "--n-collocation", "2",
                   "--eval-nx", "24", "--eval-nt", "30"])
        assert rc == 0


class TestEvaluateCmd:
    def test_self_evaluation_zero(self, workspace, capsys):
        # predicted grid evaluated against itself
        pred = workspace / "grids" / "predicted_vanilla_3n_4.csv"
        rc = main(["--out", str(workspace), "evaluate",
                   "--predicted", str(pred), "--reference", str(pred)])
        assert rc == 0
        out = capsys.readouterr().out
        mse = float(out.split("normalized total MSE:")[1].split()[0])
        assert mse == 0.0

    def test_checkpoint_against_reference(self, workspace, capsys):
        ckpt = workspace / "checkpoints" / "vanilla_3n_4.json"
        rc = main(["--out", str(workspace), "evaluate",
                   "--checkpoint", str(ckpt),
                   "--reference", field_path(workspace),
                   "--data", scenario_path(workspace)])
        assert rc == 0
        out = capsys.readouterr().out
        assert "normalized total MSE" in out

    def test_slice_rows_match_grid(self, workspace):
        pred = workspace / "grids" / "predicted_vanilla_3n_4.csv"
        rc = main(["--out", str(workspace), "evaluate",
                   "--predicted", str(pred), "--reference", str(pred)])
        assert rc == 0
        slice_path = workspace / "summary" / "slice_t15h.csv"
        rows = read_rows(slice_path)
        assert len(rows) == 1 + 24  # header + one row per spatial point

    def test_grid_mismatch(self, workspace):
        grid_small = Grid(4, 5, Domain(0, 1, 0, 100.0))
        f_small = TemperatureField(grid_small, np.full((4, 5), 300.0))
        grid_big = Grid(6, 5, Domain(0, 1, 0, 100.0))
        f_big = TemperatureField(grid_big, np.full((6, 5), 300.0))
        with pytest.raises(GridMismatch):
            normalized_mse(f_small, f_big, 1.0)

    def test_missing_file_exit_code(self, workspace):
        rc = main(["--out", str(workspace), "evaluate",
                   "--predicted", "/nonexistent.csv",
                   "--reference", field_path(workspace)])
        assert rc == 3


class TestUsage:
    def test_unknown_mode_exit_1(self, workspace):
        rc = main(["--out", str(workspace), "pretrain", "--mode", "bogus",
                   "--data", scenario_path(workspace)])
        assert rc == 1

    def test_missing_required_flag(self):
        assert main(["pretrain", "--mode", "boundary"]) == 1


class TestAggregation:
    def test_mean_and_sample_std(self):
        results = [
            RunResult("vanilla", 8, s, "ok", 0.0, 1.0, total, total, 0.0)
            for s, total in enumerate([1.0, 2.0, 3.0])
        ]
        rows = aggregate(results)
        assert rows[0]["mean_final_total"] == pytest.approx(2.0)
        assert rows[0]["std_final_total"] == pytest.approx(1.0)

    def test_single_run_std_zero(self):
        results = [RunResult("vanilla", 8, 0, "ok", 0.0, 1.0, 0.5, 0.5, 0.0)]
        rows = aggregate(results)
        assert rows[0]["std_final_total"] == 0.0

    def test_failed_runs_excluded(self):
        results = [
            RunResult("vanilla", 8, 0, "ok", 0.0, 1.0, 1.0, 1.0, 0.0),
            RunResult("vanilla", 8, 1, "failed", math.nan, math.nan,
                      math.nan, math.nan, math.nan, error="boom"),
        ]
        rows = aggregate(results)
        assert rows[0]["n_runs"] == 1


class TestCompare:
    def test_tiny_sweep_and_rerun_identical(self, tmp_path):
        config = {
            "n_hidden": [2],
            "repetitions": 2,
            "n_boundary": 3,
            "n_collocation": 1,
            "eval_nx": 8,
            "eval_nt": 6,
            "modes": ["vanilla", "boundary"],
            "adam_epochs": 5,
            "horizon_hours": 6.0,
            "step_minutes": 60.0,
            "pretrain_max_nodes": 2,
            "pretrain_max_seconds": 20.0,
        }
        cfg_path = tmp_path / "config.json"
        cfg_path.write_text(json.dumps(config))
        out = tmp_path / "sweep"
        rc = main(["--config", str(cfg_path), "--out", str(out), "compare"])
        assert rc == 0
        runs = read_rows(out / "summary" / "runs.csv")
        assert len(runs) == 1 + 4  # header + 2 modes x 2 seeds
        assert all(r[3] == "ok" for r in runs[1:])
        boxplot = read_rows(out / "summary" / "boxplot.csv")
        assert len(boxplot) == 1 + 4

        def strip_timings(rows):
            return [r[:4] + r[6:9] for r in rows]

        first = strip_timings(runs)
        rc = main(["--config", str(cfg_path), "--out", str(out), "compare"])
        assert rc == 0
        second = strip_timings(read_rows(out / "summary" / "runs.csv"))
        assert first == second

    def test_unknown_config_key_rejected(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"bogus_key": 1}))
        with pytest.raises(ValueError):
            ExperimentConfig.from_json(bad)


def test_export_lp_command(workspace):
    rc = main(["--seed", "9", "--out", str(workspace), "export-lp",
               "--mode", "boundary", "--n-hidden", "2",
               "--data", scenario_path(workspace),
               "--field", field_path(workspace),
               "--n-boundary", "2", "--n-collocation", "1"])
    assert rc == 0
    path = workspace / "summary" / "pretrain_boundary_2n_9.lp"
    text = path.read_text()
    assert "Binaries" in text and "Subject To" in text


def test_predict_field_constant_network(workspace):
    sc = reference_solver.load_scenario_csv(scenario_path(workspace))
    grid = Grid(6, 5, Domain(0.0, 1.0, sc.t0, sc.t_end))
    p = NetworkParams(np.zeros((2, 5)), np.zeros(2), np.zeros(2), 0.5)
    scaler = Scaler(np.zeros(5), np.ones(5), 290.0, 310.0)
    field = predict_field(p, scaler, sc, PhysicalParams(), grid)
    assert np.allclose(field.values, 300.0)  # 290 + 0.5 * 20
    ref = TemperatureField(grid, np.full((6, 5), 300.0))
    assert normalized_mse(field, ref, scaler.output_span) == pytest.approx(0.0)
