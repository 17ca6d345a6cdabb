import json

import pytest
from click.testing import CliRunner

from dyntomo.cli import main
from dyntomo.dataio import Workspace
from dyntomo.errors import ValidationError
from dyntomo.forward_model import BeamConfig, ScatterConfig
from dyntomo.phantom import GenSettings, GridSpec, SeriesSpec, ShellSpec
from dyntomo.pipeline import (SweepSpec, corrupt_dataset,
                              evaluate_methods, reconstruct_dataset,
                              run_pipeline, simulate_dataset, sweep,
                              validate_manifest, write_report)

GRID32 = GridSpec(32, 22.0 / 32)
FAST_TRAIN = dict(supervised_only=True, lr_g=3e-3, lambda_mass=0.0,
                  epochs=2, batch_size=2, seed=7)


def tiny_counts():
    return {"train": 4, "val": 2, "test": 3}


def build_tiny(ws: Workspace, seed=99, beta0=1.0):
    simulate_dataset(ws, ShellSpec(), GRID32, SeriesSpec(), GenSettings(),
                     counts=tiny_counts(), seed=seed)
    corrupt_dataset(ws, BeamConfig(), ScatterConfig(beta0=beta0))
    reconstruct_dataset(ws)


class TestPipelineStages:
    def test_dataset_layout_and_splits(self, tmp_path):
        ws = Workspace(tmp_path)
        build_tiny(ws)
        index = ws.index()
        assert len(index["series"]) == 9
        assert ws.ids("train") == [f"s{i:04d}" for i in range(4)]
        assert len(ws.ids("test")) == 3
        for sid in ws.ids():
            assert ws.clean_path(sid).exists()
            assert ws.noisy_path(sid).exists()
            assert ws.radiograph_stem(sid).with_suffix(".m.dwt").exists()

    def test_stage_rerun_bit_identical(self, tmp_path):
        ws1, ws2 = Workspace(tmp_path / "a"), Workspace(tmp_path / "b")
        build_tiny(ws1)
        build_tiny(ws2)
        for sid in ws1.ids():
            assert ws1.clean_path(sid).read_bytes() == ws2.clean_path(sid).read_bytes()
            assert ws1.noisy_path(sid).read_bytes() == ws2.noisy_path(sid).read_bytes()
            m1 = ws1.radiograph_stem(sid).with_suffix(".m.dwt").read_bytes()
            m2 = ws2.radiograph_stem(sid).with_suffix(".m.dwt").read_bytes()
            assert m1 == m2

    def test_evaluate_row_count_and_report_bytes(self, tmp_path):
        ws = Workspace(tmp_path)
        build_tiny(ws)
        methods = ["noisy", "classical"]
        report = evaluate_methods(ws, methods, classical_iters=300)
        assert len(report["rows"]) == len(methods) * 3
        write_report(ws, report, name="metrics")
        report2 = evaluate_methods(ws, methods, classical_iters=300)
        write_report(ws, report2, name="metrics2")
        b1 = (ws.reports_dir() / "metrics.csv").read_bytes()
        b2 = (ws.reports_dir() / "metrics2.csv").read_bytes()
        assert b1 == b2

    def test_summary_stats_shape(self, tmp_path):
        ws = Workspace(tmp_path)
        build_tiny(ws)
        report = evaluate_methods(ws, ["noisy"])
        s = report["summary"]["noisy"]["nl2"]
        assert set(s) == {"median", "q1", "q3", "mean", "std"}
        assert s["q1"] <= s["median"] <= s["q3"]

    def test_run_pipeline_manifest(self, tmp_path):
        manifest = {
            "phantom": {"grid": {"n_cells": 32, "dx": 22.0 / 32}},
            "dataset": {"n_train": 2, "n_val": 2, "n_test": 2, "seed": 5},
            "scatter": {"beta0": 1.0},
            "train": {"supervised": dict(FAST_TRAIN)},
            "methods": ["noisy", "supervised"],
            "classical_iters": 200,
        }
        report = run_pipeline(manifest, tmp_path / "run")
        assert len(report["rows"]) == 2 * 2
        ws = Workspace(tmp_path / "run")
        assert (ws.reports_dir() / "metrics.csv").exists()
        assert (ws.reports_dir() / "metrics_summary.csv").exists()
        assert ws.checkpoint_path("supervised").exists()
        assert (ws.root / "manifest.json").exists()

    def test_clean_pipeline_noisy_error_is_discretization_only(self, tmp_path):
        manifest = {
            "phantom": {"grid": {"n_cells": 32, "dx": 22.0 / 32}},
            "dataset": {"n_train": 1, "n_val": 1, "n_test": 2, "seed": 8},
            "scatter": {"beta0": 0.0, "noise_var": 0.0},
            "methods": ["noisy"],
        }
        report = run_pipeline(manifest, tmp_path / "clean")
        assert report["summary"]["noisy"]["nl2"]["mean"] <= 2e-2

    def test_manifest_validation(self, tmp_path):
        with pytest.raises(ValidationError):
            validate_manifest({"phantom": {}}, tmp_path)
        with pytest.raises(ValidationError):
            validate_manifest({"phantom": {}, "dataset": {},
                               "methods": ["bogus"]}, tmp_path)
        with pytest.raises(ValidationError):
            validate_manifest({"phantom": {}, "dataset": {},
                               "checkpoints": {"supervised": "missing.ckpt"}},
                              tmp_path)

    def test_sweep_single_cell_matches_direct_run(self, tmp_path):
        ws = Workspace(tmp_path)
        build_tiny(ws, beta0=0.5)
        spec = SweepSpec(beta0_values=[0.5], noise_vars=[0.0], methods=["noisy"])
        cells = sweep(spec, ws, {}, split="test")
        direct = evaluate_methods(ws, ["noisy"])
        assert cells[0]["summary"]["noisy"]["nl2"]["mean"] == pytest.approx(
            direct["summary"]["noisy"]["nl2"]["mean"], rel=1e-12)

    def test_sweep_grid_shape(self, tmp_path):
        ws = Workspace(tmp_path)
        build_tiny(ws)
        spec = SweepSpec(beta0_values=[0.01, 0.1, 1.0], noise_vars=[0.0, 1e-4],
                         methods=["noisy"])
        cells = sweep(spec, ws, {}, split="test")
        assert len(cells) == 6
        assert all(set(c["summary"]) == {"noisy"} for c in cells)


class TestCli:
    def run_ok(self, runner, args):
        result = runner.invoke(main, args, catch_exceptions=False)
        assert result.exit_code == 0, result.output
        return result

    def test_full_cli_flow(self, tmp_path):
        runner = CliRunner()
        ws_dir = tmp_path / "ws"
        phantom_cfg = tmp_path / "phantom.json"
        phantom_cfg.write_text(json.dumps(
            {"grid": {"n_cells": 32, "dx": 22.0 / 32}}))
        train_cfg = tmp_path / "train.json"
        train_cfg.write_text(json.dumps(FAST_TRAIN))
        sweep_cfg = tmp_path / "sweep.json"
        sweep_cfg.write_text(json.dumps(
            {"beta0_values": [0.1, 1.0], "noise_vars": [0.0],
             "methods": ["noisy"]}))

        self.run_ok(runner, ["simulate", "--config", str(phantom_cfg),
                             "--n-train", "4", "--n-val", "2", "--n-test", "2",
                             "--seed", "3", "--out", str(ws_dir)])
        self.run_ok(runner, ["corrupt", "--workspace", str(ws_dir), "--beta0", "1.0"])
        self.run_ok(runner, ["reconstruct", "--workspace", str(ws_dir)])
        self.run_ok(runner, ["train", "--workspace", str(ws_dir),
                             "--config", str(train_cfg)])
        self.run_ok(runner, ["denoise", "--workspace", str(ws_dir),
                             "--checkpoint", "supervised", "--split", "test"])
        self.run_ok(runner, ["refine", "--workspace", str(ws_dir),
                             "--method", "supervised", "--max-iters", "200"])
        self.run_ok(runner, ["evaluate", "--workspace", str(ws_dir),
                             "--methods", "noisy,supervised,supervised+pp",
                             "--classical-iters", "200", "--refine-iters", "200"])
        self.run_ok(runner, ["sweep", "--workspace", str(ws_dir),
                             "--config", str(sweep_cfg),
                             "--classical-iters", "100", "--refine-iters", "100"])
        self.run_ok(runner, ["plot", "--workspace", str(ws_dir)])

        ws = Workspace(ws_dir)
        assert (ws.reports_dir() / "metrics.csv").exists()
        assert (ws.reports_dir() / "sweep.csv").exists()
        plots = list(ws.plots_dir().iterdir())
        assert any(p.suffix == ".png" for p in plots)
        assert any(p.suffix == ".pgm" for p in plots)
        assert any(p.suffix == ".csv" for p in plots)
        profile = next(p for p in plots if p.name.startswith("profile_")
                       and p.suffix == ".csv")
        header = profile.read_text().splitlines()[0].split(",")
        # x, clean, then one column per method present
        assert header[0] == "x" and header[1] == "clean"
        assert len(header) >= 2 + 1

    def test_exit_code_validation_failure(self, tmp_path):
        runner = CliRunner()
        result = runner.invoke(main, ["reconstruct", "--workspace", str(tmp_path)])
        assert result.exit_code == 1

    def test_exit_code_stage_failure(self, tmp_path):
        runner = CliRunner()
        ws_dir = tmp_path / "ws"
        self.run_ok(runner, ["simulate", "--out", str(ws_dir), "--n-train", "1",
                             "--n-val", "1", "--n-test", "1"])
        # clobber a clean tensor so the corrupt stage fails mid-run
        ws = Workspace(ws_dir)
        ws.clean_path("s0000").write_bytes(b"garbage")
        result = runner.invoke(main, ["corrupt", "--workspace", str(ws_dir)])
        assert result.exit_code == 2

    def test_evaluate_rejects_missing_checkpoint(self, tmp_path):
        runner = CliRunner()
        ws_dir = tmp_path / "ws2"
        self.run_ok(runner, ["simulate", "--out", str(ws_dir), "--n-train", "1",
                             "--n-val", "1", "--n-test", "1",
                             "--config", self._tiny_cfg(tmp_path)])
        result = runner.invoke(main, ["evaluate", "--workspace", str(ws_dir),
                                      "--methods", "noisy",
                                      "--checkpoint", "supervised=missing.ckpt"])
        assert result.exit_code == 1

    @staticmethod
    def _tiny_cfg(tmp_path):
        p = tmp_path / "tiny_phantom.json"
        p.write_text(json.dumps({"grid": {"n_cells": 32, "dx": 22.0 / 32}}))
        return str(p)
