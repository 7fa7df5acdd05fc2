import json
import os
import subprocess
import sys

import numpy as np
import pytest

from greedypde.cli import (
    ExperimentConfig,
    export_breakpoints,
    main,
    run_experiment,
)
from greedypde.dictionary import Expansion, RidgeNeuron, relu_power
from greedypde.errors import UnsupportedDomainError


def neuron(omega, bias):
    return RidgeNeuron(np.array([float(omega)]), bias, relu_power(2))


class TestExportBreakpoints:
    def test_simple_breakpoint(self):
        u = Expansion([(1.0, neuron(1.0, -0.5))])
        assert export_breakpoints(u) == [0.5]

    def test_inactive_neuron_excluded(self):
        u = Expansion([(1.0, neuron(1.0, -2.0)), (1.0, neuron(1.0, 0.25))])
        assert export_breakpoints(u) == [-0.25]

    def test_sorted_output(self):
        u = Expansion([(1.0, neuron(1.0, -0.5)), (1.0, neuron(-1.0, -0.25)),
                       (2.0, neuron(1.0, 0.75))])
        assert export_breakpoints(u) == [-0.75, -0.25, 0.5]

    def test_rejects_2d(self):
        g = RidgeNeuron(np.array([0.6, 0.8]), 0.0, relu_power(2))
        with pytest.raises(UnsupportedDomainError):
            export_breakpoints(Expansion([(1.0, g)]))


class TestRunExperiment:
    def test_unknown_preset(self):
        with pytest.raises(KeyError):
            run_experiment(ExperimentConfig(preset="nope"))

    def test_small_run_outputs(self, tmp_path):
        cfg = ExperimentConfig(
            preset="ex1-neumann", n_schedule=[4, 8],
            quadrature={"cells": 500}, out_dir=str(tmp_path),
        )
        report, paths = run_experiment(cfg)
        assert len(report.rows) == 2
        for kind in ("csv", "txt", "png"):
            assert os.path.exists(paths[kind])
        text = open(paths["csv"], encoding="utf-8").read()
        assert text.splitlines()[0] == "n,l2,h1,order_l2,order_h1"
        # %.6e formatting throughout
        assert "e-0" in text or "e+0" in text

    def test_csv_byte_determinism(self, tmp_path):
        outputs = []
        for sub in ("a", "b"):
            cfg = ExperimentConfig(
                preset="ex1-neumann", n_schedule=[4, 8], seed=3,
                quadrature={"cells": 500}, out_dir=str(tmp_path / sub),
            )
            _, paths = run_experiment(cfg)
            outputs.append(open(paths["csv"], "rb").read())
        assert outputs[0] == outputs[1]

    def test_breakpoints_written_for_ex2(self, tmp_path):
        cfg = ExperimentConfig(
            preset="ex2-peaks", n_schedule=[4, 8],
            quadrature={"cells": 500}, out_dir=str(tmp_path),
        )
        _, paths = run_experiment(cfg)
        assert os.path.exists(paths["breakpoints_csv"])
        assert os.path.exists(paths["breakpoints_png"])
        lines = open(paths["breakpoints_csv"]).read().splitlines()
        assert lines[0] == "breakpoint"

    def test_quadrature_override_via_config(self, tmp_path):
        cfg = ExperimentConfig(
            preset="ex1-neumann", n_schedule=[4],
            quadrature={"cells": 250}, out_dir=str(tmp_path),
        )
        report, _ = run_experiment(cfg)
        assert report.metadata["quadrature"]["cells"] == 250


class TestMainEntry:
    def test_unknown_preset_exit_code(self, capsys):
        rc = main(["run", "does-not-exist"])
        assert rc == 2
        assert "unknown preset" in capsys.readouterr().err

    def test_no_command_shows_help(self, capsys):
        assert main([]) == 2

    def test_run_with_flags_and_env(self, tmp_path, capsys, monkeypatch):
        monkeypatch.setenv("GREEDYPDE_OUT_DIR", str(tmp_path / "envdir"))
        cfg_file = tmp_path / "cfg.json"
        cfg_file.write_text(json.dumps({
            "preset": "ex1-neumann",
            "quadrature": {"cells": 400},
        }))
        rc = main(["run", "ex1-neumann", "--n-schedule", "4,8",
                   "--seed", "1", "--config", str(cfg_file)])
        assert rc == 0
        assert (tmp_path / "envdir" / "ex1-neumann.csv").exists()
        out = capsys.readouterr().out
        assert "wrote" in out

    def test_out_flag_overrides_env(self, tmp_path, monkeypatch):
        monkeypatch.setenv("GREEDYPDE_OUT_DIR", str(tmp_path / "envdir"))
        cfg_file = tmp_path / "c.json"
        cfg_file.write_text(json.dumps({"quadrature": {"cells": 300}}))
        rc = main(["run", "ex1-neumann", "--n-schedule", "4",
                   "--out", str(tmp_path / "flagdir"),
                   "--config", str(cfg_file)])
        assert rc == 0
        assert (tmp_path / "flagdir" / "ex1-neumann.csv").exists()

    def test_bad_config_exit_code(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert main(["run", "ex1-neumann", "--config", str(bad)]) == 2

    def test_console_script_runs(self, tmp_path):
        cfg_file = tmp_path / "c.json"
        cfg_file.write_text(json.dumps({"quadrature": {"cells": 400}}))
        proc = subprocess.run(
            [sys.executable, "-m", "greedypde.cli", "run", "ex1-neumann",
             "--n-schedule", "4", "--out", str(tmp_path),
             "--config", str(cfg_file)],
            capture_output=True, text=True, timeout=300,
        )
        assert proc.returncode == 0, proc.stderr
        assert (tmp_path / "ex1-neumann.txt").exists()


class TestSmokeTier:
    """Every preset completes its smallest scheduled row within a minute."""

    @pytest.mark.parametrize("preset", [
        "ex1-neumann", "ex1-dirichlet", "ex1-pinn", "ex2-peaks",
        "ex3-2d", "ex3-2d-pinn", "ex4-biharmonic", "ex5-highdim",
        "ex6-poisson-boltzmann",
    ])
    def test_smallest_row_under_a_minute(self, preset, tmp_path):
        import time

        from greedypde.presets import PRESETS

        plan = PRESETS[preset](ExperimentConfig(preset=preset))
        smallest = plan.schedule[0]
        cfg = ExperimentConfig(preset=preset, n_schedule=[smallest],
                               out_dir=str(tmp_path))
        start = time.perf_counter()
        run_experiment(cfg)
        elapsed = time.perf_counter() - start
        assert elapsed < 60.0, f"{preset} smallest row took {elapsed:.1f}s"


class TestBreakpointClustering:
    def test_ex2_breakpoints_cluster_at_peaks(self, tmp_path):
        cfg = ExperimentConfig(preset="ex2-peaks", n_schedule=[128],
                               out_dir=str(tmp_path))
        _, paths = run_experiment(cfg)
        breaks = [
            float(line)
            for line in open(paths["breakpoints_csv"]).read().splitlines()[1:]
        ]
        peaks = (-0.5, 0.0, 0.5)
        close = sum(1 for b in breaks
                    if min(abs(b - p) for p in peaks) <= 0.15)
        assert close >= 0.6 * len(breaks)
