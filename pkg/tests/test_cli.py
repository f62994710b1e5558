import json
import subprocess
import sys

import pytest

from nlocch.cli import main
from nlocch.config import ExperimentConfig, serialize
from nlocch.io import read_report_json, read_trajectory


@pytest.fixture
def small_config(tmp_path):
    cfg = ExperimentConfig(
        points=(32, 32), epsilons=(0.4, 0.2, 0.1), t_end=0.01, dt_base=1e-3,
        snapshot_stride=1, output=str(tmp_path / "out"),
    )
    path = tmp_path / "small.ini"
    path.write_text(serialize(cfg))
    return path


class TestCommands:
    def test_verify_assumptions(self, capsys):
        assert main(["verify-assumptions"]) == 0
        out = capsys.readouterr().out
        assert "moment_n1: ok" in out and "moment_n3: ok" in out

    def test_verify_assumptions_default_config(self, capsys):
        from pathlib import Path

        cfg = Path(__file__).resolve().parents[1] / "configs" / "default.ini"
        assert main(["verify-assumptions", str(cfg)]) == 0
        lines = [l for l in capsys.readouterr().out.splitlines() if l.startswith("moment")]
        assert all(float(l.split("residual=")[1]) <= 1e-8 for l in lines)

    def test_simulate_local(self, small_config, tmp_path):
        assert main(["simulate-local", str(small_config), "--quiet"]) == 0
        traj = read_trajectory(tmp_path / "out" / "local")
        assert len(traj) == 11 and traj.times[-1] == 0.01

    def test_simulate_nonlocal_output_override(self, small_config, tmp_path):
        out = tmp_path / "elsewhere"
        assert main(["simulate-nonlocal", str(small_config), "--eps", "0.2", "--output", str(out), "--quiet"]) == 0
        traj = read_trajectory(out / "nonlocal_eps0.2")
        assert traj.info["epsilon"] == 0.2

    def test_positivity_gate_exit_code(self, tmp_path, capsys):
        cfg = ExperimentConfig(points=(16, 16), epsilons=(0.5, 0.25, 0.125), t_end=2.0, dt_base=2.0)
        path = tmp_path / "bad.ini"
        path.write_text(serialize(cfg))
        assert main(["simulate-local", str(path), "--quiet"]) == 2
        assert "positivity gate" in capsys.readouterr().err

    def test_config_error_exit_code(self, tmp_path, capsys):
        path = tmp_path / "bad.ini"
        path.write_text("[model]\nP = -1\n[sweep]\nepsilons = 0.2, 0.1, 0.05\n")
        assert main(["convergence-sweep", str(path)]) == 2
        assert "line 2" in capsys.readouterr().err

    def test_missing_file(self, tmp_path):
        assert main(["simulate-local", str(tmp_path / "nope.ini")]) == 2

    def test_operator_study(self, small_config, tmp_path):
        assert main(["operator-study", str(small_config), "--quiet"]) == 0
        doc = json.loads((tmp_path / "out" / "operator_study" / "operator_study.json").read_text())
        assert len(doc["study"]["rows"]) == 3
        assert "created" in doc["metadata"]

    def test_sweep_reports_reproducible(self, small_config, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["convergence-sweep", str(small_config), "--output", str(a), "--quiet"]) == 0
        assert main(["convergence-sweep", str(small_config), "--output", str(b), "--quiet", "--parallel", "2"]) == 0
        assert (a / "sweep" / "report.csv").read_bytes() == (b / "sweep" / "report.csv").read_bytes()
        ja = json.loads((a / "sweep" / "report.json").read_text())
        jb = json.loads((b / "sweep" / "report.json").read_text())
        ja.pop("metadata"), jb.pop("metadata")
        assert ja == jb
        report, cfg = read_report_json(a / "sweep" / "report.json")
        assert cfg["sweep"]["epsilons"] == "0.4, 0.2, 0.1"
        assert len(report.rows) == 3

    def test_assert_rates_failure(self, tmp_path, monkeypatch):
        from nlocch import cli

        cfg = ExperimentConfig(points=(32, 32), epsilons=(0.4, 0.2, 0.1), t_end=0.002, dt_base=1e-3,
                               snapshot_stride=1, output=str(tmp_path))
        path = tmp_path / "c.ini"
        path.write_text(serialize(cfg))
        monkeypatch.setattr(cli, "RATE_THRESHOLD", 10.0)
        assert main(["convergence-sweep", str(path), "--assert-rates", "--quiet"]) == 4
        assert main(["operator-study", str(path), "--assert-rates", "--quiet"]) == 4

    def test_solver_abort_exit_code(self, small_config, monkeypatch):
        from nlocch import cli
        from nlocch.errors import SolverAbort

        def boom(*a, **k):
            raise SolverAbort("blew up", time=0.1, max_phi=1e300)

        monkeypatch.setattr(cli, "run_local", boom)
        assert main(["simulate-local", str(small_config), "--quiet"]) == 3

    def test_bad_parallel(self, small_config):
        assert main(["convergence-sweep", str(small_config), "--parallel", "0"]) == 2

    def test_module_entry_point(self):
        proc = subprocess.run([sys.executable, "-m", "nlocch", "verify-assumptions", "--quiet"],
                              capture_output=True, text=True)
        assert proc.returncode == 0
