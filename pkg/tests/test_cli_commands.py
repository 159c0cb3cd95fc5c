"""
Tests for CLI commands.
"""

import json
from unittest.mock import patch

import pandas as pd
import pytest
from typer.testing import CliRunner

from src.cli import app, dispatch
from src.models.schemas import Report
from src.services.instance_io import parse_instance
from src.services.report_service import load_report

QUIET = ["--log-level", "ERROR"]


@pytest.fixture
def runner():
    """Create CLI test runner."""
    return CliRunner()


def invoke(runner, *args):
    return runner.invoke(app, QUIET + [str(a) for a in args])


def report_of(result):
    return json.loads(result.stdout)


class TestCLICommands:
    """Test CLI command functionality."""

    def test_beta(self, runner):
        result = invoke(runner, "beta", "--tol", 1e-8)
        assert result.exit_code == 0
        doc = report_of(result)
        assert doc["command"] == "beta"
        assert doc["results"]["beta"] == pytest.approx(0.7454403, abs=1e-6)
        assert doc["inputs"]["tol"] == 1e-8

    def test_beta_bad_tolerance(self, runner):
        result = invoke(runner, "beta", "--tol", 0.5)
        assert result.exit_code == 3
        assert report_of(result)["error"] == "domain_error"

    def test_beta_report_file(self, runner, tmp_path):
        path = tmp_path / "beta.json"
        result = invoke(runner, "beta", "--out", path)
        assert result.exit_code == 0
        assert load_report(path).command == "beta"

    @pytest.mark.parametrize(
        "what, value", [("max", 0.8), ("maxk:2", 0.3), ("opt", 0.7), ("optfree", 0.8)]
    )
    def test_bench(self, runner, instance_a_path, what, value):
        result = invoke(runner, "bench", "--instance", instance_a_path, "--what", what)
        assert result.exit_code == 0
        assert report_of(result)["results"]["value"] == pytest.approx(value)

    def test_bench_optfree_order(self, runner, instance_a_path):
        result = invoke(runner, "bench", "--instance", instance_a_path, "--what", "optfree")
        assert report_of(result)["results"]["order"] == [0, 1]

    def test_bench_bad_what(self, runner, instance_a_path):
        result = invoke(runner, "bench", "--instance", instance_a_path, "--what", "median")
        assert result.exit_code == 3
        doc = report_of(result)
        assert doc["error"] == "domain_error"
        assert "median" in doc["message"]

    def test_missing_instance_file(self, runner, tmp_path):
        result = invoke(runner, "bench", "--instance", tmp_path / "missing.json")
        assert result.exit_code == 4
        assert report_of(result)["error"] == "parse_error"

    def test_capacity_error(self, runner, tmp_path):
        path = tmp_path / "big.json"
        path.write_text(json.dumps({"variables": [{"atoms": [[0, 0.5], [1, 0.5]]}] * 25}))
        result = invoke(runner, "bench", "--instance", path, "--what", "opt")
        assert result.exit_code == 5
        assert report_of(result)["error"] == "capacity_error"

    def test_ydump(self, runner, tmp_path):
        path = tmp_path / "y.csv"
        result = invoke(runner, "ydump", "--grid", 200, "--out", path)
        assert result.exit_code == 0
        doc = json.loads(result.stdout[: result.stdout.rindex("}") + 1])
        assert doc["inputs"]["grid"] == 200
        frame = pd.read_csv(path)
        assert list(frame.columns) == ["t", "y", "yprime"]
        assert doc["results"]["rows"] == len(frame)
        assert frame["t"].iloc[0] == pytest.approx(0.0, abs=1e-12)
        assert frame["y"].iloc[0] == pytest.approx(1.0, abs=1e-6)
        assert frame["t"].is_monotonic_increasing

    def test_ydump_small_grid(self, runner):
        result = invoke(runner, "ydump", "--grid", 11)
        assert result.exit_code == 3
        assert report_of(result)["error"] == "domain_error"

    def test_worstcase(self, runner, tmp_path):
        path = tmp_path / "wc.json"
        result = invoke(runner, "worstcase", "--q", 0.1, "--n", 50, "--out", path)
        assert result.exit_code == 0
        doc = json.loads(result.stdout[: result.stdout.rindex("}") + 1])
        assert doc["results"]["H"] > doc["results"]["r_star_q"] > 0
        inst = parse_instance(path)
        assert inst.n == 50
        assert inst.m == 50

    def test_worstcase_q_out_of_range(self, runner):
        result = invoke(runner, "worstcase", "--q", 0.7)
        assert result.exit_code == 3

    def test_order(self, runner, instance_a_path):
        result = invoke(runner, "order", "--instance", instance_a_path, "--eps", 0.25)
        assert result.exit_code == 0
        doc = report_of(result)
        assert doc["results"]["value"] == pytest.approx(0.8)
        assert doc["results"]["oracle_value"] == pytest.approx(0.8)
        assert doc["results"]["oracle_order"] == [0, 1]
        assert doc["results"]["eps_effective"] == pytest.approx(0.25)
        assert doc["flags"] == []

    def test_order_capacity(self, runner, instance_a_path):
        args = ["--instance", instance_a_path, "--eps", 0.25, "--fixing-cap", 1, "--no-adjust"]
        result = invoke(runner, "order", *args)
        assert result.exit_code == 5

    def test_decompose(self, runner, instance_a_path):
        result = invoke(runner, "decompose", "--instance", instance_a_path, "--k", 1)
        assert result.exit_code == 0
        doc = report_of(result)
        assert doc["results"]["t_star"] == pytest.approx(0.6 / 1.1)
        assert doc["results"]["big_indices"] == [0]
        assert doc["results"]["survivors"] == 1

    def test_decompose_bad_mode(self, runner, instance_a_path):
        result = invoke(runner, "decompose", "--instance", instance_a_path, "--mode", "tiny")
        assert result.exit_code == 3

    def test_eval_baseline(self, runner, instance_a_path):
        args = ["--instance", instance_a_path, "--policy", "baseline", "--trials", 2000]
        result = invoke(runner, "eval", *args, "--seed", 0)
        assert result.exit_code == 0
        doc = report_of(result)
        assert doc["results"]["trials"] == 2000
        assert doc["results"]["threshold"] == pytest.approx(0.6)

    def test_eval_small_precondition(self, runner, instance_a_path):
        result = invoke(runner, "eval", "--instance", instance_a_path, "--trials", 100)
        assert result.exit_code == 6
        assert report_of(result)["error"] == "precondition_error"

    def test_internal_error(self, runner):
        with patch("src.cli.experiment_orchestrator.run", side_effect=RuntimeError("boom")):
            result = invoke(runner, "beta")
        assert result.exit_code == 70
        doc = report_of(result)
        assert doc["error"] == "internal_error"
        assert "boom" in doc["message"]

    def test_repeated_runs_are_byte_identical(self, runner, instance_a_path, tmp_path):
        args = ["eval", "--instance", instance_a_path, "--policy", "baseline", "--trials", 500]
        first, second = tmp_path / "1.json", tmp_path / "2.json"
        assert invoke(runner, *args, "--out", first).exit_code == 0
        assert invoke(runner, *args, "--out", second).exit_code == 0
        assert first.read_bytes() == second.read_bytes()

    def test_config_command(self, runner):
        result = runner.invoke(app, ["config"])
        assert result.exit_code == 0
        assert "prophetlab" in result.stdout
        assert "subset_dp_max_n" in result.stdout


class TestDispatch:
    """Test in-process dispatch and exit codes."""

    def test_success_returns_report(self, instance_a_path, capsys):
        code, report = dispatch(QUIET + ["bench", "--instance", str(instance_a_path)])
        assert code == 0
        assert isinstance(report, Report)
        assert report.results["value"] == pytest.approx(0.8)

    def test_unknown_subcommand(self, capsys):
        code, report = dispatch(["nosuch"])
        assert (code, report) == (2, None)
        assert json.loads(capsys.readouterr().out)["error"] == "usage_error"

    def test_error_exit_code(self, instance_a_path, capsys):
        args = ["bench", "--instance", str(instance_a_path), "--what", "x"]
        code, report = dispatch(QUIET + args)
        assert (code, report) == (3, None)

    def test_missing_required_option(self, capsys):
        code, report = dispatch(QUIET + ["bench"])
        assert (code, report) == (2, None)
        doc = json.loads(capsys.readouterr().out)
        assert doc["error"] == "usage_error"
        assert "--instance" in doc["message"]
