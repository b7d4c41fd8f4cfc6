"""End-to-end checks of the command line interface via CliRunner."""

from __future__ import annotations

import re

import pytest
from click.testing import CliRunner

from flowbal.cli import main

FEASIBLE = """\
version = 1

[graph]
nodes = 3
edge 1 -> 2
edge 2 -> 3
edge 3 -> 1

[bounds]
1 -> 2 : 1, 3
2 -> 3 : 2, 4
3 -> 1 : 1, 2

[channel]
kind = delay
tau = 2

[run]
algorithm = change
seed = 5
"""

INFEASIBLE = """\
version = 1

[graph]
nodes = 2
edge 1 -> 2
edge 2 -> 1

[bounds]
1 -> 2 : 5, 6
2 -> 1 : 1, 2

[channel]
kind = delay
tau = 2

[run]
algorithm = change
seed = 0
"""

HEADER = re.compile(r"^# scenario=[0-9a-f]{12} seed=\d+$")


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def feasible(tmp_path):
    p = tmp_path / "feasible.flow"
    p.write_text(FEASIBLE, encoding="ascii")
    return str(p)


@pytest.fixture
def infeasible(tmp_path):
    p = tmp_path / "infeasible.flow"
    p.write_text(INFEASIBLE, encoding="ascii")
    return str(p)


class TestCheck:
    def test_feasible(self, runner, feasible):
        result = runner.invoke(main, ["check", feasible])
        assert result.exit_code == 0
        assert result.output.strip() == "Feasible"

    def test_infeasible(self, runner, infeasible):
        result = runner.invoke(main, ["check", infeasible])
        assert result.exit_code == 1
        assert result.output.strip() == "Infeasible: S={v2}, lhs=5 > rhs=2"

    def test_malformed_file(self, runner, tmp_path):
        p = tmp_path / "broken.flow"
        p.write_text("not a scenario\n", encoding="ascii")
        result = runner.invoke(main, ["check", str(p)])
        assert result.exit_code == 2
        assert "line 1" in result.output

    def test_missing_file(self, runner, tmp_path):
        result = runner.invoke(main, ["check", str(tmp_path / "nope.flow")])
        assert result.exit_code == 2


class TestRun:
    FILES = ("scenario.flow", "summary.csv", "detail.csv", "flows.csv", "audit.txt", "trace.png")

    def test_writes_outputs(self, runner, feasible, tmp_path):
        out = tmp_path / "out"
        result = runner.invoke(main, ["run", feasible, "--out", str(out)])
        assert result.exit_code == 0, result.output
        assert "converged" in result.output
        for name in self.FILES:
            assert (out / name).exists()
        first, header = (out / "summary.csv").read_text().splitlines()[:2]
        assert HEADER.match(first)
        assert header == "k,epsilon,epsilon_perceived,inflight"
        assert (out / "detail.csv").read_text().splitlines()[1] == "k,id,metric,value"

    def test_rerun_is_byte_identical(self, runner, feasible, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert runner.invoke(main, ["run", feasible, "--out", str(a)]).exit_code == 0
        assert runner.invoke(main, ["run", feasible, "--out", str(b)]).exit_code == 0
        for name in ("scenario.flow", "summary.csv", "detail.csv", "flows.csv", "audit.txt"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_seed_override_changes_trace(self, runner, feasible, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        runner.invoke(main, ["run", feasible, "--out", str(a)])
        runner.invoke(main, ["run", feasible, "--seed", "99", "--out", str(b)])
        assert "seed=99" in (b / "summary.csv").read_text().splitlines()[0]
        assert (a / "summary.csv").read_bytes() != (b / "summary.csv").read_bytes()

    def test_infeasible_refused(self, runner, infeasible, tmp_path):
        result = runner.invoke(main, ["run", infeasible, "--out", str(tmp_path / "out")])
        assert result.exit_code == 1
        assert result.output.strip() == "Infeasible: S={v2}, lhs=5 > rhs=2"

    def test_allow_infeasible_runs_and_fails(self, runner, infeasible, tmp_path):
        out = tmp_path / "out"
        result = runner.invoke(
            main,
            ["run", infeasible, "--allow-infeasible", "--max-iters", "40", "--out", str(out)],
        )
        assert result.exit_code == 1
        assert "did not converge" in result.output
        assert (out / "summary.csv").exists()

    def test_path_and_preset_conflict(self, runner, feasible):
        result = runner.invoke(main, ["run", feasible, "--preset", "fig2"])
        assert result.exit_code == 2

    def test_no_scenario(self, runner):
        result = runner.invoke(main, ["run"])
        assert result.exit_code == 2

    def test_env_var_sets_output_dir(self, runner, feasible, tmp_path, monkeypatch):
        out = tmp_path / "envdir"
        monkeypatch.setenv("FLOWBAL_OUT", str(out))
        result = runner.invoke(main, ["run", feasible])
        assert result.exit_code == 0
        assert (out / "summary.csv").exists()


class TestGenerate:
    def test_roundtrip_through_check(self, runner, tmp_path):
        dest = tmp_path / "gen.flow"
        result = runner.invoke(
            main, ["generate", "-n", "6", "--density", "0.3", "--seed", "4", "--out", str(dest)]
        )
        assert result.exit_code == 0
        assert dest.exists()
        assert runner.invoke(main, ["check", str(dest)]).exit_code == 0

    def test_deterministic(self, runner, tmp_path):
        a, b = tmp_path / "a.flow", tmp_path / "b.flow"
        runner.invoke(main, ["generate", "-n", "5", "--seed", "2", "--out", str(a)])
        runner.invoke(main, ["generate", "-n", "5", "--seed", "2", "--out", str(b)])
        assert a.read_bytes() == b.read_bytes()

    def test_bad_params(self, runner, tmp_path):
        result = runner.invoke(main, ["generate", "-n", "1", "--out", str(tmp_path / "x.flow")])
        assert result.exit_code == 2


class TestSweep:
    def test_aggregates(self, runner, feasible, tmp_path):
        out = tmp_path / "out"
        result = runner.invoke(main, ["sweep", feasible, "--seeds", "4", "--out", str(out)])
        assert result.exit_code == 0, result.output
        assert "converged 4/4" in result.output
        assert (out / "sweep.png").exists()
        lines = (out / "sweep.csv").read_text().splitlines()
        assert lines[1] == "seed,converged,k0,iterations,audit_findings"
        assert len(lines) == 6
        assert all(row.split(",")[1] == "1" for row in lines[2:])

    def test_parallel_matches_serial(self, runner, feasible, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        runner.invoke(main, ["sweep", feasible, "--seeds", "4", "--out", str(a)])
        runner.invoke(main, ["sweep", feasible, "--seeds", "4", "--jobs", "2", "--out", str(b)])
        assert (a / "sweep.csv").read_bytes() == (b / "sweep.csv").read_bytes()

    def test_infeasible_refused(self, runner, infeasible, tmp_path):
        result = runner.invoke(main, ["sweep", infeasible, "--out", str(tmp_path / "out")])
        assert result.exit_code == 1
        assert "Infeasible" in result.output

    def test_allow_infeasible_reports_failures(self, runner, infeasible, tmp_path):
        result = runner.invoke(
            main,
            [
                "sweep",
                infeasible,
                "--seeds",
                "3",
                "--allow-infeasible",
                "--max-iters",
                "30",
                "--out",
                str(tmp_path / "out"),
            ],
        )
        assert result.exit_code == 1
        assert "converged 0/3" in result.output


class TestPreset:
    def test_fig2_runs(self, runner, tmp_path):
        out = tmp_path / "out"
        result = runner.invoke(main, ["run", "--preset", "fig2", "--out", str(out)])
        assert result.exit_code == 0, result.output
        assert "algorithm change" in result.output
        assert (out / "trace.png").exists()
