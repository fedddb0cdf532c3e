"""Interval planning, config handling, stage resumability, CLI."""

import json
import warnings
from pathlib import Path

import numpy as np
import pytest

from qubodos.cli import main as cli_main
from qubodos.pipeline import (
    PRESETS,
    PlanError,
    RunConfig,
    plan_intervals,
    preset,
    run_pipeline,
)

FAST_ISING = dict(
    system="ising",
    l=2,
    start=0,
    stride=2,
    m=2,
    count=2,
    bin_min=0,
    bin_max=4,
    depth=80,
    decorrelation_stride=10,
    beta_min=-1.0,
    beta_max=1.0,
    beta_step=0.5,
    blocks=2,
    seed=3,
)


class TestPlan:
    def test_unit_stride(self):
        config = RunConfig(system="ising", l=4, start=0, stride=1, m=2, count=14,
                           bin_min=0, bin_max=16)
        plan = plan_intervals(config)
        assert plan[0] == (0, 0, 3)
        assert plan[-1] == (13, 13, 16)
        assert len(plan) == 14

    def test_stride_equal_width(self):
        config = RunConfig(system="melt", start=10, stride=4, m=2, count=2,
                           bin_min=10, bin_max=17)
        assert plan_intervals(config) == [(0, 10, 13), (1, 14, 17)]

    def test_gap_rejected(self):
        config = RunConfig(system="melt", start=0, stride=6, m=2, count=2,
                           bin_min=0, bin_max=9)
        with pytest.raises(PlanError, match="gap"):
            plan_intervals(config)

    def test_insufficient_coverage_rejected(self):
        config = RunConfig(system="ising", l=4, start=0, stride=1, m=2, count=3,
                           bin_min=0, bin_max=16)
        with pytest.raises(PlanError, match="requested"):
            plan_intervals(config)

    def test_m1_ising_warns(self):
        config = RunConfig(system="ising", l=4, start=0, stride=1, m=1, count=16,
                           bin_min=0, bin_max=16)
        with pytest.warns(UserWarning, match="disconnected"):
            plan_intervals(config)


class TestConfig:
    def test_presets_plan_cleanly(self):
        for name in PRESETS:
            config = preset(name)
            assert plan_intervals(config)

    def test_preset_override(self):
        config = preset("melt-3x3x2", depth=7, seed=99)
        assert config.depth == 7 and config.seed == 99

    def test_unknown_preset(self):
        with pytest.raises(KeyError):
            preset("no-such-preset")

    def test_ini_roundtrip(self, tmp_path):
        ini = tmp_path / "run.ini"
        ini.write_text(
            "[run]\n"
            "system = melt\n"
            "dims = 3 3 2\n"
            "start = 10\nstride = 2\nm = 2\ncount = 4\n"
            "bin_min = 12\nbin_max = 18\n"
            "depth = 50\nseed = 7\n"
            "observables = n_rings p_link\n"
            "t_min_factor = 2e-4\n"
        )
        config = RunConfig.from_ini(ini)
        assert config.system == "melt"
        assert config.dims == (3, 3, 2)
        assert config.observables == ("n_rings", "p_link")
        assert config.t_min_factor == pytest.approx(2e-4)

    def test_unknown_ini_key_rejected(self, tmp_path):
        ini = tmp_path / "run.ini"
        ini.write_text("[run]\nsystme = ising\n")
        with pytest.raises(ValueError, match="systme"):
            RunConfig.from_ini(ini)

    def test_missing_ini(self):
        with pytest.raises(FileNotFoundError):
            RunConfig.from_ini("/nonexistent/run.ini")

    def test_content_key_ignores_out_and_workers(self):
        a = RunConfig(out="x", workers=1)
        b = RunConfig(out="y", workers=4)
        assert a.content_key() == b.content_key()
        c = RunConfig(seed=2)
        assert a.content_key() != c.content_key()

    def test_invalid_system(self):
        with pytest.raises(ValueError):
            RunConfig(system="potts")


@pytest.fixture(scope="module")
def finished_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run") / "fast"
    config = RunConfig(**FAST_ISING, out=str(out))
    summary = run_pipeline(config)
    return config, summary, out


class TestPipelineRun:
    def test_dry_run_executes_nothing(self, tmp_path):
        config = RunConfig(**FAST_ISING, out=str(tmp_path / "dry"))
        summary = run_pipeline(config, dry_run=True)
        assert summary["executed"] is False
        assert not (tmp_path / "dry").exists()

    def test_artifacts_written(self, finished_run):
        _, summary, out = finished_run
        for name in ("plan.txt", "histograms.txt", "dos.txt", "report.txt",
                     "curve_energy.txt", "stages.json"):
            assert (out / name).exists(), name
        assert summary["dos"] is not None

    def test_dos_close_to_exact(self, finished_run):
        from qubodos.enumeration import enumerate_ising

        _, summary, _ = finished_run
        exact, _ = enumerate_ising(2)
        w = summary["dos"].as_dict()
        for b, p in exact.normalized().items():
            assert w[b] == pytest.approx(p, abs=0.15)

    def test_rerun_is_noop(self, finished_run):
        config, _, _ = finished_run
        again = run_pipeline(config)
        assert again["stages_run"] == []

    def test_stage_reruns_when_artifact_deleted(self, finished_run):
        config, _, out = finished_run
        (out / "dos.txt").unlink()
        again = run_pipeline(config)
        assert "reconstruct" in again["stages_run"]
        assert "sample" not in again["stages_run"]

    def test_until_stops_early(self, tmp_path):
        config = RunConfig(**FAST_ISING, out=str(tmp_path / "until"))
        summary = run_pipeline(config, until="plan")
        assert summary["stages_run"] == ["plan"]
        assert not (tmp_path / "until" / "archive_0.txt").exists()

    def test_unknown_stage_rejected(self, tmp_path):
        config = RunConfig(**FAST_ISING, out=str(tmp_path / "u2"))
        with pytest.raises(ValueError):
            run_pipeline(config, until="polish")

    def test_determinism_across_directories(self, finished_run, tmp_path):
        config, _, out = finished_run
        other = RunConfig(**FAST_ISING, out=str(tmp_path / "other"))
        run_pipeline(other)
        assert (Path(other.out) / "dos.txt").read_text() == (out / "dos.txt").read_text()
        assert (
            Path(other.out) / "archive_0.txt"
        ).read_text() == (out / "archive_0.txt").read_text()


class TestCli:
    def test_plan_command(self, capsys):
        rc = cli_main(["plan", "--preset", "melt-3x3x2"])
        assert rc == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[0] == "0 10 13"
        assert len(lines) == 4

    def test_oracle_command(self, capsys):
        rc = cli_main(["oracle", "--preset", "melt-3x3x2"])
        assert rc == 0
        out = capsys.readouterr().out
        assert "12" in out and "982" not in out  # normalized per-bin rows

    def test_config_and_preset_conflict(self):
        with pytest.raises(SystemExit):
            cli_main(["plan", "--preset", "melt-3x3x2", "--config", "x.ini"])

    def test_missing_config_errors(self, capsys):
        rc = cli_main(["pipeline", "--config", "/nonexistent.ini"])
        assert rc == 1
        assert "error" in capsys.readouterr().err

    def test_pipeline_command_runs(self, tmp_path, capsys):
        ini = tmp_path / "run.ini"
        lines = ["[run]"] + [f"{k} = {v}" for k, v in FAST_ISING.items()]
        lines = [ln.replace("(", "").replace(")", "") for ln in lines]
        ini.write_text("\n".join(lines) + f"\nout = {tmp_path / 'cli-run'}\n")
        rc = cli_main(["pipeline", "--config", str(ini)])
        assert rc == 0
        assert (tmp_path / "cli-run" / "dos.txt").exists()
        assert "ran" in capsys.readouterr().out

    def test_sample_until_stage(self, tmp_path):
        ini = tmp_path / "run.ini"
        lines = ["[run]"] + [f"{k} = {v}" for k, v in FAST_ISING.items()]
        ini.write_text("\n".join(lines) + f"\nout = {tmp_path / 'st'}\n")
        rc = cli_main(["sample", "--config", str(ini)])
        assert rc == 0
        assert (tmp_path / "st" / "archive_0.txt").exists()
        assert not (tmp_path / "st" / "dos.txt").exists()
