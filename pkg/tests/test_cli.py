import csv
import json

import numpy as np
import pytest

from jkosplit.cli import EXIT_CHECKS, EXIT_CONFIG, EXIT_OK, EXIT_STALL, OUTPUT_ENV, main

SMALL = "tau: 0.01\nT: 0.03\nn: 128\nn_particles: 50\nk_M: 1.0\n"


@pytest.fixture
def small_config(tmp_path):
    p = tmp_path / "small.yaml"
    p.write_text(SMALL + f"output_dir: {tmp_path / 'out'}\n")
    return p


def _read_csv(path):
    with open(path, encoding="utf-8") as fh:
        return list(csv.reader(fh))


class TestRun:
    def test_artifacts(self, small_config, tmp_path, capsys):
        assert main(["run", str(small_config)]) == EXIT_OK
        out = tmp_path / "out"
        rows = _read_csv(out / "diagnostics.csv")
        assert rows[0][:4] == ["step", "time", "mass", "m2"] and len(rows) == 5
        snap = _read_csv(out / "snapshots" / "step_3.csv")
        assert snap[0] == ["x", "rho", "beta", "c"] and len(snap) == 129
        summary = json.loads((out / "summary.json").read_text())
        assert summary["schema_version"] == 1
        assert summary["config"]["n"] == 128 and "seed" in summary["config"]
        assert summary["checks"]["constraint"]["verdict"] == "pass"
        assert "numpy" in summary["versions"]

    def test_env_overrides_output(self, small_config, tmp_path, monkeypatch):
        monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "env"))
        assert main(["run", str(small_config)]) == EXIT_OK
        assert (tmp_path / "env" / "summary.json").exists()

    def test_deterministic(self, small_config, tmp_path, monkeypatch):
        outs = []
        for k in range(2):
            monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / f"r{k}"))
            main(["run", str(small_config)])
            outs.append((tmp_path / f"r{k}" / "diagnostics.csv").read_bytes())
            outs.append((tmp_path / f"r{k}" / "snapshots" / "step_3.csv").read_bytes())
        assert outs[0] == outs[2] and outs[1] == outs[3]

    def test_zero_horizon(self, tmp_path):
        p = tmp_path / "t0.yaml"
        p.write_text(f"T: 0\nn: 128\nn_particles: 50\noutput_dir: {tmp_path / 'o'}\n")
        assert main(["run", str(p)]) == EXIT_OK
        assert [f.name for f in (tmp_path / "o" / "snapshots").iterdir()] == ["step_0.csv"]

    def test_stride(self, tmp_path):
        p = tmp_path / "s.yaml"
        p.write_text(SMALL.replace("T: 0.03", "T: 0.05") + f"snapshot_stride: 2\noutput_dir: {tmp_path / 'o'}\n")
        assert main(["run", str(p)]) == EXIT_OK
        names = sorted(f.name for f in (tmp_path / "o" / "snapshots").iterdir())
        assert names == ["step_0.csv", "step_2.csv", "step_4.csv", "step_5.csv"]

    def test_invalid_config(self, tmp_path, capsys):
        p = tmp_path / "bad.yaml"
        p.write_text("gamma_: 2\n")
        assert main(["run", str(p)]) == EXIT_CONFIG
        assert "did you mean 'gamma'" in capsys.readouterr().err

    def test_stall_writes_partial(self, tmp_path):
        p = tmp_path / "stall.yaml"
        p.write_text(SMALL + f"max_iter: 1\ngrad_rtol: 1.0e-14\noutput_dir: {tmp_path / 'o'}\n")
        assert main(["run", str(p)]) == EXIT_STALL
        summary = json.loads((tmp_path / "o" / "summary.json").read_text())
        assert summary["status"] == "stalled" and summary["steps_completed"] == 1

    def test_expected_failure_keeps_exit_zero(self, tmp_path):
        p = tmp_path / "fault.yaml"
        p.write_text(SMALL + f"freeze_beta_zero: true\nexpected_failures: [constraint]\noutput_dir: {tmp_path / 'o'}\n")
        assert main(["run", str(p)]) == EXIT_OK
        c = json.loads((tmp_path / "o" / "summary.json").read_text())["checks"]["constraint"]
        assert c["verdict"] == "fail" and c["expected_failure"]

    def test_unexpected_failure(self, tmp_path):
        p = tmp_path / "fault.yaml"
        p.write_text(SMALL + f"freeze_beta_zero: true\noutput_dir: {tmp_path / 'o'}\n")
        assert main(["run", str(p)]) == EXIT_CHECKS

    def test_fv_mode(self, tmp_path):
        p = tmp_path / "fv.yaml"
        p.write_text(f"mode: fv-oracle\ntau: 0.01\nT: 0.02\nn: 128\noutput_dir: {tmp_path / 'o'}\n")
        assert main(["run", str(p)]) == EXIT_OK
        assert len(_read_csv(tmp_path / "o" / "diagnostics.csv")) == 4


class TestOtherCommands:
    def test_compare(self, small_config, tmp_path):
        fv = tmp_path / "fv.yaml"
        fv.write_text(SMALL + f"mode: fv-oracle\noutput_dir: {tmp_path / 'fv'}\n")
        assert main(["compare", str(small_config), str(fv)]) == EXIT_OK
        summary = json.loads((tmp_path / "out" / "compare.json").read_text())
        assert np.isfinite(summary["max_l1"]) and summary["max_l1"] < 0.05

    def test_sweep(self, small_config, tmp_path):
        assert main(["sweep", str(small_config), "--param", "chi", "--values", "0.5,1.5", "--workers", "2"]) == EXIT_OK
        for v in ("0.5", "1.5"):
            s = json.loads((tmp_path / "out" / f"chi={v}" / "summary.json").read_text())
            assert s["config"]["chi"] == float(v)

    def test_sweep_unknown_param(self, small_config):
        assert main(["sweep", str(small_config), "--param", "chii", "--values", "1"]) == EXIT_CONFIG

    def test_validate_single_criterion(self, tmp_path, capsys):
        out = tmp_path / "v.json"
        assert main(["validate", "--only", "gradient", "--json", str(out)]) == EXIT_OK
        lines = capsys.readouterr().out.splitlines()
        assert lines[0].startswith("[PASS] gradient")
        assert [r["criterion"] for r in json.loads(out.read_text())] == ["gradient"]

    def test_validate_tampered_kernel(self, capsys):
        assert main(["validate", "--only", "kernel", "--tamper-kernel"]) == EXIT_CHECKS
        assert capsys.readouterr().out.startswith("[FAIL] kernel")
