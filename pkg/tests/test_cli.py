import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from metricflows.cli import EXIT_ERROR, EXIT_OK, EXIT_UNCONVERGED, main
from metricflows.fileio import read_csv
from metricflows.problems import random_affine


def write(tmp_path, doc, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def builtin(problem="example_4_2", **extra):
    return {"schemaVersion": 1, "problem": problem, **extra}


def inline_random_affine(seed):
    spec = random_affine(seed).spec
    return {
        "schemaVersion": 1,
        "inline": {
            "kind": "BF",
            "M": spec.M.matrix.tolist(),
            "gamma": spec.gamma,
            "convention": "yosida",
            "A": {"type": "affine", "matrix": spec.A.matrix.tolist(), "offset": spec.A.offset.tolist()},
            "B": {"type": "affine", "matrix": spec.B.matrix.tolist(), "offset": spec.B.offset.tolist()},
        },
        "u0": random_affine(seed).u0.tolist(),
        "integrator": {"h": 0.05, "tEnd": 5.0},
    }


class TestRun:
    def test_example_4_2_converges(self, tmp_path, capsys):
        rc = main(["run", write(tmp_path, builtin()), "--out", str(tmp_path)])
        assert rc == EXIT_OK
        tr = read_csv(tmp_path / "trajectory.csv")
        assert np.linalg.norm(tr.final_state) <= 1e-8
        report = json.loads((tmp_path / "report.json").read_text())
        assert report["schemaVersion"] == 1 and report["report"]["converged"] is True
        assert "converged" in capsys.readouterr().out

    def test_short_run_is_unconverged(self, tmp_path):
        cfg = write(tmp_path, builtin(integrator={"tEnd": 0.001}))
        assert main(["run", cfg, "--out", str(tmp_path)]) == EXIT_UNCONVERGED

    def test_malformed_config(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text('{"schemaVersion": 1,\n')
        assert main(["run", str(path)]) == EXIT_ERROR
        assert "line 2 column 1" in capsys.readouterr().err

    def test_field_error_names_the_field(self, tmp_path, capsys):
        cfg = write(tmp_path, builtin(overrides={"gamma": -2}))
        assert main(["run", cfg]) == EXIT_ERROR
        assert "overrides.gamma" in capsys.readouterr().err

    def test_outputs_section(self, tmp_path):
        out = tmp_path / "o"
        cfg = write(tmp_path, builtin(integrator={"tEnd": 2.0},
                                      outputs={"dir": str(out), "csv": "t.csv", "report": "r.json"}))
        main(["run", cfg])
        assert (out / "t.csv").exists() and (out / "r.json").exists()

    def test_repeated_runs_are_byte_identical(self, tmp_path):
        cfg = write(tmp_path, builtin(integrator={"tEnd": 5.0}))
        main(["run", cfg, "--out", str(tmp_path / "a")])
        main(["run", cfg, "--out", str(tmp_path / "b")])
        assert (tmp_path / "a/trajectory.csv").read_bytes() == (tmp_path / "b/trajectory.csv").read_bytes()

    def test_module_entry_point(self, tmp_path):
        cfg = write(tmp_path, builtin(integrator={"tEnd": 0.001}))
        proc = subprocess.run([sys.executable, "-m", "metricflows", "run", cfg, "--out", str(tmp_path)],
                              capture_output=True, text=True)
        assert proc.returncode == EXIT_UNCONVERGED


class TestVerify:
    def test_filter(self, capsys):
        assert main(["verify", "--filter", "averagedness"]) == EXIT_OK
        out = capsys.readouterr().out
        assert "[PASS]" in out and "1/1 criteria passed" in out

    def test_no_match(self, capsys):
        assert main(["verify", "--filter", "no-such-criterion"]) == EXIT_ERROR

    def test_forced_failure(self, monkeypatch, capsys):
        monkeypatch.setenv("METRICFLOWS_FORCE_FAIL", "averagedness")
        assert main(["verify", "--filter", "averagedness"]) == EXIT_ERROR
        assert "[FAIL]" in capsys.readouterr().out


class TestSweep:
    def test_nonpositive_gamma_rejected(self, tmp_path, capsys):
        assert main(["sweep", write(tmp_path, builtin()), "--gamma", "4,0"]) == EXIT_ERROR
        assert "positive" in capsys.readouterr().err

    def test_rates_and_flags(self, tmp_path):
        cfg = write(tmp_path, builtin(integrator={"tEnd": 100.0}))
        rc = main(["sweep", cfg, "--gamma", "4,6", "--out", str(tmp_path)])
        with open(tmp_path / "sweep.csv") as fh:
            rows = {float(r["gamma"]): r for r in csv.DictReader(fh)}
        assert rows[4.0]["status"] == "converged" and rows[4.0]["conditions"] == "pass"
        assert float(rows[4.0]["rate"]) == pytest.approx(13 / 48, rel=0.02)
        # gamma = 2 kappa sits on the boundary of the admissible range
        assert "gamma_range" in rows[6.0]["conditions"] and "(flagged)" in rows[6.0]["status"]
        assert (tmp_path / "trajectory_gamma_4.csv").exists()
        assert (tmp_path / "trajectory_gamma_6.csv").exists()
        # a flagged run that still converges does not fail the sweep
        assert rc == EXIT_OK

    def test_all_converged_exit_code(self, tmp_path):
        cfg = write(tmp_path, builtin(integrator={"tEnd": 100.0}))
        assert main(["sweep", cfg, "--gamma", "4,5", "--out", str(tmp_path)]) == EXIT_OK

    def test_singular_gamma_reported_per_row(self, tmp_path):
        cfg = write(tmp_path, builtin(integrator={"tEnd": 10.0}))
        main(["sweep", cfg, "--gamma", "2,4", "--out", str(tmp_path)])
        with open(tmp_path / "sweep.csv") as fh:
            rows = {float(r["gamma"]): r for r in csv.DictReader(fh)}
        assert rows[2.0]["status"].startswith("error")
        assert not rows[4.0]["status"].startswith("error")


class TestCompare:
    def test_example_4_2(self, tmp_path):
        cfg = write(tmp_path, builtin(integrator={"tEnd": 20.0}))
        assert main(["compare", cfg, "--out", str(tmp_path)]) == EXIT_OK
        doc = json.loads((tmp_path / "compare.json").read_text())
        assert doc["max_gap"] <= 1e-12 and doc["swapped"] == "FB"
        assert (tmp_path / "trajectory_swapped.csv").exists()

    @pytest.mark.parametrize("seed", range(3))
    def test_inline_random_affine(self, tmp_path, seed):
        assert main(["compare", write(tmp_path, inline_random_affine(seed)), "--out", str(tmp_path)]) == EXIT_OK
        assert json.loads((tmp_path / "compare.json").read_text())["max_gap"] <= 1e-10

    def test_mismatched_x0(self, tmp_path, capsys):
        cfg = write(tmp_path, builtin(x0=[1.0, 1.0], integrator={"tEnd": 1.0}))
        assert main(["compare", cfg, "--out", str(tmp_path)]) == EXIT_ERROR
        assert "non-comparison" in capsys.readouterr().err

    def test_exact_convention_rejected(self, tmp_path, capsys):
        cfg = write(tmp_path, builtin("example_4_1"))
        assert main(["compare", cfg, "--out", str(tmp_path)]) == EXIT_ERROR
        assert "Yosida-form" in capsys.readouterr().err
