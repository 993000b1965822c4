import csv
import hashlib
import json
import pathlib
import subprocess
import sys

import numpy as np
import pytest

ROOT = pathlib.Path(__file__).resolve().parent.parent
GOLDEN = pathlib.Path(__file__).resolve().parent / "golden"


def run_cli(*args, timeout=600):
    return subprocess.run(
        [sys.executable, "-m", "pairamp", *args],
        capture_output=True,
        text=True,
        timeout=timeout,
        cwd=ROOT,
    )


def read_rows(path_or_text, from_text=False):
    text = path_or_text if from_text else pathlib.Path(path_or_text).read_text()
    lines = [l for l in text.splitlines() if l and not l.startswith("#")]
    reader = csv.DictReader(lines)
    return list(reader)


class TestConfigHandling:
    def test_round_trip(self, tmp_path):
        cfg = {
            "model": {"kind": "two", "chi": 7.5, "coupling": 6.0},
            "oscillator": {"gamma1": 2.0, "gamma2": 1.0, "bath_occupation": 3.0},
            "seed": 99,
        }
        path = tmp_path / "config.json"
        path.write_text(json.dumps(cfg))
        first = run_cli("steady", "--config", str(path), "--print-config")
        assert first.returncode == 0
        echoed = tmp_path / "echo.json"
        echoed.write_text(first.stdout)
        second = run_cli("steady", "--config", str(echoed), "--print-config")
        assert second.returncode == 0
        assert json.loads(first.stdout) == json.loads(second.stdout)

    def test_set_overrides_nested_keys(self):
        res = run_cli(
            "steady",
            "--set",
            "model.chi=3",
            "--set",
            "oscillator.bath_occupation=2.5",
            "--print-config",
        )
        cfg = json.loads(res.stdout)
        assert cfg["model"]["chi"] == 3
        assert cfg["oscillator"]["bath_occupation"] == 2.5

    def test_bad_model_kind_is_config_error(self):
        res = run_cli("steady", "--set", "model.kind=three")
        assert res.returncode == 1
        assert "config error" in res.stderr

    def test_bad_flag_is_config_error(self):
        res = run_cli("steady", "--no-such-flag")
        assert res.returncode == 1


class TestSteady:
    def test_solvers_agree_near_threshold(self):
        res = run_cli(
            "steady",
            "--set",
            "model.chi=25",
            "--set",
            "oscillator.bath_occupation=5",
            "--set",
            "oscillator.measurement_rate=6",
            "--format",
            "json",
        )
        assert res.returncode == 0
        out = json.loads(res.stdout)
        s_cf = out["closedform"]["S"]
        s_ric = out["riccati"]["S"]
        assert abs(s_cf - s_ric) / s_cf < 1e-6
        assert s_cf < 1.0 and out["entangled"]

    def test_unmeasured_thermal_limit(self):
        res = run_cli(
            "steady",
            "--set",
            "oscillator.bath_occupation=5",
            "--format",
            "json",
        )
        out = json.loads(res.stdout)
        assert res.returncode == 0
        assert out["S"] == pytest.approx(11.0, rel=1e-3)

    def test_above_threshold_without_measurement_exits_2(self):
        res = run_cli(
            "steady",
            "--set",
            "model.chi=2",
            "--set",
            "model.detuning=0",
            "--set",
            "solver=riccati",
        )
        assert res.returncode == 2

    def test_rates_normalised_by_mean_damping(self):
        # scaling every rate by 10 must not change the dimensionless output
        base = run_cli(
            "steady",
            "--set",
            "model.chi=25",
            "--set",
            "oscillator.bath_occupation=5",
            "--set",
            "oscillator.measurement_rate=6",
            "--format",
            "json",
        )
        scaled = run_cli(
            "steady",
            "--set",
            "model.chi=250",
            "--set",
            "oscillator.gamma1=10",
            "--set",
            "oscillator.gamma2=10",
            "--set",
            "oscillator.bath_occupation=5",
            "--set",
            "oscillator.measurement_rate=60",
            "--format",
            "json",
        )
        a, b = json.loads(base.stdout), json.loads(scaled.stdout)
        assert a["S"] == pytest.approx(b["S"], rel=1e-12)


class TestSweep:
    def test_golden_file(self):
        res = run_cli(
            "sweep",
            "--set",
            "model.chi=5",
            "--set",
            "oscillator.bath_occupation=1",
            "--set",
            'sweep={"parameter":"measurement_rate","start":0.1,"stop":10.0,"count":5,"spacing":"log"}',
            "--set",
            "solver=both",
        )
        assert res.returncode == 0
        assert res.stdout == (GOLDEN / "sweep_small.csv").read_text()

    def test_recipe_curve_dips_below_unity_and_recovers(self):
        res = run_cli(
            "sweep",
            "--config",
            str(ROOT / "recipes" / "sweep_mu_chi25_symmetric.json"),
            "--set",
            "sweep.count=60",
        )
        assert res.returncode == 0
        rows = read_rows(res.stdout, from_text=True)
        s = np.array([float(r["S"]) for r in rows if r["converged"] == "true"])
        assert s.min() < 1.0
        assert s[-1] > s.min()
        # entanglement window is an interior interval on this grid
        below = s < 1.0
        assert below.any() and not below[0]

    def test_unknown_parameter_rejected(self):
        res = run_cli("sweep", "--set", "sweep.parameter=flux_capacitance")
        assert res.returncode == 1

    def test_jobs_do_not_change_output(self):
        args = (
            "sweep",
            "--set",
            "model.chi=25",
            "--set",
            "oscillator.bath_occupation=5",
            "--set",
            'sweep={"parameter":"measurement_rate","start":0.5,"stop":50.0,"count":12,"spacing":"log"}',
        )
        one = run_cli(*args, "--jobs", "1")
        many = run_cli(*args, "--jobs", "4")
        assert one.returncode == many.returncode == 0
        assert one.stdout == many.stdout


class TestTrajectory:
    def test_decay_trace_single_trajectory(self, tmp_path):
        out = tmp_path / "traj.csv"
        res = run_cli(
            "trajectory",
            "--set",
            "model.chi=1",
            "--set",
            "model.detuning=3",
            "--set",
            "oscillator.bath_occupation=1",
            "--set",
            'trajectories={"dt":0.001,"duration":3.0,"n_traj":1,"record_stride":50,"x0":[2.0,0.0,0.0,0.0]}',
            "--output",
            str(out),
        )
        assert res.returncode == 0
        rows = read_rows(out)
        from scipy.linalg import expm

        from pairamp import ModelOne, OscillatorPairParams, drift_matrix

        a = drift_matrix(
            ModelOne(1.0, 3.0), OscillatorPairParams(1.0, 1.0, bath_occupation=1.0)
        ).matrix
        x0 = np.array([2.0, 0.0, 0.0, 0.0])
        # mu = 0: no innovations, the trace is the deterministic mean flow
        for r in (rows[0], rows[len(rows) // 2], rows[-1]):
            t = float(r["t"])
            traced = np.array(
                [float(r[c]) for c in ("X_plus", "X_minus", "Y_plus", "Y_minus")]
            )
            assert np.allclose(traced, expm(a * t) @ x0, atol=2e-2)
        summary = json.loads(res.stdout)
        assert summary["basis"] == "collective_xy"

    def test_seed_and_jobs_determinism(self, tmp_path):
        args = (
            "trajectory",
            "--set",
            "model.chi=2",
            "--set",
            "oscillator.bath_occupation=1",
            "--set",
            "oscillator.measurement_rate=1",
            "--set",
            'trajectories={"duration":2.0,"n_traj":600,"record_stride":200}',
            "--seed",
            "31415",
        )
        digests = []
        for jobs, name in (("1", "a.csv"), ("1", "b.csv"), ("8", "c.csv")):
            out = tmp_path / name
            res = run_cli(*args, "--jobs", jobs, "--output", str(out))
            assert res.returncode == 0, res.stderr
            digests.append(hashlib.sha256(out.read_bytes()).hexdigest())
        assert digests[0] == digests[1] == digests[2]

    def test_law_of_total_variance_summary(self, tmp_path):
        out = tmp_path / "traj.csv"
        res = run_cli(
            "trajectory",
            "--set",
            "model.chi=2",
            "--set",
            "model.detuning=4",
            "--set",
            "oscillator.bath_occupation=2",
            "--set",
            "oscillator.measurement_rate=1",
            "--set",
            'trajectories={"duration":8.0,"n_traj":2000,"record_stride":100000}',
            "--output",
            str(out),
        )
        assert res.returncode == 0, res.stderr
        summary = json.loads(res.stdout)
        resid = np.array(summary["total_variance_residual"])
        se = np.array(summary["residual_standard_error"])
        assert np.all(np.abs(resid) <= 3.0 * se)


class TestRwaCheck:
    def test_report_passes_at_high_frequency(self):
        res = run_cli(
            "rwa-check",
            "--set",
            "model.chi=5",
            "--set",
            "model.detuning=5",
            "--set",
            "oscillator.mech_frequency=10000",
        )
        assert res.returncode == 0
        out = json.loads(res.stdout)
        assert out["pass"] is True
        assert out["deviation"] <= out["tolerance"] == 0.01

    def test_low_frequency_exits_2(self):
        res = run_cli(
            "rwa-check",
            "--set",
            "model.chi=5",
            "--set",
            "model.detuning=5",
            "--set",
            "oscillator.mech_frequency=50",
        )
        assert res.returncode == 2

    def test_undriven_deviation_negligible(self):
        res = run_cli(
            "rwa-check",
            "--set",
            "model.chi=0",
            "--set",
            "model.detuning=0",
            "--set",
            "oscillator.mech_frequency=500",
            "--set",
            "rwa.t_run=10",
        )
        out = json.loads(res.stdout)
        assert res.returncode == 0
        assert out["deviation"] < 1e-6


class TestThreshold:
    def test_reports_both_pairs(self):
        res = run_cli(
            "threshold",
            "--set",
            "model.chi=5",
            "--set",
            "model.detuning=4",
            "--format",
            "json",
        )
        out = json.loads(res.stdout)
        assert res.returncode == 0
        assert [p["label"] for p in out["pairs"]] == ["plus", "minus"]
        for p in out["pairs"]:
            assert p["chi_th"] == pytest.approx(np.sqrt(17.0), rel=1e-12)
            assert p["stable"] is False
