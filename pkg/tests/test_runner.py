import json
import subprocess
import sys

import numpy as np
import pytest

from normflow.config import parse_config
from normflow.runner import TRACE_HEADER, run_experiment, run_suite

FAST_A = """
[flow]
variant = A
p = 2.0

[geometry]
kind = circle
extent = 6.283185307179586
resolution = 64

[initial]
preset = constant_plus_sine
amplitude = 0.3
mode = 1

[solver]
dt_initial = 1e-3
dt_max = 5e-2
t_max = 40.0
steady_residual_tol = 1e-9
record_every = 5

[output]
diagnostics = lambda_monotone, harnack, growth_bound, lambda_integrable, dissipation:1e-3
expected_status = converged
"""

FAST_C_BLOWUP = """
[flow]
variant = C
p = 7.0

[geometry]
kind = ball
extent = 1.0
resolution = 400
dimension = 3

[initial]
preset = gaussian_bump
width = 0.25

[solver]
dt_initial = 1e-4
dt_min = 1e-6
dt_max = 1e-3
t_max = 10.0
steady_residual_tol = 1e-14
record_every = 5

[output]
diagnostics = dissipation:5e-2
expected_status = blowup
"""


@pytest.fixture(scope="module")
def flow_a_outputs(tmp_path_factory):
    out = tmp_path_factory.mktemp("flow_a")
    config = parse_config(FAST_A, name="fast_a")
    code = run_experiment(config, out)
    return code, out


class TestRunExperiment:
    def test_flow_a_exit_zero(self, flow_a_outputs):
        code, out = flow_a_outputs
        assert code == 0

    def test_trace_header_contract(self, flow_a_outputs):
        _, out = flow_a_outputs
        first = (out / "trace.csv").read_text().splitlines()[0]
        assert first == TRACE_HEADER

    def test_summary_contents(self, flow_a_outputs):
        _, out = flow_a_outputs
        summary = json.loads((out / "summary.json").read_text())
        assert summary["status"] == "Converged"
        checks = {c["name"]: c for c in summary["checks"]}
        assert checks["lambda_monotone"]["pass"] is True
        assert checks["harnack"]["pass"] is True
        assert "lambda_decay" in summary["fits"]
        assert summary["conservation"]["max_norm_deviation"] < 1e-12

    def test_snapshots_written(self, flow_a_outputs):
        _, out = flow_a_outputs
        snaps = sorted((out / "snapshots").glob("u_*.csv"))
        assert len(snaps) >= 2  # first and last
        header = snaps[0].read_text().splitlines()[0]
        assert header == "x,u"

    def test_summary_fit_reproducible_from_trace(self, flow_a_outputs):
        # round-trip: recompute the decay fit from trace.csv by the documented
        # formula (least squares of log lambda on the trailing half, with the
        # quantization-floor guard) and compare against summary.json
        _, out = flow_a_outputs
        summary = json.loads((out / "summary.json").read_text())
        data = np.genfromtxt(out / "trace.csv", delimiter=",", names=True)
        t, lam = data["t"], data["lambda"]
        count = max(int(np.ceil(0.5 * len(t))), 2)
        tt, ll = t[-count:], lam[-count:]
        floor = 50.0 * lam[lam > 0].min()
        keep = ll > floor
        if keep.sum() >= 3:
            tt, ll = tt[keep], ll[keep]
        slope = np.polyfit(tt, np.log(ll), 1)[0]
        assert -slope == pytest.approx(summary["fits"]["lambda_decay"]["rate"], rel=1e-9)

    def test_flow_c_blowup_exit_two(self, tmp_path):
        config = parse_config(FAST_C_BLOWUP, name="fast_c")
        code = run_experiment(config, tmp_path / "c")
        assert code == 2
        summary = json.loads((tmp_path / "c" / "summary.json").read_text())
        assert summary["status"] == "BlowUp"
        assert summary["blowup_trigger"] in ("dt_collapse", "umax_threshold")

    def test_unwritable_output_dir(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("")
        config = parse_config(FAST_A, name="fast_a")
        code = run_experiment(config, blocker / "sub")
        assert code == 1

    def test_determinism_bit_identical(self, tmp_path):
        config = parse_config(FAST_A, name="fast_a")
        run_experiment(config, tmp_path / "r1")
        run_experiment(config, tmp_path / "r2")
        a = (tmp_path / "r1" / "trace.csv").read_bytes()
        b = (tmp_path / "r2" / "trace.csv").read_bytes()
        assert a == b


class TestRunSuite:
    def test_suite_with_malformed_config(self, tmp_path):
        cfgdir = tmp_path / "configs"
        cfgdir.mkdir()
        (cfgdir / "good_a.cfg").write_text(FAST_A)
        (cfgdir / "broken.cfg").write_text("[flow]\nvariant = Z\n")
        code = run_suite(cfgdir, tmp_path / "out")
        assert code == 1  # the malformed one is an unexpected failure
        report = json.loads((tmp_path / "out" / "suite_report.json").read_text())
        by_name = {e["name"]: e for e in report["experiments"]}
        assert by_name["broken"]["ok"] is False
        assert "error" in by_name["broken"]
        assert by_name["good_a"]["ok"] is True
        assert report["failures"] == 1

    def test_empty_directory_errors(self, tmp_path):
        empty = tmp_path / "none"
        empty.mkdir()
        assert run_suite(empty, tmp_path / "out") == 1

    def test_expected_status_mismatch_flags(self, tmp_path):
        cfgdir = tmp_path / "configs"
        cfgdir.mkdir()
        text = FAST_A.replace("expected_status = converged", "expected_status = blowup")
        (cfgdir / "wrong_expect.cfg").write_text(text)
        code = run_suite(cfgdir, tmp_path / "out")
        assert code == 1


class TestCli:
    def test_cli_run_and_shoot(self, tmp_path):
        cfg = tmp_path / "a.cfg"
        cfg.write_text(FAST_A)
        proc = subprocess.run(
            [sys.executable, "-m", "normflow.cli", "run", str(cfg), "-o", str(tmp_path / "out")],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0, proc.stdout + proc.stderr
        assert (tmp_path / "out" / "summary.json").exists()

        proc = subprocess.run(
            [sys.executable, "-m", "normflow.cli", "shoot", "--n", "3", "--p", "5",
             "--R", "1", "--out", str(tmp_path / "profile.csv")],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0
        assert "StayedPositive" in proc.stdout
        assert (tmp_path / "profile.csv").read_text().splitlines()[0] == "r,u"

    def test_cli_output_root_env(self, tmp_path):
        cfg = tmp_path / "a.cfg"
        cfg.write_text(FAST_A)
        env = {"NORMFLOW_OUT": str(tmp_path / "envroot"), "PATH": "/usr/bin:/bin"}
        proc = subprocess.run(
            [sys.executable, "-m", "normflow.cli", "run", str(cfg)],
            capture_output=True, text=True, env=env,
        )
        assert proc.returncode == 0, proc.stdout + proc.stderr
        assert (tmp_path / "envroot" / "a" / "summary.json").exists()

    def test_suite_parallel_jobs(self, tmp_path):
        cfgdir = tmp_path / "configs"
        cfgdir.mkdir()
        (cfgdir / "one.cfg").write_text(FAST_A)
        (cfgdir / "two.cfg").write_text(FAST_A.replace("amplitude = 0.3", "amplitude = 0.2"))
        from normflow.runner import run_suite

        code = run_suite(cfgdir, tmp_path / "out", jobs=2)
        assert code == 0
        report = json.loads((tmp_path / "out" / "suite_report.json").read_text())
        assert report["total"] == 2 and report["all_ok"]

    def test_cli_eig(self, tmp_path):
        proc = subprocess.run(
            [sys.executable, "-m", "normflow.cli", "eig", "--kind", "interval",
             "--extent", "1.0", "--resolution", "64"],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0
        mu = float(proc.stdout.split("=")[1].split()[0])
        assert mu == pytest.approx(np.pi**2, rel=1e-3)
