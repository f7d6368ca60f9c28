import json
import subprocess
import sys
from pathlib import Path

import pytest

from normflow_plotkit.reporting import (
    ReportError,
    render_experiment,
    render_suite,
)

REPO_ROOT = Path(__file__).resolve().parents[2]
REFERENCE_CONFIGS = REPO_ROOT / "configs" / "reference"
FLOW_C_RUNS = ("c_p5", "c_p7")


@pytest.fixture(scope="session")
def reference_outputs(tmp_path_factory):
    """Run the shipped reference suite through the primary CLI once."""
    out = tmp_path_factory.mktemp("suite_out")
    proc = subprocess.run(
        [sys.executable, "-m", "normflow.cli", "suite", str(REFERENCE_CONFIGS),
         "-o", str(out)],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stdout + proc.stderr
    return out


def _minimal_experiment(directory: Path, status="Converged", with_fit=True):
    directory.mkdir(parents=True, exist_ok=True)
    rows = ["t,lambda,norm_q,umax,umin,energy,B,dt,dissipation,drift"]
    import math

    for k in range(40):
        t = 0.05 * k
        lam = 2.0 * math.exp(-1.5 * t)
        rows.append(f"{t},{lam},1.0,{1.0 + lam},{1.0 - 0.3 * lam},{lam},1.2,0.05,{lam},0.0")
    (directory / "trace.csv").write_text("\n".join(rows) + "\n")
    summary = {
        "name": directory.name,
        "status": status,
        "final_lambda": 0.1,
        "final_steady_residual": 1e-9,
        "final_time": 2.0,
        "checks": [{"name": "lambda_monotone", "pass": True,
                    "violation": 0.0, "tolerance": 1e-6, "time_index": 0}],
        "fits": {"lambda_decay": {"rate": 1.5, "r_squared": 0.9999}} if with_fit else {},
        "flow": {"variant": "A", "p": 2.0, "q": 2.0, "n": 1},
    }
    (directory / "summary.json").write_text(json.dumps(summary))
    return directory


class TestRenderExperiment:
    def test_minimal_experiment_renders(self, tmp_path):
        exp = _minimal_experiment(tmp_path / "exp")
        bundle = render_experiment(exp)
        assert bundle.figures, "figure list must be nonempty on success"
        assert all(f.exists() for f in bundle.figures)
        assert bundle.html_path.exists()
        assert bundle.lambda_slope_annotation == pytest.approx(1.5)
        html = bundle.html_path.read_text()
        assert "lambda.png" in html
        assert "1.5" in html

    def test_empty_directory_fails(self, tmp_path):
        empty = tmp_path / "empty"
        empty.mkdir()
        with pytest.raises(ReportError, match="trace"):
            render_experiment(empty)

    def test_corrupt_summary_fails(self, tmp_path):
        exp = _minimal_experiment(tmp_path / "exp")
        (exp / "summary.json").write_text("{not json")
        with pytest.raises(ReportError, match="summary"):
            render_experiment(exp)

    def test_blowup_flagging(self, tmp_path):
        exp = _minimal_experiment(tmp_path / "blow", status="BlowUp", with_fit=False)
        bundle = render_experiment(exp)
        assert bundle.blowup_flagged
        assert "BLOW-UP DETECTED" in bundle.html_path.read_text()

    def test_missing_optional_columns_tolerated(self, tmp_path):
        exp = tmp_path / "thin"
        exp.mkdir()
        rows = ["t,lambda,norm_q,umax,umin,energy,dt,dissipation,drift"]
        for k in range(10):
            rows.append(f"{0.1 * k},1.0,1.0,2.0,1.0,3.0,0.1,0.5,0.0")
        (exp / "trace.csv").write_text("\n".join(rows) + "\n")
        (exp / "summary.json").write_text(json.dumps(
            {"name": "thin", "status": "HorizonReached", "checks": [],
             "flow": {"variant": "B", "p": 3.0}}
        ))
        bundle = render_experiment(exp)  # no B column: Lyapunov panel falls back
        assert bundle.figures


class TestRenderSuite:
    def test_missing_suite_report(self, tmp_path):
        with pytest.raises(ReportError, match="suite report"):
            render_suite(tmp_path)

    def test_single_experiment_suite(self, tmp_path):
        _minimal_experiment(tmp_path / "solo")
        (tmp_path / "suite_report.json").write_text(json.dumps({
            "experiments": [{"name": "solo", "status": "Converged",
                             "ok": True, "exit_code": 0}],
            "total": 1, "failures": 0, "all_ok": True,
        }))
        index = render_suite(tmp_path)
        assert index.exists()
        assert "solo/report.html" in index.read_text()


class TestAcceptanceCriterion9:
    """[SECONDARY] report generation over the completed reference suite."""

    def test_report_over_reference_suite(self, reference_outputs):
        proc = subprocess.run(
            [sys.executable, "-m", "normflow_plotkit.cli", str(reference_outputs)],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0, proc.stdout + proc.stderr
        index = (reference_outputs / "index.html").read_text()

        suite = json.loads((reference_outputs / "suite_report.json").read_text())
        assert len(suite["experiments"]) == 6
        for entry in suite["experiments"]:
            summary = json.loads(
                (reference_outputs / entry["name"] / "summary.json").read_text()
            )
            badge = f">{summary['status']}</span>"
            row_anchor = f'{entry["name"]}/report.html'
            assert badge in index
            assert row_anchor in index
            assert (reference_outputs / entry["name"] / "report.html").exists()

        # log-lambda figure slope annotation equals summary c_fit; the flow-A
        # reference pages carry all four figures
        for name in ("a_p2", "a_p3"):
            summary = json.loads((reference_outputs / name / "summary.json").read_text())
            c_fit = summary["fits"]["lambda_decay"]["rate"]
            bundle = render_experiment(reference_outputs / name)
            assert bundle.lambda_slope_annotation == pytest.approx(c_fit, rel=1e-12)
            assert f"{c_fit:.6g}" in (reference_outputs / name / "report.html").read_text()
            assert (reference_outputs / name / "lambda.png").exists()
            assert len(bundle.figures) == 4

        # blow-up-flagged growth figure for each flow-C supercritical run
        for name in FLOW_C_RUNS:
            bundle = render_experiment(reference_outputs / name)
            assert bundle.blowup_flagged
            assert (reference_outputs / name / "bounds.png").exists()
            assert "BLOW-UP DETECTED" in (reference_outputs / name / "report.html").read_text()

    def test_nonzero_exit_on_missing_trace(self, tmp_path):
        bare = tmp_path / "no_trace"
        bare.mkdir()
        proc = subprocess.run(
            [sys.executable, "-m", "normflow_plotkit.cli", str(bare)],
            capture_output=True, text=True,
        )
        assert proc.returncode != 0
        assert "trace" in proc.stderr
