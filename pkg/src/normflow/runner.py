"""Experiment execution: run a config, write trace/snapshots/summary files.

File contract (consumed by the report tool and external scripts):

* ``trace.csv``      header ``t,lambda,norm_q,umax,umin,energy,B,dt,dissipation,drift``
* ``snapshots/u_<t>.csv``  header ``x,u`` (``r,u`` on the radial ball,
  ``x,y,u`` on 2D kinds); written at the first/last sample and every
  ``snapshot_every``-th recorded sample.
* ``snapshots/oracle_u.csv``  the independent steady state sampled on the
  same nodes, when the shooting oracle applies.
* ``summary.json``   run status, final multiplier, all check reports, fits,
  blow-up report and the oracle comparison.  Every number is reproducible
  from trace.csv by the formulas in the diagnostics module.

Exit codes: 0 converged/horizon with all checks passing, 2 blow-up detected
(the expected outcome for supercritical runs), 1 check failure or error.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import diagnostics, integrator, oracles
from .config import ExperimentConfig, parse_config_file, initial_field
from .flows import VARIANT_A, VARIANT_B, VARIANT_C
from .geometry import BALL, INTERVAL, integrate
from .integrator import BLOW_UP, CONVERGED, HORIZON_REACHED, RunOutcome, Trace

TRACE_HEADER = "t,lambda,norm_q,umax,umin,energy,B,dt,dissipation,drift"

#: documented tolerance used for the oracle cross-check (never fails a run)
ORACLE_MATCH_TOL = 1e-3

STATUS_FOR_EXPECTATION = {
    "converged": CONVERGED,
    "blowup": BLOW_UP,
    "horizon": HORIZON_REACHED,
}


def _fmt(value: float) -> str:
    return repr(float(value))


def write_trace_csv(trace: Trace, path: Path) -> None:
    lines = [TRACE_HEADER]
    for row in trace.rows():
        lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def _snapshot_header(config: ExperimentConfig) -> str:
    kind = config.geometry.kind
    if kind == BALL:
        return "r,u"
    if config.geometry.dimension_n == 2:
        return "x,y,u"
    return "x,u"


def write_snapshot(config: ExperimentConfig, t: float, u: np.ndarray, directory: Path) -> Path:
    geom = config.geometry
    path = directory / f"u_{t:.9f}.csv"
    lines = [_snapshot_header(config)]
    if geom.dimension_n == 2 and geom.kind != BALL:
        for (x, y), v in zip(geom.coords, u):
            lines.append(f"{_fmt(x)},{_fmt(y)},{_fmt(v)}")
    else:
        for x, v in zip(geom.coords, u):
            lines.append(f"{_fmt(x)},{_fmt(v)}")
    path.write_text("\n".join(lines) + "\n")
    return path


def _run_checks(config: ExperimentConfig, trace: Trace) -> list[diagnostics.CheckReport]:
    spec = config.flow
    toggles = config.diagnostics
    if toggles is None:
        return diagnostics.default_checks(trace, spec)
    reports = []
    for name, tol in toggles.items():
        if name == "lambda_monotone":
            reports.append(diagnostics.check_lambda_monotone(trace, tol if tol else 1e-6))
        elif name == "harnack":
            reports.append(diagnostics.check_harnack(trace, tol if tol else 1e-6))
        elif name == "growth_bound":
            reports.append(diagnostics.check_growth_bound(trace, tol if tol else 1e-6))
        elif name == "lambda_integrable":
            reports.append(diagnostics.check_lambda_integrable(trace, tol if tol else 0.01))
        elif name == "lyapunov":
            reports.append(diagnostics.check_lyapunov_B(trace, spec.p, tol if tol else 1e-6))
        elif name == "dissipation":
            reports.append(diagnostics.check_dissipation_balance(trace, spec, tol if tol else 1e-4))
    return reports


def _oracle_comparison(
    config: ExperimentConfig, outcome: RunOutcome, snapshot_dir: Path
) -> dict | None:
    """Cross-check a converged Dirichlet run against the shooting oracle.

    Reports both multipliers; a mismatch beyond tolerance is flagged, never
    fatal (the flow limit need not be unique).
    """
    spec, geom = config.flow, config.geometry
    if spec.variant not in (VARIANT_B, VARIANT_C) or spec.p <= 1:
        return None
    if geom.kind not in (INTERVAL, BALL):
        return None
    radius = geom.extents[0] if geom.kind == BALL else geom.extents[0] / 2.0
    profile = oracles.lane_emden_shoot(geom.dimension_n, spec.p, radius)
    if not profile.hit_zero:
        return {"profile_status": profile.status, "comment":
                "no positive Dirichlet steady state found by the shooting oracle"}
    if outcome.status != CONVERGED:
        return {"profile_status": profile.status}
    u_inf, lam_inf = oracles.steady_state_from_profile(profile, geom, spec.q)
    diff = outcome.final_field - u_inf
    l2 = float(np.sqrt(integrate(geom, diff * diff)))
    rel = abs(outcome.final_lambda - lam_inf) / abs(lam_inf)
    snapshot_dir.mkdir(exist_ok=True)
    path = snapshot_dir / "oracle_u.csv"
    lines = [_snapshot_header(config)]
    for x, v in zip(geom.coords, u_inf):
        lines.append(f"{_fmt(x)},{_fmt(v)}")
    path.write_text("\n".join(lines) + "\n")
    return {
        "profile_status": profile.status,
        "lambda_flow": outcome.final_lambda,
        "lambda_oracle": lam_inf,
        "lambda_rel_error": rel,
        "l2_distance": l2,
        "tolerance": ORACLE_MATCH_TOL,
        "within_tol": bool(rel < ORACLE_MATCH_TOL and l2 < ORACLE_MATCH_TOL),
    }


def run_experiment(config: ExperimentConfig, out_dir: str | Path) -> int:
    """Execute one experiment; returns the documented exit code."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        print(f"normflow: cannot write to {out}: {exc}")
        return 1

    snapshot_dir = out / "snapshots"
    snapshot_dir.mkdir(exist_ok=True)
    g = initial_field(config)
    record_counter = {"n": 0}

    def on_sample(t: float, u: np.ndarray) -> None:
        k = record_counter["n"]
        record_counter["n"] += 1
        if k == 0 or (config.snapshot_every > 0 and k % config.snapshot_every == 0):
            write_snapshot(config, t, u, snapshot_dir)

    try:
        outcome, trace = integrator.run(
            config.flow, config.geometry, g, config.solver, on_sample=on_sample
        )
    except (integrator.SolverError, integrator.InitialDataError, ValueError) as exc:
        (out / "summary.json").write_text(
            json.dumps({"name": config.name, "status": "Error", "error": str(exc)},
                       indent=2, sort_keys=True) + "\n"
        )
        print(f"normflow: run failed: {exc}")
        return 1

    write_trace_csv(trace, out / "trace.csv")
    write_snapshot(config, float(trace.t[-1]), outcome.final_field, snapshot_dir)

    checks = _run_checks(config, trace)
    fits: dict = {}
    if config.flow.variant == VARIANT_A:
        try:
            rate, r2 = diagnostics.fit_lambda_decay(trace)
            fits["lambda_decay"] = {"rate": rate, "r_squared": r2}
        except diagnostics.DegenerateFitError as exc:
            fits["lambda_decay"] = {"error": str(exc)}
    oracle = _oracle_comparison(config, outcome, snapshot_dir)

    all_passed = all(c.passed for c in checks)
    if outcome.status in (CONVERGED, HORIZON_REACHED) and all_passed:
        exit_code = 0
    elif outcome.status == BLOW_UP and all_passed:
        exit_code = 2
    else:
        exit_code = 1

    summary = {
        "name": config.name,
        "status": outcome.status,
        "exit_code": exit_code,
        "final_lambda": outcome.final_lambda,
        "final_steady_residual": outcome.evidence.get("steady_residual_at_exit"),
        "final_time": outcome.evidence.get("final_time"),
        "steps_accepted": outcome.evidence.get("steps_accepted"),
        "steps_rejected": outcome.evidence.get("steps_rejected"),
        "checks": [c.to_record() for c in checks],
        "fits": fits,
        "blowup": outcome.evidence.get("blowup_report"),
        "blowup_trigger": outcome.evidence.get("blowup_trigger"),
        "oracle_match": oracle,
        "conservation": {
            "max_norm_deviation": float(np.max(np.abs(trace.norm_q - 1.0))),
            "max_preprojection_drift": float(np.max(trace.drift)),
        },
        "flow": {"variant": config.flow.variant, "p": config.flow.p,
                 "q": config.flow.q, "n": config.flow.n},
        "geometry": {
            "kind": config.geometry.kind,
            "extents": list(config.geometry.extents),
            "resolution": config.geometry.resolution,
            "node_count": config.geometry.node_count,
            "measure": config.geometry.measure,
        },
        "config": config.raw,
        "expected_status": config.expected_status,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return exit_code


def _suite_entry(args: tuple[str, str]) -> dict:
    config_path, out_dir = args
    entry: dict = {"name": Path(config_path).stem, "directory": str(out_dir)}
    try:
        config = parse_config_file(config_path)
    except Exception as exc:  # malformed configs must not sink the suite
        entry.update(ok=False, error=str(exc), exit_code=1, status="ConfigError")
        return entry
    code = run_experiment(config, out_dir)
    summary = json.loads((Path(out_dir) / "summary.json").read_text())
    status = summary.get("status")
    expected = config.expected_status
    if code == 1:
        ok = False
    elif expected == "any":
        ok = True
    else:
        ok = status == STATUS_FOR_EXPECTATION[expected]
    entry.update(
        ok=bool(ok),
        exit_code=code,
        status=status,
        expected_status=expected,
        checks_failed=sum(1 for c in summary.get("checks", []) if not c.get("pass")),
    )
    return entry


def run_suite(config_dir: str | Path, out_root: str | Path, jobs: int = 1) -> int:
    """Run every ``*.cfg`` in a directory; write suite_report.json; 0 iff all ok."""
    config_dir = Path(config_dir)
    out_root = Path(out_root)
    configs = sorted(config_dir.glob("*.cfg"))
    if not configs:
        print(f"normflow: no *.cfg files in {config_dir}")
        return 1
    out_root.mkdir(parents=True, exist_ok=True)
    tasks = [(str(c), str(out_root / c.stem)) for c in configs]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            entries = list(pool.map(_suite_entry, tasks))
    else:
        entries = [_suite_entry(t) for t in tasks]
    entries.sort(key=lambda e: e["name"])
    report = {
        "experiments": entries,
        "total": len(entries),
        "failures": sum(1 for e in entries if not e["ok"]),
        "all_ok": all(e["ok"] for e in entries),
    }
    (out_root / "suite_report.json").write_text(
        json.dumps(report, indent=2, sort_keys=True) + "\n"
    )
    for e in entries:
        flag = "ok    " if e["ok"] else "FAIL  "
        print(f"{flag} {e['name']:24s} {e.get('status', '?')}")
    return 0 if report["all_ok"] else 1


def default_output_root() -> Path:
    return Path(os.environ.get("NORMFLOW_OUT", "normflow_out"))
