"""Render figures and HTML reports from normflow experiment outputs.

Consumes only the documented file formats (trace.csv, summary.json,
snapshots/*.csv, suite_report.json); never re-runs simulations.  Rendering is
deterministic for fixed inputs: fixed figure sizes, no timestamps.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from html import escape
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

FIGSIZE = (7.0, 4.2)
DPI = 110
PNG_METADATA = {"Software": "normflow-report"}

STATUS_COLORS = {
    "Converged": "#2e7d32",
    "BlowUp": "#c62828",
    "HorizonReached": "#f9a825",
    "PositivityLost": "#6a1b9a",
}


class ReportError(RuntimeError):
    """Missing or corrupt experiment files."""


@dataclass
class ReportBundle:
    directory: Path
    trace: dict[str, np.ndarray]
    summary: dict
    figures: list[Path] = field(default_factory=list)
    html_path: Path | None = None
    lambda_slope_annotation: float | None = None
    blowup_flagged: bool = False


def load_trace(path: Path) -> dict[str, np.ndarray]:
    if not path.is_file():
        raise ReportError(f"missing trace file: {path}")
    try:
        data = np.genfromtxt(path, delimiter=",", names=True)
    except ValueError as exc:
        raise ReportError(f"corrupt trace file {path}: {exc}") from exc
    if data.dtype.names is None:
        raise ReportError(f"trace file {path} has no header row")
    table = {name: np.atleast_1d(data[name]) for name in data.dtype.names}
    if "t" not in table:
        raise ReportError(f"trace file {path} lacks a 't' column")
    return table


def load_summary(path: Path) -> dict:
    if not path.is_file():
        raise ReportError(f"missing summary file: {path}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ReportError(f"corrupt summary file {path}: {exc}") from exc


def _save(fig, path: Path) -> Path:
    fig.savefig(path, dpi=DPI, metadata=PNG_METADATA)
    plt.close(fig)
    return path


def _plot_lambda(trace, summary, out: Path) -> tuple[Path, float | None]:
    t, lam = trace["t"], trace["lambda"]
    fig, ax = plt.subplots(figsize=FIGSIZE)
    positive = lam > 0
    if positive.any():
        ax.semilogy(t[positive], lam[positive], color="#1565c0", lw=1.6,
                    label="multiplier")
    else:
        ax.plot(t, lam, color="#1565c0", lw=1.6, label="multiplier")
    slope = None
    fit = (summary.get("fits") or {}).get("lambda_decay") or {}
    if isinstance(fit.get("rate"), (int, float)) and np.isfinite(fit["rate"]):
        slope = float(fit["rate"])
        # anchor the fitted exponential mid-trace for visual comparison
        mid = len(t) // 2
        if positive[mid]:
            ref = lam[mid] * np.exp(-slope * (t - t[mid]))
            ax.semilogy(t, ref, "--", color="#ef6c00", lw=1.2,
                        label=f"fit slope = -{slope:.6g}")
        ax.annotate(
            f"decay rate c_fit = {slope:.6g}",
            xy=(0.02, 0.04), xycoords="axes fraction", fontsize=9, color="#ef6c00",
        )
    ax.set_xlabel("t")
    ax.set_ylabel("lambda(t)")
    ax.set_title("multiplier decay")
    ax.legend(loc="upper right", fontsize=8)
    ax.grid(alpha=0.3)
    return _save(fig, out / "lambda.png"), slope


def _plot_bounds(trace, summary, out: Path) -> tuple[Path, bool]:
    t = trace["t"]
    fig, ax = plt.subplots(figsize=FIGSIZE)
    ax.plot(t, trace["umax"], color="#c62828", lw=1.6, label="u_max")
    ax.plot(t, trace["umin"], color="#2e7d32", lw=1.6, label="u_min")
    flagged = summary.get("status") == "BlowUp"
    if flagged:
        ax.annotate(
            "BLOW-UP DETECTED",
            xy=(0.5, 0.9), xycoords="axes fraction", ha="center",
            fontsize=13, color="#c62828", fontweight="bold",
        )
        trigger = summary.get("blowup_trigger")
        if trigger:
            ax.annotate(f"trigger: {trigger}", xy=(0.5, 0.82),
                        xycoords="axes fraction", ha="center", fontsize=9)
    ax.set_xlabel("t")
    ax.set_ylabel("field bounds")
    ax.set_title("sup / inf of the field")
    ax.legend(loc="center right", fontsize=8)
    ax.grid(alpha=0.3)
    return _save(fig, out / "bounds.png"), flagged


def _plot_energy(trace, summary, out: Path) -> Path:
    t = trace["t"]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(FIGSIZE[0] * 1.35, FIGSIZE[1]))
    ax1.plot(t, trace["energy"], color="#1565c0", lw=1.6)
    ax1.set_xlabel("t")
    ax1.set_ylabel("Dirichlet energy")
    ax1.set_title("energy")
    ax1.grid(alpha=0.3)
    flow = summary.get("flow") or {}
    if flow.get("variant") == "B" and "B" in trace:
        p = float(flow.get("p", 3.0))
        lyap = trace["lambda"] * trace["B"] ** ((p - 1.0) / (p + 1.0))
        ax2.plot(t, lyap, color="#6a1b9a", lw=1.6)
        ax2.set_title("Lyapunov: lambda B^{(p-1)/(p+1)}")
    elif "dissipation" in trace:
        positive = trace["dissipation"] > 0
        if positive.sum() > 1:
            ax2.semilogy(t[positive], trace["dissipation"][positive],
                         color="#6a1b9a", lw=1.6)
        else:
            ax2.plot(t, trace["dissipation"], color="#6a1b9a", lw=1.6)
        ax2.set_title("dissipation")
    ax2.set_xlabel("t")
    ax2.grid(alpha=0.3)
    fig.tight_layout()
    return _save(fig, out / "energy.png")


def _plot_profile(directory: Path, out: Path) -> Path | None:
    snapdir = directory / "snapshots"
    snaps = sorted(snapdir.glob("u_*.csv"), key=lambda f: float(f.stem[2:]))
    if not snaps:
        return None
    final = np.genfromtxt(snaps[-1], delimiter=",", names=True)
    names = final.dtype.names
    if names is None or len(names) < 2 or len(np.atleast_1d(final[names[0]])) < 2:
        return None
    x = final[names[0]]
    u = final[names[-1]]
    fig, ax = plt.subplots(figsize=FIGSIZE)
    ax.plot(x, u, color="#1565c0", lw=1.6, label=f"final ({snaps[-1].stem})")
    oracle_path = snapdir / "oracle_u.csv"
    if oracle_path.is_file():
        oracle = np.genfromtxt(oracle_path, delimiter=",", names=True)
        ax.plot(oracle[oracle.dtype.names[0]], oracle[oracle.dtype.names[-1]],
                "--", color="#ef6c00", lw=1.3, label="shooting oracle")
    ax.set_xlabel(names[0])
    ax.set_ylabel("u")
    ax.set_title("final profile")
    ax.legend(loc="best", fontsize=8)
    ax.grid(alpha=0.3)
    return _save(fig, out / "profile.png")


def _badge(status: str) -> str:
    color = STATUS_COLORS.get(status, "#455a64")
    return (f'<span class="badge" style="background:{color}">'
            f"{escape(str(status))}</span>")


def _checks_table(summary: dict) -> str:
    rows = []
    for check in summary.get("checks", []):
        ok = "pass" if check.get("pass") else "FAIL"
        rows.append(
            f"<tr><td>{escape(str(check.get('name')))}</td><td>{ok}</td>"
            f"<td>{check.get('violation'):.3e}</td>"
            f"<td>{check.get('tolerance'):.1e}</td></tr>"
        )
    if not rows:
        return "<p>no checks recorded</p>"
    return ("<table><tr><th>check</th><th>result</th><th>violation</th>"
            "<th>tolerance</th></tr>" + "".join(rows) + "</table>")


_STYLE = """
body { font-family: sans-serif; margin: 2em; color: #212121; }
.badge { color: white; padding: 2px 8px; border-radius: 4px; font-size: 0.9em; }
table { border-collapse: collapse; margin: 1em 0; }
td, th { border: 1px solid #bbb; padding: 4px 10px; font-size: 0.9em; }
img { max-width: 780px; display: block; margin: 1em 0; border: 1px solid #ddd; }
"""


def render_experiment(directory: str | Path) -> ReportBundle:
    """Render one experiment directory into PNG figures plus report.html."""
    directory = Path(directory)
    if not directory.is_dir():
        raise ReportError(f"not a directory: {directory}")
    trace = load_trace(directory / "trace.csv")
    summary = load_summary(directory / "summary.json")
    bundle = ReportBundle(directory=directory, trace=trace, summary=summary)

    lam_fig, slope = _plot_lambda(trace, summary, directory)
    bundle.figures.append(lam_fig)
    bundle.lambda_slope_annotation = slope
    bounds_fig, flagged = _plot_bounds(trace, summary, directory)
    bundle.figures.append(bounds_fig)
    bundle.blowup_flagged = flagged
    bundle.figures.append(_plot_energy(trace, summary, directory))
    profile_fig = _plot_profile(directory, directory)
    if profile_fig is not None:
        bundle.figures.append(profile_fig)

    name = summary.get("name", directory.name)
    status = summary.get("status", "?")
    parts = [
        "<!DOCTYPE html><html><head><meta charset='utf-8'>",
        f"<title>{escape(str(name))}</title><style>{_STYLE}</style></head><body>",
        f"<h1>{escape(str(name))} {_badge(status)}</h1>",
        "<ul>",
        f"<li>final lambda: {summary.get('final_lambda')}</li>",
        f"<li>final steady residual: {summary.get('final_steady_residual')}</li>",
        f"<li>final time: {summary.get('final_time')}</li>",
        "</ul>",
    ]
    if slope is not None:
        parts.append(f"<p>fitted decay rate c_fit = {slope:.6g}</p>")
    if flagged:
        parts.append('<p style="color:#c62828;font-weight:bold">BLOW-UP DETECTED</p>')
    oracle = summary.get("oracle_match")
    if oracle and "lambda_oracle" in oracle:
        parts.append(
            f"<p>oracle match: lambda {oracle['lambda_flow']:.8g} vs "
            f"{oracle['lambda_oracle']:.8g} "
            f"(rel err {oracle['lambda_rel_error']:.2e})</p>"
        )
    parts.append(_checks_table(summary))
    for fig_path in bundle.figures:
        parts.append(f'<img src="{fig_path.name}" alt="{fig_path.stem}">')
    parts.append("</body></html>")
    html = directory / "report.html"
    html.write_text("\n".join(parts))
    bundle.html_path = html
    return bundle


def render_suite(directory: str | Path) -> Path:
    """Render every experiment listed in suite_report.json plus an index."""
    directory = Path(directory)
    report_path = directory / "suite_report.json"
    if not report_path.is_file():
        raise ReportError(f"missing suite report: {report_path}")
    suite = load_summary(report_path)
    rows = []
    for entry in suite.get("experiments", []):
        name = entry.get("name", "?")
        exp_dir = directory / name
        status = entry.get("status", "?")
        link = name
        if (exp_dir / "trace.csv").is_file():
            bundle = render_experiment(exp_dir)
            link = f'<a href="{name}/report.html">{escape(str(name))}</a>'
        else:
            link = escape(str(name))
        ok = "ok" if entry.get("ok") else "FAIL"
        rows.append(
            f"<tr><td>{link}</td><td>{_badge(status)}</td>"
            f"<td>{ok}</td><td>{entry.get('exit_code')}</td></tr>"
        )
    html = [
        "<!DOCTYPE html><html><head><meta charset='utf-8'>",
        f"<title>normflow suite</title><style>{_STYLE}</style></head><body>",
        "<h1>normflow suite report</h1>",
        f"<p>{suite.get('total', len(rows))} experiments, "
        f"{suite.get('failures', 0)} unexpected failures</p>",
        "<table><tr><th>experiment</th><th>status</th><th>expected?</th>"
        "<th>exit</th></tr>",
        *rows,
        "</table></body></html>",
    ]
    index = directory / "index.html"
    index.write_text("\n".join(html))
    return index
