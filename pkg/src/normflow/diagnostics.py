"""Runtime checks derived from the global-existence and blow-up proofs.

Every check is a pure function of a recorded trace (or a final field) and
returns a ``CheckReport``: name, pass/fail, worst violation, where it
happened.  The proofs' unnamed constants are never invented; each check
verifies a sign / monotonicity statement, fits a rate, or uses the one
constant that is derivable (the Holder floor B >= |Omega|^{-(p-1)/2} on the
unit L^2 sphere).  Monotonicity tolerances are expressed relative to the
initial value of the monitored quantity.

Flow A checks: lambda non-increasing, exponential decay fit, Harnack ratio,
integrability of lambda, max-growth bound log(u_max(t)/u_max(0)) <= int lambda.
Flow B checks: Lyapunov quantity lambda B^{(p-1)/(p+1)} non-increasing with
the Holder floor on B, and the energy identity including the (lambda/(p+1)) dB/dt
term.  Flows A and C share the one-sided energy dissipation check.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dataclass_field
from typing import TYPE_CHECKING

import numpy as np

from .flows import VARIANT_A, VARIANT_B, VARIANT_C, FlowSpec
from .geometry import Geometry, check_field, integrate, laplacian_apply

if TYPE_CHECKING:  # pragma: no cover - typing only, avoids an import cycle
    from .integrator import Trace


class WrongFlowVariantError(ValueError):
    """Check applied to a trace from the wrong flow."""


class DegenerateFitError(ValueError):
    """Not enough usable samples for a least-squares fit."""


@dataclass(frozen=True)
class CheckReport:
    name: str
    passed: bool
    violation: float
    tolerance: float
    time_index: int | None = None
    context: dict = dataclass_field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "passed", bool(self.passed))
        object.__setattr__(self, "violation", float(self.violation))

    def to_record(self) -> dict:
        """Flat record for the CLI's JSON summary."""
        rec = {
            "name": self.name,
            "pass": self.passed,
            "violation": self.violation,
            "tolerance": self.tolerance,
            "time_index": self.time_index,
        }
        rec.update({f"context_{k}": v for k, v in self.context.items()})
        return rec


def _require_variant(trace: "Trace", variant: str, check: str) -> None:
    if trace.variant != variant:
        raise WrongFlowVariantError(f"{check} applies to flow {variant} traces, got {trace.variant}")


def _worst_increase(values: np.ndarray) -> tuple[float, int]:
    """Largest forward increment and the index where it occurs (0 if none)."""
    if len(values) < 2:
        return 0.0, 0
    inc = np.diff(values)
    k = int(np.argmax(inc))
    return float(max(inc[k], 0.0)), k + 1


def check_lambda_monotone(trace: "Trace", tol: float = 1e-6) -> CheckReport:
    """Flow A: lambda(t) must be non-increasing up to tol * lambda(0)."""
    _require_variant(trace, VARIANT_A, "check_lambda_monotone")
    worst, idx = _worst_increase(trace.lam)
    allowed = tol * abs(trace.lam[0])
    return CheckReport(
        "lambda_monotone", worst <= allowed, worst, allowed, idx,
        {"lambda_initial": float(trace.lam[0]), "lambda_final": float(trace.lam[-1])},
    )


def fit_lambda_decay(
    trace: "Trace", tail_fraction: float = 0.5, floor_factor: float = 50.0
) -> tuple[float, float]:
    """Least-squares decay rate of lambda over the trailing window.

    Fits log lambda against t on the final ``tail_fraction`` of samples and
    returns (c_fit, r_squared) with lambda ~ exp(-c_fit * t).  Samples within
    ``floor_factor`` of the smallest recorded lambda are dropped: once the
    energy hits the quadrature's rounding floor, log lambda is pure noise.
    Returns (inf, nan) when lambda reaches zero exactly inside the window.
    """
    if not 0 < tail_fraction <= 1:
        raise ValueError(f"tail_fraction must be in (0, 1], got {tail_fraction}")
    count = max(int(np.ceil(tail_fraction * len(trace))), 2)
    t = trace.t[-count:]
    lam = trace.lam[-count:]
    if np.any(lam == 0.0):
        return np.inf, np.nan
    if np.any(lam < 0.0):
        raise DegenerateFitError("negative lambda in the fit window")
    floor = floor_factor * float(np.min(trace.lam[trace.lam > 0], initial=np.inf))
    keep = lam > floor
    if keep.sum() >= 3:
        t, lam = t[keep], lam[keep]
    if len(t) < 3:
        raise DegenerateFitError(f"need at least 3 samples to fit a decay rate, got {len(t)}")
    logl = np.log(lam)
    slope, intercept = np.polyfit(t, logl, 1)
    pred = slope * t + intercept
    ss_tot = float(np.sum((logl - logl.mean()) ** 2))
    r2 = 1.0 - float(np.sum((pred - logl) ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return float(-slope), r2


def check_harnack(trace: "Trace", tol: float = 1e-6) -> CheckReport:
    """Flow A: sup_t u_max/u_min finite, non-exploding, with u_min floored.

    Reports the empirical Harnack constant sup_k u_max(t_k)/u_min(t_k);
    passes iff the final ratio does not exceed the initial one (up to tol)
    and u_min never drops below its initial value (lambda >= 0 makes u_min
    non-decreasing along the continuum flow).
    """
    _require_variant(trace, VARIANT_A, "check_harnack")
    if np.any(trace.umin <= 0.0):
        k = int(np.argmax(trace.umin <= 0.0))
        return CheckReport("harnack", False, np.inf, tol, k, {"umin": float(trace.umin[k])})
    ratio = trace.umax / trace.umin
    sup_ratio = float(np.max(ratio))
    ratio_growth = float(ratio[-1] - ratio[0] * (1.0 + tol))
    floor = float(trace.umin[0]) * (1.0 - tol)
    floor_breach = float(np.max(floor - trace.umin))
    violation = max(ratio_growth, floor_breach, 0.0)
    passed = ratio_growth <= 0.0 and floor_breach <= 0.0
    return CheckReport(
        "harnack", passed, violation, tol,
        int(np.argmax(ratio)) if passed else None,
        {
            "sup_ratio": sup_ratio,
            "ratio_initial": float(ratio[0]),
            "ratio_final": float(ratio[-1]),
            "umin_floor": floor,
        },
    )


def check_growth_bound(trace: "Trace", tol: float = 1e-6) -> CheckReport:
    """Flow A: log(u_max(t)/u_max(0)) <= int_0^t lambda ds + tol."""
    _require_variant(trace, VARIANT_A, "check_growth_bound")
    cum = _cumtrapz(trace.lam, trace.t)
    excess = np.log(trace.umax / trace.umax[0]) - cum
    k = int(np.argmax(excess))
    worst = float(max(excess[k], 0.0))
    return CheckReport("growth_bound", worst <= tol, worst, tol, k,
                       {"lambda_integral": float(cum[-1])})


def _cumtrapz(y: np.ndarray, x: np.ndarray) -> np.ndarray:
    out = np.zeros_like(y)
    out[1:] = np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(x))
    return out


def check_lambda_integrable(trace: "Trace", cauchy_fraction: float = 0.01) -> CheckReport:
    """Flow A: trapezoidal int lambda dt must be Cauchy over the run.

    Passes iff the increment accumulated over the final quarter of the run is
    below ``cauchy_fraction`` of the total integral.
    """
    _require_variant(trace, VARIANT_A, "check_lambda_integrable")
    cum = _cumtrapz(trace.lam, trace.t)
    total = float(cum[-1])
    t_quarter = trace.t[0] + 0.75 * (trace.t[-1] - trace.t[0])
    k = int(np.searchsorted(trace.t, t_quarter))
    tail = total - float(cum[min(k, len(cum) - 1)])
    scale = abs(total) if total != 0 else 1.0
    frac = tail / scale
    return CheckReport(
        "lambda_integrable", frac < cauchy_fraction, float(max(frac, 0.0)),
        cauchy_fraction, k, {"integral": total, "tail_increment": tail},
    )


def check_lyapunov_B(trace: "Trace", p: float, tol: float = 1e-6) -> CheckReport:
    """Flow B: lambda B^{(p-1)/(p+1)} non-increasing and B above the Holder floor.

    On the unit L^2 sphere, Holder gives B = int u^{p+1} >= |Omega|^{-(p-1)/2};
    the floor uses the continuum measure of the domain carried by the trace.
    """
    _require_variant(trace, VARIANT_B, "check_lyapunov_B")
    lyap = trace.lam * trace.bnorm ** ((p - 1.0) / (p + 1.0))
    worst_inc, idx = _worst_increase(lyap)
    allowed = tol * abs(lyap[0])
    floor = trace.domain_measure ** (-(p - 1.0) / 2.0)
    b_breach = float(np.max(floor * (1.0 - tol) - trace.bnorm))
    passed = worst_inc <= allowed and b_breach <= 0.0
    return CheckReport(
        "lyapunov_B", passed, float(max(worst_inc / max(abs(lyap[0]), 1e-300), b_breach, 0.0)),
        tol, idx,
        {
            "lyapunov_initial": float(lyap[0]),
            "lyapunov_final": float(lyap[-1]),
            "B_floor": floor,
            "B_min": float(np.min(trace.bnorm)),
        },
    )


def steady_residual(spec: FlowSpec, geom: Geometry, u: np.ndarray, lam: float) -> float:
    """Relative steady-state defect ||Lap u + lam u^{p (or p-1 for A)}|| / ||u||.

    Norms are quadrature-weighted L^2.  For flow A the limiting equation is
    Lap u + lam u^{p-1} = 0, which at the constant limit vanishes with lam.
    """
    u = check_field(geom, u)
    power = spec.p - 1.0 if spec.variant == VARIANT_A else spec.p
    defect = laplacian_apply(geom, u) + lam * np.abs(u) ** power * np.sign(u)
    num = integrate(geom, defect * defect)
    den = integrate(geom, u * u)
    if den <= 0.0:
        return np.inf
    return float(np.sqrt(num / den))


def _drop_leading_sample(trace: "Trace"):
    from dataclasses import replace

    return replace(
        trace,
        t=trace.t[1:], lam=trace.lam[1:], norm_q=trace.norm_q[1:],
        umax=trace.umax[1:], umin=trace.umin[1:], energy=trace.energy[1:],
        bnorm=trace.bnorm[1:], dt=trace.dt[1:],
        dissipation=trace.dissipation[1:], drift=trace.drift[1:],
    )


def check_dissipation_balance(trace: "Trace", spec: FlowSpec, tol: float = 1e-4) -> CheckReport:
    """Energy dissipation structure of the flow, sampled along the trace.

    Flows A and C: (1/2) dE/dt = -dissipation <= 0, checked per interval
    (one-sided) and cumulatively: |E(t_end)/2 - E(0)/2 + int diss dt| small.
    Flow B: the full identity (1/2) dE/dt + diss - (lambda/(p+1)) dB/dt = 0
    with centered finite differences; its residual is the violation.
    All violations are normalized by the initial energy.

    Dirichlet flows (B, C) admit initial data that does not satisfy the
    discrete boundary condition; the first step absorbs that boundary layer,
    so the t=0 sample is excluded whenever the trace is long enough
    (diagnostics start after the first step for these flows).
    """
    if len(trace) < 2:
        raise ValueError("need at least two samples to check dissipation balance")
    if trace.variant in (VARIANT_B, VARIANT_C) and len(trace) >= 3:
        trace = _drop_leading_sample(trace)
    e0 = abs(float(trace.energy[0]))
    scale = max(e0, 1e-300)
    dts = np.diff(trace.t)
    if np.any(dts <= 0):
        raise ValueError("trace times must be strictly increasing")
    if trace.variant == VARIANT_B:
        de = np.diff(trace.energy) / dts
        db = np.diff(trace.bnorm) / dts
        diss_mid = 0.5 * (trace.dissipation[1:] + trace.dissipation[:-1])
        lam_mid = 0.5 * (trace.lam[1:] + trace.lam[:-1])
        resid = 0.5 * de + diss_mid - lam_mid / (spec.p + 1.0) * db
        k = int(np.argmax(np.abs(resid)))
        worst = float(np.abs(resid[k])) / scale
        return CheckReport(
            "dissipation_balance", worst <= tol, worst, tol, k + 1,
            {"worst_residual": float(resid[k]), "energy_initial": e0},
        )
    # flows A and C: one-sided sign check plus the cumulative balance
    inc = 0.5 * np.diff(trace.energy)
    k = int(np.argmax(inc))
    sign_worst = float(max(inc[k], 0.0)) / scale
    diss_int = float(np.trapezoid(trace.dissipation, trace.t))
    cumulative = 0.5 * (float(trace.energy[-1]) - float(trace.energy[0])) + diss_int
    cum_worst = abs(cumulative) / scale
    worst = max(sign_worst, cum_worst)
    return CheckReport(
        "dissipation_balance", worst <= tol, worst, tol, k + 1,
        {
            "worst_energy_increase": float(max(inc[k], 0.0)),
            "cumulative_residual": cumulative,
            "dissipation_integral": diss_int,
            "energy_initial": e0,
        },
    )


def default_checks(trace: "Trace", spec: FlowSpec, tolerances: dict | None = None) -> list[CheckReport]:
    """The flow-appropriate check battery with documented default tolerances."""
    tolerances = tolerances or {}
    reports: list[CheckReport] = []
    if spec.variant == VARIANT_A:
        reports.append(check_lambda_monotone(trace, tolerances.get("lambda_monotone", 1e-6)))
        reports.append(check_harnack(trace, tolerances.get("harnack", 1e-6)))
        reports.append(check_growth_bound(trace, tolerances.get("growth_bound", 1e-6)))
        reports.append(check_lambda_integrable(trace, tolerances.get("lambda_integrable", 0.01)))
        reports.append(check_dissipation_balance(trace, spec, tolerances.get("dissipation", 1e-4)))
    elif spec.variant == VARIANT_B:
        reports.append(check_lyapunov_B(trace, spec.p, tolerances.get("lyapunov", 1e-6)))
        reports.append(check_dissipation_balance(trace, spec, tolerances.get("dissipation", 1e-4)))
    elif spec.variant == VARIANT_C:
        reports.append(check_dissipation_balance(trace, spec, tolerances.get("dissipation", 1e-4)))
    return reports
