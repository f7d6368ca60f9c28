"""Time integration with norm projection, adaptive steps and blow-up detection.

A run advances ``step -> project -> record`` until one of four terminal
states: Converged (steady residual below tolerance), BlowUp (u_max threshold
crossed, or the adaptive step collapsed below dt_min while u_max was still
growing -- the practical finite-resolution blow-up signal), PositivityLost,
or HorizonReached.

Two schemes: explicit Euler, and an IMEX Crank-Nicolson that treats the
Laplacian implicitly while freezing the multiplier term (and, for flow A,
the u^{2-p} mobility) at the step start.  The linear systems are solved
directly (sparse LU, tridiagonal-plus-wrap in 1D/radial) or by conjugate
gradients in 2D.

Every accepted step is renormalized onto the constraint sphere; the
pre-projection drift |int u_new^q - 1| is O(dt^2) because the multiplier is
discretely exact, and it is recorded as a health metric.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import minimize_scalar

from . import diagnostics
from .geometry import BALL, Geometry, check_field, dirichlet_energy, integrate, laplacian_matrix
from .flows import (
    VARIANT_A,
    VARIANT_B,
    FlowSpec,
    conserved_norm,
    lambda_value,
    normalize,
    rhs,
    validate_pairing,
)

EXPLICIT_EULER = "ExplicitEuler"
IMEX_CN = "IMEX_CN"
SCHEMES = (EXPLICIT_EULER, IMEX_CN)

CONVERGED = "Converged"
BLOW_UP = "BlowUp"
HORIZON_REACHED = "HorizonReached"
POSITIVITY_LOST = "PositivityLost"

#: pre-projection norm drift beyond which a step is rejected and dt halved
DRIFT_REJECT_TOL = 1e-3
#: accepted steps between dt growth events, and the growth factor
DT_GROW_EVERY = 20
DT_GROW_FACTOR = 1.2
#: safety factor on the explicit parabolic stability bound
EULER_SAFETY = 0.9


class SolverError(RuntimeError):
    """Linear solve failed or the step controller stalled without growth."""


class InitialDataError(ValueError):
    """Initial data violates the flow's admissibility conditions."""


@dataclass(frozen=True)
class SolverConfig:
    scheme: str = IMEX_CN
    dt_initial: float = 1e-4
    dt_min: float = 1e-10
    dt_max: float = 1e-2
    t_max: float = 50.0
    blowup_umax_factor: float = 100.0
    steady_residual_tol: float = 1e-8
    positivity_floor: float = 1e-12
    record_every: int = 10

    def __post_init__(self) -> None:
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if not (0 < self.dt_min <= self.dt_initial <= self.dt_max):
            raise ValueError(
                f"need 0 < dt_min <= dt_initial <= dt_max, got "
                f"({self.dt_min}, {self.dt_initial}, {self.dt_max})"
            )
        if self.t_max <= 0:
            raise ValueError(f"t_max must be positive, got {self.t_max}")
        if self.blowup_umax_factor <= 1:
            raise ValueError("blowup_umax_factor must exceed 1")
        if self.positivity_floor < 0:
            raise ValueError("positivity_floor must be >= 0")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")


@dataclass(frozen=True)
class StepStats:
    norm_drift: float
    max_rate: float


@dataclass
class Trace:
    """Recorded time series of a run; one entry per sample in every column."""

    t: np.ndarray
    lam: np.ndarray
    norm_q: np.ndarray
    umax: np.ndarray
    umin: np.ndarray
    energy: np.ndarray
    bnorm: np.ndarray
    dt: np.ndarray
    dissipation: np.ndarray
    drift: np.ndarray
    variant: str = VARIANT_B
    p: float = 1.0
    q: float = 2.0
    domain_measure: float = 1.0

    COLUMNS = ("t", "lambda", "norm_q", "umax", "umin", "energy", "B", "dt", "dissipation", "drift")

    def __len__(self) -> int:
        return len(self.t)

    def rows(self):
        """Samples as tuples in CSV column order."""
        return zip(
            self.t, self.lam, self.norm_q, self.umax, self.umin,
            self.energy, self.bnorm, self.dt, self.dissipation, self.drift,
        )


@dataclass(frozen=True)
class BlowupReport:
    threshold_time: float | None
    time_index: int | None
    umax_ratio: float
    fit_exponent: float | None
    fit_time_estimate: float | None
    fit_r_squared: float | None

    def to_dict(self) -> dict:
        return {
            "threshold_time": self.threshold_time,
            "time_index": self.time_index,
            "umax_ratio": self.umax_ratio,
            "fit_exponent": self.fit_exponent,
            "fit_time_estimate": self.fit_time_estimate,
            "fit_r_squared": self.fit_r_squared,
        }


@dataclass
class RunOutcome:
    status: str
    final_field: np.ndarray
    final_lambda: float
    evidence: dict = field(default_factory=dict)


class _Stepper:
    """One-step advancement with cached sparse structure for a fixed geometry."""

    def __init__(self, spec: FlowSpec, geom: Geometry, scheme: str):
        self.spec = spec
        self.geom = geom
        self.scheme = scheme
        self.lap = laplacian_matrix(geom).tocsr()
        self.identity = sp.identity(geom.node_count, format="csr")
        self._lu_key: float | None = None
        self._lu = None
        self._direct = geom.dimension_n == 1 or geom.kind == BALL

    def step(self, u: np.ndarray, dt: float, lam: float) -> tuple[np.ndarray, StepStats]:
        spec = self.spec
        if self.scheme == EXPLICIT_EULER:
            du = rhs(spec, self.geom, u, lam)
            u_new = u + dt * du
            max_rate = float(np.max(np.abs(du)))
        else:
            u_new, max_rate = self._imex_cn(u, dt, lam)
        drift = abs(conserved_norm(spec, self.geom, u_new) - 1.0)
        if not np.isfinite(drift):
            drift = np.inf
        return u_new, StepStats(norm_drift=drift, max_rate=max_rate)

    def _imex_cn(self, u: np.ndarray, dt: float, lam: float) -> tuple[np.ndarray, float]:
        spec, geom = self.spec, self.geom
        if spec.variant == VARIANT_A:
            mobility = u ** (2.0 - spec.p)
            source = mobility * (lam * u ** (spec.p - 1.0))
        else:
            mobility = None
            source = lam * u**spec.p
        half = 0.5 * dt
        lap_u = self.lap @ u
        if mobility is None:
            b = u + half * lap_u + dt * source
            if self._direct:
                if self._lu_key != dt:
                    mat = (self.identity - half * self.lap).tocsc()
                    self._lu = spla.splu(mat)
                    self._lu_key = dt
                u_new = self._lu.solve(b)
            else:
                mat = (self.identity - half * self.lap).tocsr()
                u_new = _cg_solve(mat, b, x0=u)
        else:
            b = u + half * mobility * lap_u + dt * source
            if self._direct:
                mat = (self.identity - half * sp.diags(mobility) @ self.lap).tocsc()
                u_new = spla.splu(mat).solve(b)
            else:
                # symmetrize: (diag(1/m) - dt/2 Lap) u_new = b / m
                mat = (sp.diags(1.0 / mobility) - half * self.lap).tocsr()
                u_new = _cg_solve(mat, b / mobility, x0=u)
        max_rate = float(np.max(np.abs(u_new - u)) / dt) if dt > 0 else 0.0
        return u_new, max_rate


def _cg_solve(mat: sp.csr_matrix, b: np.ndarray, x0: np.ndarray) -> np.ndarray:
    precond = sp.diags(1.0 / mat.diagonal())
    x, info = spla.cg(mat, b, x0=x0, rtol=1e-12, atol=0.0, maxiter=20 * len(b), M=precond)
    if info != 0:
        raise SolverError(f"conjugate gradient failed to converge (info={info})")
    return x


def step(
    spec: FlowSpec,
    geom: Geometry,
    u: np.ndarray,
    dt: float,
    scheme: str = IMEX_CN,
    lam: float | None = None,
) -> tuple[np.ndarray, StepStats]:
    """Advance one step WITHOUT projection; returns the raw field and stats."""
    if dt < 0:
        raise ValueError(f"dt must be >= 0, got {dt}")
    u = check_field(geom, u)
    if lam is None:
        lam = lambda_value(spec, geom, u)
    return _Stepper(spec, geom, scheme).step(u, dt, lam)


def project(spec: FlowSpec, geom: Geometry, u: np.ndarray) -> np.ndarray:
    """Exact discrete norm enforcement: rescale onto the unit q-sphere."""
    return normalize(spec, geom, u)


class _TraceBuilder:
    def __init__(self, spec: FlowSpec, geom: Geometry):
        self.spec = spec
        self.geom = geom
        self.cols: dict[str, list[float]] = {
            k: [] for k in ("t", "lam", "norm_q", "umax", "umin", "energy",
                            "bnorm", "dt", "dissipation", "drift")
        }
        self.last_t: float | None = None

    def record(self, t: float, u: np.ndarray, lam: float, dt: float, drift: float) -> bool:
        if self.last_t is not None and t == self.last_t:
            return False
        spec, geom = self.spec, self.geom
        du = rhs(spec, geom, u, lam)
        weight = u ** (spec.p - 2.0) if spec.variant == VARIANT_A else 1.0
        c = self.cols
        c["t"].append(t)
        c["lam"].append(lam)
        c["norm_q"].append(conserved_norm(spec, geom, u))
        c["umax"].append(float(np.max(u)))
        c["umin"].append(float(np.min(u)))
        c["energy"].append(dirichlet_energy(geom, u))
        c["bnorm"].append(integrate(geom, u ** (spec.p + 1.0)))
        c["dt"].append(dt)
        c["dissipation"].append(integrate(geom, weight * du * du))
        c["drift"].append(drift)
        self.last_t = t
        return True

    def build(self) -> Trace:
        arrays = {k: np.asarray(v, dtype=float) for k, v in self.cols.items()}
        return Trace(
            t=arrays["t"], lam=arrays["lam"], norm_q=arrays["norm_q"],
            umax=arrays["umax"], umin=arrays["umin"], energy=arrays["energy"],
            bnorm=arrays["bnorm"], dt=arrays["dt"], dissipation=arrays["dissipation"],
            drift=arrays["drift"], variant=self.spec.variant, p=self.spec.p,
            q=self.spec.q, domain_measure=self.geom.measure,
        )


def _validate_initial_data(spec: FlowSpec, geom: Geometry, g: np.ndarray) -> np.ndarray:
    g = check_field(geom, g)
    if not np.all(np.isfinite(g)):
        raise InitialDataError("initial data must be finite")
    if np.min(g) < 0.0:
        raise InitialDataError("initial data must be nonnegative")
    if not np.any(g > 0.0):
        raise InitialDataError("initial data must not be identically zero")
    if spec.variant == VARIANT_A and np.min(g) <= 0.0:
        raise InitialDataError("flow A requires strictly positive initial data")
    return g


def run(
    spec: FlowSpec,
    geom: Geometry,
    g: np.ndarray,
    config: SolverConfig,
    on_sample: Callable[[float, np.ndarray], None] | None = None,
) -> tuple[RunOutcome, Trace]:
    """Advance the flow from initial data ``g`` until a terminal state."""
    validate_pairing(spec, geom)
    g = _validate_initial_data(spec, geom, g)
    u = normalize(spec, geom, g)
    umax0 = float(np.max(u))
    strict_floor = spec.variant == VARIANT_A

    stepper = _Stepper(spec, geom, config.scheme)
    builder = _TraceBuilder(spec, geom)
    t = 0.0
    dt = config.dt_initial
    lam = lambda_value(spec, geom, u)
    builder.record(t, u, lam, dt, 0.0)
    if on_sample is not None:
        on_sample(t, u)

    accepted = 0
    rejected = 0
    since_grow = 0
    prev_umax = umax0
    growing = False
    status: str | None = None
    evidence: dict = {}
    last_drift = 0.0
    exit_residual = np.nan

    def sample(current_dt: float) -> None:
        if builder.record(t, u, lam, current_dt, last_drift) and on_sample is not None:
            on_sample(t, u)

    while True:
        remaining = config.t_max - t
        if remaining <= 1e-9 * min(dt, config.t_max):
            status = HORIZON_REACHED
            exit_residual = diagnostics.steady_residual(spec, geom, u, lam)
            break
        dt_eff = min(dt, remaining)
        if config.scheme == EXPLICIT_EULER:
            cap = EULER_SAFETY / geom.stiffest_diagonal
            if spec.variant == VARIANT_A:
                cap *= float(np.min(u ** (spec.p - 2.0)))
            dt_eff = min(dt_eff, cap)

        candidate, stats = stepper.step(u, dt_eff, lam)
        bad = (
            not np.all(np.isfinite(candidate))
            or (np.min(candidate) <= 0.0 if strict_floor else np.min(candidate) < 0.0)
            or stats.norm_drift > DRIFT_REJECT_TOL
        )
        if bad:
            rejected += 1
            since_grow = 0
            dt = dt_eff / 2.0
            if dt < config.dt_min:
                if growing:
                    status = BLOW_UP
                    evidence["blowup_trigger"] = "dt_collapse"
                    evidence["dt_at_collapse"] = dt
                    evidence["umax_ratio_at_collapse"] = prev_umax / umax0
                    exit_residual = diagnostics.steady_residual(spec, geom, u, lam)
                    break
                raise SolverError(
                    f"step size collapsed below dt_min={config.dt_min:g} at t={t:g} "
                    "without u_max growth"
                )
            continue

        u = project(spec, geom, candidate)
        t += dt_eff
        accepted += 1
        since_grow += 1
        last_drift = stats.norm_drift
        current_umax = float(np.max(u))
        growing = current_umax > prev_umax
        prev_umax = current_umax
        lam = lambda_value(spec, geom, u)

        if float(np.min(u)) <= config.positivity_floor:
            status = POSITIVITY_LOST
            sample(dt_eff)
            break
        if current_umax > config.blowup_umax_factor * umax0:
            status = BLOW_UP
            evidence["blowup_trigger"] = "umax_threshold"
            evidence["threshold_time"] = t
            sample(dt_eff)
            exit_residual = diagnostics.steady_residual(spec, geom, u, lam)
            break
        if since_grow >= DT_GROW_EVERY:
            dt = min(dt * DT_GROW_FACTOR, config.dt_max)
            since_grow = 0
        if accepted % config.record_every == 0:
            sample(dt_eff)
            residual = diagnostics.steady_residual(spec, geom, u, lam)
            if residual < config.steady_residual_tol:
                status = CONVERGED
                exit_residual = residual
                break

    sample(dt)
    trace = builder.build()
    if np.isnan(exit_residual):
        exit_residual = diagnostics.steady_residual(spec, geom, u, lam)
    evidence.update(
        steady_residual_at_exit=exit_residual,
        steps_accepted=accepted,
        steps_rejected=rejected,
        final_time=t,
    )
    if status == BLOW_UP:
        report = detect_blowup(trace, config)
        if report is None:
            fit = _fit_growth(trace.t, trace.umax)
            report = BlowupReport(
                threshold_time=None,
                time_index=None,
                umax_ratio=float(trace.umax[-1] / trace.umax[0]),
                fit_exponent=fit[0],
                fit_time_estimate=fit[1],
                fit_r_squared=fit[2],
            )
        evidence["blowup_report"] = report.to_dict()
    return RunOutcome(status, u, lam, evidence), trace


def _fit_growth(
    t: np.ndarray, umax: np.ndarray, upto: int | None = None
) -> tuple[float | None, float | None, float | None]:
    """Fit log u_max ~ c - gamma log(T - t) over the final decade of growth.

    Returns (exponent, T_estimate, r_squared) where u_max ~ (T - t)^exponent,
    or Nones when the window is degenerate.  Descriptive only.
    """
    if upto is not None:
        t, umax = t[: upto + 1], umax[: upto + 1]
    if len(t) < 4 or umax[-1] <= umax[0]:
        return None, None, None
    window = umax >= umax[-1] / 10.0
    tw, uw = t[window], umax[window]
    if len(tw) < 4 or tw[-1] <= tw[0]:
        return None, None, None
    logu = np.log(uw)
    span = tw[-1] - tw[0]

    def sse(T: float) -> float:
        x = np.log(T - tw)
        c = np.polyfit(x, logu, 1)
        return float(np.sum((np.polyval(c, x) - logu) ** 2))

    res = minimize_scalar(
        sse, bounds=(tw[-1] + 1e-9 * span, tw[-1] + 10.0 * span), method="bounded",
        options={"xatol": 1e-12 * span},
    )
    T = float(res.x)
    x = np.log(T - tw)
    coef = np.polyfit(x, logu, 1)
    pred = np.polyval(coef, x)
    ss_res = float(np.sum((pred - logu) ** 2))
    ss_tot = float(np.sum((logu - logu.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(coef[0]), T, r2


def detect_blowup(trace: Trace, config: SolverConfig) -> BlowupReport | None:
    """Report the first u_max threshold crossing, with a descriptive growth fit."""
    if len(trace) == 0:
        raise ValueError("empty trace")
    threshold = config.blowup_umax_factor * trace.umax[0]
    over = np.nonzero(trace.umax > threshold)[0]
    if over.size == 0:
        return None
    idx = int(over[0])
    exponent, t_est, r2 = _fit_growth(trace.t, trace.umax, upto=idx)
    return BlowupReport(
        threshold_time=float(trace.t[idx]),
        time_index=idx,
        umax_ratio=float(trace.umax[idx] / trace.umax[0]),
        fit_exponent=exponent,
        fit_time_estimate=t_est,
        fit_r_squared=r2,
    )
