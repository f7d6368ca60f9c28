"""Independent steady-state solvers used to validate flow limits.

Two oracles, deliberately decoupled from the time steppers:

* ``principal_eigenpair`` -- inverse power iteration on the discrete
  -Laplacian, giving the smallest (Dirichlet) or smallest nonzero (periodic)
  eigenvalue with its positive eigenfunction.
* ``lane_emden_shoot`` -- high-order ODE integration of the radial profile
  equation v'' + (n-1)/r v' + v^p = 0, v(0)=1, v'(0)=0.  By the scaling
  symmetry v_a(r) = a v_1(a^{(p-1)/2} r) a single normalized shot decides
  whether a positive Dirichlet steady state exists on a ball: subcritical
  profiles cross zero (rescaled so the zero lands on the requested radius),
  critical and supercritical ones stay positive forever, which is the
  numerical face of the star-shaped nonexistence result.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import solve_ivp

from .geometry import (
    BALL,
    INTERVAL,
    Geometry,
    integrate,
    laplacian_matrix,
)

HIT_ZERO = "HitZeroAt"
STAYED_POSITIVE = "StayedPositive"
DIVERGED = "Diverged"


class OracleError(RuntimeError):
    """Oracle failed to produce a usable answer."""


@dataclass(frozen=True)
class RadialProfile:
    """Shot solution of v'' + (n-1)/r v' + v^p = 0 on [0, radii[-1]].

    ``status`` is HitZeroAt (first zero rescaled onto the requested radius),
    StayedPositive (no zero out to the shooting horizon, amplitude decaying)
    or Diverged.  ``derivs`` carries v' on the same dense grid.
    """

    radii: np.ndarray
    values: np.ndarray
    derivs: np.ndarray
    dimension_n: int
    exponent_p: float
    status: str
    zero_radius: float | None = None

    @property
    def hit_zero(self) -> bool:
        return self.status == HIT_ZERO


def principal_eigenpair(
    geom: Geometry,
    tol: float = 1e-12,
    residual_tol: float = 1e-10,
    max_iterations: int = 500,
) -> tuple[float, np.ndarray]:
    """Smallest nonzero eigenpair of -Lap via inverse power iteration.

    For periodic kinds the constant kernel mode is deflated (projected out in
    the weighted inner product) and the solve is shifted to stay nonsingular.
    Iterates until the eigenvalue is stationary to ``tol`` AND the eigenpair
    defect ||(-Lap) phi - mu phi|| drops below ``residual_tol * ||phi||``.
    The eigenfunction is returned with int phi^2 = 1 and positive orientation.
    """
    neg_lap = (-laplacian_matrix(geom)).tocsc()
    w = geom.weights
    shift = 1.0 if geom.periodic else 0.0
    solver = spla.splu(neg_lap + shift * sp.identity(geom.node_count, format="csc"))

    def deflate(v: np.ndarray) -> np.ndarray:
        if geom.periodic:
            v = v - np.dot(w, v) / np.sum(w)
        return v

    rng = np.random.default_rng(1234)
    v = deflate(rng.standard_normal(geom.node_count))
    v /= np.sqrt(integrate(geom, v * v))
    mu_prev = np.inf
    for _ in range(max_iterations):
        v = deflate(solver.solve(v))
        v /= np.sqrt(integrate(geom, v * v))
        act = neg_lap @ v
        mu = float(integrate(geom, v * act))
        defect = act - mu * v
        residual = np.sqrt(integrate(geom, defect * defect))
        if abs(mu - mu_prev) <= tol * abs(mu) and residual <= residual_tol:
            phi = v if v[np.argmax(np.abs(v))] > 0 else -v
            return mu, phi
        mu_prev = mu
    raise OracleError(f"inverse power iteration did not converge in {max_iterations} iterations")


def _shoot_normalized(n: int, p: float, horizon: float, rtol: float):
    """Integrate the alpha=1 profile out to the first zero or the horizon."""
    # series start lifts the (n-1)/r singularity: v = 1 - r^2/(2n) + p r^4/(8n(n+2))
    r0 = 1e-8
    a2 = -1.0 / (2.0 * n)
    a4 = p / (8.0 * n * (n + 2.0))
    y0 = [1.0 + a2 * r0**2 + a4 * r0**4, 2.0 * a2 * r0 + 4.0 * a4 * r0**3]

    def odefun(r, y):
        v, dv = y
        vp = np.sign(v) * np.abs(v) ** p  # odd extension keeps the event crossing smooth
        return [dv, -(n - 1.0) / r * dv - vp]

    def crossing(r, y):
        return y[0]

    crossing.terminal = True
    crossing.direction = -1.0

    sol = solve_ivp(
        odefun,
        (r0, horizon),
        y0,
        method="DOP853",
        rtol=rtol,
        atol=rtol * 1e-2,
        events=crossing,
        dense_output=True,
    )
    return sol, r0, (a2, a4)


def lane_emden_shoot(
    n: int,
    p: float,
    radius: float,
    tol: float = 1e-8,
    horizon: float = 1e3,
    samples: int = 4001,
) -> RadialProfile:
    """Radial profile of Delta v + v^p = 0 with v'(0)=0, zero rescaled to ``radius``."""
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    if p <= 1:
        raise ValueError(f"need p > 1, got {p}")
    if radius <= 0:
        raise ValueError(f"need radius > 0, got {radius}")
    rtol = min(max(tol * 1e-4, 1e-13), 1e-9)
    sol, r0, (a2, a4) = _shoot_normalized(n, p, horizon, rtol)

    if not sol.success and not sol.t_events[0].size:
        return RadialProfile(
            np.array([0.0]), np.array([np.nan]), np.array([np.nan]), n, p, DIVERGED
        )

    def eval_profile(rr: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        rr = np.asarray(rr, dtype=float)
        vals = np.empty_like(rr)
        ders = np.empty_like(rr)
        small = rr < r0
        if np.any(small):
            s = rr[small]
            vals[small] = 1.0 + a2 * s**2 + a4 * s**4
            ders[small] = 2.0 * a2 * s + 4.0 * a4 * s**3
        if np.any(~small):
            y = sol.sol(rr[~small])
            vals[~small] = y[0]
            ders[~small] = y[1]
        return vals, ders

    if sol.t_events[0].size:
        rho0 = float(sol.t_events[0][0])
        # rescale so the zero lands at the requested radius
        alpha = (rho0 / radius) ** (2.0 / (p - 1.0))
        beta = alpha ** ((p - 1.0) / 2.0)  # = rho0 / radius
        radii = np.linspace(0.0, radius, samples)
        vals, ders = eval_profile(beta * radii)
        return RadialProfile(
            radii, alpha * vals, alpha * beta * ders, n, p, HIT_ZERO, zero_radius=radius
        )

    # no zero out to the horizon: confirm the amplitude is decaying.
    # the long span needs a denser grid for quadrature-grade dense output
    samples = max(samples, int(48 * horizon) + 1)
    radii = np.linspace(0.0, horizon, samples)
    vals, ders = eval_profile(radii)
    if np.min(vals) <= 0.0 or not np.all(np.isfinite(vals)):
        return RadialProfile(radii, vals, ders, n, p, DIVERGED)
    tail = vals[int(0.8 * samples) :]
    head = vals[: int(0.2 * samples)]
    if np.max(tail) >= np.max(head):
        return RadialProfile(radii, vals, ders, n, p, DIVERGED)
    return RadialProfile(radii, vals, ders, n, p, STAYED_POSITIVE)


def profile_residual(profile: RadialProfile) -> float:
    """Max defect of the first integral r^{n-1} v'(r) + int_0^r s^{n-1} v^p ds.

    Uses composite Simpson quadrature on the stored dense grid, which is
    independent of the ODE stepper, so this is a genuine cross-check.
    """
    r, v, dv = profile.radii, profile.values, profile.derivs
    n = profile.dimension_n
    f = r ** (n - 1.0) * np.sign(v) * np.abs(v) ** profile.exponent_p
    if len(r) % 2 == 0:
        r, v, dv, f = r[:-1], v[:-1], dv[:-1], f[:-1]
    h = r[1] - r[0]
    # cumulative Simpson over consecutive pairs of panels
    pair = h / 3.0 * (f[:-2:2] + 4.0 * f[1:-1:2] + f[2::2])
    cum = np.concatenate([[0.0], np.cumsum(pair)])
    momentum = (r ** (n - 1.0) * dv)[::2]
    return float(np.max(np.abs(momentum + cum)))


def profile_multiplier(profile: RadialProfile) -> float:
    """The kappa with Delta v + kappa v^p = 0 satisfied by the stored profile.

    Recovered from the full momentum integral kappa = -R^{n-1} v'(R) /
    int_0^R s^{n-1} v^p ds (Simpson on the dense grid); the shooter emits
    kappa = 1 profiles, rescaled copies carry kappa = a^{1-p}.
    """
    r, v, dv = profile.radii, profile.values, profile.derivs
    n, p = profile.dimension_n, profile.exponent_p
    f = r ** (n - 1.0) * np.sign(v) * np.abs(v) ** p
    if len(r) % 2 == 0:
        r, v, dv, f = r[:-1], v[:-1], dv[:-1], f[:-1]
    h = r[1] - r[0]
    total = h / 3.0 * float(np.sum(f[:-2:2] + 4.0 * f[1:-1:2] + f[2::2]))
    if total <= 0:
        raise OracleError("degenerate profile: vanishing momentum integral")
    return float(-(r[-1] ** (n - 1.0)) * dv[-1] / total)


def steady_state_from_profile(
    profile: RadialProfile, geom: Geometry, q: float, refine: bool = True
) -> tuple[np.ndarray, float]:
    """Sample a zero-crossing profile onto ``geom`` and rescale to int u^q = 1.

    Returns (u_inf, lambda_inf) with Lap u_inf + lambda_inf u_inf^p = 0:
    u = c v shifts the profile's own multiplier kappa to lambda = kappa
    c^{-(p-1)}, so the output is invariant under rescaling the profile.
    Sampling uses the cubic Hermite interpolant of the stored dense (v, v')
    data; linear interpolation kinks would pollute the discrete Laplacian.

    With ``refine`` the sampled pair is polished by Newton iteration into the
    steady state of the *discrete* operator at the target resolution (the
    continuum profile alone carries an O(h^2) stencil defect), making the
    result directly comparable to flow limits at matched resolution.

    Interval geometries take the symmetric profile about the midpoint, so the
    profile zero must sit at L/2 (the inradius); radial geometries need the
    zero at the ball radius.
    """
    if not profile.hit_zero:
        raise OracleError(f"profile status {profile.status} has no Dirichlet steady state")
    if geom.kind == BALL:
        target = geom.extents[0]
        arg = geom.coords
    elif geom.kind == INTERVAL:
        target = geom.extents[0] / 2.0
        arg = np.abs(geom.coords - geom.extents[0] / 2.0)
    else:
        raise OracleError(f"profile sampling supports interval/ball geometries, got {geom.kind}")
    if abs(profile.zero_radius - target) > 1e-9 * max(target, 1.0):
        raise OracleError(
            f"profile zero at {profile.zero_radius:g} does not match geometry radius {target:g}"
        )
    v = profile_interpolant(profile)(arg)
    kappa = profile_multiplier(profile)
    norm = integrate(geom, v**q)
    c = norm ** (-1.0 / q)
    u, lam = c * v, kappa * c ** -(profile.exponent_p - 1.0)
    if refine:
        u, lam = _newton_polish(geom, u, lam, profile.exponent_p, q)
    return u, lam


def _newton_polish(
    geom: Geometry,
    u: np.ndarray,
    lam: float,
    p: float,
    q: float,
    max_iterations: int = 15,
    tol: float = 1e-12,
) -> tuple[np.ndarray, float]:
    """Newton solve of (Lap u + lam u^p = 0, int u^q = 1) from a close start."""
    lap = laplacian_matrix(geom).tocsc()
    w = geom.weights
    for _ in range(max_iterations):
        up = u**p
        f_pde = lap @ u + lam * up
        f_norm = float(np.dot(w, u**q)) - 1.0
        scale = np.sqrt(integrate(geom, u * u))
        residual = np.sqrt(integrate(geom, f_pde * f_pde)) / scale + abs(f_norm)
        if residual < tol:
            break
        jac = sp.bmat(
            [
                [lap + lam * p * sp.diags(u ** (p - 1.0)), up.reshape(-1, 1)],
                [(q * w * u ** (q - 1.0)).reshape(1, -1), None],
            ],
            format="csc",
        )
        delta = spla.spsolve(jac, -np.concatenate([f_pde, [f_norm]]))
        u = u + delta[:-1]
        lam = float(lam + delta[-1])
        if np.min(u) <= 0 or not np.all(np.isfinite(u)):
            raise OracleError("Newton refinement left the positive cone")
    return u, lam


def profile_interpolant(profile: RadialProfile):
    """Cubic Hermite evaluator of the dense (radii, values, derivs) data."""
    from scipy.interpolate import CubicHermiteSpline

    return CubicHermiteSpline(profile.radii, profile.values, profile.derivs)
