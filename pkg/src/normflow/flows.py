"""The three norm-preserving non-local flows.

Each flow advances ``u`` by a heat-type equation whose scalar multiplier
``lambda(t)`` is the unique choice keeping a prescribed integral norm

    flow A:  u^{p-2} u_t = Lap u + lambda u^{p-1},   conserves int u^p    (q = p)
    flow B:  u_t        = Lap u + lambda u^p,        conserves int u^2    (q = 2)
    flow C:  u_t        = Lap u + lambda u^p,        conserves int u^{p+1} (q = p+1)

constant along the evolution.  Flow A lives on closed (periodic) model
geometries; flows B and C on Dirichlet domains.  All operations are pure.

The multipliers are evaluated with the same summation-by-parts quadrature as
the Laplacian, so the discrete rate of change of the conserved norm vanishes
to rounding (not merely to O(h^2)); the integrator's projection then only has
to remove the O(dt^2) drift of time stepping.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import (
    DIRICHLET_KINDS,
    PERIODIC_KINDS,
    Geometry,
    check_field,
    dirichlet_energy,
    integrate,
    laplacian_apply,
)

VARIANT_A = "A"
VARIANT_B = "B"
VARIANT_C = "C"
VARIANTS = (VARIANT_A, VARIANT_B, VARIANT_C)


class FlowSpecError(ValueError):
    """Flow parameters violate the admissibility constraints."""


class NonPositiveFieldError(ValueError):
    """Operation requires a (strictly) positive field."""


class DegenerateFieldError(ValueError):
    """Field is too close to zero for the requested functional."""


def critical_exponent(n: int) -> float:
    """Sobolev-critical power (n+2)/(n-2); infinite below dimension 3."""
    return (n + 2.0) / (n - 2.0) if n >= 3 else np.inf


@dataclass(frozen=True)
class FlowSpec:
    """Which flow to run, with exponents validated on construction.

    ``subcritical_override`` lets flow C run with p below the critical power
    (used for the contrast experiments against the blow-up regime).
    """

    variant: str
    p: float
    n: int
    subcritical_override: bool = False

    def __post_init__(self) -> None:
        if self.variant not in VARIANTS:
            raise FlowSpecError(f"unknown flow variant {self.variant!r}")
        if self.n < 1:
            raise FlowSpecError(f"ambient dimension must be >= 1, got {self.n}")
        p, pc = self.p, critical_exponent(self.n)
        if self.variant == VARIANT_A:
            if p <= 1:
                raise FlowSpecError(f"flow A needs p > 1, got p={p}")
        elif self.variant == VARIANT_B:
            # p = 1 is the linear Caffarelli-Lin flow; admitted for oracles.
            if p < 1:
                raise FlowSpecError(f"flow B needs p >= 1, got p={p}")
            if p >= pc:
                raise FlowSpecError(
                    f"flow B needs subcritical p < (n+2)/(n-2) = {pc:g} for n={self.n}, got p={p}"
                )
        else:
            if p <= 1:
                raise FlowSpecError(f"flow C needs p > 1, got p={p}")
            if p < pc and not self.subcritical_override:
                raise FlowSpecError(
                    f"flow C needs p >= (n+2)/(n-2) = {pc:g} for n={self.n} "
                    f"(got p={p}); pass subcritical_override=True for contrast runs"
                )

    @property
    def q(self) -> float:
        """Conserved norm exponent: int u^q is held at 1."""
        if self.variant == VARIANT_A:
            return self.p
        if self.variant == VARIANT_B:
            return 2.0
        return self.p + 1.0


def validate_pairing(spec: FlowSpec, geom: Geometry) -> None:
    """Flow A runs on closed (periodic) models, B/C on Dirichlet domains."""
    if spec.variant == VARIANT_A and geom.kind not in PERIODIC_KINDS:
        raise FlowSpecError(f"flow A requires a periodic geometry, got {geom.kind}")
    if spec.variant in (VARIANT_B, VARIANT_C) and geom.kind not in DIRICHLET_KINDS:
        raise FlowSpecError(f"flow {spec.variant} requires a Dirichlet geometry, got {geom.kind}")
    if spec.n != geom.dimension_n:
        raise FlowSpecError(
            f"flow spec dimension n={spec.n} does not match geometry n={geom.dimension_n}"
        )


def _require_positive(u: np.ndarray, strict: bool) -> None:
    lo = float(np.min(u))
    if strict and lo <= 0.0:
        raise NonPositiveFieldError(f"field must be strictly positive (min = {lo:g})")
    if not strict and lo < 0.0:
        raise NonPositiveFieldError(f"field must be nonnegative (min = {lo:g})")


def lambda_value(spec: FlowSpec, geom: Geometry, u: np.ndarray) -> float:
    """The norm-preserving multiplier for the current state.

    A: dirichlet_energy(u) (initial data is always normalized to int u^p = 1);
    B: dirichlet_energy(u) / int u^{p+1};
    C: -int u^p Lap u / int u^{2p}, the conservative discrete form of
       p * int u^{p-1}|grad u|^2 / int u^{2p} (exact norm preservation).
    """
    u = check_field(geom, u)
    _require_positive(u, strict=spec.variant == VARIANT_A)
    if spec.variant == VARIANT_A:
        return dirichlet_energy(geom, u)
    if spec.variant == VARIANT_B:
        denom = integrate(geom, u ** (spec.p + 1.0))
        if not denom > 1e-300:
            raise DegenerateFieldError("flow B multiplier: int u^{p+1} vanished")
        return dirichlet_energy(geom, u) / denom
    denom = integrate(geom, u ** (2.0 * spec.p))
    if not denom > 1e-300:
        raise DegenerateFieldError("flow C multiplier: int u^{2p} vanished")
    return -integrate(geom, u**spec.p * laplacian_apply(geom, u)) / denom


def rhs(spec: FlowSpec, geom: Geometry, u: np.ndarray, lam: float) -> np.ndarray:
    """Time derivative field: the flow equation solved for u_t."""
    u = check_field(geom, u)
    _require_positive(u, strict=spec.variant == VARIANT_A)
    if spec.variant == VARIANT_A:
        return u ** (2.0 - spec.p) * (laplacian_apply(geom, u) + lam * u ** (spec.p - 1.0))
    return laplacian_apply(geom, u) + lam * u**spec.p


def conserved_norm(spec: FlowSpec, geom: Geometry, u: np.ndarray) -> float:
    """int u^q for the flow's conserved exponent q."""
    u = check_field(geom, u)
    with np.errstate(invalid="ignore"):
        return integrate(geom, u**spec.q)


def normalize(spec: FlowSpec, geom: Geometry, u: np.ndarray) -> np.ndarray:
    """Rescale so the conserved norm equals one: u / (int u^q)^{1/q}."""
    u = check_field(geom, u)
    _require_positive(u, strict=False)
    norm = conserved_norm(spec, geom, u)
    if not np.isfinite(norm) or norm <= 0.0:
        raise DegenerateFieldError(f"cannot normalize field with int u^q = {norm:g}")
    return u / norm ** (1.0 / spec.q)
