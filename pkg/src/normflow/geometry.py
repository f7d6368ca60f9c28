"""Discretized model domains with summation-by-parts Laplacians.

Five kinds of domain are supported, all on uniform grids:

* ``IntervalDirichlet`` -- (0, L) with zero boundary values; vertex-centered
  interior nodes ``x_i = i*h``.
* ``Circle`` -- periodic interval of length L, nodes ``x_i = i*h``.
* ``RectangleDirichlet`` -- (0, Lx) x (0, Ly), vertex-centered interior grid.
* ``Torus2D`` -- doubly periodic rectangle.
* ``RadialBallDirichlet`` -- radially symmetric ball of radius R in ambient
  dimension n, cell-centered nodes ``r_i = (i + 1/2)*h`` so the 1/r origin
  singularity is never evaluated.  Quadrature weights are the exact shell
  volumes, which makes the finite-volume Laplacian exactly self-adjoint in
  the weighted inner product and second-order consistent at the origin.

Fields are plain float arrays with one entry per stored node (interior nodes
for Dirichlet kinds).  For every kind the identity

    integrate(u * laplacian_apply(v)) == integrate(v * laplacian_apply(u))

holds to machine precision, so the discrete Dirichlet energy defined as
``-integrate(u * laplacian_apply(u))`` mirrors the continuous integration by
parts exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import gamma, pi

import numpy as np
import scipy.sparse as sp

INTERVAL = "IntervalDirichlet"
CIRCLE = "Circle"
RECTANGLE = "RectangleDirichlet"
TORUS = "Torus2D"
BALL = "RadialBallDirichlet"

KINDS = (INTERVAL, CIRCLE, RECTANGLE, TORUS, BALL)
PERIODIC_KINDS = (CIRCLE, TORUS)
DIRICHLET_KINDS = (INTERVAL, RECTANGLE, BALL)


class GeometryError(ValueError):
    """Invalid geometry construction parameters."""


class GeometryMismatchError(ValueError):
    """Field does not live on the given geometry."""


def unit_sphere_area(n: int) -> float:
    """Surface area of the unit sphere in R^n (2 for n=1, 2*pi for n=2, ...)."""
    return 2.0 * pi ** (n / 2.0) / gamma(n / 2.0)


@dataclass(frozen=True, eq=False)
class Geometry:
    """Immutable discretized domain; safe to share across threads.

    ``coords`` holds node positions: x for 1D kinds, r for the radial kind,
    and an (node_count, 2) array for 2D kinds.  ``weights`` are the positive
    quadrature weights w_i with sum(w_i) ~ measure.
    """

    kind: str
    extents: tuple[float, ...]
    dimension_n: int
    resolution: int
    node_count: int
    spacing_h: tuple[float, ...]
    coords: np.ndarray
    weights: np.ndarray
    shape: tuple[int, ...]
    # radial bookkeeping (empty arrays for non-radial kinds)
    face_areas: np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def periodic(self) -> bool:
        return self.kind in PERIODIC_KINDS

    @property
    def measure(self) -> float:
        """Continuum measure of the domain (length / area / ball volume)."""
        if self.kind in (INTERVAL, CIRCLE):
            return self.extents[0]
        if self.kind in (RECTANGLE, TORUS):
            return self.extents[0] * self.extents[1]
        n, r = self.dimension_n, self.extents[0]
        return unit_sphere_area(n) * r**n / n

    @property
    def stiffest_diagonal(self) -> float:
        """max_i |(Delta e_i)_i|; 1/this is the explicit Euler stability dt."""
        if self.kind in (INTERVAL, CIRCLE):
            return 2.0 / self.spacing_h[0] ** 2
        if self.kind in (RECTANGLE, TORUS):
            hx, hy = self.spacing_h
            return 2.0 / hx**2 + 2.0 / hy**2
        h = self.spacing_h[0]
        a = self.face_areas
        inner = a[:-1].copy()
        inner[0] = 0.0  # reflection at the origin: no flux through r=0
        outer = a[1:].copy()
        outer[-1] *= 2.0  # Dirichlet ghost doubles the last face coupling
        return float(np.max((inner + outer) / (h * self.weights)))

    def __repr__(self) -> str:  # keep dataclass arrays out of logs
        return (
            f"Geometry({self.kind}, extents={self.extents}, n={self.dimension_n}, "
            f"resolution={self.resolution}, nodes={self.node_count})"
        )


def build_geometry(
    kind: str,
    extents: float | tuple[float, ...],
    dimension_n: int,
    resolution: int,
) -> Geometry:
    """Build a uniform-grid geometry.

    ``resolution`` counts grid cells per axis; Dirichlet kinds store only the
    interior unknowns, periodic kinds store every node.
    """
    if kind not in KINDS:
        raise GeometryError(f"unknown geometry kind {kind!r}")
    if resolution < 3:
        raise GeometryError(f"resolution must be >= 3, got {resolution}")
    ext = tuple(float(e) for e in np.atleast_1d(extents))
    if any(e <= 0 for e in ext):
        raise GeometryError(f"extents must be positive, got {ext}")

    if kind in (INTERVAL, CIRCLE):
        if dimension_n != 1:
            raise GeometryError(f"{kind} requires dimension_n=1, got {dimension_n}")
        if len(ext) != 1:
            raise GeometryError(f"{kind} takes a single length, got {ext}")
        length = ext[0]
        h = length / resolution
        if kind == INTERVAL:
            x = h * np.arange(1, resolution)
            w = np.full(resolution - 1, h)
            return Geometry(kind, ext, 1, resolution, resolution - 1, (h,), x, w, (resolution - 1,))
        x = h * np.arange(resolution)
        w = np.full(resolution, h)
        return Geometry(kind, ext, 1, resolution, resolution, (h,), x, w, (resolution,))

    if kind in (RECTANGLE, TORUS):
        if dimension_n != 2:
            raise GeometryError(f"{kind} requires dimension_n=2, got {dimension_n}")
        if len(ext) == 1:
            ext = (ext[0], ext[0])
        if len(ext) != 2:
            raise GeometryError(f"{kind} takes (Lx, Ly), got {ext}")
        hx, hy = ext[0] / resolution, ext[1] / resolution
        if kind == RECTANGLE:
            m = resolution - 1
            xs = hx * np.arange(1, resolution)
            ys = hy * np.arange(1, resolution)
            gx, gy = np.meshgrid(xs, ys, indexing="ij")
            coords = np.column_stack([gx.ravel(), gy.ravel()])
            w = np.full(m * m, hx * hy)
            return Geometry(kind, ext, 2, resolution, m * m, (hx, hy), coords, w, (m, m))
        m = resolution
        xs = hx * np.arange(m)
        ys = hy * np.arange(m)
        gx, gy = np.meshgrid(xs, ys, indexing="ij")
        coords = np.column_stack([gx.ravel(), gy.ravel()])
        w = np.full(m * m, hx * hy)
        return Geometry(kind, ext, 2, resolution, m * m, (hx, hy), coords, w, (m, m))

    # radial ball
    if dimension_n < 1:
        raise GeometryError(f"{kind} requires dimension_n >= 1, got {dimension_n}")
    if len(ext) != 1:
        raise GeometryError(f"{kind} takes a single radius, got {ext}")
    radius = ext[0]
    h = radius / resolution
    r = (np.arange(resolution) + 0.5) * h
    faces = np.arange(resolution + 1) * h
    omega = unit_sphere_area(dimension_n)
    vols = omega * (faces[1:] ** dimension_n - faces[:-1] ** dimension_n) / dimension_n
    areas = omega * faces ** (dimension_n - 1)
    return Geometry(
        kind, ext, dimension_n, resolution, resolution, (h,), r, vols, (resolution,), areas
    )


def check_field(geom: Geometry, u: np.ndarray) -> np.ndarray:
    """Validate that ``u`` lives on ``geom`` and return it as a float array."""
    u = np.asarray(u, dtype=float)
    if u.shape != (geom.node_count,):
        raise GeometryMismatchError(
            f"field of shape {u.shape} does not fit {geom.kind} with {geom.node_count} nodes"
        )
    return u


def laplacian_apply(geom: Geometry, u: np.ndarray) -> np.ndarray:
    """Second-order discrete Laplacian; Dirichlet kinds use implicit zeros."""
    u = check_field(geom, u)
    if geom.kind == INTERVAL:
        h2 = geom.spacing_h[0] ** 2
        out = -2.0 * u
        out[:-1] += u[1:]
        out[1:] += u[:-1]
        return out / h2
    if geom.kind == CIRCLE:
        h2 = geom.spacing_h[0] ** 2
        return (np.roll(u, -1) - 2.0 * u + np.roll(u, 1)) / h2
    if geom.kind in (RECTANGLE, TORUS):
        hx2, hy2 = geom.spacing_h[0] ** 2, geom.spacing_h[1] ** 2
        g = u.reshape(geom.shape)
        if geom.kind == TORUS:
            gxx = (np.roll(g, -1, 0) - 2.0 * g + np.roll(g, 1, 0)) / hx2
            gyy = (np.roll(g, -1, 1) - 2.0 * g + np.roll(g, 1, 1)) / hy2
        else:
            p = np.pad(g, 1)
            gxx = (p[2:, 1:-1] - 2.0 * g + p[:-2, 1:-1]) / hx2
            gyy = (p[1:-1, 2:] - 2.0 * g + p[1:-1, :-2]) / hy2
        return (gxx + gyy).ravel()
    # radial ball: conservative flux form, antisymmetric ghost at r=R
    h = geom.spacing_h[0]
    a = geom.face_areas
    flux = np.zeros(geom.node_count + 1)
    flux[1:-1] = a[1:-1] * (u[1:] - u[:-1]) / h
    flux[-1] = a[-1] * (-2.0 * u[-1]) / h
    return (flux[1:] - flux[:-1]) / geom.weights


def integrate(geom: Geometry, f: np.ndarray) -> float:
    """Quadrature sum(w_i * f_i) ~ integral of f over the domain."""
    f = check_field(geom, f)
    return float(np.dot(geom.weights, f))


def dirichlet_energy(geom: Geometry, u: np.ndarray) -> float:
    """Discrete int |grad u|^2, evaluated as -integrate(u * Lap u).

    The summation-by-parts structure makes this exactly the quadratic form of
    the (weighted-)symmetric stiffness matrix, hence >= 0 up to rounding.
    """
    u = check_field(geom, u)
    return -integrate(geom, u * laplacian_apply(geom, u))


def weighted_gradient_energy(geom: Geometry, u: np.ndarray, m: float) -> float:
    """Discrete int u^m |grad u|^2 via the power transform.

    Uses int u^m |grad u|^2 = 4/(m+2)^2 * int |grad(u^{(m+2)/2})|^2 so the
    result inherits the summation-by-parts quadrature.  Requires u > 0 unless
    m is an even integer.
    """
    u = check_field(geom, u)
    if m < 0:
        raise ValueError(f"m must be >= 0, got {m}")
    if m == 0:
        return dirichlet_energy(geom, u)
    m_is_even_int = float(m).is_integer() and int(m) % 2 == 0
    if not m_is_even_int and np.min(u) <= 0.0:
        raise ValueError("weighted_gradient_energy needs a positive field for fractional m")
    v = np.abs(u) ** ((m + 2.0) / 2.0) if m_is_even_int else u ** ((m + 2.0) / 2.0)
    return 4.0 / (m + 2.0) ** 2 * dirichlet_energy(geom, v)


def laplacian_matrix(geom: Geometry) -> sp.csr_matrix:
    """Sparse matrix of the discrete Laplacian (same action as laplacian_apply)."""
    if geom.kind == INTERVAL:
        n = geom.node_count
        h2 = geom.spacing_h[0] ** 2
        return sp.diags([1.0, -2.0, 1.0], [-1, 0, 1], shape=(n, n), format="csr") / h2
    if geom.kind == CIRCLE:
        n = geom.node_count
        h2 = geom.spacing_h[0] ** 2
        mat = sp.diags([1.0, -2.0, 1.0], [-1, 0, 1], shape=(n, n), format="lil")
        mat[0, n - 1] += 1.0
        mat[n - 1, 0] += 1.0
        return (mat / h2).tocsr()
    if geom.kind in (RECTANGLE, TORUS):
        m = geom.shape[0]
        hx2, hy2 = geom.spacing_h[0] ** 2, geom.spacing_h[1] ** 2
        if geom.kind == RECTANGLE:
            t = sp.diags([1.0, -2.0, 1.0], [-1, 0, 1], shape=(m, m), format="csr")
            tx, ty = t / hx2, t / hy2
        else:
            t = sp.diags([1.0, -2.0, 1.0], [-1, 0, 1], shape=(m, m), format="lil")
            t[0, m - 1] += 1.0
            t[m - 1, 0] += 1.0
            t = t.tocsr()
            tx, ty = t / hx2, t / hy2
        eye = sp.identity(m, format="csr")
        return (sp.kron(tx, eye) + sp.kron(eye, ty)).tocsr()
    # radial ball
    n = geom.node_count
    h = geom.spacing_h[0]
    a = geom.face_areas
    w = geom.weights
    lower = a[1:n] / (h * w[1:])
    upper = a[1:n] / (h * w[:-1])
    diag = -(a[:n] + a[1 : n + 1]) / (h * w)
    diag[0] = -a[1] / (h * w[0])
    diag[-1] = -(a[n - 1] + 2.0 * a[n]) / (h * w[-1])
    return sp.diags([lower, diag, upper], [-1, 0, 1], format="csr")
