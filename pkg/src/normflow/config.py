"""Experiment configuration: a small key = value format with sections.

Grammar (one statement per line)::

    # comment                     blank lines and '#' comments are skipped
    [section]                     one of: flow, geometry, initial, solver, output
    key = value                   keys belong to the enclosing section

Sections and keys (defaults in parentheses):

    [flow]      variant = A|B|C          flow selection (required)
                p = <float>              nonlinearity exponent (required)
                subcritical_override = true|false   (false; flow C only)
    [geometry]  kind = interval|circle|rectangle|torus|ball   (required)
                extent = <float>         length / radius (required)
                extent_y = <float>       second side for rectangle/torus (= extent)
                resolution = <int>       cells per axis (required, >= 3)
                dimension = <int>        ambient n (kind default: 1/1/2/2/3)
    [initial]   preset = constant_plus_sine|parabola|gaussian_bump|file:<path>
                amplitude = <float>      (0.3)   constant_plus_sine
                mode = <int>             (1)     constant_plus_sine
                width = <float>          (0.1)   gaussian_bump
                center = <float>         (0.0)   gaussian_bump (1D offset)
                noise = <float>          (0.0)   multiplicative seeded perturbation
                seed = <int>             (0)
    [solver]    scheme = imex_cn|explicit_euler    (imex_cn)
                dt_initial (1e-4), dt_min (1e-10), dt_max (1e-2), t_max (50)
                blowup_umax_factor (100), steady_residual_tol (1e-8)
                positivity_floor (1e-12), record_every (10)
    [output]    directory = <path>       (experiment name under NORMFLOW_OUT or cwd)
                snapshot_every = <int>   (0: endpoints only) snapshots per N records
                diagnostics = auto | comma list of name[:tol]   (auto)
                expected_status = any|converged|blowup|horizon  (any)

Parsing validates everything it can and reports all errors at once with line
numbers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .flows import FlowSpec, FlowSpecError
from .geometry import (
    BALL,
    CIRCLE,
    INTERVAL,
    RECTANGLE,
    TORUS,
    Geometry,
    GeometryError,
    build_geometry,
)
from .integrator import EXPLICIT_EULER, IMEX_CN, SolverConfig

KIND_ALIASES = {
    "interval": INTERVAL,
    "circle": CIRCLE,
    "rectangle": RECTANGLE,
    "torus": TORUS,
    "ball": BALL,
    INTERVAL.lower(): INTERVAL,
    CIRCLE.lower(): CIRCLE,
    RECTANGLE.lower(): RECTANGLE,
    TORUS.lower(): TORUS,
    BALL.lower(): BALL,
}

DEFAULT_DIMENSION = {INTERVAL: 1, CIRCLE: 1, RECTANGLE: 2, TORUS: 2, BALL: 3}

SCHEME_ALIASES = {
    "imex_cn": IMEX_CN,
    "imex-cn": IMEX_CN,
    "cn": IMEX_CN,
    "explicit_euler": EXPLICIT_EULER,
    "euler": EXPLICIT_EULER,
}

PRESETS = ("constant_plus_sine", "parabola", "gaussian_bump")

CHECK_NAMES = (
    "lambda_monotone",
    "harnack",
    "growth_bound",
    "lambda_integrable",
    "lyapunov",
    "dissipation",
)

EXPECTED_STATUSES = ("any", "converged", "blowup", "horizon")


class ConfigError(ValueError):
    """One or more configuration problems; ``errors`` lists them all."""

    def __init__(self, errors: list[str]):
        self.errors = errors
        super().__init__("\n".join(errors))


@dataclass
class InitialData:
    preset: str
    amplitude: float = 0.3
    mode: int = 1
    width: float = 0.1
    center: float = 0.0
    noise: float = 0.0
    seed: int = 0
    path: str | None = None


@dataclass
class ExperimentConfig:
    name: str
    flow: FlowSpec
    geometry: Geometry
    initial: InitialData
    solver: SolverConfig
    output_directory: str | None = None
    snapshot_every: int = 0
    diagnostics: dict[str, float | None] | None = None  # None means "auto"
    expected_status: str = "any"
    raw: dict = field(default_factory=dict)


def _parse_lines(text: str) -> tuple[dict[str, dict[str, tuple[str, int]]], list[str]]:
    sections: dict[str, dict[str, tuple[str, int]]] = {}
    errors: list[str] = []
    current: str | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip().lower()
            if current not in ("flow", "geometry", "initial", "solver", "output"):
                errors.append(f"line {lineno}: unknown section [{current}]")
                current = None
            else:
                sections.setdefault(current, {})
            continue
        if "=" not in line:
            errors.append(f"line {lineno}: expected 'key = value', got {line!r}")
            continue
        if current is None:
            errors.append(f"line {lineno}: key outside of any [section]")
            continue
        key, value = (part.strip() for part in line.split("=", 1))
        if key in sections[current]:
            errors.append(f"line {lineno}: duplicate key {key!r} in [{current}]")
            continue
        sections[current][key.lower()] = (value, lineno)
    return sections, errors


class _SectionReader:
    def __init__(self, name: str, data: dict[str, tuple[str, int]], errors: list[str]):
        self.name = name
        self.data = dict(data)
        self.errors = errors

    def take(self, key: str, kind: str, default=None, required: bool = False):
        if key not in self.data:
            if required:
                self.errors.append(f"[{self.name}] missing required key {key!r}")
            return default
        value, lineno = self.data.pop(key)
        try:
            if kind == "float":
                return float(value)
            if kind == "int":
                parsed = float(value)
                if parsed != int(parsed):
                    raise ValueError
                return int(parsed)
            if kind == "bool":
                low = value.lower()
                if low in ("true", "yes", "1", "on"):
                    return True
                if low in ("false", "no", "0", "off"):
                    return False
                raise ValueError
            return value
        except ValueError:
            self.errors.append(f"line {lineno}: [{self.name}] {key} expects a {kind}, got {value!r}")
            return default

    def leftovers(self) -> None:
        for key, (_, lineno) in self.data.items():
            self.errors.append(f"line {lineno}: unknown key {key!r} in [{self.name}]")


def _parse_diagnostics(value: str, errors: list[str]) -> dict[str, float | None] | None:
    if value.strip().lower() == "auto":
        return None
    toggles: dict[str, float | None] = {}
    for item in value.split(","):
        item = item.strip()
        if not item:
            continue
        name, _, tol = item.partition(":")
        name = name.strip()
        if name not in CHECK_NAMES:
            errors.append(f"[output] diagnostics: unknown check {name!r} "
                          f"(known: {', '.join(CHECK_NAMES)})")
            continue
        if tol:
            try:
                toggles[name] = float(tol)
            except ValueError:
                errors.append(f"[output] diagnostics: bad tolerance for {name}: {tol!r}")
        else:
            toggles[name] = None
    return toggles


def parse_config(text: str, name: str = "experiment") -> ExperimentConfig:
    """Parse and validate an experiment config; raises ConfigError with all problems."""
    sections, errors = _parse_lines(text)

    flow_sec = _SectionReader("flow", sections.get("flow", {}), errors)
    variant = flow_sec.take("variant", "str", required=True)
    p = flow_sec.take("p", "float", required=True)
    override = flow_sec.take("subcritical_override", "bool", default=False)
    flow_sec.leftovers()

    geom_sec = _SectionReader("geometry", sections.get("geometry", {}), errors)
    kind_raw = geom_sec.take("kind", "str", required=True)
    extent = geom_sec.take("extent", "float", required=True)
    extent_y = geom_sec.take("extent_y", "float")
    resolution = geom_sec.take("resolution", "int", required=True)
    dimension = geom_sec.take("dimension", "int")
    geom_sec.leftovers()

    init_sec = _SectionReader("initial", sections.get("initial", {}), errors)
    preset_raw = init_sec.take("preset", "str", required=True)
    initial = InitialData(
        preset="",
        amplitude=init_sec.take("amplitude", "float", default=0.3),
        mode=init_sec.take("mode", "int", default=1),
        width=init_sec.take("width", "float", default=0.1),
        center=init_sec.take("center", "float", default=0.0),
        noise=init_sec.take("noise", "float", default=0.0),
        seed=init_sec.take("seed", "int", default=0),
    )
    init_sec.leftovers()
    if preset_raw is not None:
        if preset_raw.startswith("file:"):
            initial.preset = "file"
            initial.path = preset_raw[len("file:"):].strip()
            if not initial.path:
                errors.append("[initial] preset file: needs a path, e.g. file:data.csv")
        elif preset_raw in PRESETS:
            initial.preset = preset_raw
        else:
            errors.append(
                f"[initial] unknown preset {preset_raw!r} "
                f"(known: {', '.join(PRESETS)}, file:<path>)"
            )

    solver_sec = _SectionReader("solver", sections.get("solver", {}), errors)
    scheme_raw = solver_sec.take("scheme", "str", default="imex_cn")
    solver_kwargs = {
        "dt_initial": solver_sec.take("dt_initial", "float", default=1e-4),
        "dt_min": solver_sec.take("dt_min", "float", default=1e-10),
        "dt_max": solver_sec.take("dt_max", "float", default=1e-2),
        "t_max": solver_sec.take("t_max", "float", default=50.0),
        "blowup_umax_factor": solver_sec.take("blowup_umax_factor", "float", default=100.0),
        "steady_residual_tol": solver_sec.take("steady_residual_tol", "float", default=1e-8),
        "positivity_floor": solver_sec.take("positivity_floor", "float", default=1e-12),
        "record_every": solver_sec.take("record_every", "int", default=10),
    }
    solver_sec.leftovers()

    out_sec = _SectionReader("output", sections.get("output", {}), errors)
    out_dir = out_sec.take("directory", "str")
    snapshot_every = out_sec.take("snapshot_every", "int", default=0)
    diag_raw = out_sec.take("diagnostics", "str", default="auto")
    expected = out_sec.take("expected_status", "str", default="any")
    out_sec.leftovers()
    if expected not in EXPECTED_STATUSES:
        errors.append(f"[output] expected_status must be one of {EXPECTED_STATUSES}, got {expected!r}")
    diagnostics = _parse_diagnostics(diag_raw, errors) if diag_raw else None

    # cross-field construction; every failure becomes a reported error
    kind = None
    if kind_raw is not None:
        kind = KIND_ALIASES.get(kind_raw.strip().lower())
        if kind is None:
            errors.append(f"[geometry] unknown kind {kind_raw!r}")
    dim = dimension
    if kind is not None and dim is None:
        dim = DEFAULT_DIMENSION[kind]

    geometry = None
    if kind is not None and extent is not None and resolution is not None and dim is not None:
        extents = (extent, extent_y if extent_y is not None else extent) \
            if kind in (RECTANGLE, TORUS) else extent
        try:
            geometry = build_geometry(kind, extents, dim, resolution)
        except GeometryError as exc:
            errors.append(f"[geometry] {exc}")

    flow = None
    if variant is not None and p is not None and dim is not None:
        try:
            flow = FlowSpec(variant=variant.strip().upper(), p=p, n=dim,
                            subcritical_override=bool(override))
        except FlowSpecError as exc:
            errors.append(f"[flow] {exc}")

    scheme = SCHEME_ALIASES.get(scheme_raw.strip().lower()) if scheme_raw else None
    if scheme is None:
        errors.append(f"[solver] unknown scheme {scheme_raw!r} "
                      f"(known: {', '.join(sorted(SCHEME_ALIASES))})")
    solver = None
    if scheme is not None and all(v is not None for v in solver_kwargs.values()):
        try:
            solver = SolverConfig(scheme=scheme, **solver_kwargs)
        except ValueError as exc:
            errors.append(f"[solver] {exc}")

    if flow is not None and geometry is not None:
        from .flows import validate_pairing

        try:
            validate_pairing(flow, geometry)
        except FlowSpecError as exc:
            errors.append(f"[flow] {exc}")

    if errors:
        raise ConfigError(errors)
    assert flow is not None and geometry is not None and solver is not None
    return ExperimentConfig(
        name=name,
        flow=flow,
        geometry=geometry,
        initial=initial,
        solver=solver,
        output_directory=out_dir,
        snapshot_every=snapshot_every,
        diagnostics=diagnostics,
        expected_status=expected,
        raw={sec: {k: v[0] for k, v in body.items()} for sec, body in sections.items()},
    )


def parse_config_file(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    return parse_config(path.read_text(), name=path.stem)


def initial_field(config: ExperimentConfig) -> np.ndarray:
    """Materialize the configured initial data on the configured geometry."""
    geom = config.geometry
    init = config.initial
    if init.preset == "file":
        data = np.loadtxt(init.path, delimiter=",", skiprows=1, ndmin=2)
        values = data[:, -1]
        if len(values) != geom.node_count:
            raise ConfigError(
                [f"[initial] file {init.path}: {len(values)} values for "
                 f"{geom.node_count} nodes"]
            )
        g = values.astype(float)
    elif init.preset == "constant_plus_sine":
        if not geom.periodic:
            raise ConfigError(["[initial] constant_plus_sine needs a periodic geometry"])
        if geom.kind == CIRCLE:
            theta = 2.0 * np.pi * geom.coords / geom.extents[0]
            g = 1.0 + init.amplitude * np.sin(init.mode * theta)
        else:
            tx = 2.0 * np.pi * geom.coords[:, 0] / geom.extents[0]
            ty = 2.0 * np.pi * geom.coords[:, 1] / geom.extents[1]
            g = 1.0 + init.amplitude * np.sin(init.mode * tx) * np.sin(init.mode * ty)
        if np.min(g) <= 0:
            raise ConfigError(["[initial] constant_plus_sine amplitude must keep the data positive"])
    elif init.preset == "parabola":
        if geom.kind == INTERVAL:
            x, length = geom.coords, geom.extents[0]
            g = x * (length - x)
        elif geom.kind == RECTANGLE:
            x, y = geom.coords[:, 0], geom.coords[:, 1]
            lx, ly = geom.extents
            g = x * (lx - x) * y * (ly - y)
        elif geom.kind == BALL:
            g = geom.extents[0] ** 2 - geom.coords**2
        else:
            raise ConfigError(["[initial] parabola needs a Dirichlet geometry"])
    elif init.preset == "gaussian_bump":
        if geom.kind == BALL:
            g = np.exp(-(geom.coords**2) / (2.0 * init.width**2))
        elif geom.kind == INTERVAL:
            center = init.center if init.center else geom.extents[0] / 2.0
            g = np.exp(-((geom.coords - center) ** 2) / (2.0 * init.width**2))
        elif geom.kind == RECTANGLE:
            cx = init.center if init.center else geom.extents[0] / 2.0
            cy = init.center if init.center else geom.extents[1] / 2.0
            d2 = (geom.coords[:, 0] - cx) ** 2 + (geom.coords[:, 1] - cy) ** 2
            g = np.exp(-d2 / (2.0 * init.width**2))
        else:
            d2 = (geom.coords - init.center) ** 2 if geom.coords.ndim == 1 else \
                np.sum((geom.coords - init.center) ** 2, axis=1)
            g = np.exp(-d2 / (2.0 * init.width**2))
    else:
        raise ConfigError([f"[initial] unsupported preset {init.preset!r}"])
    if init.noise:
        rng = np.random.default_rng(init.seed)
        g = g * (1.0 + init.noise * rng.uniform(-1.0, 1.0, size=geom.node_count))
    return g
