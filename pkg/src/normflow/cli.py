"""Command-line front end.

Subcommands::

    normflow run <config.cfg> [-o DIR]     run one experiment
    normflow suite <dir> [-o ROOT] [-j N]  run every *.cfg in a directory
    normflow shoot --n N --p P --R R       radial steady-state shooting oracle
    normflow eig --kind K --extent L --resolution N   principal eigenpair

The default output root is $NORMFLOW_OUT (falling back to ./normflow_out).
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import oracles
from .config import KIND_ALIASES, ConfigError, parse_config_file
from .geometry import build_geometry
from .runner import default_output_root, run_experiment, run_suite


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="normflow",
                                     description="norm-preserving non-local heat flow lab")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a single experiment config")
    p_run.add_argument("config", help="path to a .cfg experiment file")
    p_run.add_argument("-o", "--out", default=None, help="output directory")

    p_suite = sub.add_parser("suite", help="run every *.cfg in a directory")
    p_suite.add_argument("directory", help="directory of .cfg files")
    p_suite.add_argument("-o", "--out", default=None, help="output root")
    p_suite.add_argument("-j", "--jobs", type=int, default=1,
                         help="concurrent experiments (default 1)")

    p_shoot = sub.add_parser("shoot", help="Lane-Emden shooting oracle")
    p_shoot.add_argument("--n", type=int, required=True, help="ambient dimension")
    p_shoot.add_argument("--p", type=float, required=True, help="nonlinearity exponent")
    p_shoot.add_argument("--R", type=float, required=True, help="ball radius")
    p_shoot.add_argument("--tol", type=float, default=1e-8)
    p_shoot.add_argument("--out", default=None, help="write the profile as r,u CSV")

    p_eig = sub.add_parser("eig", help="principal eigenpair of the discrete Laplacian")
    p_eig.add_argument("--kind", required=True, help="interval|circle|rectangle|torus|ball")
    p_eig.add_argument("--extent", type=float, required=True)
    p_eig.add_argument("--extent-y", type=float, default=None)
    p_eig.add_argument("--resolution", type=int, required=True)
    p_eig.add_argument("--dimension", type=int, default=None)
    p_eig.add_argument("--out", default=None, help="write the eigenfunction as CSV")
    return parser


def _cmd_run(args: argparse.Namespace) -> int:
    try:
        config = parse_config_file(args.config)
    except ConfigError as exc:
        print("normflow: invalid config:")
        for err in exc.errors:
            print(f"  {err}")
        return 1
    except OSError as exc:
        print(f"normflow: cannot read config: {exc}")
        return 1
    out = args.out or config.output_directory or str(default_output_root() / config.name)
    code = run_experiment(config, out)
    print(f"{config.name}: exit {code} (outputs in {out})")
    return code


def _cmd_suite(args: argparse.Namespace) -> int:
    out = args.out or str(default_output_root())
    return run_suite(args.directory, out, jobs=args.jobs)


def _cmd_shoot(args: argparse.Namespace) -> int:
    profile = oracles.lane_emden_shoot(args.n, args.p, args.R, tol=args.tol)
    if profile.status == oracles.HIT_ZERO:
        print(f"HitZeroAt({profile.zero_radius:g}): positive Dirichlet steady state exists")
    elif profile.status == oracles.STAYED_POSITIVE:
        print("StayedPositive: no zero crossing out to the horizon "
              "(no positive Dirichlet steady state on any ball)")
    else:
        print("Diverged: the shot did not produce a usable profile")
    if args.out and profile.status != oracles.DIVERGED:
        lines = ["r,u"]
        for r, v in zip(profile.radii, profile.values):
            lines.append(f"{float(r)!r},{float(v)!r}")
        with open(args.out, "w") as fh:
            fh.write("\n".join(lines) + "\n")
        print(f"profile written to {args.out}")
    return 0 if profile.status != oracles.DIVERGED else 1


def _cmd_eig(args: argparse.Namespace) -> int:
    kind = KIND_ALIASES.get(args.kind.strip().lower())
    if kind is None:
        print(f"normflow: unknown geometry kind {args.kind!r}")
        return 1
    from .config import DEFAULT_DIMENSION

    dim = args.dimension if args.dimension is not None else DEFAULT_DIMENSION[kind]
    extents = (args.extent, args.extent_y) if args.extent_y is not None else args.extent
    geom = build_geometry(kind, extents, dim, args.resolution)
    mu1, phi = oracles.principal_eigenpair(geom)
    print(f"mu1 = {mu1!r}  (nodes: {geom.node_count})")
    if args.out:
        lines = ["x,u"]
        coords = geom.coords if geom.coords.ndim == 1 else geom.coords[:, 0]
        for x, v in zip(np.atleast_1d(coords), phi):
            lines.append(f"{float(x)!r},{float(v)!r}")
        with open(args.out, "w") as fh:
            fh.write("\n".join(lines) + "\n")
        print(f"eigenfunction written to {args.out}")
    return 0


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "run":
        return _cmd_run(args)
    if args.command == "suite":
        return _cmd_suite(args)
    if args.command == "shoot":
        return _cmd_shoot(args)
    if args.command == "eig":
        return _cmd_eig(args)
    return 2


if __name__ == "__main__":
    sys.exit(main())
