"""normflow-report: render figures and HTML from experiment outputs.

Usage::

    normflow-report <directory>

The directory is treated as a suite root when it contains suite_report.json,
otherwise as a single experiment (trace.csv + summary.json).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .reporting import ReportError, render_experiment, render_suite


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="normflow-report",
        description="static report generation for normflow experiment outputs",
    )
    parser.add_argument("directory", help="experiment or suite output directory")
    args = parser.parse_args(argv)
    target = Path(args.directory)
    try:
        if (target / "suite_report.json").is_file():
            index = render_suite(target)
            print(f"suite index written to {index}")
        else:
            bundle = render_experiment(target)
            print(f"report written to {bundle.html_path} "
                  f"({len(bundle.figures)} figures)")
    except ReportError as exc:
        print(f"normflow-report: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
