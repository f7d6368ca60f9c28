"""Report generation for normflow experiment outputs."""

from .reporting import ReportBundle, ReportError, render_experiment, render_suite

__all__ = ["ReportBundle", "ReportError", "render_experiment", "render_suite"]
__version__ = "0.1.0"
