from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from normflow.integrator import Trace

REPO_ROOT = Path(__file__).resolve().parents[1]
REFERENCE_CONFIGS = REPO_ROOT / "configs" / "reference"


def make_trace(t, variant="A", p=2.0, domain_measure=1.0, **columns) -> Trace:
    """Synthetic trace with unspecified columns filled with benign values."""
    t = np.asarray(t, dtype=float)
    n = len(t)
    defaults = {
        "lam": np.ones(n),
        "norm_q": np.ones(n),
        "umax": np.ones(n),
        "umin": np.ones(n),
        "energy": np.ones(n),
        "bnorm": np.ones(n),
        "dt": np.full(n, t[1] - t[0] if n > 1 else 1.0),
        "dissipation": np.zeros(n),
        "drift": np.zeros(n),
    }
    for key, value in columns.items():
        if key not in defaults:
            raise KeyError(key)
        defaults[key] = np.asarray(value, dtype=float)
    q = {"A": p, "B": 2.0, "C": p + 1.0}[variant]
    return Trace(t=t, variant=variant, p=p, q=q, domain_measure=domain_measure, **defaults)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240817)
