"""normflow: a numerical lab for L^q norm-preserving non-local heat flows."""

from .geometry import (
    BALL,
    CIRCLE,
    INTERVAL,
    RECTANGLE,
    TORUS,
    Geometry,
    build_geometry,
    dirichlet_energy,
    integrate,
    laplacian_apply,
    weighted_gradient_energy,
)
from .flows import FlowSpec, conserved_norm, lambda_value, normalize, rhs
from .integrator import (
    BLOW_UP,
    CONVERGED,
    EXPLICIT_EULER,
    HORIZON_REACHED,
    IMEX_CN,
    POSITIVITY_LOST,
    RunOutcome,
    SolverConfig,
    Trace,
    detect_blowup,
    project,
    run,
    step,
)
from .oracles import (
    RadialProfile,
    lane_emden_shoot,
    principal_eigenpair,
    steady_state_from_profile,
)

__version__ = "0.1.0"

__all__ = [
    "BALL", "CIRCLE", "INTERVAL", "RECTANGLE", "TORUS",
    "Geometry", "build_geometry", "dirichlet_energy", "integrate",
    "laplacian_apply", "weighted_gradient_energy",
    "FlowSpec", "conserved_norm", "lambda_value", "normalize", "rhs",
    "BLOW_UP", "CONVERGED", "EXPLICIT_EULER", "HORIZON_REACHED", "IMEX_CN",
    "POSITIVITY_LOST", "RunOutcome", "SolverConfig", "Trace",
    "detect_blowup", "project", "run", "step",
    "RadialProfile", "lane_emden_shoot", "principal_eigenpair",
    "steady_state_from_profile",
    "__version__",
]
