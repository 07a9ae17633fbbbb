"""degwave: controllability toolkit for the 1D degenerate wave equation.

Computes distributed HUM null controls on the boundary strip (1-eps, 1),
estimates observability constants and their eps^{-3} scaling, and passes
to the limit from internal controls to the boundary control at x=1.
"""

from .discretization import (
    DegenerateOperator,
    Regime,
    SpatialGrid,
    build_operator,
    minimal_time,
    regime_for_alpha,
)
from .solver import (
    BoundaryDirichlet,
    ControlWindow,
    DistributedSource,
    StatePair,
    Trajectory,
    boundary_trace,
    energy,
    solve_backward,
    solve_forward,
)
from .hum import solve_hum_boundary, solve_hum_distributed
from .limits import extract_boundary_control, run_limit_sweep
from .observability import (
    Method,
    epsilon_sweep,
    observability_constant_boundary,
    observability_constant_distributed,
    resolution_sweep,
    time_sweep,
)
from .stepping import KERNEL

__version__ = "0.1.0"

__all__ = [
    "BoundaryDirichlet", "ControlWindow", "DegenerateOperator",
    "DistributedSource", "KERNEL", "Method", "Regime", "SpatialGrid",
    "StatePair", "Trajectory", "boundary_trace", "build_operator", "energy",
    "epsilon_sweep", "extract_boundary_control", "minimal_time",
    "observability_constant_boundary", "observability_constant_distributed",
    "regime_for_alpha", "resolution_sweep", "run_limit_sweep",
    "solve_backward", "solve_forward", "solve_hum_boundary",
    "solve_hum_distributed", "time_sweep",
]
