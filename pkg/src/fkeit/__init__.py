"""Monte Carlo forward solver for the conductivity equation ``∇·(κ∇u) = 0``.

Reflected diffusions with boundary local time give Feynman-Kac estimators
for Dirichlet, Neumann (continuum) and electrode-model (Robin) boundary
conditions; the boundary trace process gives the Dirichlet-to-Neumann map.
"""

__version__ = "0.1.0"

from .boundary_data import BoundaryFunction
from .boundary_process import (
    BoundaryTrace,
    DtnEstimate,
    JumpKernelEstimate,
    drift_field,
    estimate_dtn,
    inverse_local_time,
    jump_statistics,
    trace_path,
)
from .conductivity import ConductivityField
from .errors import FKEITError
from .feynman_kac import NeumannData, RobinData, martingale_residual, solve_cem, solve_continuum, solve_dirichlet
from .geometry import BoundaryPoint, ConvexPolygon, Disk, ElectrodeConfig, Rectangle
from .pde_oracle import FourierBoundaryData, GridSolution, disk_dtn, disk_neumann_analytic, fd_solve, spectral_gap
from .reflecting_sde import LocalTimeLedger, PathState, SimulationParams, first_exit, simulate_path, step
from .stats import EstimatorResult

__all__ = [
    "BoundaryFunction", "BoundaryPoint", "BoundaryTrace", "ConductivityField", "ConvexPolygon", "Disk",
    "DtnEstimate", "ElectrodeConfig", "EstimatorResult", "FKEITError", "FourierBoundaryData", "GridSolution",
    "JumpKernelEstimate", "LocalTimeLedger", "NeumannData", "PathState", "Rectangle", "RobinData",
    "SimulationParams", "disk_dtn", "disk_neumann_analytic", "drift_field", "estimate_dtn", "fd_solve",
    "first_exit", "inverse_local_time", "jump_statistics", "martingale_residual", "simulate_path",
    "solve_cem", "solve_continuum", "solve_dirichlet", "spectral_gap", "step", "trace_path",
]
