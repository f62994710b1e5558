"""Nonlocal and local Cahn-Hilliard tumour growth models on boxes, with epsilon-sweep tooling."""

from .catalog import CosinePolynomial
from .errors import ConfigError, GridMismatchError, NlocchError, ResolutionError, SolverAbort
from .grid import (
    DualNormWorkspace,
    Field,
    Grid,
    dual_norm,
    inverse_neumann_laplacian,
    laplacian_neumann,
    norm_grad,
    norm_h1,
    norm_l2,
    solve_helmholtz,
)
from .kernel import Kernel, MollifierProfile, build_kernel, build_profile
from .lab import ConvergenceReport, SweepPlan, error_functionals, fit_rate, operator_study, run_sweep
from .nonlocal_operator import NonlocalOperator, build_operator
from .physics import ModelParams, double_well, smooth_interpolation
from .solver_local import LocalState, SolverConfig, run_local, step_local
from .solver_nonlocal import NonlocalState, run_nonlocal, step_nonlocal

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ConvergenceReport",
    "CosinePolynomial",
    "DualNormWorkspace",
    "Field",
    "Grid",
    "GridMismatchError",
    "Kernel",
    "LocalState",
    "ModelParams",
    "MollifierProfile",
    "NlocchError",
    "NonlocalOperator",
    "NonlocalState",
    "ResolutionError",
    "SolverAbort",
    "SolverConfig",
    "SweepPlan",
    "build_kernel",
    "build_operator",
    "build_profile",
    "double_well",
    "dual_norm",
    "error_functionals",
    "fit_rate",
    "inverse_neumann_laplacian",
    "laplacian_neumann",
    "norm_grad",
    "norm_h1",
    "norm_l2",
    "operator_study",
    "run_local",
    "run_nonlocal",
    "run_sweep",
    "smooth_interpolation",
    "step_local",
    "step_nonlocal",
]
