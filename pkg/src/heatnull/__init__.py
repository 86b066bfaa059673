"""Null controls for the 1D semilinear heat equation by weighted least squares."""
from .baselines import BaselineConfig, BaselineKind, BaselineResult, run_baseline
from .diagnostics import convergence_report, fit_c1, order_estimate, refinement_study
from .grid import CellField, Field, SpaceTimeGrid, heat_operator, make_grid, weighted_l2_norm
from .leastsquares import ControlPair, LSConfig, LSResult, initialize_cutoff, initialize_linear, predicted_k0, solve
from .linear_control import LinearControlProblem, NeedLargerS, SolverFailure, solve_null_control
from .nonlinearity import NonlinearitySpec, builtin, estimate_holder, resolve
from .weights import WeightParams, WeightSet, carleman_ratio

__all__ = [
    "BaselineConfig", "BaselineKind", "BaselineResult", "run_baseline",
    "convergence_report", "fit_c1", "order_estimate", "refinement_study",
    "CellField", "Field", "SpaceTimeGrid", "heat_operator", "make_grid", "weighted_l2_norm",
    "ControlPair", "LSConfig", "LSResult", "initialize_cutoff", "initialize_linear", "predicted_k0", "solve",
    "LinearControlProblem", "NeedLargerS", "SolverFailure", "solve_null_control",
    "NonlinearitySpec", "builtin", "estimate_holder", "resolve",
    "WeightParams", "WeightSet", "carleman_ratio",
]
