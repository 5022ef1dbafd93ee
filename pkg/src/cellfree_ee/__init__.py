"""Energy-efficient downlink power allocation for cell-free massive MIMO."""

from .scenario import Scenario, ScenarioConfig, generate, noise_power_w
from .problem import (
    PowerModel,
    ProblemData,
    energy_efficiency,
    eta_to_theta,
    precompute,
    problem_from_arrays,
    se_per_user_eta,
    se_per_user_theta,
    theta_to_eta,
    total_power_w,
    uniform_full_power,
)
from .objective import (
    ObjectiveEval,
    conservative_lipschitz_bound,
    eval_g,
    eval_objective,
    eval_objective_and_grad,
    grad_objective,
)
from .projection import FeasibleSetSpec, FeasibilityReport, is_feasible, project
from .solver import (
    IterationRecord,
    SolverConfig,
    SolverError,
    SolverResult,
    apg_inner,
    backtrack_step,
    bb_initial_step,
    momentum_update,
    solve,
)

__all__ = [
    "Scenario", "ScenarioConfig", "generate", "noise_power_w",
    "PowerModel", "ProblemData", "precompute", "problem_from_arrays",
    "eta_to_theta", "theta_to_eta", "se_per_user_theta", "se_per_user_eta",
    "total_power_w", "energy_efficiency", "uniform_full_power",
    "ObjectiveEval", "eval_g", "eval_objective", "grad_objective",
    "eval_objective_and_grad", "conservative_lipschitz_bound",
    "FeasibleSetSpec", "FeasibilityReport", "project", "is_feasible",
    "SolverConfig", "SolverResult", "SolverError", "IterationRecord",
    "momentum_update", "bb_initial_step", "backtrack_step", "apg_inner",
    "solve",
]

__version__ = "0.1.0"
