"""Stochastic proximal partial exact penalty method for expectation-constrained problems."""

from .driver import AlgoParams, Coefficients, HorizonWarning, RunAborted, Trajectory, dual_update, penalty_update, phase_transition, run, schedule_params
from .errors import (
    ConfigurationError,
    ConvergenceFailure,
    GenerationError,
    InvalidArgument,
    InvalidState,
    PreconditionViolation,
    UnsupportedSize,
)
from .families import generate_problem
from .metrics import kkt_report, lagrangian_grad, moreau_grad, prox_residual, thresholds, trajectory_metrics
from .models import DualState, build_models, derived_constants, eval_models
from .problem import Ball, Box, StochasticProgram, sample, validate_assumptions
from .slack import shrinkage_bounds, slack_prox
from .subproblem import SubproblemInstance, brute_force, solve

__all__ = [
    "AlgoParams", "Ball", "Box", "Coefficients", "ConfigurationError", "ConvergenceFailure", "DualState",
    "GenerationError", "HorizonWarning", "InvalidArgument", "InvalidState", "PreconditionViolation", "RunAborted",
    "StochasticProgram", "SubproblemInstance", "Trajectory", "UnsupportedSize", "brute_force", "build_models",
    "derived_constants", "dual_update", "eval_models", "generate_problem", "kkt_report", "lagrangian_grad",
    "moreau_grad", "penalty_update", "phase_transition", "prox_residual", "run", "sample", "schedule_params",
    "shrinkage_bounds", "slack_prox", "solve", "thresholds", "trajectory_metrics", "validate_assumptions",
]
