"""Markov decision process congestion games: equilibria, tolls and welfare."""

__version__ = "0.1.0"

from .constraints import AffineConstraint, constraint_matrix
from .errors import (ConfigError, DimensionMismatch, DisconnectedGraph, InfeasibleConstraints, InfeasibleInput,
                     MDPCGError, NotConverged, ZeroRow)
from .frank_wolfe import EquilibriumResult, SolverOptions, best_response, line_search_alpha, solve_equilibrium
from .mdp_core import GameSpec, flow_residual, normalize_kernel, retrieve_density, validate_kernel
from .potential import RewardModel, WardropCertificate, potential, q_backward, rewards_at, wardrop_gap
from .rideshare import ScenarioConfig, belltown_constraints, build_scenario
from .tolling import PlannerOptions, TollSchedule, modified_rewards, solve_constrained, verify_tolled_equilibrium
from .welfare import (generate_constraints, payouts, social_objective, solve_social_optimum, welfare_curve,
                      welfare_with_constraints)

__all__ = [
    "AffineConstraint", "ConfigError", "DimensionMismatch", "DisconnectedGraph", "EquilibriumResult", "GameSpec",
    "InfeasibleConstraints", "InfeasibleInput", "MDPCGError", "NotConverged", "PlannerOptions", "RewardModel",
    "ScenarioConfig", "SolverOptions", "TollSchedule", "WardropCertificate", "ZeroRow", "belltown_constraints",
    "best_response", "build_scenario", "constraint_matrix",
    "flow_residual", "generate_constraints", "line_search_alpha", "modified_rewards", "normalize_kernel",
    "payouts", "potential", "q_backward", "retrieve_density", "rewards_at", "social_objective",
    "solve_constrained", "solve_equilibrium", "solve_social_optimum", "validate_kernel",
    "verify_tolled_equilibrium", "wardrop_gap", "welfare_curve", "welfare_with_constraints",
]
