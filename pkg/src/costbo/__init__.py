"""Cost-constrained Bayesian optimization with budget-aware rollout."""
__version__ = "0.1.0"

from .acquisition import (MaximizerConfig, expected_improvement, ei_per_unit_cost, gp_acquisition,
                          latin_hypercube, maximize, maximize_batch)
from .bench import (AggregateCurve, aggregate, cost_grid, cost_histogram, interpolate_history,
                    run_matrix)
from .costmodel import CostModel, analytic_cost, fit_cost, predict_cost
from .driver import PolicySpec, Record, RunHistory, run_bo
from .exceptions import (BudgetExhausted, GPFitError, InvalidDataError, InvalidHyperparameterError,
                         InvalidProblemError, MaximizationError)
from .gp import (Dataset, Domain, FantasyBatch, FitConfig, GaussianProcess, GPHyperparams,
                 Observation, condition, fit_hyperparameters, kernel_matern52_ard, posterior,
                 sample_posterior)
from .problems import (PROBLEMS, Problem, adversarial_cost_problem, get_problem, ring_problem,
                       sensor_stand_in, uniform_cost_problem)
from .rollout import (BOState, RolloutConfig, Trajectory, rollout_acquisition, rollout_values,
                      select_next, simulate_trajectory)

__all__ = [
    "AggregateCurve", "BOState", "BudgetExhausted", "CostModel", "Dataset", "Domain",
    "FantasyBatch", "FitConfig", "GPFitError", "GPHyperparams", "GaussianProcess",
    "InvalidDataError", "InvalidHyperparameterError", "InvalidProblemError", "MaximizationError",
    "MaximizerConfig", "Observation", "PROBLEMS", "PolicySpec", "Problem", "Record",
    "RolloutConfig", "RunHistory", "Trajectory", "adversarial_cost_problem", "aggregate",
    "analytic_cost", "condition", "cost_grid", "cost_histogram", "ei_per_unit_cost",
    "expected_improvement", "fit_cost", "fit_hyperparameters", "get_problem", "gp_acquisition",
    "interpolate_history", "kernel_matern52_ard", "latin_hypercube", "maximize", "maximize_batch",
    "posterior", "predict_cost", "ring_problem", "rollout_acquisition", "rollout_values",
    "run_bo", "run_matrix", "sample_posterior", "select_next", "sensor_stand_in",
    "simulate_trajectory", "uniform_cost_problem",
]
