"""Iteratively reweighted least squares for affine rank minimization.

The package provides the log-det objective and its optimal weights, weighted
least-squares solves over an affine set, the full-matrix IRLS-p iteration,
its data-sparse alternating variant on a factored iterate, a sparse-vector
counterpart, and a Monte Carlo harness with reporting.
"""
from .errors import (
    CoverageInfeasibleError,
    DegenerateOperatorError,
    DimensionError,
    DomainError,
    IllConditionedError,
    InfeasibleError,
    IrlsError,
    SolverFailure,
    UnsupportedVariantError,
)
from .linops import LinearMap, ProblemInstance
from .irls import GammaSchedule, IrlsConfig, irls_run
from .airls import AirlsConfig, airls_run
from .acm import VecIrlsConfig, VectorProblem, vec_irls_run
from .harness import ExperimentConfig, run_experiment

__version__ = "0.1.0"

__all__ = [
    "AirlsConfig", "CoverageInfeasibleError", "DegenerateOperatorError", "DimensionError",
    "DomainError", "ExperimentConfig", "GammaSchedule", "IllConditionedError",
    "InfeasibleError", "IrlsConfig", "IrlsError", "LinearMap", "ProblemInstance",
    "SolverFailure", "UnsupportedVariantError", "VecIrlsConfig", "VectorProblem",
    "airls_run", "irls_run", "run_experiment", "vec_irls_run",
]
