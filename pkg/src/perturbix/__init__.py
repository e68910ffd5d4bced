"""Optimal perturbations of finite Markov chains and Ulam estimates of stochastic dynamics."""
from .errors import *  # noqa: F401,F403
from .markov_core import (
    StochasticMatrix,
    ResponseOperator,
    invariant_vector,
    spectral_gap,
    ergodicity_coefficient,
    perturbation_budget,
    response_operator,
    linear_response,
    transient_response,
    max_feasible_epsilon,
    perturbed_matrix,
    perturbed_invariant,
)
from .functionals import (
    entropy,
    shannon_entropy,
    entropy_response,
    kl_divergence,
    kl_quadratic_response,
    entropy_production,
)
from .results import LinearCoefficients, OptimizationResult
from .optimize import (
    maximize_linear_functional,
    maximize_kl,
    entropy_production_coefficients,
    minimize_measure_preserving,
    additive_reversibilization,
)
from .constraint_space import feasible_basis, project_optimize, ensemble_compare

__version__ = "0.1.0"
