"""Pricing engine for American calls under cost-adjusted nonlinear volatility.

The package solves the obstacle problem satisfied by the option's cash
Gamma on a log-moneyness grid (finite volumes in space, semi-implicit time
stepping, projected SOR for the early-exercise constraint) and validates
the results against binomial-tree and closed-form oracles.
"""

from .binomial import TreeSpec, crr_exercise_boundary, crr_price, sigma_bounds
from .cli import ConfigError, RunConfig, analytic_european_call
from .gamma_solver import (BoundaryWarning, GammaGrid, GammaState, PayoffMatrix,
                           PricingResult, PsorConfig, PsorConvergenceError,
                           SolverError, TridiagonalSystem, assemble,
                           brute_force_lcp, build_payoff_matrix,
                           exercise_boundary, initial_condition,
                           price_american_call, price_european_call, psor_dense,
                           psor_solve, reconstruct_price, step)
from .tc_models import (ConstantCost, CostModel, LinearCost, PiecewiseLinearCost,
                        QuadratureError, mean_value_quadrature)
from .volatility import (MarketParams, ParabolicityReport, VolatilityModel,
                         validate_parabolicity)

__version__ = "0.1.0"

__all__ = [
    "BoundaryWarning", "ConfigError", "ConstantCost", "CostModel", "GammaGrid",
    "GammaState", "LinearCost", "MarketParams", "ParabolicityReport",
    "PayoffMatrix", "PiecewiseLinearCost", "PricingResult", "PsorConfig",
    "PsorConvergenceError", "QuadratureError", "RunConfig", "SolverError",
    "TreeSpec", "TridiagonalSystem", "VolatilityModel",
    "analytic_european_call", "assemble", "brute_force_lcp",
    "build_payoff_matrix", "crr_exercise_boundary", "crr_price",
    "exercise_boundary", "initial_condition", "mean_value_quadrature",
    "price_american_call", "price_european_call", "psor_dense", "psor_solve",
    "reconstruct_price", "sigma_bounds", "step", "validate_parabolicity",
]
