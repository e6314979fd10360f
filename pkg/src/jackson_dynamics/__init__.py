"""Dynamics of open Jackson networks: busy-busy correlations from closed-form
perturbation theory, an exact truncated-chain oracle, and an event-driven
simulator with on-the-fly Laplace transforms."""

from .analytics import (
    CorrelationCurve,
    SpectralPoint,
    bracket_A,
    bracket_B,
    c0_cross,
    coupling_response,
    cross_corr_first_order,
    mean_busy_period,
    mm1_busy_corr,
    x_of_omega,
)
from .network import (
    NetworkSpec,
    PerturbationCoupling,
    gamma_from_rho,
    solve_traffic,
    two_queue_family,
    validate,
)
from .operators import (
    CorrelationOracle,
    TruncationSpec,
    build_generator,
    correlation_oracle,
    evolve,
    mm1_green_matrix,
    resolvent_apply,
    stationary_exact,
    stationary_product_state,
)
from .simulator import SimConfig, busy_period_stats, run

__version__ = "0.1.0"

__all__ = [
    "CorrelationCurve", "SpectralPoint", "bracket_A", "bracket_B", "c0_cross", "coupling_response",
    "cross_corr_first_order", "mean_busy_period", "mm1_busy_corr", "x_of_omega",
    "NetworkSpec", "PerturbationCoupling", "gamma_from_rho", "solve_traffic", "two_queue_family",
    "validate", "CorrelationOracle", "TruncationSpec", "build_generator", "correlation_oracle",
    "evolve", "mm1_green_matrix", "resolvent_apply", "stationary_exact", "stationary_product_state",
    "SimConfig", "busy_period_stats", "run",
]
