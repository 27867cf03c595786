"""LQ zero-sum differential game with a sensing-limited minimizer.

Saddle-point Riccati solution, age-of-information sensing policies under an
average sampling budget, and closed-loop Monte Carlo verification.
"""

from .discretization import (
    AgeCostTable,
    build_age_cost_table,
    cycle_error_cost,
    error_covariance,
    noise_gramian,
    state_transition,
)
from .game import GameSolution, GameSpec, security_level, solve_game_riccati, transformed_are_residual
from .sensing import (
    MdpConfig,
    Mode,
    Redraw,
    SensorPolicy,
    ThresholdSolution,
    average_cost_of_threshold,
    discounted_value_iteration,
    lagrange_bisection,
    next_sensing_decision,
    relative_value_iteration,
    solve_threshold_equation,
    vanishing_discount_check,
)
from .simulator import SimConfig, TrajectoryRecord, empirical_cost_decomposition, simulate

__version__ = "0.1.0"
