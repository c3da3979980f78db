"""Peak-constrained and budget-constrained confinement of a SIR epidemic.

Closed-form kernels and costs, the greedy feedback, a brute-force oracle
and the generalized-inverse duality between the two value curves.
"""

__version__ = "0.1.0"

from .cost import explicit_cost, green_condition_check
from .duality import (
    INFINITE,
    ValueCurve,
    build_lower_curve,
    build_upper_curve,
    check_duality,
    generalized_inverse,
    lsc_diagnostic,
)
from .dynamics import EpidemicParams, PiecewiseControl, State, integrate, trajectory_metrics
from .exceptions import ConfigError, DomainError, InfeasibleError
from .geometry import RegionTag, classify, dom_min_peak
from .greedy import GreedyConfig, greedy_budget, simulate_greedy
from .oracle import OracleConfig, brute_force_lower_value, brute_force_upper_value, control_transfer_check
from .weights import CostWeight

__all__ = [
    "INFINITE",
    "ConfigError",
    "CostWeight",
    "DomainError",
    "EpidemicParams",
    "GreedyConfig",
    "InfeasibleError",
    "OracleConfig",
    "PiecewiseControl",
    "RegionTag",
    "State",
    "ValueCurve",
    "brute_force_lower_value",
    "brute_force_upper_value",
    "build_lower_curve",
    "build_upper_curve",
    "check_duality",
    "classify",
    "control_transfer_check",
    "dom_min_peak",
    "explicit_cost",
    "generalized_inverse",
    "greedy_budget",
    "green_condition_check",
    "integrate",
    "lsc_diagnostic",
    "simulate_greedy",
    "trajectory_metrics",
]
