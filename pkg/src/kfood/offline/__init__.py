from .model import InitialMode, MilpModel, Objective, build_flow_milp, size_bounds
from .oracle import brute_force_oracle
from .solution import Solution, Status, extract_rewards
from .solver import Limits, solve_embedded
from .verify import max_residual, residuals

__all__ = [
    "InitialMode", "Limits", "MilpModel", "Objective", "Solution", "Status",
    "brute_force_oracle", "build_flow_milp", "extract_rewards", "max_residual", "residuals",
    "size_bounds", "solve_embedded",
]
