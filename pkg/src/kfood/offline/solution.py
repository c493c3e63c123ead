"""Solutions of the flow MILP and per-server reward reports."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .model import MilpModel, Objective


class Status(enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    LIMIT_REACHED = "LimitReached"


@dataclass(eq=False)
class Solution:
    status: Status
    objective_value: float
    x: np.ndarray | None
    model: MilpModel = field(repr=False)
    nodes_explored: int = 0

    @property
    def flows(self) -> dict[tuple[int, int | None], float]:
        """Non-zero flow values keyed by ``(edge, server)`` (server ``None`` in min-cost mode)."""
        if self.x is None:
            return {}
        return {key: float(self.x[v]) for key, v in self.model.flow_vars.items() if self.x[v] != 0}

    @property
    def z(self) -> dict[int, int]:
        if self.x is None:
            return {}
        return {rid: int(round(self.x[v])) for rid, v in self.model.infeas_vars.items()}

    @property
    def rewards(self) -> dict[int, float]:
        if self.x is None:
            return {}
        return {i: float(self.x[v]) for i, v in self.model.reward_vars.items()}

    @property
    def min_reward(self) -> float | None:
        if self.x is None or self.model.minreward_var is None:
            return None
        return float(self.x[self.model.minreward_var])

    def __eq__(self, other):
        if not isinstance(other, Solution):
            return NotImplemented
        same_x = (self.x is None and other.x is None) or (
            self.x is not None and other.x is not None and np.array_equal(self.x, other.x))
        return (self.status == other.status and same_x
                and self.objective_value == other.objective_value)


def objective_of(model: MilpModel, x: np.ndarray) -> float:
    return float(model.c @ x)


@dataclass
class RewardReport:
    rewards: list[float]
    min_reward: float
    served: list[int]
    unserved: list[int]
    total_cost: float


def extract_rewards(sol: Solution, net=None) -> RewardReport:
    """Recompute per-server rewards directly from the edge flows.

    In min-cost mode there is a single aggregate flow, so ``rewards`` is empty
    and only ``total_cost`` is meaningful.
    """
    model = sol.model
    net = model.net if net is None else net
    cost = net.cost
    if sol.x is None:
        raise ValueError(f"solution with status {sol.status.value} carries no values")
    z = sol.z
    unserved = sorted(rid for rid, v in z.items() if v == 1)
    served = sorted(rid for rid, v in z.items() if v == 0)
    if model.objective is Objective.MINCOST:
        total = float(sum(cost[e] * v for (e, _), v in sol.flows.items()))
        return RewardReport([], 0.0, served, unserved, total)
    rewards = [0.0] * model.k
    for (e, i), v in sol.flows.items():
        rewards[i] += float(cost[e]) * v
    return RewardReport(rewards, min(rewards), served, unserved, float(sum(rewards)))
