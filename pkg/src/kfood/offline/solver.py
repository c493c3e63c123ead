"""Embedded branch-and-bound over the binary ``z`` variables.

Each node relaxes the remaining binaries and solves an LP with HiGHS (via
``scipy.optimize.linprog``). Nodes are explored best-bound first, ties in
creation order, so the returned optimum is deterministic.
"""

from __future__ import annotations

import heapq
import itertools
import logging
import time
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog
from scipy.sparse import vstack

from ..errors import GuardRailExceeded, NumericalFailure
from .model import MilpModel
from .solution import Solution, Status, objective_of

log = logging.getLogger(__name__)

FEAS_TOL = 1e-6
INT_TOL = 1e-6
GAP_TOL = 1e-6
MAX_VARS = 50_000


@dataclass
class Limits:
    max_nodes: int = 10_000
    time: float = 300.0


class _LP:
    def __init__(self, model: MilpModel):
        A = model.A
        le = [i for i, s in enumerate(model.row_sense) if s == "<="]
        ge = [i for i, s in enumerate(model.row_sense) if s == ">="]
        eq = [i for i, s in enumerate(model.row_sense) if s == "="]
        parts, rhs = [], []
        if le:
            parts.append(A[le])
            rhs.append(model.rhs[le])
        if ge:
            parts.append(-A[ge])
            rhs.append(-model.rhs[ge])
        self.A_ub = vstack(parts).tocsr() if parts else None
        self.b_ub = np.concatenate(rhs) if rhs else None
        self.A_eq = A[eq] if eq else None
        self.b_eq = model.rhs[eq] if eq else None
        self.c = model.c if model.sense == "min" else -model.c

    def solve(self, lb, ub):
        bounds = np.column_stack([lb, ub])
        res = linprog(self.c, A_ub=self.A_ub, b_ub=self.b_ub, A_eq=self.A_eq, b_eq=self.b_eq,
                      bounds=bounds, method="highs")
        if res.status == 2:
            return None
        if res.status != 0:
            raise NumericalFailure(f"LP solve failed: {res.message}")
        return res.fun, res.x


def solve_embedded(model: MilpModel, limits: Limits | None = None, *, max_nodes=None,
                   time_limit=None, force: bool = False) -> Solution:
    """Solve ``model`` to optimality (within ``GAP_TOL``) or until a limit hits."""
    limits = limits or Limits()
    if max_nodes is not None:
        limits.max_nodes = max_nodes
    if time_limit is not None:
        limits.time = time_limit
    if limits.max_nodes < 1 or limits.time <= 0:
        raise ValueError("limits must be positive")
    if model.n_vars > MAX_VARS and not force:
        raise GuardRailExceeded(
            f"{model.n_vars} variables exceed the embedded solver's {MAX_VARS}; export the model")

    lp = _LP(model)
    int_idx = np.flatnonzero(model.integer)
    start = time.monotonic()
    counter = itertools.count()

    root = lp.solve(model.lb, model.ub)
    if root is None:
        return Solution(Status.INFEASIBLE, float("nan"), None, model, 1)
    heap = [(root[0], next(counter), model.lb.copy(), model.ub.copy(), root[1])]
    best_val, best_x = np.inf, None
    explored = 0
    limited = False

    while heap:
        if explored >= limits.max_nodes or time.monotonic() - start > limits.time:
            limited = True
            break
        bound, _, lb, ub, x = heapq.heappop(heap)
        explored += 1
        if bound >= best_val - GAP_TOL * max(1.0, abs(best_val)):
            continue
        frac = np.abs(x[int_idx] - np.round(x[int_idx]))
        if frac.size == 0 or frac.max() <= INT_TOL:
            best_val, best_x = bound, x
            continue
        j = int_idx[int(np.argmax(frac))]
        for val in (0.0, 1.0):
            clb, cub = lb.copy(), ub.copy()
            clb[j] = cub[j] = val
            child = lp.solve(clb, cub)
            if child is not None:
                heapq.heappush(heap, (child[0], next(counter), clb, cub, child[1]))
    log.debug("branch-and-bound explored %d nodes", explored)

    if best_x is None:
        status = Status.LIMIT_REACHED if limited else Status.INFEASIBLE
        return Solution(status, float("nan"), None, model, explored)
    x = np.clip(best_x, model.lb, model.ub)
    x[int_idx] = np.round(x[int_idx])
    x[np.abs(x) < 1e-12] = 0.0
    status = Status.LIMIT_REACHED if limited and heap else Status.OPTIMAL
    return Solution(status, objective_of(model, x), x, model, explored)
