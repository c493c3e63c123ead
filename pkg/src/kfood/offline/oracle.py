"""Exhaustive ground truth for tiny instances.

Every map of requests to servers (or to "unserved") is considered, and for
each server every service order of its requests. Two timing models exist:

``"network"`` (default)
    The movement model of the time-expanded network: a server starts moving
    only once the request has arrived and picks up exactly at ``t_end``. This
    is the model the MILP optimises over, so its optimum bounds the oracle's.
``"eager"``
    A server leaves for its next request as soon as it has delivered the
    previous one, waits at the source if early, and picks up at
    ``max(arrival, t_begin)``. Strictly more permissive than the network.

Both reward a served request with the approach distance plus the delivery
distance.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

from ..errors import GuardRailExceeded
from ..instance import Instance

MAX_REQUESTS = 8
MAX_SERVERS = 3


@dataclass
class OracleResult:
    best_maxmin: float
    maxmin_unserved: int
    maxmin_rewards: list[int]
    best_assignment: dict[int, int | None]
    best_mincost: float
    mincost_unserved: int
    mincost_assignment: dict[int, int | None]
    equal_split: bool
    """True when some max-min optimal schedule gives every server the same reward."""

    def maxmin_objective(self, penalty: float) -> float:
        return self.best_maxmin - penalty * self.maxmin_unserved

    def mincost_objective(self, penalty: float) -> float:
        return self.best_mincost + penalty * self.mincost_unserved


def _server_table(inst: Instance, start: int, timing: str):
    """For each request bitmask a server can complete: the set of achievable rewards."""
    reqs = inst.requests
    n = len(reqs)
    best: dict[int, set[int]] = {0: {0}}

    def step(pos, free, r):
        go = inst.travel_time(pos, r.source)
        if timing == "eager":
            pickup = max(free + go, r.t_begin)
            if pickup > r.t_end:
                return None
        else:
            if max(free, r.t_begin) + go > r.t_end:
                return None
            if pos == r.source == r.dest and free > r.t_end - inst.eta:
                # the network serves zero-length requests from one step earlier
                return None
            pickup = r.t_end
        return pickup + inst.travel_time(r.source, r.dest)

    def dfs(pos, free, mask, reward):
        for j in range(n):
            if mask >> j & 1:
                continue
            r = reqs[j]
            done = step(pos, free, r)
            if done is None:
                continue
            gained = reward + inst.metric.d(pos, r.source) + inst.metric.d(r.source, r.dest)
            nm = mask | (1 << j)
            best.setdefault(nm, set()).add(gained)
            dfs(r.dest, done, nm, gained)

    dfs(start, 0, 0, 0)
    return best


def brute_force_oracle(inst: Instance, timing: str = "network") -> OracleResult:
    """Best max-min and min-cost schedules, fewest unserved requests first."""
    if timing not in ("eager", "network"):
        raise ValueError("timing must be 'eager' or 'network'")
    n, k = inst.n, inst.k
    if n > MAX_REQUESTS or k > MAX_SERVERS:
        raise GuardRailExceeded(f"oracle limited to n<={MAX_REQUESTS}, k<={MAX_SERVERS}")
    tables = [_server_table(inst, p, timing) for p in inst.initial_positions]

    best_mm_key, best_mm = None, None
    best_mc_key, best_mc = None, None
    equal = False
    for choice in itertools.product(range(k + 1), repeat=n):
        masks = [0] * k
        for j, c in enumerate(choice):
            if c < k:
                masks[c] |= 1 << j
        if any(masks[i] not in tables[i] for i in range(k)):
            continue
        unserved = choice.count(k)
        sets = [tables[i][masks[i]] for i in range(k)]
        hi = [max(s) for s in sets]
        mm_key = (-unserved, min(hi))
        if best_mm_key is None or mm_key > best_mm_key:
            best_mm_key, best_mm = mm_key, (choice, hi)
            equal = False
        if mm_key == best_mm_key and not equal:
            equal = all(mm_key[1] in s for s in sets)
        mc_key = (unserved, sum(min(s) for s in sets))
        if best_mc_key is None or mc_key < best_mc_key:
            best_mc_key, best_mc = mc_key, choice

    def assignment(choice):
        return {r.id: (None if c == k else c) for r, c in zip(inst.requests, choice)}

    return OracleResult(
        best_maxmin=best_mm_key[1], maxmin_unserved=-best_mm_key[0],
        maxmin_rewards=best_mm[1], best_assignment=assignment(best_mm[0]),
        best_mincost=best_mc_key[1], mincost_unserved=best_mc_key[0],
        mincost_assignment=assignment(best_mc),
        equal_split=equal)
