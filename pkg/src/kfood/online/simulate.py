"""Discrete-time simulation of the online assignment policies."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field

import numpy as np

from ..instance import Instance, Request, exact_div
from .movement import Attractor, distance, position_json
from .policies import (policy_doc4food, policy_greedy_min, policy_min_delta, policy_random,
                       policy_round_robin)


class Policy(enum.Enum):
    RANDOM = "Random"
    GREEDY_MIN = "GreedyMin"
    DOC4FOOD = "Doc4Food"
    MIN_DELTA = "MinDelta"
    ROUND_ROBIN = "RoundRobin"


@dataclass
class ServerState:
    id: int
    anchor: int
    virtual_pos: object
    busy_until: object = 0
    reward: int = 0
    intervals: list = field(default_factory=list)

    def position(self, use_virtual: bool):
        return self.virtual_pos if use_virtual else self.anchor


@dataclass(frozen=True)
class RequestRecord:
    request_id: int
    server: int | None
    assign_time: object = None
    pickup_time: object = None
    delivery_time: object = None
    reward: int = 0

    @property
    def served(self) -> bool:
        return self.server is not None


@dataclass
class SimulationResult:
    policy: Policy
    seed: object
    per_server: list[ServerState]
    per_request: list[RequestRecord]
    trace: list[dict] | None = None
    divergence: int = 0
    """Doc4Food only: (request, idle server) pairs whose virtual and anchor
    eligibility verdicts disagree."""

    @property
    def rewards(self) -> list[int]:
        return [s.reward for s in self.per_server]

    @property
    def unserved(self) -> int:
        return sum(1 for r in self.per_request if not r.served)

    def trace_ndjson(self) -> str:
        return "".join(json.dumps(ev, default=_jsonable) + "\n" for ev in self.trace or ())


def _jsonable(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    return float(x)


def eligible_servers(inst: Instance, servers, request: Request, now, use_virtual: bool = False):
    """Idle servers that can reach ``request.source`` by ``request.t_end``."""
    slack = request.t_end - now
    out = []
    for s in servers:
        if s.busy_until > now:
            continue
        gap = distance(inst.metric, s.position(use_virtual), request.source)
        if exact_div(gap, inst.speed) <= slack:
            out.append(s.id)
    return out


def simulate(inst: Instance, policy: Policy | str, seed=None, trace: bool = False) -> SimulationResult:
    """Run ``policy`` over the requests of ``inst`` in arrival order.

    Each request is decided once, at ``t_begin``. The chosen server earns the
    distance from its anchor to the source plus the delivery distance, is busy
    until it reaches the destination, and is then anchored there. Under
    Doc4Food idle servers drift ``speed * eta`` per timestep toward the nearest
    request source; eligibility and pickup timing use the drifted position.
    """
    policy = Policy(policy)
    ms = inst.metric
    rng = np.random.default_rng(seed)
    servers = [ServerState(i, p, p) for i, p in enumerate(inst.initial_positions)]
    records = []
    events = [] if trace else None
    virtual = policy is Policy.DOC4FOOD
    attractor = Attractor(ms, inst.source_set) if virtual else None
    budget = inst.speed * inst.eta
    clock = 0
    cursor = 0
    divergence = 0

    def log(ts, event, **kw):
        if events is not None:
            events.append({"ts": ts, "event": event, **kw})

    def drift_until(t):
        nonlocal clock
        while (clock + 1) * inst.eta <= t:
            start = clock * inst.eta
            for s in servers:
                if s.busy_until <= start:
                    new = attractor.step(s.virtual_pos, budget)
                    if new != s.virtual_pos:
                        s.virtual_pos = new
                        log((clock + 1) * inst.eta, "drift", ids={"server": s.id},
                            positions={"virtual": position_json(new)}, reward_delta=0)
            clock += 1

    for r in sorted(inst.requests, key=lambda q: (q.t_begin, q.id)):
        now = r.t_begin
        if virtual:
            drift_until(now)
        log(now, "arrive", ids={"request": r.id},
            positions={"source": r.source, "dest": r.dest}, reward_delta=0)
        eligible = eligible_servers(inst, servers, r, now, use_virtual=virtual)
        if virtual:
            by_anchor = set(eligible_servers(inst, servers, r, now, use_virtual=False))
            idle = [s.id for s in servers if s.busy_until <= now]
            divergence += sum((i in by_anchor) != (i in eligible) for i in idle)
        if not eligible:
            records.append(RequestRecord(r.id, None))
            log(now, "unserved", ids={"request": r.id}, positions={}, reward_delta=0)
            continue

        rewards = [s.reward for s in servers]
        if policy is Policy.RANDOM:
            choice = policy_random(eligible, rewards, rng)
        elif policy is Policy.GREEDY_MIN:
            choice = policy_greedy_min(eligible, rewards)
        elif policy is Policy.DOC4FOOD:
            choice = policy_doc4food(eligible, rewards)
        elif policy is Policy.MIN_DELTA:
            gains = {i: ms.d(servers[i].anchor, r.source) + ms.d(r.source, r.dest)
                     for i in eligible}
            choice = policy_min_delta(eligible, rewards, gains)
        else:
            choice, cursor = policy_round_robin(eligible, cursor, inst.k)

        s = servers[choice]
        gain = ms.d(s.anchor, r.source) + ms.d(r.source, r.dest)
        start_pos = s.position(virtual)
        travel = exact_div(distance(ms, start_pos, r.source), inst.speed)
        pickup = min(max(now + travel, r.t_begin), r.t_end)
        done = pickup + inst.travel_time(r.source, r.dest)
        s.reward += gain
        s.intervals.append((now, done))
        s.busy_until = done
        s.anchor = r.dest
        s.virtual_pos = r.dest
        records.append(RequestRecord(r.id, choice, now, pickup, done, gain))
        log(now, "assign", ids={"request": r.id, "server": choice},
            positions={"from": position_json(start_pos)}, reward_delta=gain)
        log(pickup, "pickup", ids={"request": r.id, "server": choice},
            positions={"at": r.source}, reward_delta=0)
        log(done, "deliver", ids={"request": r.id, "server": choice},
            positions={"at": r.dest}, reward_delta=0)

    if virtual:
        drift_until(inst.horizon)
    if events is not None:
        events = [ev for _, ev in sorted(enumerate(events), key=lambda p: (p[1]["ts"], p[0]))]
    return SimulationResult(policy, seed, servers, records, events, divergence)
