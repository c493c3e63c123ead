"""Time-expanded flow network over (location, timestep) copies of the metric."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum
from fractions import Fraction
from functools import cached_property
from graphlib import CycleError, TopologicalSorter

import numpy as np

from .errors import HorizonOverflow, InvalidParameter, NonIntegralTravelTime
from .instance import Instance


class NodeKind(IntEnum):
    SOURCE = 0
    SINK = 1
    GRID = 2
    PICKUP = 3


class EdgeKind(IntEnum):
    SOURCE_LINK = 0
    SINK_LINK = 1
    SELF = 2
    APPROACH = 3
    DELIVERY = 4


@dataclass(frozen=True)
class TENode:
    kind: NodeKind
    location: int | None = None
    timestep: int | None = None
    request_id: int | None = None


@dataclass(frozen=True)
class TEEdge:
    index: int
    tail: int
    head: int
    cost: int
    kind: EdgeKind
    request_id: int | None = None


@dataclass(eq=False)
class TimeExpandedNetwork:
    """Layered network stored column-wise.

    Node ids: 0 is the source, 1 the sink, then ``m * steps`` grid nodes
    (``grid_id(loc, step)``), then one pickup node per request in request
    order. Edges live in parallel arrays ``tail/head/cost/kind/req``; ``req``
    is -1 on edges that belong to no request.
    """

    instance: Instance
    nodes: list[TENode]
    tail: np.ndarray
    head: np.ndarray
    cost: np.ndarray
    kind: np.ndarray
    req: np.ndarray
    steps: int
    pickup_of: dict[int, int] = field(default_factory=dict)
    delivery_of: dict[int, int] = field(default_factory=dict)

    SOURCE = 0
    SINK = 1

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_edges(self) -> int:
        return int(self.tail.size)

    def grid_id(self, loc: int, step: int) -> int:
        return 2 + loc * self.steps + step

    def edge(self, e: int) -> TEEdge:
        r = int(self.req[e])
        return TEEdge(e, int(self.tail[e]), int(self.head[e]), int(self.cost[e]),
                      EdgeKind(int(self.kind[e])), None if r < 0 else r)

    @property
    def edges(self) -> list[TEEdge]:
        return [self.edge(e) for e in range(self.n_edges)]

    @cached_property
    def out_edges(self) -> list[np.ndarray]:
        return _index(self.tail, self.n_nodes)

    @cached_property
    def in_edges(self) -> list[np.ndarray]:
        return _index(self.head, self.n_nodes)

    def edges_of_kind(self, kind: EdgeKind) -> np.ndarray:
        return np.flatnonzero(self.kind == kind)

    def to_dot(self) -> str:
        lines = ["digraph G {", "  rankdir=LR;"]
        for i, nd in enumerate(self.nodes):
            if nd.kind == NodeKind.GRID:
                label = f"G/{nd.location}/{nd.timestep}"
            elif nd.kind == NodeKind.PICKUP:
                label = f"P{nd.request_id}/{nd.location}/{nd.timestep}"
            else:
                label = nd.kind.name.capitalize()
            lines.append(f'  n{i} [label="{label}"];')
        for e in range(self.n_edges):
            lines.append(f'  n{self.tail[e]} -> n{self.head[e]} '
                         f'[label="{EdgeKind(int(self.kind[e])).name.lower()}:{self.cost[e]}"];')
        lines.append("}")
        return "\n".join(lines) + "\n"


def _index(endpoints: np.ndarray, n: int) -> list[np.ndarray]:
    order = np.argsort(endpoints, kind="stable")
    bounds = np.searchsorted(endpoints[order], np.arange(n + 1))
    return [order[bounds[i]:bounds[i + 1]] for i in range(n)]


def quantised_travel(inst: Instance, u: int, v: int, round_up: bool = False) -> int:
    """Travel time ``u -> v`` expressed in whole timesteps of size ``eta``."""
    steps = Fraction(inst.travel_time(u, v)) / Fraction(inst.eta)
    if steps.denominator != 1:
        if not round_up:
            raise NonIntegralTravelTime(
                f"travel {u}->{v} = {inst.travel_time(u, v)} is not a multiple of eta={inst.eta}")
        return math.ceil(steps)
    return int(steps)


def _step_of(inst: Instance, t, what: str) -> int:
    q = Fraction(t) / Fraction(inst.eta)
    if q.denominator != 1:
        raise InvalidParameter(f"{what}={t} is not a multiple of eta={inst.eta}")
    return int(q)


def build_network(inst: Instance, round_travel: bool = False) -> TimeExpandedNetwork:
    """Construct the time-expanded network for ``inst``.

    Approach edges are pruned to the latest departure: from every origin ``h``
    whose travel time to the source fits in the request window, a single edge
    leaves ``Grid(h, t_end - travel)``. A zero-cost edge lets a server already
    standing at the source take the request. With ``round_travel`` travel times
    are rounded up to whole timesteps instead of raising
    ``NonIntegralTravelTime``.
    """
    m = inst.metric.node_count
    steps = _step_of(inst, inst.horizon, "horizon") + 1
    nodes = [TENode(NodeKind.SOURCE), TENode(NodeKind.SINK)]
    for loc in range(m):
        nodes.extend(TENode(NodeKind.GRID, loc, s * inst.eta) for s in range(steps))

    tail, head, cost, kind, req = [], [], [], [], []

    def grid(loc, step):
        return 2 + loc * steps + step

    def add(t, h, c, k, r=-1):
        tail.append(t)
        head.append(h)
        cost.append(c)
        kind.append(int(k))
        req.append(r)
        return len(tail) - 1

    for loc in range(m):
        add(0, grid(loc, 0), 0, EdgeKind.SOURCE_LINK)
    for loc in range(m):
        for s in range(steps - 1):
            add(grid(loc, s), grid(loc, s + 1), 0, EdgeKind.SELF)
    for loc in range(m):
        add(grid(loc, steps - 1), 1, 0, EdgeKind.SINK_LINK)

    travel = {}

    def tt(u, v):
        key = (u, v)
        if key not in travel:
            travel[key] = quantised_travel(inst, u, v, round_travel)
        return travel[key]

    pickup_of, delivery_of = {}, {}
    for r in inst.requests:
        b = Fraction(r.t_begin) / Fraction(inst.eta)
        e = _step_of(inst, r.t_end, f"t_end of request {r.id}")
        pid = len(nodes)
        nodes.append(TENode(NodeKind.PICKUP, r.source, r.t_end, r.id))
        pickup_of[r.id] = pid
        deliver = tt(r.source, r.dest)
        arrive = e + deliver
        if arrive > steps - 1:
            raise HorizonOverflow(f"request {r.id} delivers at step {arrive} > {steps - 1}")

        for h in range(m):
            if h == r.source:
                # Zero-length deliveries would close a zero-time cycle through
                # Grid(s, t_end); the co-located server is then taken from one
                # step earlier.
                if deliver > 0:
                    add(grid(h, e), pid, 0, EdgeKind.APPROACH, r.id)
                elif e >= 1:
                    add(grid(h, e - 1), pid, 0, EdgeKind.APPROACH, r.id)
                continue
            go = tt(h, r.source)
            depart = e - go
            if depart >= b and depart >= 0:
                add(grid(h, depart), pid, inst.metric.d(h, r.source), EdgeKind.APPROACH, r.id)
        delivery_of[r.id] = add(pid, grid(r.dest, arrive), inst.metric.d(r.source, r.dest),
                                EdgeKind.DELIVERY, r.id)

    return TimeExpandedNetwork(
        instance=inst, nodes=nodes,
        tail=np.asarray(tail, dtype=np.int64), head=np.asarray(head, dtype=np.int64),
        cost=np.asarray(cost, dtype=np.int64), kind=np.asarray(kind, dtype=np.int8),
        req=np.asarray(req, dtype=np.int64), steps=steps,
        pickup_of=pickup_of, delivery_of=delivery_of)


def _timestep(node: TENode, horizon):
    if node.kind == NodeKind.SOURCE:
        return -math.inf
    if node.kind == NodeKind.SINK:
        return math.inf
    return node.timestep


def validate_network(net: TimeExpandedNetwork) -> list[str]:
    """Structural checks; returns human-readable violations (empty if ok)."""
    out = []
    inst = net.instance
    m = inst.metric.node_count
    kinds = [nd.kind for nd in net.nodes]
    if kinds.count(NodeKind.SOURCE) != 1 or kinds.count(NodeKind.SINK) != 1:
        out.append("network must have exactly one source and one sink")
    grid_keys = {(nd.location, nd.timestep) for nd in net.nodes if nd.kind == NodeKind.GRID}
    for loc in range(m):
        for s in range(net.steps):
            if (loc, s * inst.eta) not in grid_keys:
                out.append(f"missing grid node ({loc}, {s * inst.eta})")
    pickups = [nd for nd in net.nodes if nd.kind == NodeKind.PICKUP]
    by_req = {}
    for i, nd in enumerate(net.nodes):
        if nd.kind == NodeKind.PICKUP:
            by_req.setdefault(nd.request_id, []).append(i)
    for r in inst.requests:
        got = by_req.get(r.id, [])
        if len(got) != 1:
            out.append(f"request {r.id} has {len(got)} pickup nodes")
            continue
        nd = net.nodes[got[0]]
        if (nd.location, nd.timestep) != (r.source, r.t_end):
            out.append(f"pickup of request {r.id} at {(nd.location, nd.timestep)}")
    if len(pickups) != inst.n:
        out.append(f"{len(pickups)} pickup nodes for {inst.n} requests")

    approach_origins = set()
    for e in net.edges:
        a, b = net.nodes[e.tail], net.nodes[e.head]
        if _timestep(b, inst.horizon) < _timestep(a, inst.horizon):
            out.append(f"edge {e.index} goes backward in time")
        if e.kind in (EdgeKind.SOURCE_LINK, EdgeKind.SINK_LINK, EdgeKind.SELF) and e.cost != 0:
            out.append(f"edge {e.index} of kind {e.kind.name} has cost {e.cost}")
        if e.kind == EdgeKind.APPROACH:
            r = inst.request(e.request_id)
            if b.kind != NodeKind.PICKUP or b.request_id != r.id:
                out.append(f"approach edge {e.index} does not enter pickup of request {r.id}")
                continue
            if e.cost != inst.metric.d(a.location, r.source):
                out.append(f"approach edge {e.index} cost {e.cost} != distance")
            if a.location != r.source and a.timestep < r.t_begin:
                out.append(f"approach edge {e.index} departs before t_begin")
            key = (a.location, r.id)
            if key in approach_origins:
                out.append(f"origin {a.location} has several approach edges into request {r.id}")
            approach_origins.add(key)
        if e.kind == EdgeKind.DELIVERY:
            r = inst.request(e.request_id)
            if a.kind != NodeKind.PICKUP or a.request_id != r.id:
                out.append(f"delivery edge {e.index} does not leave pickup of request {r.id}")
            elif b.kind != NodeKind.GRID or b.location != r.dest:
                out.append(f"delivery edge {e.index} does not reach the destination")
            if e.cost != inst.metric.d(r.source, r.dest):
                out.append(f"delivery edge {e.index} cost {e.cost} != distance")
    for i, nd in enumerate(net.nodes):
        if nd.kind == NodeKind.PICKUP:
            outs = [e for e in net.out_edges[i] if net.kind[e] == EdgeKind.DELIVERY]
            if len(outs) != 1 or len(net.out_edges[i]) != 1:
                out.append(f"pickup node {i} must have exactly one outgoing delivery edge")

    n_steps = net.steps - 1
    if net.n_nodes > m * (n_steps + 1) + inst.n + 2:
        out.append(f"|V|={net.n_nodes} exceeds m(T/eta+1)+n+2")
    if net.n_edges > m * (inst.n + n_steps) + 2 * m + inst.n:
        out.append(f"|E|={net.n_edges} exceeds m(n+T/eta)+2m+n")

    ts = TopologicalSorter()
    for e in range(net.n_edges):
        ts.add(int(net.head[e]), int(net.tail[e]))
    try:
        ts.prepare()
    except CycleError:
        out.append("network contains a cycle")
    return out
