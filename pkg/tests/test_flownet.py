import dataclasses
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kfood.errors import HorizonOverflow, NonIntegralTravelTime
from kfood.flownet import EdgeKind, NodeKind, build_network, validate_network
from kfood.instance import Instance, Request, gen_synthetic, gen_tiny
from kfood.metric import build_metric_space, gen_erdos_renyi


def approach_set(net, rid):
    out = set()
    for e in net.edges:
        if e.kind == EdgeKind.APPROACH and e.request_id == rid:
            nd = net.nodes[e.tail]
            out.add((nd.location, nd.timestep, e.cost))
    return out


def test_two_request_figure():
    ms = build_metric_space(4, [(0, 1, 1), (1, 2, 1), (2, 3, 1)])
    r1, r2 = Request(0, 0, 1, 1, 3), Request(1, 1, 3, 2, 5)
    inst = Instance(ms, (r1, r2), 1, (0,), horizon=8)
    net = build_network(inst)
    assert validate_network(net) == []
    pickups = [nd for nd in net.nodes if nd.kind == NodeKind.PICKUP]
    assert {(p.location, p.timestep) for p in pickups} == {(0, 3), (1, 5)}
    for rid in (0, 1):
        pid = net.pickup_of[rid]
        outs = net.out_edges[pid]
        assert len(outs) == 1 and net.kind[outs[0]] == EdgeKind.DELIVERY
    d2 = net.edge(net.delivery_of[1])
    head = net.nodes[d2.head]
    assert (head.kind, head.location, head.timestep) == (NodeKind.GRID, 3, 7)
    assert d2.cost == 2
    # r1: window length 2 admits origins at distance <= 2 from node 0
    assert approach_set(net, 0) == {(0, 3, 0), (1, 2, 1), (2, 1, 2)}


def test_single_location_degenerate():
    ms = build_metric_space(1, [])
    inst = Instance(ms, (Request(0, 0, 0, 1, 2),), 1, (0,), horizon=3)
    net = build_network(inst)
    assert validate_network(net) == []
    kinds = {EdgeKind(int(k)) for k in net.kind}
    assert kinds == {EdgeKind.SOURCE_LINK, EdgeKind.SINK_LINK, EdgeKind.SELF,
                     EdgeKind.APPROACH, EdgeKind.DELIVERY}
    for e in net.edges:
        assert e.cost == 0
    assert len(net.edges_of_kind(EdgeKind.APPROACH)) == 1


def brute_approach(inst, r):
    """All (origin, departure) pairs allowed by the window, reduced to latest departures."""
    raw = {}
    for h in range(inst.metric.node_count):
        if h == r.source:
            continue
        tt = inst.metric.d(h, r.source)
        for t in range(r.t_begin, r.t_end):
            if tt <= r.t_end - t:
                raw.setdefault(h, []).append(t)
    return {(h, max(ts), inst.metric.d(h, r.source)) for h, ts in raw.items()}


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000))
def test_approach_edges_match_enumeration(seed):
    rng = np.random.default_rng(seed)
    edges = [(0, 1, int(rng.integers(1, 5))), (1, 2, int(rng.integers(1, 5))),
             (2, 3, int(rng.integers(1, 5))), (0, 3, int(rng.integers(1, 9)))]
    ms = build_metric_space(4, edges)
    s, d = (int(x) for x in rng.choice(4, 2, replace=False))
    tb = int(rng.integers(0, 8))
    te = tb + int(rng.integers(0, 9))
    inst = Instance(ms, (Request(0, s, d, tb, te),), 1, (0,), horizon=te + ms.d(s, d) + 2)
    net = build_network(inst)
    got = approach_set(net, 0)
    colocated = {x for x in got if x[0] == s}
    assert colocated == {(s, te, 0)}
    assert got - colocated == brute_approach(inst, inst.requests[0])
    for h, t, c in got - colocated:
        assert tb <= t <= te and t + ms.d(h, s) == te


def acyclic(net):
    indeg = np.zeros(net.n_nodes, dtype=int)
    np.add.at(indeg, net.head, 1)
    stack = [v for v in range(net.n_nodes) if indeg[v] == 0]
    seen = 0
    while stack:
        v = stack.pop()
        seen += 1
        for e in net.out_edges[v]:
            h = int(net.head[e])
            indeg[h] -= 1
            if indeg[h] == 0:
                stack.append(h)
    return seen == net.n_nodes


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000))
def test_random_networks_valid(seed):
    inst = gen_tiny(seed)
    net = build_network(inst)
    assert validate_network(net) == []
    assert acyclic(net)
    m, T = inst.metric.node_count, inst.horizon
    assert net.n_nodes <= m * (T + 1) + inst.n + 2
    for e in net.edges:
        a, b = net.nodes[e.tail], net.nodes[e.head]
        if a.timestep is not None and b.timestep is not None:
            assert a.timestep <= b.timestep


def test_size_example():
    ms = build_metric_space(3, [(0, 1, 1), (1, 2, 1)])
    inst = Instance(ms, (Request(0, 0, 1, 1, 2),), 1, (0,), horizon=4)
    net = build_network(inst)
    assert net.n_nodes == 3 * 5 + 1 + 2
    assert validate_network(net) == []


def test_backward_edge_detected():
    ms = build_metric_space(2, [(0, 1, 1)])
    inst = Instance(ms, (Request(0, 0, 1, 0, 1),), 1, (0,), horizon=3)
    net = build_network(inst)
    bad = dataclasses.replace(
        net,
        tail=np.append(net.tail, net.grid_id(0, 2)),
        head=np.append(net.head, net.grid_id(0, 1)),
        cost=np.append(net.cost, 0),
        kind=np.append(net.kind, np.int8(EdgeKind.SELF)),
        req=np.append(net.req, -1))
    problems = validate_network(bad)
    assert any("backward" in p for p in problems)


def test_horizon_overflow():
    ms = build_metric_space(2, [(0, 1, 5)])
    inst = Instance(ms, (Request(0, 0, 1, 0, 2),), 1, (0,), horizon=4)
    with pytest.raises(HorizonOverflow):
        build_network(inst)


def test_non_integral_travel():
    ms = build_metric_space(2, [(0, 1, 3)])
    inst = Instance(ms, (Request(0, 0, 1, 0, 4),), 1, (0,), horizon=10, speed=2)
    with pytest.raises(NonIntegralTravelTime):
        build_network(inst)
    net = build_network(inst, round_travel=True)
    d = net.edge(net.delivery_of[0])
    assert net.nodes[d.head].timestep == 4 + 2
    assert validate_network(net) == []


def test_fractional_eta_grid():
    ms = build_metric_space(2, [(0, 1, 1)])
    inst = Instance(ms, (Request(0, 0, 1, Fraction(1, 2), 1),), 1, (0,), eta=Fraction(1, 2),
                    horizon=3)
    net = build_network(inst)
    assert net.steps == 7
    assert validate_network(net) == []


def test_syn_sparse_scale_builds():
    ms = gen_erdos_renyi(60, 0.5, (10, 10000), seed=0)
    inst = gen_synthetic(ms, 30, k=10, seed=0)
    net = build_network(inst)
    assert validate_network(net) == []
    assert net.n_nodes == 60 * 1001 + 30 + 2


def test_dot_export():
    ms = build_metric_space(2, [(0, 1, 1)])
    net = build_network(Instance(ms, (Request(0, 0, 1, 0, 1),), 1, (0,), horizon=3))
    dot = net.to_dot()
    assert dot.startswith("digraph") and "P0/0/1" in dot and "delivery:1" in dot
