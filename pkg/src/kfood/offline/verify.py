"""Constraint residuals recomputed from a solution and its network.

Deliberately written against the network alone: nothing here reads the
model's constraint matrix or touches the LP machinery, so a bug in row
construction or in the solver cannot hide itself.
"""

from __future__ import annotations

from collections import Counter, defaultdict

from ..flownet import EdgeKind, NodeKind
from .model import InitialMode, Objective


def residuals(sol) -> dict[str, float]:
    """Largest violation of each constraint family, keyed by a short name.

    ``bounds``/``binary`` cover variable domains, ``reward`` m_i = sum f c,
    ``minreward`` M <= m_i, ``cap`` pickup inflow <= 1, ``serve`` z + f = 1,
    ``conservation`` per-server balance, ``servers`` source/sink totals of k
    (and one unit per server), ``init`` fixed initial multiplicities,
    ``two_sided`` the alpha row(s).
    """
    model = sol.model
    net = model.net
    inst = net.instance
    k = model.k
    maxmin = model.objective is Objective.MAXMIN
    servers = list(range(k)) if maxmin else [None]
    cap = 1.0 if maxmin else float(k)

    flow = defaultdict(float)
    for key, v in sol.flows.items():
        flow[key] = v
    z = {rid: float(sol.x[v]) for rid, v in model.infeas_vars.items()}

    res = Counter()

    def note(name, value):
        res[name] = max(res[name], abs(value))

    for (e, i), v in flow.items():
        note("bounds", min(0.0, v))
        note("bounds", max(0.0, v - cap))
    for rid, v in z.items():
        note("binary", min(abs(v), abs(v - 1.0)))

    kinds = net.kind
    costs = net.cost
    edges_by_req_in = defaultdict(list)
    for e in range(net.n_edges):
        if kinds[e] == EdgeKind.APPROACH:
            edges_by_req_in[int(net.req[e])].append(e)

    if maxmin:
        m = sol.rewards
        recomputed = defaultdict(float)
        for (e, i), v in flow.items():
            recomputed[i] += v * float(costs[e])
        for i in range(k):
            note("reward", m.get(i, 0.0) - recomputed[i])
            note("minreward", max(0.0, sol.min_reward - m.get(i, 0.0)))

    for r in inst.requests:
        inflow = sum(flow[(e, i)] for e in edges_by_req_in[r.id] for i in servers)
        note("cap", max(0.0, inflow - 1.0))
        de = next(e for e in range(net.n_edges)
                  if kinds[e] == EdgeKind.DELIVERY and net.req[e] == r.id)
        note("serve", z[r.id] + sum(flow[(de, i)] for i in servers) - 1.0)

    balance = defaultdict(float)
    for (e, i), v in flow.items():
        balance[(int(net.tail[e]), i)] += v
        balance[(int(net.head[e]), i)] -= v
    src_out = defaultdict(float)
    snk_in = defaultdict(float)
    for (node, i), b in balance.items():
        kind = net.nodes[node].kind
        if kind == NodeKind.SOURCE:
            src_out[i] += b
        elif kind == NodeKind.SINK:
            snk_in[i] -= b
        else:
            note("conservation", b)
    note("servers", sum(src_out.values()) - k)
    note("servers", sum(snk_in.values()) - k)
    if maxmin:
        for i in servers:
            note("servers", src_out[i] - 1.0)

    if model.initial_mode is InitialMode.FIXED:
        want = Counter(inst.initial_positions)
        got = defaultdict(float)
        for (e, i), v in flow.items():
            if kinds[e] == EdgeKind.SOURCE_LINK:
                got[net.nodes[net.head[e]].location] += v
        for loc in set(want) | set(got):
            note("init", got[loc] - want.get(loc, 0))

    if maxmin and model.alpha is not None:
        total = sum(sol.rewards.values())
        delivered = {}
        for e in range(net.n_edges):
            if kinds[e] == EdgeKind.DELIVERY:
                delivered[int(net.req[e])] = (float(costs[e]),
                                              sum(flow[(e, i)] for i in servers))
        if model.literal_two_sided:
            for c, f in delivered.values():
                note("two_sided", max(0.0, total - model.alpha * f))
        else:
            rhs = model.alpha * sum(c * f for c, f in delivered.values())
            note("two_sided", max(0.0, total - rhs))
    return dict(res)


def max_residual(sol) -> float:
    return max(residuals(sol).values(), default=0.0)
