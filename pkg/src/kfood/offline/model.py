"""Max-min (and min-cost) MILP over a time-expanded network."""

from __future__ import annotations

import enum
import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix

from ..errors import InvalidParameter
from ..flownet import TimeExpandedNetwork


class Objective(enum.Enum):
    MAXMIN = "maxmin"
    MINCOST = "mincost"


class InitialMode(enum.Enum):
    FREE = "free"
    FIXED = "fixed"


def default_penalty(net: TimeExpandedNetwork) -> float:
    """A per-request penalty no achievable reward gain can outweigh."""
    inst = net.instance
    delivered = sum(inst.metric.d(r.source, r.dest) for r in inst.requests)
    diameter = int(inst.metric.dist.max()) if inst.metric.node_count > 1 else 0
    return float(1 + delivered + diameter * inst.n)


@dataclass(eq=False)
class MilpModel:
    """A MILP in row form.

    Variables are laid out as: flows (edge-major, ``servers_per_edge`` per
    edge), then one ``z`` per request, then (max-min only) ``m_i`` per server
    and ``M``. ``sense`` is ``"max"`` or ``"min"``; rows read
    ``A[r] . x  (row_sense[r])  rhs[r]``.
    """

    net: TimeExpandedNetwork
    k: int
    penalty: float
    alpha: float | None
    objective: Objective
    initial_mode: InitialMode
    literal_two_sided: bool
    names: list[str]
    lb: np.ndarray
    ub: np.ndarray
    c: np.ndarray
    integer: np.ndarray
    sense: str
    A: csr_matrix
    row_sense: list[str]
    rhs: np.ndarray
    row_names: list[str]
    infeas_vars: dict[int, int]
    reward_vars: dict[int, int] = field(default_factory=dict)
    minreward_var: int | None = None

    @property
    def servers_per_edge(self) -> int:
        return self.k if self.objective is Objective.MAXMIN else 1

    @property
    def n_vars(self) -> int:
        return len(self.names)

    @property
    def n_rows(self) -> int:
        return len(self.row_names)

    def flow_var(self, edge: int, server: int | None = None) -> int:
        if self.objective is Objective.MINCOST:
            return edge
        return edge * self.k + server

    @property
    def flow_vars(self) -> dict[tuple[int, int | None], int]:
        if self.objective is Objective.MINCOST:
            return {(e, None): e for e in range(self.net.n_edges)}
        return {(e, i): e * self.k + i for e in range(self.net.n_edges) for i in range(self.k)}

    @property
    def name_index(self) -> dict[str, int]:
        if not hasattr(self, "_name_index"):
            self._name_index = {nm: i for i, nm in enumerate(self.names)}
        return self._name_index


class _Rows:
    def __init__(self):
        self.ri, self.ci, self.vals = [], [], []
        self.sense, self.rhs, self.names = [], [], []

    def add(self, name, terms, sense, rhs):
        r = len(self.names)
        for col, val in terms:
            self.ri.append(r)
            self.ci.append(col)
            self.vals.append(val)
        self.names.append(name)
        self.sense.append(sense)
        self.rhs.append(rhs)

    def matrix(self, n_cols):
        A = csr_matrix((self.vals, (self.ri, self.ci)), shape=(len(self.names), n_cols))
        A.sum_duplicates()
        return A


def build_flow_milp(net: TimeExpandedNetwork, k: int | None = None, penalty: float | None = None,
                    objective: Objective | str = Objective.MAXMIN, alpha: float | None = None,
                    initial_mode: InitialMode | str = InitialMode.FREE,
                    literal_two_sided: bool = False) -> MilpModel:
    """Build the flow MILP over ``net``.

    ``alpha`` adds the two-sided row bounding total server reward by ``alpha``
    times the cost-weighted delivered flow; ``literal_two_sided`` instead adds
    one unweighted row per request. ``initial_mode="fixed"`` pins the source
    outflow to the instance's initial positions (with multiplicity).
    """
    inst = net.instance
    k = inst.k if k is None else k
    objective = Objective(objective)
    initial_mode = InitialMode(initial_mode)
    if k < 1:
        raise InvalidParameter("k must be >= 1")
    penalty = default_penalty(net) if penalty is None else float(penalty)
    if not penalty > 0 or not math.isfinite(penalty):
        raise InvalidParameter("penalty must be positive and finite")
    if alpha is not None:
        if objective is Objective.MINCOST:
            raise InvalidParameter("alpha applies to the max-min objective only")
        if not alpha > 0:
            raise InvalidParameter("alpha must be positive")
        if math.isinf(alpha):
            alpha = None
    if initial_mode is InitialMode.FIXED and len(inst.initial_positions) != k:
        raise InvalidParameter("fixed mode needs one initial position per server")

    E = net.n_edges
    K = k if objective is Objective.MAXMIN else 1
    n_flow = E * K
    names = []
    if objective is Objective.MAXMIN:
        names.extend(f"f_e{e}_s{i}" for e in range(E) for i in range(k))
    else:
        names.extend(f"f_e{e}" for e in range(E))
    infeas_vars = {}
    for r in inst.requests:
        infeas_vars[r.id] = len(names)
        names.append(f"z_r{r.id}")
    reward_vars, minreward_var = {}, None
    if objective is Objective.MAXMIN:
        for i in range(k):
            reward_vars[i] = len(names)
            names.append(f"m_s{i}")
        minreward_var = len(names)
        names.append("M")

    nv = len(names)
    lb = np.zeros(nv)
    ub = np.ones(nv)
    if objective is Objective.MINCOST:
        ub[:n_flow] = k
    integer = np.zeros(nv, dtype=bool)
    for v in infeas_vars.values():
        integer[v] = True
    for v in reward_vars.values():
        lb[v], ub[v] = 0.0, np.inf
    if minreward_var is not None:
        lb[minreward_var], ub[minreward_var] = -np.inf, np.inf

    cost = net.cost.astype(float)
    c = np.zeros(nv)
    if objective is Objective.MAXMIN:
        c[minreward_var] = 1.0
        for v in infeas_vars.values():
            c[v] = -penalty
        sense = "max"
    else:
        c[:E] = cost
        for v in infeas_vars.values():
            c[v] = penalty
        sense = "min"

    def fv(e, i):
        return e * K + i

    rows = _Rows()
    servers = range(K)
    src_edges = net.out_edges[net.SOURCE]
    snk_edges = net.in_edges[net.SINK]

    if objective is Objective.MAXMIN:
        for i in range(k):
            terms = [(reward_vars[i], 1.0)]
            terms += [(fv(e, i), -cost[e]) for e in range(E) if cost[e] != 0]
            rows.add(f"reward_s{i}", terms, "=", 0.0)
        for i in range(k):
            rows.add(f"minreward_s{i}", [(minreward_var, 1.0), (reward_vars[i], -1.0)], "<=", 0.0)

    for r in inst.requests:
        pid = net.pickup_of[r.id]
        rows.add(f"cap_r{r.id}", [(fv(e, i), 1.0) for e in net.in_edges[pid] for i in servers],
                 "<=", 1.0)
    for r in inst.requests:
        e = net.delivery_of[r.id]
        rows.add(f"serve_r{r.id}", [(infeas_vars[r.id], 1.0)] + [(fv(e, i), 1.0) for i in servers],
                 "=", 1.0)

    for v in range(2, net.n_nodes):
        outs, ins = net.out_edges[v], net.in_edges[v]
        for i in servers:
            terms = [(fv(e, i), 1.0) for e in outs] + [(fv(e, i), -1.0) for e in ins]
            suffix = f"_s{i}" if objective is Objective.MAXMIN else ""
            rows.add(f"flow_n{v}{suffix}", terms, "=", 0.0)

    rows.add("src_total", [(fv(e, i), 1.0) for e in src_edges for i in servers], "=", float(k))
    rows.add("snk_total", [(fv(e, i), 1.0) for e in snk_edges for i in servers], "=", float(k))
    if objective is Objective.MAXMIN:
        for i in range(k):
            rows.add(f"src_s{i}", [(fv(e, i), 1.0) for e in src_edges], "=", 1.0)

    if initial_mode is InitialMode.FIXED:
        mult = Counter(inst.initial_positions)
        for e in src_edges:
            loc = net.nodes[net.head[e]].location
            if loc in mult:
                rows.add(f"init_p{loc}", [(fv(e, i), 1.0) for i in servers], "=", float(mult[loc]))
            else:
                for i in servers:
                    ub[fv(e, i)] = 0.0

    if alpha is not None:
        if literal_two_sided:
            for r in inst.requests:
                e = net.delivery_of[r.id]
                terms = [(reward_vars[i], 1.0) for i in range(k)]
                terms += [(fv(e, i), -alpha) for i in servers]
                rows.add(f"two_sided_r{r.id}", terms, "<=", 0.0)
        else:
            terms = [(reward_vars[i], 1.0) for i in range(k)]
            for r in inst.requests:
                e = net.delivery_of[r.id]
                if cost[e] != 0:
                    terms += [(fv(e, i), -alpha * cost[e]) for i in servers]
            rows.add("two_sided", terms, "<=", 0.0)

    return MilpModel(
        net=net, k=k, penalty=penalty, alpha=alpha, objective=objective,
        initial_mode=initial_mode, literal_two_sided=literal_two_sided,
        names=names, lb=lb, ub=ub, c=c, integer=integer, sense=sense,
        A=rows.matrix(nv), row_sense=rows.sense, rhs=np.asarray(rows.rhs, dtype=float),
        row_names=rows.names, infeas_vars=infeas_vars, reward_vars=reward_vars,
        minreward_var=minreward_var)


def size_bounds(net: TimeExpandedNetwork, k: int) -> tuple[int, int]:
    """Upper bounds on (variables, rows) of the max-min model implied by the construction."""
    inst = net.instance
    m, n, steps = inst.metric.node_count, inst.n, net.steps
    max_edges = m * (steps - 1) + 2 * m + n * m + n
    max_nodes = m * steps + n + 2
    n_vars = k * max_edges + n + k + 1
    n_rows = k * (max_nodes - 2) + 2 * n + 3 * k + 2 + m + n
    return n_vars, n_rows
