"""Graph-backed metric spaces with exact integer shortest-path distances."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, dijkstra

from .errors import DisconnectedGraph, EmptyInput, InvalidEdge, ParseError


@dataclass(frozen=True, eq=False)
class MetricSpace:
    """An m-point metric realised as shortest paths on a weighted graph.

    ``dist`` and ``next_hop`` are read-only ``int64`` arrays. ``next_hop[u, v]``
    is the neighbour of ``u`` on a shortest path to ``v`` (``u`` itself when
    ``u == v``).
    """

    node_count: int
    edges: tuple[tuple[int, int, int], ...]
    dist: np.ndarray
    next_hop: np.ndarray
    _weights: dict = field(repr=False, default_factory=dict)

    @property
    def m(self) -> int:
        return self.node_count

    def d(self, u: int, v: int) -> int:
        return int(self.dist[u, v])

    def edge_weight(self, u: int, v: int) -> int:
        """Weight of the lightest edge joining ``u`` and ``v``."""
        key = (u, v) if u < v else (v, u)
        try:
            return self._weights[key]
        except KeyError:
            raise InvalidEdge(f"no edge between {u} and {v}") from None

    def shortest_path(self, u: int, v: int) -> tuple[int, list[int]]:
        self._check_node(u)
        self._check_node(v)
        path = [u]
        while path[-1] != v:
            path.append(int(self.next_hop[path[-1], v]))
        return int(self.dist[u, v]), path

    def _check_node(self, u):
        if not (0 <= u < self.node_count):
            raise InvalidEdge(f"node id {u} out of range [0, {self.node_count})")

    def __eq__(self, other):
        if not isinstance(other, MetricSpace):
            return NotImplemented
        return (self.node_count == other.node_count
                and self.edges == other.edges)

    def __hash__(self):
        return hash((self.node_count, self.edges))

    # -- serialisation -------------------------------------------------

    def to_dict(self) -> dict:
        return {"nodes": self.node_count, "edges": [list(e) for e in self.edges]}

    @classmethod
    def from_dict(cls, doc, where="metric") -> MetricSpace:
        if not isinstance(doc, dict):
            raise ParseError("metric must be an object", where)
        try:
            nodes = doc["nodes"]
            edges = doc["edges"]
        except KeyError as exc:
            raise ParseError(f"missing field {exc.args[0]!r}", where) from None
        extra = set(doc) - {"nodes", "edges"}
        if extra:
            raise ParseError(f"unknown fields {sorted(extra)}", where)
        if not isinstance(nodes, int) or not isinstance(edges, list):
            raise ParseError("'nodes' must be an int and 'edges' a list", where)
        parsed = []
        for idx, e in enumerate(edges):
            if (not isinstance(e, list) or len(e) != 3
                    or not all(isinstance(x, int) and not isinstance(x, bool) for x in e)):
                raise ParseError("edge must be [u, v, w] of ints", f"{where}.edges[{idx}]")
            parsed.append(tuple(e))
        return build_metric_space(nodes, parsed)


def build_metric_space(node_count: int, edges) -> MetricSpace:
    """Validate ``edges`` and close them under shortest paths.

    Parallel edges collapse to the lightest one. Raises ``InvalidEdge`` for bad
    endpoints, self-loops or non-positive weights, ``DisconnectedGraph`` if some
    pair of nodes is not joined by any path.
    """
    if node_count < 1:
        raise InvalidEdge("node_count must be >= 1")
    weights: dict[tuple[int, int], int] = {}
    clean = []
    for u, v, w in edges:
        u, v, w = int(u), int(v), w
        if not (0 <= u < node_count and 0 <= v < node_count):
            raise InvalidEdge(f"edge ({u}, {v}) has an endpoint outside [0, {node_count})")
        if u == v:
            raise InvalidEdge(f"self-loop at node {u}")
        if int(w) != w or w <= 0:
            raise InvalidEdge(f"edge ({u}, {v}) has non-positive or non-integer weight {w}")
        w = int(w)
        clean.append((u, v, w))
        key = (u, v) if u < v else (v, u)
        if key not in weights or w < weights[key]:
            weights[key] = w

    if weights:
        rows, cols = zip(*weights)
        vals = list(weights.values())
    else:
        rows, cols, vals = (), (), ()
    graph = csr_matrix((vals, (rows, cols)), shape=(node_count, node_count))
    n_comp, _ = connected_components(graph, directed=False)
    if n_comp > 1:
        raise DisconnectedGraph(f"graph has {n_comp} connected components")

    dist_f, pred = dijkstra(graph, directed=False, return_predecessors=True)
    dist = np.rint(dist_f).astype(np.int64)
    # Undirected: predecessor of u on the tree rooted at v is u's next hop toward v.
    next_hop = pred.T.astype(np.int64)
    np.fill_diagonal(next_hop, np.arange(node_count))
    dist.setflags(write=False)
    next_hop.setflags(write=False)
    return MetricSpace(node_count, tuple(clean), dist, next_hop, weights)


def gen_erdos_renyi(n: int, p: float, weight_set=(10, 10000), seed=None) -> MetricSpace:
    """Connected G(n, p) graph with integer weights uniform on ``weight_set``.

    ``weight_set`` is an inclusive ``(low, high)`` range. While the sample is
    disconnected, an edge between two uniformly chosen nodes lying in different
    components is added (weight drawn from the same range).
    """
    if not (0 < p <= 1):
        raise ValueError("p must lie in (0, 1]")
    lo, hi = weight_set
    if lo > hi or lo <= 0:
        raise ValueError("weight range must be non-empty and positive")
    rng = np.random.default_rng(seed)
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(iu.size) < p
    us, vs = iu[keep], ju[keep]
    ws = rng.integers(lo, hi + 1, size=us.size)
    edges = [(int(u), int(v), int(w)) for u, v, w in zip(us, vs, ws)]

    while True:
        if edges:
            a, b, _ = zip(*edges)
        else:
            a, b = (), ()
        adj = csr_matrix((np.ones(len(a)), (a, b)), shape=(n, n))
        n_comp, labels = connected_components(adj, directed=False)
        if n_comp <= 1:
            break
        while True:
            u, v = (int(x) for x in rng.integers(0, n, size=2))
            if labels[u] != labels[v]:
                break
        edges.append((min(u, v), max(u, v), int(rng.integers(lo, hi + 1))))
    return build_metric_space(n, edges)


def gen_star(leaf_distances) -> MetricSpace:
    """Star with centre 0 and leaf ``j`` at distance ``leaf_distances[j-1]``."""
    ds = list(leaf_distances)
    if not ds:
        raise EmptyInput("star needs at least one leaf")
    return build_metric_space(len(ds) + 1, [(0, j + 1, d) for j, d in enumerate(ds)])


def load_graph(path) -> MetricSpace:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(exc.msg, f"{path}:{exc.lineno}:{exc.colno}") from None
    return MetricSpace.from_dict(doc, where=str(path))


def save_graph(ms: MetricSpace, path) -> None:
    with open(path, "w") as fh:
        json.dump(ms.to_dict(), fh)
