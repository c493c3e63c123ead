"""Requests, problem instances, generators and JSON/CSV persistence."""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property

import numpy as np

from .errors import ParseError, RangeExhausted, SchemaVersionMismatch
from .metric import MetricSpace, build_metric_space, gen_star

SCHEMA_VERSION = 1
_FIELDS = {"version", "metric", "k", "initial_positions", "eta", "horizon", "speed", "requests"}
_REQUEST_FIELDS = {"id", "source", "dest", "t_begin", "t_end"}


class SchemaDefaultWarning(UserWarning):
    """A missing optional field was filled with its documented default."""


def as_number(x):
    """Normalise a JSON scalar to ``int`` when integral, else ``Fraction``."""
    if isinstance(x, bool):
        raise TypeError("booleans are not numbers here")
    if isinstance(x, int):
        return x
    if isinstance(x, Fraction):
        return int(x) if x.denominator == 1 else x
    if isinstance(x, float):
        if x.is_integer():
            return int(x)
        return Fraction(str(x))
    raise TypeError(f"not a number: {x!r}")


def exact_div(a, b):
    """``a / b`` kept exact: an ``int`` when it divides, else a ``Fraction``."""
    if isinstance(a, int) and isinstance(b, int) and a % b == 0:
        return a // b
    q = Fraction(a) / Fraction(b)
    return int(q) if q.denominator == 1 else q


def to_json_number(x):
    if isinstance(x, Fraction):
        return int(x) if x.denominator == 1 else float(x)
    return x


@dataclass(frozen=True)
class Request:
    id: int
    source: int
    dest: int
    t_begin: int
    t_end: int

    @property
    def window(self):
        return self.t_end - self.t_begin


@dataclass(frozen=True)
class Violation:
    request_id: int | None
    reason: str


@dataclass(frozen=True)
class Instance:
    metric: MetricSpace
    requests: tuple[Request, ...]
    k: int
    initial_positions: tuple[int, ...]
    eta: int | Fraction = 1
    horizon: int = 0
    speed: int | Fraction = 1

    def __post_init__(self):
        object.__setattr__(self, "requests", tuple(self.requests))
        object.__setattr__(self, "initial_positions", tuple(int(p) for p in self.initial_positions))
        object.__setattr__(self, "eta", as_number(self.eta))
        object.__setattr__(self, "speed", as_number(self.speed))
        object.__setattr__(self, "horizon", as_number(self.horizon))

    @property
    def n(self) -> int:
        return len(self.requests)

    @cached_property
    def source_set(self) -> frozenset[int]:
        return frozenset(r.source for r in self.requests)

    def travel_time(self, u: int, v: int):
        """Exact travel time along a shortest path at the instance speed."""
        return exact_div(self.metric.d(u, v), self.speed)

    def request(self, rid: int) -> Request:
        return self._by_id[rid]

    @cached_property
    def _by_id(self):
        return {r.id: r for r in self.requests}


def validate(inst: Instance) -> list[Violation]:
    """Every invariant violation in ``inst``; an empty list means valid."""
    out = []
    m = inst.metric.node_count
    if inst.k < 1:
        out.append(Violation(None, "k must be positive"))
    if len(inst.initial_positions) != inst.k:
        out.append(Violation(None, f"{len(inst.initial_positions)} initial positions for k={inst.k}"))
    for p in inst.initial_positions:
        if not 0 <= p < m:
            out.append(Violation(None, f"initial position {p} is not a node"))
    if inst.eta <= 0:
        out.append(Violation(None, "eta must be positive"))
    if inst.speed <= 0:
        out.append(Violation(None, "speed must be positive"))

    seen_ids = set()
    seen_begin = set()
    seen_end = set()
    prev = None
    for r in inst.requests:
        if r.id in seen_ids:
            out.append(Violation(r.id, "duplicate request id"))
        seen_ids.add(r.id)
        nodes_ok = True
        for name, node in (("source", r.source), ("dest", r.dest)):
            if not 0 <= node < m:
                out.append(Violation(r.id, f"{name} {node} is not a node"))
                nodes_ok = False
        if r.t_end < r.t_begin:
            out.append(Violation(r.id, "window inverted"))
        if r.t_begin < 0:
            out.append(Violation(r.id, "begins before time 0"))
        if nodes_ok and r.t_end + inst.travel_time(r.source, r.dest) > inst.horizon:
            out.append(Violation(r.id, "exceeds horizon"))
        if prev is not None and r.t_begin < prev.t_begin:
            out.append(Violation(r.id, "requests not sorted by t_begin"))
        if r.t_begin in seen_begin:
            out.append(Violation(r.id, "arrival timestep not distinct"))
        if r.t_end in seen_end:
            out.append(Violation(r.id, "deadline timestep not distinct"))
        seen_begin.add(r.t_begin)
        seen_end.add(r.t_end)
        prev = r
    return out


# -- generators ---------------------------------------------------------------


def gen_synthetic(ms: MetricSpace, n_requests: int, horizon: int = 1000,
                  arrival_range=(100, 900), prep_range=(1, 100), k: int = 100,
                  seed=None, speed=1, eta=1, max_tries: int = 10_000) -> Instance:
    """Uniform synthetic workload over ``ms``.

    Sources and destinations are distinct uniform nodes; the preparation time
    ``t_end - t_begin`` is uniform on ``prep_range`` and both endpoints lie in
    ``arrival_range``. Colliding arrivals or deadlines and deliveries that would
    finish after ``horizon`` are resampled.
    """
    lo, hi = arrival_range
    plo, phi = prep_range
    if plo < 0 or plo > phi or lo > hi or hi > horizon:
        raise ValueError("inconsistent arrival/preparation ranges")
    if hi - lo + 1 < n_requests or hi - lo < plo:
        raise RangeExhausted(f"cannot place {n_requests} distinct arrivals in [{lo}, {hi}]")
    rng = np.random.default_rng(seed)
    m = ms.node_count
    begins, ends = set(), set()
    raw = []
    for _ in range(n_requests):
        for _ in range(max_tries):
            s = int(rng.integers(m))
            d = int(rng.integers(m))
            if s == d and m > 1:
                continue
            prep = int(rng.integers(plo, phi + 1))
            if hi - prep < lo:
                continue
            tb = int(rng.integers(lo, hi - prep + 1))
            te = tb + prep
            if tb in begins or te in ends:
                continue
            if te + exact_div(ms.d(s, d), as_number(speed)) > horizon:
                continue
            break
        else:
            raise RangeExhausted(f"no admissible request after {max_tries} draws")
        begins.add(tb)
        ends.add(te)
        raw.append((tb, te, s, d))
    raw.sort()
    reqs = tuple(Request(i, s, d, tb, te) for i, (tb, te, s, d) in enumerate(raw))
    positions = tuple(int(x) for x in rng.integers(0, m, size=k))
    return Instance(ms, reqs, k, positions, eta=eta, horizon=horizon, speed=speed)


def gen_tiny(seed, max_nodes: int = 6, max_requests: int = 5, max_servers: int = 2,
             horizon: int = 30, max_weight: int = 5) -> Instance:
    """Small random instance for exhaustive cross-checks.

    Node count, request count and server count are drawn uniformly up to the
    given maxima; the graph is a random spanning tree plus random chords.
    """
    rng = np.random.default_rng(seed)
    m = int(rng.integers(2, max_nodes + 1))
    n = int(rng.integers(1, max_requests + 1))
    k = int(rng.integers(1, max_servers + 1))
    edges = [(int(rng.integers(v)), v, int(rng.integers(1, max_weight + 1))) for v in range(1, m)]
    for u in range(m):
        for v in range(u + 1, m):
            if rng.random() < 0.3:
                edges.append((u, v, int(rng.integers(1, max_weight + 1))))
    ms = build_metric_space(m, edges)
    reqs = []
    begins, ends = set(), set()
    while len(reqs) < n:
        s, d = (int(x) for x in rng.choice(m, size=2, replace=False))
        tb = int(rng.integers(0, horizon // 2))
        te = tb + int(rng.integers(0, 8))
        if tb in begins or te in ends or te + ms.d(s, d) > horizon:
            continue
        begins.add(tb)
        ends.add(te)
        reqs.append((tb, te, s, d))
    reqs.sort()
    requests = tuple(Request(i, s, d, tb, te) for i, (tb, te, s, d) in enumerate(reqs))
    positions = tuple(int(x) for x in rng.integers(0, m, size=k))
    return Instance(ms, requests, k, positions, eta=1, horizon=horizon, speed=1)


def gen_partition_instance(d_values, k: int, slack: int = 1) -> Instance:
    """Star-metric instance built from a number-partitioning multiset.

    All servers start at the centre; request ``j`` goes from the centre to leaf
    ``j+1``. Windows last ``max(d) + slack`` and consecutive arrivals are
    ``2*max(d) + slack`` apart, so a server parked at any leaf can always get
    back to the centre in time for the next request.
    """
    ds = [int(x) for x in d_values]
    if k < 1:
        raise ValueError("k must be >= 1")
    if slack < 0:
        raise ValueError("slack must be >= 0")
    ms = gen_star(ds)
    dmax = max(ds)
    gap = 2 * dmax + slack
    width = dmax + slack
    reqs = tuple(Request(j, 0, j + 1, j * gap, j * gap + width) for j in range(len(ds)))
    horizon = reqs[-1].t_end + dmax
    return Instance(ms, reqs, k, (0,) * k, eta=1, horizon=horizon, speed=1)


# -- persistence -------------------------------------------------------------


def instance_to_dict(inst: Instance) -> dict:
    return {
        "version": SCHEMA_VERSION,
        "metric": inst.metric.to_dict(),
        "k": inst.k,
        "initial_positions": list(inst.initial_positions),
        "eta": to_json_number(inst.eta),
        "horizon": to_json_number(inst.horizon),
        "speed": to_json_number(inst.speed),
        "requests": [
            {"id": r.id, "source": r.source, "dest": r.dest,
             "t_begin": to_json_number(r.t_begin), "t_end": to_json_number(r.t_end)}
            for r in inst.requests
        ],
    }


def save_instance(inst: Instance, sink) -> None:
    """Write ``inst`` as JSON to a path or a text file object."""
    doc = instance_to_dict(inst)
    if hasattr(sink, "write"):
        json.dump(doc, sink, indent=1)
    else:
        with open(sink, "w") as fh:
            json.dump(doc, fh, indent=1)


def instance_from_dict(doc, where="<instance>") -> Instance:
    if not isinstance(doc, dict):
        raise ParseError("instance document must be an object", where)
    if "version" not in doc:
        raise ParseError("missing field 'version'", where)
    if doc["version"] != SCHEMA_VERSION:
        raise SchemaVersionMismatch(
            f"schema version {doc['version']!r}, expected {SCHEMA_VERSION}", where)
    unknown = set(doc) - _FIELDS
    if unknown:
        raise ParseError(f"unknown fields {sorted(unknown)}", where)
    for name in ("metric", "k", "initial_positions", "eta", "horizon", "requests"):
        if name not in doc:
            raise ParseError(f"missing field {name!r}", where)
    if "speed" not in doc:
        warnings.warn(f"{where}: 'speed' missing, defaulting to 1", SchemaDefaultWarning, stacklevel=3)
    metric = MetricSpace.from_dict(doc["metric"], f"{where}.metric")
    reqs = []
    for idx, rd in enumerate(doc["requests"]):
        loc = f"{where}.requests[{idx}]"
        if not isinstance(rd, dict):
            raise ParseError("request must be an object", loc)
        if set(rd) != _REQUEST_FIELDS:
            raise ParseError(f"request fields must be exactly {sorted(_REQUEST_FIELDS)}", loc)
        try:
            reqs.append(Request(int(rd["id"]), int(rd["source"]), int(rd["dest"]),
                                as_number(rd["t_begin"]), as_number(rd["t_end"])))
        except (TypeError, ValueError) as exc:
            raise ParseError(str(exc), loc) from None
    try:
        return Instance(metric, tuple(reqs), int(doc["k"]),
                        tuple(int(p) for p in doc["initial_positions"]),
                        eta=as_number(doc["eta"]), horizon=as_number(doc["horizon"]),
                        speed=as_number(doc.get("speed", 1)))
    except (TypeError, ValueError) as exc:
        raise ParseError(str(exc), where) from None


def load_instance(source) -> Instance:
    """Read an instance from a path or a text file object."""
    if hasattr(source, "read"):
        text, where = source.read(), getattr(source, "name", "<stream>")
    else:
        with open(source) as fh:
            text, where = fh.read(), str(source)
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, f"{where}:{exc.lineno}:{exc.colno}") from None
    return instance_from_dict(doc, where)


CSV_COLUMNS = ("order_id", "source_node", "dest_node", "arrival_ts", "pickup_deadline_ts")


def ingest_csv(path, metric: MetricSpace, k: int, initial_positions=None, seed=None,
               eta=1, speed=1, horizon=None) -> Instance:
    """Map a delivery trace onto an :class:`Instance`.

    Orders whose arrival collides with an earlier one are shifted forward by
    ``eta`` (window and all) until the arrival is free. Without explicit
    ``initial_positions`` the servers are placed uniformly at random.
    """
    eta, speed = as_number(eta), as_number(speed)
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(CSV_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ParseError(f"missing columns {sorted(missing)}", str(path))
        for lineno, row in enumerate(reader, start=2):
            try:
                rows.append((as_number(float(row["arrival_ts"])),
                             as_number(float(row["pickup_deadline_ts"])),
                             int(row["order_id"]), int(row["source_node"]), int(row["dest_node"])))
            except (TypeError, ValueError) as exc:
                raise ParseError(str(exc), f"{path}:{lineno}") from None
    rows.sort()
    taken = set()
    reqs = []
    for tb, te, oid, s, d in rows:
        while tb in taken:
            tb += eta
            te += eta
        taken.add(tb)
        reqs.append(Request(oid, s, d, tb, te))
    if horizon is None:
        last = max((r.t_end + exact_div(metric.d(r.source, r.dest), speed) for r in reqs), default=0)
        horizon = as_number(math.ceil(Fraction(last) / Fraction(eta)) * Fraction(eta))
    if initial_positions is None:
        rng = np.random.default_rng(seed)
        initial_positions = tuple(int(x) for x in rng.integers(0, metric.node_count, size=k))
    return Instance(metric, tuple(reqs), k, tuple(initial_positions), eta=eta,
                    horizon=horizon, speed=speed)
