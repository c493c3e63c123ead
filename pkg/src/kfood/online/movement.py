"""Positions that may sit part-way along an edge, and idle drift toward R."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..metric import MetricSpace


@dataclass(frozen=True)
class EdgePoint:
    """A point ``offset`` distance units from ``u`` along the edge ``u -- v``."""

    u: int
    v: int
    offset: object
    weight: int

    def to_json(self):
        off = self.offset
        return [self.u, self.v, off if isinstance(off, int) else float(off)]


def normalise(u: int, v: int, offset, weight: int):
    if offset == 0:
        return u
    if offset == weight:
        return v
    return EdgePoint(u, v, offset, weight)


def distance(ms: MetricSpace, pos, x: int):
    """Shortest distance from ``pos`` (node or :class:`EdgePoint`) to node ``x``."""
    if isinstance(pos, EdgePoint):
        return min(pos.offset + ms.d(pos.u, x), (pos.weight - pos.offset) + ms.d(pos.v, x))
    return ms.d(pos, x)


def position_json(pos):
    return pos.to_json() if isinstance(pos, EdgePoint) else pos


class Attractor:
    """Nearest-target lookups for a fixed target set (ties go to the lowest id)."""

    def __init__(self, ms: MetricSpace, targets):
        self.ms = ms
        self.targets = np.array(sorted(targets), dtype=np.int64)
        if self.targets.size:
            sub = ms.dist[:, self.targets]
            self._near = self.targets[np.argmin(sub, axis=1)]
            self._near_d = sub.min(axis=1)

    def nearest(self, pos) -> tuple[int, object]:
        """``(target, distance)`` of the target closest to ``pos``."""
        if not self.targets.size:
            raise ValueError("empty target set")
        if isinstance(pos, EdgePoint):
            du = self.ms.dist[pos.u, self.targets]
            dv = self.ms.dist[pos.v, self.targets]
            if isinstance(pos.offset, int):
                cand = np.minimum(pos.offset + du, (pos.weight - pos.offset) + dv)
                j = int(np.argmin(cand))
                return int(self.targets[j]), int(cand[j])
            cand = [min(pos.offset + int(a), (pos.weight - pos.offset) + int(b))
                    for a, b in zip(du, dv)]
            j = min(range(len(cand)), key=cand.__getitem__)
            return int(self.targets[j]), cand[j]
        return int(self._near[pos]), int(self._near_d[pos])

    def step(self, pos, budget):
        """Advance ``pos`` by ``budget`` distance units toward its nearest target.

        The target is chosen from the current position; a position already on a
        target stays put. The walk may stop part-way along an edge.
        """
        if not self.targets.size:
            return pos
        target, gap = self.nearest(pos)
        if gap == 0:
            return pos
        ms = self.ms
        if isinstance(pos, EdgePoint):
            via_u = pos.offset + ms.d(pos.u, target)
            via_v = (pos.weight - pos.offset) + ms.d(pos.v, target)
            if via_u <= via_v:
                if budget < pos.offset:
                    return normalise(pos.u, pos.v, pos.offset - budget, pos.weight)
                budget -= pos.offset
                pos = pos.u
            else:
                rest = pos.weight - pos.offset
                if budget < rest:
                    return normalise(pos.u, pos.v, pos.offset + budget, pos.weight)
                budget -= rest
                pos = pos.v
        while pos != target and budget > 0:
            nxt = int(ms.next_hop[pos, target])
            w = ms.d(pos, nxt)
            if budget < w:
                return normalise(pos, nxt, budget, w)
            budget -= w
            pos = nxt
        return pos
