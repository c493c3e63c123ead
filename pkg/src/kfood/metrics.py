"""Fairness and efficiency summaries of per-server rewards."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from fractions import Fraction
from numbers import Integral

DEFAULT_CUT = 0.25


@dataclass(frozen=True)
class Metrics:
    unserved: int
    cost: float | Fraction
    min_reward: float | int
    zero_reward_count: int
    rewards: tuple

    def as_row(self) -> dict:
        return {"unserved": self.unserved, "cost": fmt(self.cost),
                "min_reward": fmt(self.min_reward), "zero_count": self.zero_reward_count}


def fmt(x) -> str:
    """Stable text form: integers bare, everything else to 6 decimals."""
    if isinstance(x, Integral) or (isinstance(x, Fraction) and x.denominator == 1):
        return str(int(x))
    return f"{float(x):.6f}"


def evaluate(rewards, unserved: int) -> Metrics:
    """Summarise a reward vector. The mean runs over every server, idle ones included."""
    rewards = list(rewards)
    if not rewards:
        raise ValueError("need at least one server")
    if any(r < 0 for r in rewards):
        raise ValueError("rewards must be non-negative")
    if all(isinstance(r, (Integral, Fraction)) for r in rewards):
        cost = Fraction(sum(rewards), len(rewards))
        if cost.denominator == 1:
            cost = int(cost)
    else:
        cost = float(sum(rewards)) / len(rewards)
    return Metrics(unserved=int(unserved), cost=cost, min_reward=min(rewards),
                   zero_reward_count=sum(1 for r in rewards if r == 0),
                   rewards=tuple(sorted(rewards)))


def lorenz_curve(rewards, percentile_cut: float | None = DEFAULT_CUT) -> list[tuple[float, float]]:
    """Points ``(i/k, share held by the poorest i servers)`` for ``i = 1..k``.

    With ``percentile_cut`` set only points whose population share does not
    exceed the cut are returned; pass ``None`` for the full curve. A zero total
    yields the line of equality.
    """
    xs = sorted(rewards)
    k = len(xs)
    if k == 0:
        raise ValueError("need at least one server")
    total = sum(xs)
    pts = []
    acc = 0
    for i, x in enumerate(xs, start=1):
        acc += x
        share = i / k if total == 0 else float(Fraction(acc) / Fraction(total)) \
            if isinstance(total, (Integral, Fraction)) else acc / total
        pts.append((i / k, share))
    if percentile_cut is not None:
        pts = [p for p in pts if p[0] <= percentile_cut + 1e-12]
    return pts


def metrics_csv(m: Metrics) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["metric", "value"])
    for key, val in m.as_row().items():
        w.writerow([key, val])
    return buf.getvalue()


def lorenz_csv(points) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["pop_share", "reward_share"])
    for a, b in points:
        w.writerow([f"{a:.6f}", f"{b:.6f}"])
    return buf.getvalue()
