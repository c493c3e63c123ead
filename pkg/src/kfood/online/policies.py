"""Server-selection rules. Each takes the eligible server ids and current rewards."""

from __future__ import annotations

from collections.abc import Mapping


def policy_greedy_min(eligibles, rewards) -> int:
    """Eligible server with the smallest reward; ties go to the lowest id."""
    return min(eligibles, key=lambda i: (rewards[i], i))


def policy_doc4food(eligibles_by_virtual, rewards) -> int:
    # Eligibility was decided on virtual positions; the choice itself is greedy.
    return policy_greedy_min(eligibles_by_virtual, rewards)


def random_weights(eligibles, rewards) -> list[float]:
    """Normalised ``2**-x`` weights, shifted by the smallest eligible reward."""
    base = min(rewards[i] for i in eligibles)
    raw = [2.0 ** -float(rewards[i] - base) for i in eligibles]
    total = sum(raw)
    return [w / total for w in raw]


def policy_random(eligibles, rewards, rng) -> int:
    """Sample server ``i`` with probability proportional to ``2**-x_i``.

    ``rng`` is a :class:`numpy.random.Generator`; exactly one uniform draw is
    consumed per call.
    """
    eligibles = list(eligibles)
    probs = random_weights(eligibles, rewards)
    u = rng.random()
    acc = 0.0
    for i, p in zip(eligibles, probs):
        acc += p
        if u < acc:
            return i
    return eligibles[-1]


def policy_min_delta(eligibles, rewards, gains) -> int:
    """Server whose assignment leaves the smallest max-min reward spread.

    ``gains`` is the reward the request would pay, either one number or a
    mapping from server id to that server's payout. Ties go to the lowest id.
    """
    best, best_spread = None, None
    k = len(rewards)
    for i in sorted(eligibles):
        g = gains[i] if isinstance(gains, Mapping) else gains
        hi = lo = rewards[i] + g
        for j in range(k):
            if j != i:
                x = rewards[j]
                if x > hi:
                    hi = x
                elif x < lo:
                    lo = x
        spread = hi - lo
        if best_spread is None or spread < best_spread:
            best, best_spread = i, spread
    return best


def policy_round_robin(eligibles, cursor: int, k: int) -> tuple[int, int]:
    """First eligible id at or after ``cursor`` (cyclically); returns ``(id, new cursor)``."""
    pool = set(eligibles)
    for step in range(k):
        i = (cursor + step) % k
        if i in pool:
            return i, (i + 1) % k
    raise ValueError("no eligible server")
