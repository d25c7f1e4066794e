"""Brute-force reference implementations used only by the tests.

They share no code with the package. Each one is re-derived from the
definitions by exhaustive search.
"""

from __future__ import annotations

import math
from fractions import Fraction
from functools import lru_cache
from itertools import product


def compositions(total: int, parts: int):
    if parts == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in compositions(total - first, parts - 1):
            yield (first,) + rest


def rounding(r: Fraction, delta: Fraction) -> set[int]:
    """All t with t-1+delta <= r <= t+delta, t >= 0 (the set-valued rule)."""
    out = set()
    for t in range(0, math.floor(r) + 3):
        if t == 0:
            if r <= delta:
                out.add(0)
        elif t - 1 + delta <= r <= t + delta:
            out.add(t)
    return out


def stationary_set(pops, house, delta) -> set[tuple[int, ...]]:
    """Every x summing to H with some positive multiplier rounding onto it."""
    delta = Fraction(delta)
    cands = {Fraction(t, 1) + delta for t in range(house + 1)}
    lams = sorted({c / p for c in cands for p in pops if c / p > 0})
    # midpoints cover open multiplier intervals that contain no line value
    lams += [(a + b) / 2 for a, b in zip(lams, lams[1:])] + [lams[0] / 2]
    found = set()
    for lam in lams:
        options = [sorted(rounding(lam * p, delta)) for p in pops]
        for x in product(*options):
            if sum(x) == house:
                found.add(x)
    return found


def signpost_squared_hill(t: int) -> int:
    return t * (t + 1)


def hill_set(pops, house) -> set[tuple[int, ...]]:
    """Huntington-Hill by exhaustive search: x is valid iff some lam fits all signposts.

    Uses squared values: s(x_i - 1)^2 <= lam^2 p_i^2 <= s(x_i)^2.
    """
    found = set()
    for x in compositions(house, len(pops)):
        lo = max(Fraction(signpost_squared_hill(xi - 1), p * p) if xi > 0 else Fraction(0) for xi, p in zip(x, pops))
        hi = min(Fraction(signpost_squared_hill(xi), p * p) for xi, p in zip(x, pops))
        if 0 in x:
            continue
        if lo <= hi and hi > 0:
            found.add(x)
    return found


def hamilton_set(pops, house) -> set[tuple[int, ...]]:
    total = sum(pops)
    q = [Fraction(p * house, total) for p in pops]
    floors = [math.floor(x) for x in q]
    left = house - sum(floors)
    rem = [x - f for x, f in zip(q, floors)]
    best = set()
    for bumped in product((0, 1), repeat=len(pops)):
        if sum(bumped) != left:
            continue
        chosen = [r for r, b in zip(rem, bumped) if b]
        others = [r for r, b in zip(rem, bumped) if not b]
        if not chosen or not others or min(chosen) >= max(others):
            best.add(tuple(f + b for f, b in zip(floors, bumped)))
    return best


def level_outcome_set(pops, house, delta):
    """Outcome at delta from sorting every line value (no reduction)."""
    values = sorted((Fraction(t) + delta) / p for p in pops for t in range(house))
    return values[house - 1]


def quota_sequences_reach(pops, house, horizon):
    """A(x, house) over all feasible seat sequences of length ``horizon``.

    Plain recursion over prefixes with memoized completability.
    """
    total = sum(pops)
    n = len(pops)

    def ok(y, t):
        return all(math.floor(Fraction(t * p, total)) <= yi <= math.ceil(Fraction(t * p, total)) for yi, p in zip(y, pops))

    @lru_cache(maxsize=None)
    def completable(y, t):
        if t == horizon:
            return True
        for i in range(n):
            z = y[:i] + (y[i] + 1,) + y[i + 1:]
            if ok(z, t + 1) and completable(z, t + 1):
                return True
        return False

    layer = {tuple([0] * n)}
    for t in range(house):
        nxt = set()
        for y in layer:
            for i in range(n):
                z = y[:i] + (y[i] + 1,) + y[i + 1:]
                if ok(z, t + 1) and completable(z, t + 1):
                    nxt.add(z)
        layer = nxt
    return layer
