"""House-monotone, quota-compliant seat sequences.

A seat sequence hands out seats one at a time. It is feasible up to a horizon
when every prefix allocation stays within the floor and ceiling of the
proportional share at that prefix length. Reach layers hold, for each prefix
length, the distinct allocations that some feasible sequence of the full
horizon passes through. The lookahead horizon ``phi`` and both enumerators of
reachable apportionments are built on them. The proportional seat schedule is
split exactly into a convex combination of seat sequences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

import numpy as np

from .core import Instance, ResourceCapExceeded, ValidationError, rat_str
from .random import TWO64, _draw_u64, _generator

DEFAULT_MAX_NODES = 2_000_000
DEFAULT_MAX_HORIZON = 512

Vector = tuple[int, ...]


@dataclass(frozen=True)
class SeatSequence:
    """Seat ``t + 1`` goes to state ``assign[t]``."""

    assign: tuple[int, ...]
    n: int

    @property
    def horizon(self) -> int:
        return len(self.assign)

    def allocation(self, house: int) -> Vector:
        out = [0] * self.n
        for i in self.assign[:house]:
            out[i] += 1
        return tuple(out)

    def is_feasible(self, inst: Instance) -> bool:
        y = [0] * self.n
        for t, i in enumerate(self.assign, start=1):
            y[i] += 1
            if not all(lo <= v <= hi for v, (lo, hi) in zip(y, _bounds(inst.populations, t))):
                return False
        return True


@lru_cache(maxsize=65536)
def _bounds(pops: tuple[int, ...], t: int) -> tuple[tuple[int, int], ...]:
    total = sum(pops)
    return tuple((p * t // total, -(-p * t // total)) for p in pops)


def _within(y: Sequence[int], bounds) -> bool:
    return all(lo <= v <= hi for v, (lo, hi) in zip(y, bounds))


def _successors(pops: tuple[int, ...], y: Vector, t: int) -> list[Vector]:
    """Allocations at ``t + 1`` reachable from ``y`` by one feasible seat, in state order."""
    bounds = _bounds(pops, t + 1)
    # every other state keeps its count, so they must already fit the next bounds
    short = [i for i, (v, (lo, _)) in enumerate(zip(y, bounds)) if v < lo]
    if len(short) > 1:
        return []
    out = []
    for i in short or range(len(y)):
        z = y[:i] + (y[i] + 1,) + y[i + 1 :]
        if _within(z, bounds):
            out.append(z)
    return out


def reach_layers(inst: Instance, horizon: int, max_nodes: int = DEFAULT_MAX_NODES) -> list[frozenset[Vector]]:
    """Layer ``t`` holds every ``A(x, t)`` for feasible sequences ``x`` of length ``horizon``."""
    pops = inst.populations
    forward = [{(0,) * inst.n}]
    nodes = 1
    for t in range(horizon):
        nxt = {z for y in forward[-1] for z in _successors(pops, y, t)}
        nodes += len(nxt)
        if nodes > max_nodes:
            raise ResourceCapExceeded(f"reach layers exceed {max_nodes} nodes")
        forward.append(nxt)
    layers = [frozenset(forward[-1])]
    for t in range(horizon - 1, -1, -1):
        alive = layers[-1]
        layers.append(frozenset(y for y in forward[t] if any(z in alive for z in _successors(pops, y, t))))
    layers.reverse()
    if not layers[0]:
        raise AssertionError("no feasible seat sequence; quota-compliant house-monotone methods always exist")
    return layers


def _check_state(inst: Instance, house: int, y: Sequence[int]) -> Vector:
    y = tuple(int(v) for v in y)
    if len(y) != inst.n or sum(y) != house or not _within(y, _bounds(inst.populations, house)):
        raise ValidationError("allocation must sum to the house size and respect quota bounds")
    return y


def _demand(pops: tuple[int, ...], house: int, y: Vector, k: int) -> tuple[int, frozenset[int]]:
    total = sum(pops)
    short = frozenset(i for i, (p, v) in enumerate(zip(pops, y)) if p * (house + k) // total > v)
    return sum(pops[i] * (house + k) // total - y[i] for i in short), short


def k_star(inst: Instance, house: int, y: Sequence[int]) -> int:
    """Smallest ``k >= 1`` at which the lower-quota demand of ``k`` more seats reaches ``k``.

    At the next multiple of the total population above ``house`` the demand
    equals ``k`` exactly, so the search is bounded by that distance.
    """
    y = _check_state(inst, house, y)
    pops, total = inst.populations, inst.total
    limit = (house // total + 1) * total - house
    for k in range(1, limit + 1):
        if _demand(pops, house, y, k)[0] >= k:
            return k
    raise AssertionError("demand bound failed")


def _k_star_raw(pops: tuple[int, ...], house: int, y: Vector) -> tuple[int, frozenset[int]]:
    total = sum(pops)
    limit = (house // total + 1) * total - house
    for k in range(1, limit + 1):
        demand, short = _demand(pops, house, y, k)
        if demand >= k:
            return k, short
    raise AssertionError("demand bound failed")


def tau(inst: Instance, house: int, y: Sequence[int]) -> int:
    """Lookahead needed after ``house`` seats: ``k_star`` unless every state is short, then 1."""
    y = _check_state(inst, house, y)
    k, short = _k_star_raw(inst.populations, house, y)
    return 1 if len(short) == inst.n else k


def phi_upper_bound(inst: Instance, house: int) -> int:
    return house + max(-(-inst.total // p) for p in inst.populations)


@dataclass(frozen=True)
class PhiTable:
    values: tuple[int, ...]

    def to_json(self) -> dict:
        return {"phi": list(self.values)}


def phi(inst: Instance, house: int, max_nodes: int = DEFAULT_MAX_NODES, max_horizon: int = DEFAULT_MAX_HORIZON) -> PhiTable:
    """Lookahead horizons ``phi(0..house)``.

    ``phi(h + 1)`` is the largest ``T + tau(T, y)`` over ``T = 1..h`` and every
    allocation ``y`` that a feasible sequence of length ``phi(h)`` reaches at ``T``.
    """
    if house < 0:
        raise ValidationError("house size must be non-negative")
    pops, total = inst.populations, inst.total
    values = [0]
    if house >= 1:
        values.append(next(k for k in range(1, total + 1) if sum(p * k // total for p in pops) >= k))
    cache: dict[int, list[frozenset[Vector]]] = {}
    for h in range(1, house):
        horizon = values[h]
        if horizon > max_horizon:
            raise ResourceCapExceeded(f"horizon {horizon} exceeds {max_horizon}", partial=PhiTable(tuple(values)))
        if horizon not in cache:
            try:
                cache[horizon] = reach_layers(inst, horizon, max_nodes)
            except ResourceCapExceeded as exc:
                raise ResourceCapExceeded(str(exc), partial=PhiTable(tuple(values))) from exc
        layers = cache[horizon]
        best = 0
        for t in range(1, h + 1):
            for y in layers[t]:
                k, short = _k_star_raw(pops, t, y)
                best = max(best, t + (1 if len(short) == inst.n else k))
        values.append(best)
    return PhiTable(tuple(values))


def enumerate_hm_quota(inst: Instance, max_nodes: int = DEFAULT_MAX_NODES, max_horizon: int = DEFAULT_MAX_HORIZON) -> set[Vector]:
    """Allocations at ``inst.house`` of feasible sequences with horizon ``phi(house)``."""
    house = inst.house
    horizon = phi(inst, house, max_nodes, max_horizon).values[house]
    if horizon > max_horizon:
        raise ResourceCapExceeded(f"horizon {horizon} exceeds {max_horizon}")
    return set(reach_layers(inst, horizon, max_nodes)[house])


def enumerate_hm_quota_by_recursion(inst: Instance, max_nodes: int = DEFAULT_MAX_NODES) -> set[Vector]:
    """Seat-by-seat expansion: the next seat may go to any state that must get it and still fits."""
    pops, total = inst.populations, inst.total
    layer = {(0,) * inst.n}
    nodes = 1
    for h in range(inst.house):
        nxt = set()
        for y in layer:
            _, must = _k_star_raw(pops, h, y)
            for i in sorted(must):
                if pops[i] * (h + 1) > y[i] * total:
                    nxt.add(y[:i] + (y[i] + 1,) + y[i + 1 :])
        nodes += len(nxt)
        if nodes > max_nodes:
            raise ResourceCapExceeded(f"recursion exceeds {max_nodes} nodes")
        layer = nxt
    return layer


# exact convex decomposition of the proportional schedule


@dataclass(frozen=True)
class Decomposition:
    points: tuple[SeatSequence, ...]
    weights: tuple[Fraction, ...]

    def to_json(self) -> dict:
        return {"points": [list(x.assign) for x in self.points], "weights": [rat_str(w) for w in self.weights]}

    def marginal(self) -> list[list[Fraction]]:
        """``sum theta_x x(i, t)`` indexed as ``[i][t - 1]``."""
        n = self.points[0].n
        out = [[Fraction(0)] * self.points[0].horizon for _ in range(n)]
        for x, w in zip(self.points, self.weights):
            for t, i in enumerate(x.assign):
                out[i][t] += w
        return out


def _face_point(residual: list[list[Fraction]], cum: list[list[Fraction]], n: int, horizon: int) -> tuple[int, ...] | None:
    """A 0/1 sequence supported on the residual whose prefix counts round the residual's."""
    failed: set[tuple[int, Vector]] = set()
    path: list[int] = []

    def fits(y: Vector, t: int) -> bool:
        return all(math.floor(cum[i][t]) <= y[i] <= math.ceil(cum[i][t]) for i in range(n))

    def search(t: int, y: Vector) -> bool:
        if t == horizon:
            return True
        if (t, y) in failed:
            return False
        for i in range(n):
            if residual[i][t] == 0:
                continue
            z = y[:i] + (y[i] + 1,) + y[i + 1 :]
            if fits(z, t):
                path.append(i)
                if search(t + 1, z):
                    return True
                path.pop()
        failed.add((t, y))
        return False

    return tuple(path) if search(0, (0,) * n) else None


def decompose_quota(inst: Instance, max_nodes: int = DEFAULT_MAX_NODES) -> Decomposition:
    """Write the proportional schedule ``Q(i, t) = p_i / P`` as a convex combination of seat sequences.

    Each step peels the longest feasible multiple of one face point off the
    residual, which zeroes an entry or tightens a prefix bound.
    """
    pops, total, n = inst.populations, inst.total, inst.n
    if n * total > max_nodes:
        raise ResourceCapExceeded(f"schedule has {n * total} entries, cap is {max_nodes}")
    residual = [[Fraction(p, total)] * total for p in pops]
    lows = [[p * (t + 1) // total for t in range(total)] for p in pops]
    highs = [[-(-p * (t + 1) // total) for t in range(total)] for p in pops]
    found: dict[tuple[int, ...], Fraction] = {}
    remaining = Fraction(1)
    for _ in range(3 * n * total + 1):
        cum = [[sum(row[: t + 1], Fraction(0)) for t in range(total)] for row in residual]
        path = _face_point(residual, cum, n, total)
        if path is None:
            raise AssertionError("no face point found; the residual left the feasible region")
        x = [[0] * total for _ in range(n)]
        for t, i in enumerate(path):
            x[i][t] = 1
        step = Fraction(1)
        for i in range(n):
            xc = 0
            for t in range(total):
                xc += x[i][t]
                if x[i][t]:
                    step = min(step, residual[i][t])
                rc, lo, hi = cum[i][t], lows[i][t], highs[i][t]
                if xc > lo:
                    step = min(step, (rc - lo) / (xc - lo))
                if xc < hi:
                    step = min(step, (hi - rc) / (hi - xc))
        found[path] = found.get(path, Fraction(0)) + remaining * step
        if step == 1:
            break
        residual = [[(residual[i][t] - step * x[i][t]) / (1 - step) for t in range(total)] for i in range(n)]
        remaining *= 1 - step
    else:
        raise AssertionError("peeling did not terminate within the iteration bound")
    points = tuple(SeatSequence(path, n) for path in found)
    return Decomposition(points, tuple(found.values()))


_DECOMPOSITIONS: dict[tuple[int, ...], Decomposition] = {}


def _cached_decomposition(inst: Instance) -> Decomposition:
    key = inst.populations
    if key not in _DECOMPOSITIONS:
        _DECOMPOSITIONS[key] = decompose_quota(inst)
    return _DECOMPOSITIONS[key]


def sample_hm_batch(inst: Instance, seed: int, reps: int) -> np.ndarray:
    """``reps`` allocations at ``inst.house`` drawn from one fixed decomposition."""
    if inst.house > inst.total:
        raise ValidationError("sampling is defined only for house sizes up to the total population")
    if reps < 1:
        raise ValidationError("reps must be positive")
    dec = _cached_decomposition(inst)
    cum = Fraction(0)
    cuts = []
    for w in dec.weights[:-1]:
        cum += w
        cuts.append(math.ceil(cum * TWO64))
    draws = _draw_u64(_generator(seed), reps)
    # cuts are below 2^64 because every weight is positive
    index = np.searchsorted(np.array(cuts, dtype=np.uint64), draws, side="right")
    table = np.array([x.allocation(inst.house) for x in dec.points], dtype=np.int64)
    return table[index]


def sample_hm_method(inst: Instance, seed: int) -> Vector:
    """One draw of the ex-ante proportional house-monotone method at ``inst.house``."""
    return tuple(int(v) for v in sample_hm_batch(inst, seed, 1)[0])
