"""Randomized divisor methods and randomized fixed-divisor rounding.

A distribution over ``delta`` is a finite list of atoms plus uniform pieces.
Expectations are exact and read off the breakpoint atlas. Sampling draws
64-bit dyadic rationals from a seeded numpy generator so that every
comparison against a rational remainder stays exact.
"""

from __future__ import annotations

import enum
import math
from bisect import bisect_left, bisect_right
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .core import (
    EmptyOutcome,
    Instance,
    Outcome,
    ValidationError,
    as_rat,
    check_delta,
    quotas,
    rat_str,
)
from .sweep import BreakpointAtlas, breakpoint_atlas

TWO64 = 1 << 64
_CHUNK = 4096


def check_seed(seed) -> int:
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)) or not 0 <= int(seed) < TWO64:
        raise ValidationError(f"seed must be an integer in [0, 2^64), got {seed!r}")
    return int(seed)


def derive_seed(seed: int, index: int) -> int:
    """Independent 64-bit seed for task ``index`` of a run seeded with ``seed``."""
    state = np.random.SeedSequence([check_seed(seed), index]).generate_state(1, np.uint64)
    return int(state[0])


def _generator(seed: int) -> np.random.Generator:
    return np.random.default_rng(check_seed(seed))


def _draw_u64(rng: np.random.Generator, shape) -> np.ndarray:
    return rng.integers(0, TWO64, size=shape, dtype=np.uint64, endpoint=False)


@dataclass(frozen=True)
class DeltaDistribution:
    """Mixture of point masses and uniform pieces on [0, 1] with total mass one."""

    atoms: tuple[tuple[Fraction, Fraction], ...] = ()
    uniform_pieces: tuple[tuple[Fraction, Fraction, Fraction], ...] = ()

    def __post_init__(self):
        atoms = tuple((check_delta(at), as_rat(m)) for at, m in self.atoms)
        pieces = tuple((check_delta(lo), check_delta(hi), as_rat(m)) for lo, hi, m in self.uniform_pieces)
        if any(m < 0 for _, m in atoms) or any(m < 0 for *_, m in pieces):
            raise ValidationError("masses must be non-negative")
        if any(lo >= hi for lo, hi, _ in pieces):
            raise ValidationError("uniform pieces need lo < hi")
        if sum(m for _, m in atoms) + sum(m for *_, m in pieces) != 1:
            raise ValidationError("total mass must be exactly 1")
        # zero-mass components carry no information; dropping them keeps sampling aligned
        object.__setattr__(self, "atoms", tuple(a for a in atoms if a[1] > 0))
        object.__setattr__(self, "uniform_pieces", tuple(p for p in pieces if p[2] > 0))

    @classmethod
    def point(cls, at) -> "DeltaDistribution":
        return cls(atoms=((as_rat(at), Fraction(1)),))

    @classmethod
    def uniform(cls, lo=0, hi=1) -> "DeltaDistribution":
        return cls(uniform_pieces=((as_rat(lo), as_rat(hi), Fraction(1)),))

    @classmethod
    def bernoulli(cls, a=0, b=1, mass_b=Fraction(1, 2)) -> "DeltaDistribution":
        mass_b = as_rat(mass_b)
        return cls(atoms=((as_rat(a), 1 - mass_b), (as_rat(b), mass_b)))

    def mean(self) -> Fraction:
        return sum((at * m for at, m in self.atoms), Fraction(0)) + sum(
            ((lo + hi) / 2 * m for lo, hi, m in self.uniform_pieces), Fraction(0)
        )

    @classmethod
    def from_json(cls, data: dict) -> "DeltaDistribution":
        try:
            atoms = [(a["at"], a["mass"]) for a in data.get("atoms", [])]
            pieces = [(u["lo"], u["hi"], u["mass"]) for u in data.get("uniform", [])]
        except (KeyError, TypeError, AttributeError) as exc:
            raise ValidationError(f"malformed distribution: {exc}") from exc
        return cls(tuple(atoms), tuple(pieces))

    def to_json(self) -> dict:
        return {
            "atoms": [{"at": rat_str(a), "mass": rat_str(m)} for a, m in self.atoms],
            "uniform": [{"lo": rat_str(lo), "hi": rat_str(hi), "mass": rat_str(m)} for lo, hi, m in self.uniform_pieces],
        }


class TieBreak(enum.Enum):
    UNIFORM = "uniform"
    LEXMAX = "lexmax"
    LEXMIN = "lexmin"
    RANDOM = "random"

    @classmethod
    def parse(cls, value) -> "TieBreak":
        if isinstance(value, cls):
            return value
        try:
            return cls(value)
        except ValueError as exc:
            raise ValidationError(f"unknown tie-break {value!r}") from exc


def _resolve_exact(outcome: Outcome, tiebreak: TieBreak, atom: bool) -> tuple[Fraction, ...]:
    if tiebreak is TieBreak.LEXMAX:
        return tuple(Fraction(v) for v in outcome.lex_max())
    if tiebreak is TieBreak.LEXMIN:
        return tuple(Fraction(v) for v in outcome.lex_min())
    if tiebreak is TieBreak.RANDOM and atom and not outcome.is_single:
        raise ValidationError("seeded-random tie-break has no exact expectation on an atom at a multi-valued point")
    return outcome.mean()


def expected_apportionment(
    inst: Instance, dist: DeltaDistribution, tiebreak=TieBreak.UNIFORM, atlas: BreakpointAtlas | None = None
) -> tuple[Fraction, ...]:
    """Exact expected seat vector of the randomized divisor method."""
    tiebreak = TieBreak.parse(tiebreak)
    atlas = atlas or breakpoint_atlas(inst)
    total = [Fraction(0)] * inst.n

    def add(weight: Fraction, vec):
        for i, v in enumerate(vec):
            total[i] += weight * v

    for at, mass in dist.atoms:
        add(mass, _resolve_exact(atlas.outcome_at(at), tiebreak, atom=True))
    cells = atlas.cells()
    for lo, hi, mass in dist.uniform_pieces:
        for a, b, outcome in cells:
            overlap = min(b, hi) - max(a, lo)
            if overlap > 0:
                add(mass * overlap / (hi - lo), _resolve_exact(outcome, tiebreak, atom=False))
    return tuple(total)


class _Sampler:
    """Inverse-CDF sampler over a DeltaDistribution with exact 64-bit draws."""

    def __init__(self, dist: DeltaDistribution):
        self.components: list[tuple[str, tuple]] = [("atom", (at,)) for at, _ in dist.atoms]
        self.components += [("piece", (lo, hi)) for lo, hi, _ in dist.uniform_pieces]
        masses = [m for _, m in dist.atoms] + [m for *_, m in dist.uniform_pieces]
        cum = Fraction(0)
        self.cuts: list[int] = []
        for m in masses[:-1]:
            cum += m
            # u = k / 2^64 < cum  iff  k < ceil(cum * 2^64)
            self.cuts.append(math.ceil(cum * TWO64))

    def delta(self, pick: int, position: int) -> Fraction:
        kind, args = self.components[bisect_right(self.cuts, pick)]
        if kind == "atom":
            return args[0]
        lo, hi = args
        return lo + (hi - lo) * Fraction(position, TWO64)


def _pick(outcome: Outcome, tiebreak: TieBreak, rng: np.random.Generator) -> tuple[int, ...]:
    if outcome.is_single:
        return outcome.base
    if tiebreak is TieBreak.LEXMAX:
        return outcome.lex_max()
    if tiebreak is TieBreak.LEXMIN:
        return outcome.lex_min()
    order = sorted(outcome.tied)
    chosen = rng.choice(len(order), size=outcome.extra, replace=False)
    x = list(outcome.base)
    for j in chosen:
        x[order[int(j)]] += 1
    return tuple(x)


def _sample_chunk(
    atlas: BreakpointAtlas, dist: DeltaDistribution, tiebreak: TieBreak, seed: int, reps: int
) -> list[tuple[int, ...]]:
    rng = _generator(seed)
    draws = _draw_u64(rng, (reps, 2))
    ties = np.random.default_rng([seed, 1])
    sampler = _Sampler(dist)
    edges = atlas.breakpoints
    out = []
    for pick, position in draws.tolist():
        delta = sampler.delta(pick, position)
        if delta == 0 or delta == 1:
            outcome = atlas.outcome_at(delta)
        else:
            j = bisect_left(edges, delta)
            outcome = atlas.breakpoint_outcomes[j] if j < len(edges) and edges[j] == delta else atlas.interval_outcomes[j]
        out.append(_pick(outcome, tiebreak, ties))
    return out


def sample_randomized_divisor(inst: Instance, dist: DeltaDistribution, tiebreak, seed: int) -> tuple[int, ...]:
    """One draw of the randomized divisor method; equals row 0 of the batch sampler."""
    atlas = breakpoint_atlas(inst)
    return _sample_chunk(atlas, dist, TieBreak.parse(tiebreak), check_seed(seed), 1)[0]


def sample_randomized_batch(
    inst: Instance, dist: DeltaDistribution, tiebreak, seed: int, reps: int, workers: int = 1
) -> list[tuple[int, ...]]:
    """``reps`` draws in fixed-size chunks; chunk ``j > 0`` uses ``derive_seed(seed, j)``.

    The result does not depend on ``workers``.
    """
    seed = check_seed(seed)
    if reps < 1:
        raise ValidationError("reps must be positive")
    tiebreak = TieBreak.parse(tiebreak)
    atlas = breakpoint_atlas(inst)
    sizes = [min(_CHUNK, reps - s) for s in range(0, reps, _CHUNK)]
    seeds = [seed] + [derive_seed(seed, j) for j in range(1, len(sizes))]
    if atlas.zero_is_empty and any(at == 0 for at, _ in dist.atoms):
        raise EmptyOutcome("distribution puts mass on delta=0 where no outcome exists")
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        parts = pool.map(lambda a: _sample_chunk(atlas, dist, tiebreak, *a), zip(seeds, sizes))
        return [x for part in parts for x in part]


# fixed-divisor rounding with random shifts


def _pair_count(n: int, mode: str) -> int:
    if mode == "paired":
        return (n + 1) // 2
    if mode == "iid":
        return n
    raise ValidationError(f"unknown shift mode {mode!r}")


def _expand_shifts(n: int, draws: Sequence[int], mode: str) -> tuple[Fraction, ...]:
    if mode == "iid":
        return tuple(Fraction(k, TWO64) for k in draws)
    out = []
    for i in range(n):
        u = Fraction(draws[i // 2], TWO64)
        out.append(u if i % 2 == 0 else 1 - u)
    return tuple(out)


def paired_shifts(n: int, seed: int, mode: str = "paired") -> tuple[Fraction, ...]:
    """Shifts with uniform marginals; in paired mode every second shift mirrors the previous one."""
    if n < 1:
        raise ValidationError("n must be positive")
    draws = _draw_u64(_generator(seed), (1, _pair_count(n, mode)))[0].tolist()
    return _expand_shifts(n, draws, mode)


def apportion_fixed_divisor(inst: Instance, shifts: Sequence) -> tuple[int, ...]:
    """Round each quota down unless its fractional part strictly exceeds the state's shift."""
    if len(shifts) != inst.n:
        raise ValidationError("need one shift per state")
    out = []
    for q, d in zip(quotas(inst), shifts):
        d = check_delta(d)
        base = math.floor(q)
        out.append(base + (1 if q - base > d else 0))
    return tuple(out)


def fixed_divisor_batch(inst: Instance, seed: int, reps: int, mode: str = "paired") -> np.ndarray:
    """``reps`` fixed-divisor samples as an int64 array; row 0 equals the single-draw result."""
    if reps < 1:
        raise ValidationError("reps must be positive")
    n = inst.n
    draws = _draw_u64(_generator(seed), (reps, _pair_count(n, mode)))
    q = quotas(inst)
    floors = np.array([math.floor(x) for x in q], dtype=np.int64)
    out = np.tile(floors, (reps, 1))
    for i, qi in enumerate(q):
        frac = qi - math.floor(qi)
        if frac == 0:
            continue
        k_cut = math.ceil(frac * TWO64)
        col = draws[:, i // 2] if mode == "paired" else draws[:, i]
        if mode == "iid" or i % 2 == 0:
            # frac > k / 2^64  iff  k <= ceil(frac * 2^64) - 1
            seat = col <= np.uint64(k_cut - 1)
        else:
            # frac > 1 - k / 2^64  iff  k > 2^64 - ceil(frac * 2^64)
            seat = col > np.uint64(TWO64 - k_cut)
        out[:, i] += seat
    return out


def hoeffding_bound(n: int, deviation) -> float:
    """Tail bound 2 exp(-2 d^2 / n) on the realized house size deviating from H by d or more."""
    if n < 1:
        raise ValidationError("n must be positive")
    d = float(deviation)
    if not d > 0:
        raise ValidationError("deviation must be positive")
    return 2.0 * math.exp(-2.0 * d * d / n)


# adversarial instances


def adversary_stationary(house: int, delta, eps) -> Instance:
    """Instance on which state 0 deviates from its quota by at least H-1-eps (delta=0) or H-eps."""
    delta, eps = check_delta(delta), as_rat(eps)
    if house < 2 or eps <= 0:
        raise ValidationError("need H >= 2 and eps > 0")
    if delta == 0:
        big = math.ceil((house - 1) * (house - eps) / eps)
        return Instance((big,) + (1,) * (house - 1), house)
    big = max(1, math.ceil(house / eps - 1))
    n = big + 2 + math.floor((house - 1) * big / delta)
    return Instance((n - 1,) + (big,) * (n - 1), house)


def adversary_fixed_divisor(first_signposts: Sequence, eps) -> Instance:
    """Instance on which shifts ``first_signposts`` miss the house size by at least n/2-1-eps."""
    deltas = [check_delta(d) for d in first_signposts]
    eps = as_rat(eps)
    n = len(deltas)
    if n < 1 or eps <= 0:
        raise ValidationError("need at least one state and eps > 0")
    step = min(eps / (2 * n), Fraction(1, 2))
    if sum(deltas) * 2 <= n:
        # every state but the last gets exactly one seat
        r = [d + step for d in deltas[:-1]]
    else:
        # every state but the last gets no seat; an integral share of one costs nothing
        r = [Fraction(1) if d == 0 else (d - step if d == 1 else d) for d in deltas[:-1]]
    head = sum(r, Fraction(0))
    last = math.ceil(head) - head
    r.append(last if last > 0 else Fraction(1))
    scale = math.lcm(*(x.denominator for x in r))
    return Instance([int(x * scale) for x in r], int(sum(r)))


@dataclass(frozen=True)
class BoundReport:
    expected: tuple[Fraction, ...]
    bounds: tuple[Fraction, ...]
    margins: tuple[Fraction, ...]

    @property
    def holds(self) -> bool:
        return all(m >= 0 for m in self.margins)


def fixed_pop_bound_check(inst: Instance, dist: DeltaDistribution, tiebreak=TieBreak.UNIFORM) -> BoundReport:
    """Compare each |E[x_i] - q_i| with (p_i / min p + 1) / 2 for a mean-1/2 distribution."""
    if dist.mean() != Fraction(1, 2):
        raise ValidationError(f"distribution mean must be 1/2, got {rat_str(dist.mean())}")
    expected = expected_apportionment(inst, dist, tiebreak)
    low = min(inst.populations)
    bounds = tuple((Fraction(p, low) + 1) / 2 for p in inst.populations)
    margins = tuple(b - abs(e - q) for b, e, q in zip(bounds, expected, quotas(inst)))
    return BoundReport(expected, bounds, margins)
