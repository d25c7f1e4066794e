"""Instances and pointwise evaluation of stationary divisor methods.

All quantities are exact :class:`fractions.Fraction` values. A stationary
method with parameter ``delta`` rounds ``lam * p_i`` up when its fractional
part exceeds ``delta``. Geometrically, every state ``i`` contributes the lines
``(t + delta) / p_i`` for ``t = 0..H-1`` and the smallest feasible multiplier
is the H-th smallest of those values. States with a line strictly below that
level get a mandatory seat per line; states with a line exactly on it are tied.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from typing import Iterable, Iterator, Sequence

Rat = Fraction


class ApportionmentError(Exception):
    """Base class for typed domain errors. ``kind`` names the error in JSON."""

    kind = "ApportionmentError"


class ValidationError(ApportionmentError, ValueError):
    kind = "ValidationError"


class InvalidDelta(ValidationError):
    kind = "InvalidDelta"


class EmptyOutcome(ApportionmentError):
    kind = "EmptyOutcome"


class ResourceCapExceeded(ApportionmentError):
    kind = "ResourceCapExceeded"

    def __init__(self, detail: str, partial=None):
        super().__init__(detail)
        self.partial = partial


def as_rat(value) -> Fraction:
    """Parse an exact rational from a Fraction, int or ``"num/den"`` string.

    Floats are rejected: they would silently smuggle rounding into exact code.
    """
    if isinstance(value, bool):
        raise ValidationError(f"not a rational: {value!r}")
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        text = value.strip()
        try:
            if "/" in text:
                num, den = text.split("/")
                num, den = int(num), int(den)
                if den == 0:
                    raise ValidationError(f"zero denominator: {value!r}")
                return Fraction(num, den)
            return Fraction(int(text))
        except ValueError as exc:
            raise ValidationError(f"not a rational: {value!r}") from exc
    raise ValidationError(f"not a rational: {value!r}")


def rat_str(value) -> str:
    """Canonical ``"num/den"`` form, also for integers (``"3/1"``)."""
    value = Fraction(value)
    return f"{value.numerator}/{value.denominator}"


@dataclass(frozen=True)
class Instance:
    populations: tuple[int, ...]
    house: int
    total: int = field(init=False, repr=False, compare=False)

    def __init__(self, populations: Iterable[int], house: int):
        pops = tuple(populations)
        if not pops:
            raise ValidationError("an instance needs at least one state")
        for p in pops:
            if isinstance(p, bool) or not isinstance(p, int) or p < 1:
                raise ValidationError(f"populations must be positive integers, got {p!r}")
        if isinstance(house, bool) or not isinstance(house, int) or house < 1:
            raise ValidationError(f"house size must be a positive integer, got {house!r}")
        object.__setattr__(self, "populations", pops)
        object.__setattr__(self, "house", house)
        object.__setattr__(self, "total", sum(pops))

    @property
    def n(self) -> int:
        return len(self.populations)

    def with_house(self, house: int) -> "Instance":
        return Instance(self.populations, house)


def quotas(inst: Instance) -> tuple[Fraction, ...]:
    return tuple(Fraction(p * inst.house, inst.total) for p in inst.populations)


@dataclass(frozen=True)
class Outcome:
    """Compact form of a possibly multi-valued apportionment.

    The expansion is every ``base + 1_S`` with ``S`` a subset of ``tied`` of
    size ``extra``. Degenerate ties are folded into ``base`` so that equal
    outcomes compare equal.
    """

    base: tuple[int, ...]
    tied: frozenset[int] = frozenset()
    extra: int = 0

    @classmethod
    def normalized(cls, base: Sequence[int], tied: Iterable[int], extra: int) -> "Outcome":
        base = list(base)
        tied = frozenset(tied)
        if not 0 <= extra <= len(tied):
            raise ValueError("extra seats must be between 0 and the number of tied states")
        if extra == len(tied):
            for i in tied:
                base[i] += 1
            tied, extra = frozenset(), 0
        elif extra == 0:
            tied = frozenset()
        return cls(tuple(base), tied, extra)

    @property
    def house(self) -> int:
        return sum(self.base) + self.extra

    @property
    def is_single(self) -> bool:
        return not self.tied

    def size(self) -> int:
        return math.comb(len(self.tied), self.extra)

    def vectors(self) -> Iterator[tuple[int, ...]]:
        """Lazily expand the outcome, in lexicographically decreasing order."""
        order = sorted(self.tied)
        for chosen in combinations(order, self.extra):
            x = list(self.base)
            for i in chosen:
                x[i] += 1
            yield tuple(x)

    def __contains__(self, x) -> bool:
        x = tuple(x)
        if len(x) != len(self.base):
            return False
        bumped = 0
        for i, (xi, bi) in enumerate(zip(x, self.base)):
            if xi == bi + 1 and i in self.tied:
                bumped += 1
            elif xi != bi:
                return False
        return bumped == self.extra

    def lex_max(self) -> tuple[int, ...]:
        return next(self.vectors())

    def lex_min(self) -> tuple[int, ...]:
        x = list(self.base)
        for i in sorted(self.tied)[len(self.tied) - self.extra:]:
            x[i] += 1
        return tuple(x)

    def mean(self) -> tuple[Fraction, ...]:
        """Average over the expansion (each tied state is bumped w.p. extra/|tied|)."""
        share = Fraction(self.extra, len(self.tied)) if self.tied else Fraction(0)
        return tuple(Fraction(b) + (share if i in self.tied else 0) for i, b in enumerate(self.base))

    def to_json(self) -> dict:
        return {"base": list(self.base), "tied": sorted(self.tied), "extra": self.extra}

    @classmethod
    def from_json(cls, data: dict) -> "Outcome":
        return cls.normalized(data["base"], data["tied"], data["extra"])


def check_delta(delta) -> Fraction:
    try:
        delta = as_rat(delta)
    except ValidationError as exc:
        raise InvalidDelta(str(exc)) from exc
    if not 0 <= delta <= 1:
        raise InvalidDelta(f"delta must lie in [0,1], got {rat_str(delta)}")
    return delta


def round_stationary(r: Fraction, delta: Fraction) -> tuple[int, ...]:
    """The set-valued rounding rule: up above ``delta``, down below it, both on it."""
    if r < delta:
        return (0,)
    t = math.floor(r - delta)
    if r - delta == t:
        return (t, t + 1)
    return (t + 1,)


def _lines_at_most(p: int, rows: int, delta: Fraction, lam: Fraction) -> int:
    return min(rows, max(0, math.floor(lam * p - delta) + 1))


def _kth_line_value(pops: Sequence[int], rows: int, delta: Fraction, k: int) -> Fraction:
    """k-th smallest of ``(t + delta) / p_i`` over states and ``t < rows``.

    Counts the lines below the guess ``k / P`` in closed form, then walks a heap
    over the few lines separating that count from ``k``.
    """
    lam = Fraction(k, sum(pops))
    counts = [_lines_at_most(p, rows, delta, lam) for p in pops]
    have = sum(counts)
    if have >= k:
        heap = [(-(c - 1 + delta) / p, i) for i, (p, c) in enumerate(zip(pops, counts)) if c > 0]
        heapq.heapify(heap)
        for _ in range(have - k + 1):
            neg, i = heapq.heappop(heap)
            counts[i] -= 1
            if counts[i] > 0:
                heapq.heappush(heap, (-(counts[i] - 1 + delta) / pops[i], i))
        return -neg
    heap = [((c + delta) / p, i) for i, (p, c) in enumerate(zip(pops, counts)) if c < rows]
    heapq.heapify(heap)
    for _ in range(k - have):
        value, i = heapq.heappop(heap)
        counts[i] += 1
        if counts[i] < rows:
            heapq.heappush(heap, ((counts[i] + delta) / pops[i], i))
    return value


def lambda_level(inst: Instance, delta, k: int) -> Fraction:
    """k-th smallest line value ``(t + delta) / p_i`` with ``t`` in ``0..H-1``."""
    delta = check_delta(delta)
    if not 1 <= k <= inst.n * inst.house:
        raise ValidationError(f"k must lie in 1..{inst.n * inst.house}, got {k}")
    return _kth_line_value(inst.populations, inst.house, delta, k)


def outcome_at_level(pops: Sequence[int], house: int, delta: Fraction, level: Fraction) -> Outcome:
    """Read off the outcome given the H-th smallest line value."""
    base, tied = [], []
    for i, p in enumerate(pops):
        offset = level * p - delta
        below = min(house, max(0, math.ceil(offset)))
        base.append(below)
        if offset.denominator == 1 and 0 <= offset < house:
            tied.append(i)
    return Outcome.normalized(base, tied, house - sum(base))


def _require_nonempty(inst: Instance, delta: Fraction) -> None:
    if delta == 0 and inst.house < inst.n:
        raise EmptyOutcome(
            f"delta=0 gives every state a seat, impossible with H={inst.house} < n={inst.n}"
        )


def apportion_stationary(inst: Instance, delta) -> Outcome:
    delta = check_delta(delta)
    _require_nonempty(inst, delta)
    level = _kth_line_value(inst.populations, inst.house, delta, inst.house)
    return outcome_at_level(inst.populations, inst.house, delta, level)


def multiplier_interval(inst: Instance, delta) -> tuple[Fraction, Fraction]:
    """Closed interval of multipliers realizing the outcome at ``delta``.

    The upper end uses the lines up to offset H so a single state still has an
    (H+1)-th value. When both ends coincide the interval is a single point.
    """
    delta = check_delta(delta)
    _require_nonempty(inst, delta)
    pops, h = inst.populations, inst.house
    return _kth_line_value(pops, h + 1, delta, h), _kth_line_value(pops, h + 1, delta, h + 1)


def hamilton_outcome(inst: Instance) -> Outcome:
    q = quotas(inst)
    base = [math.floor(qi) for qi in q]
    left = inst.house - sum(base)
    rems = sorted({qi - b for qi, b in zip(q, base)}, reverse=True)
    sure: list[int] = []
    for rem in rems:
        group = [i for i, (qi, b) in enumerate(zip(q, base)) if qi - b == rem]
        if len(sure) + len(group) <= left:
            sure += group
            continue
        for i in sure:
            base[i] += 1
        return Outcome.normalized(base, group, left - len(sure))
    for i in sure:
        base[i] += 1
    return Outcome.normalized(base, (), 0)


def apportion_hamilton(inst: Instance) -> set[tuple[int, ...]]:
    """Largest remainders; remainder ties give every admissible vector."""
    return set(hamilton_outcome(inst).vectors())


def majorizes(x: Sequence[int], y: Sequence[int]) -> bool:
    """True when ``x`` majorizes ``y`` (equal sums, larger sorted prefix sums)."""
    if len(x) != len(y) or sum(x) != sum(y):
        return False
    sx, sy = sorted(x, reverse=True), sorted(y, reverse=True)
    acc_x = acc_y = 0
    for a, b in zip(sx, sy):
        acc_x += a
        acc_y += b
        if acc_x < acc_y:
            return False
    return True


@dataclass(frozen=True)
class AxiomReport:
    lower_quota: bool
    upper_quota: bool
    lower_violations: tuple[int, ...]
    upper_violations: tuple[int, ...]
    house_monotone: bool | None = None

    @property
    def quota_compliant(self) -> bool:
        return self.lower_quota and self.upper_quota


def check_axioms(x: Sequence[int], inst: Instance, next_x: Sequence[int] | None = None) -> AxiomReport:
    """Quota checks for ``x`` at ``inst``; house monotonicity against ``next_x`` at H+1."""
    if len(x) != inst.n:
        raise ValidationError(f"vector has {len(x)} entries, instance has {inst.n} states")
    q = quotas(inst)
    low = tuple(i for i, (xi, qi) in enumerate(zip(x, q)) if xi < math.floor(qi))
    high = tuple(i for i, (xi, qi) in enumerate(zip(x, q)) if xi > math.ceil(qi))
    mono = None
    if next_x is not None:
        if len(next_x) != inst.n:
            raise ValidationError("house-monotonicity pair has mismatched dimensions")
        mono = all(a <= b for a, b in zip(x, next_x))
    return AxiomReport(not low, not high, low, high, mono)
