"""The full outcome space of stationary methods via the level of a line arrangement.

For an instance with house size H the smallest multiplier ``lambda_H(delta)``
is the H-th lowest of the lines ``(t + delta) / p_i``. Only O(n) of those lines
ever touch that level on ``[0, 1]``; the others stay strictly below or strictly
above. The atlas walks the level from ``delta = 0`` to ``delta = 1`` over
those active lines and records where the outcome changes.

Power-mean methods and the generator that turns a line arrangement into an
instance live here as well.
"""

from __future__ import annotations

import heapq
import math
import threading
import warnings
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

import mpmath

from .core import (
    EmptyOutcome,
    Instance,
    Outcome,
    ValidationError,
    _kth_line_value,
    apportion_stationary,
    as_rat,
    majorizes,
    quotas,
)


@dataclass(frozen=True)
class Line:
    """The line ``(offset + delta) / population`` of one state."""

    state: int
    offset: int
    population: int

    @property
    def slope(self) -> Fraction:
        return Fraction(1, self.population)

    @property
    def intercept(self) -> Fraction:
        return Fraction(self.offset, self.population)

    def at(self, delta: Fraction) -> Fraction:
        return (self.offset + delta) / self.population


@dataclass(frozen=True)
class _Bundle:
    """Coincident lines of an arrangement, kept once with their owners."""

    slope: Fraction
    intercept: Fraction
    owners: tuple[int, ...]

    def at(self, x: Fraction) -> Fraction:
        return self.intercept + self.slope * x


def _bundle(lines: Sequence[tuple[Fraction, Fraction, int]]) -> list[_Bundle]:
    groups: dict[tuple[Fraction, Fraction], list[int]] = {}
    for slope, intercept, owner in lines:
        groups.setdefault((slope, intercept), []).append(owner)
    return [_Bundle(s, c, tuple(o)) for (s, c), o in groups.items()]


def _level_bundle(bundles: Sequence[_Bundle], x: Fraction, rank: int) -> _Bundle:
    """Bundle holding the ``rank``-th lowest line just to the right of ``x``."""
    seen = 0
    for b in sorted(bundles, key=lambda b: (b.at(x), b.slope)):
        seen += len(b.owners)
        if seen >= rank:
            return b
    raise ValueError("rank exceeds the number of lines")


def _level_events(bundles: Sequence[_Bundle], rank: int) -> list[Fraction]:
    """Walk the level of rank ``rank`` over ``(0, 1)``.

    The level follows one line until that line meets another, so the next
    candidate event is always the nearest intersection with the current line.
    """
    events: list[Fraction] = []
    x = Fraction(0)
    current = _level_bundle(bundles, x, rank)
    while True:
        nxt = None
        for b in bundles:
            if b.slope == current.slope:
                continue
            cross = (b.intercept - current.intercept) / (current.slope - b.slope)
            if x < cross < 1 and (nxt is None or cross < nxt):
                nxt = cross
        if nxt is None:
            return events
        events.append(nxt)
        x = nxt
        current = _level_bundle(bundles, x, rank)


def _pairwise_events(bundles: Sequence[_Bundle]) -> list[Fraction]:
    """Every intersection inside ``(0, 1)``; the slow reference sweep."""
    found = set()
    for a in range(len(bundles)):
        for b in range(a + 1, len(bundles)):
            u, v = bundles[a], bundles[b]
            if u.slope != v.slope:
                cross = (v.intercept - u.intercept) / (u.slope - v.slope)
                if 0 < cross < 1:
                    found.add(cross)
    return sorted(found)


class _ActiveArrangement:
    """Active lines of an instance plus the number fixed below them per state."""

    def __init__(self, inst: Instance):
        pops, h = inst.populations, inst.house
        low_level = _kth_line_value(pops, h, Fraction(0), h)
        high_level = _kth_line_value(pops, h, Fraction(1), h)
        self.inst = inst
        self.lines: list[Line] = []
        self.fixed: list[int] = []
        for i, p in enumerate(pops):
            # lines at or below the level at 0 stay below once it rises
            first = min(h, math.floor(low_level * p) + 1) - 1
            # lines strictly below the level at 1; anything above never touches
            last = min(h, max(0, math.ceil(high_level * p - 1)))
            first = max(first, 0)
            last = min(last, h - 1)
            self.fixed.append(first)
            self.lines.extend(Line(i, t, p) for t in range(first, last + 1))
        self.rank = h - sum(self.fixed)
        self.bundles = _bundle([(ln.slope, ln.intercept, k) for k, ln in enumerate(self.lines)])

    def outcome(self, delta: Fraction) -> Outcome:
        values = sorted(ln.at(delta) for ln in self.lines)
        level = values[self.rank - 1]
        base = list(self.fixed)
        tied = set()
        for ln in self.lines:
            v = ln.at(delta)
            if v < level:
                base[ln.state] += 1
            elif v == level:
                tied.add(ln.state)
        return Outcome.normalized(base, tied, self.inst.house - sum(base))

    def level_line(self, delta: Fraction) -> Line:
        b = _level_bundle(self.bundles, delta, self.rank)
        return self.lines[b.owners[0]]


def active_lines(inst: Instance) -> list[Line]:
    """Superset of the lines touching the H-th smallest value on [0, 1]; at most 2n-1."""
    return list(_ActiveArrangement(inst).lines)


@dataclass(frozen=True)
class BreakpointAtlas:
    breakpoints: tuple[Fraction, ...]
    interval_outcomes: tuple[Outcome, ...]
    breakpoint_outcomes: tuple[Outcome, ...]
    at_zero: Outcome | None
    at_one: Outcome

    @property
    def zero_is_empty(self) -> bool:
        return self.at_zero is None

    def cells(self) -> list[tuple[Fraction, Fraction, Outcome]]:
        edges = (Fraction(0),) + self.breakpoints + (Fraction(1),)
        return [(edges[j], edges[j + 1], o) for j, o in enumerate(self.interval_outcomes)]

    def outcome_at(self, delta) -> Outcome:
        """Outcome at any delta in [0,1] read from the atlas."""
        delta = as_rat(delta)
        if delta == 0:
            if self.at_zero is None:
                raise EmptyOutcome("delta=0 has no outcome for this instance")
            return self.at_zero
        if delta == 1:
            return self.at_one
        for j, bp in enumerate(self.breakpoints):
            if delta == bp:
                return self.breakpoint_outcomes[j]
            if delta < bp:
                return self.interval_outcomes[j]
        return self.interval_outcomes[-1]


def breakpoint_atlas(inst: Instance, events: str = "walk") -> BreakpointAtlas:
    """Breakpoints of ``inst`` with the outcome on every cell and at every breakpoint.

    ``events="walk"`` follows the level line; ``events="pairs"`` evaluates at
    every pairwise intersection of active lines and serves as a cross-check.
    """
    arr = _ActiveArrangement(inst)
    if events == "walk":
        cuts = _level_events(arr.bundles, arr.rank)
    elif events == "pairs":
        cuts = _pairwise_events(arr.bundles)
    else:
        raise ValidationError(f"unknown event mode {events!r}")
    edges = [Fraction(0)] + cuts + [Fraction(1)]
    cells = [arr.outcome((a + b) / 2) for a, b in zip(edges, edges[1:])]
    points = [arr.outcome(c) for c in cuts]

    breakpoints: list[Fraction] = []
    at_breaks: list[Outcome] = []
    intervals = [cells[0]]
    for j, cut in enumerate(cuts):
        left, right, here = cells[j], cells[j + 1], points[j]
        if left != right or here != left:
            breakpoints.append(cut)
            at_breaks.append(here)
            intervals.append(right)
    try:
        at_zero = apportion_stationary(inst, 0)
    except EmptyOutcome:
        at_zero = None
    return BreakpointAtlas(
        tuple(breakpoints), tuple(intervals), tuple(at_breaks), at_zero, arr.outcome(Fraction(1))
    )


@dataclass(frozen=True)
class QuotaPartition:
    """Quota thresholds in delta.

    ``tau_low``/``tau_high`` come from inverting the level function: lower
    quota is certified for every delta >= tau_low and upper quota for every
    delta <= tau_high. ``tight_low``/``tight_high`` are where the flags really
    flip; the ``*_closed`` flags say whether the threshold itself complies.
    """

    tau_low: Fraction
    tau_high: Fraction
    tight_low: Fraction | None = None
    tight_low_closed: bool = True
    tight_high: Fraction | None = None
    tight_high_closed: bool = True


def quota_flags(inst: Instance, outcome: Outcome | None) -> tuple[bool, bool]:
    """(lower, upper) quota for every vector of ``outcome``; vacuous when empty."""
    if outcome is None:
        return True, True
    q = quotas(inst)
    lower = upper = True
    for i, (b, qi) in enumerate(zip(outcome.base, q)):
        top = b + (1 if i in outcome.tied else 0)
        lower &= b >= math.floor(qi)
        upper &= top <= math.ceil(qi)
    return lower, upper


def atlas_segments(atlas: BreakpointAtlas) -> list[tuple[Fraction, Fraction, Outcome | None]]:
    """Points and open cells of [0,1] in order; a point has ``lo == hi``."""
    zero, one = Fraction(0), Fraction(1)
    segs = [(zero, zero, atlas.at_zero)]
    for j, (lo, hi, o) in enumerate(atlas.cells()):
        segs.append((lo, hi, o))
        segs.append((hi, hi, atlas.breakpoint_outcomes[j] if hi != one else atlas.at_one))
    return segs


def _tight_thresholds(inst: Instance, atlas: BreakpointAtlas):
    segs = atlas_segments(atlas)
    flags = [quota_flags(inst, o) for _, _, o in segs]
    upper_run = 0
    while upper_run < len(segs) and flags[upper_run][1]:
        upper_run += 1
    lower_run = len(segs)
    while lower_run > 0 and flags[lower_run - 1][0]:
        lower_run -= 1
    if upper_run == 0:
        high, high_closed = Fraction(0), False
    else:
        lo, hi, _ = segs[upper_run - 1]
        high, high_closed = hi, lo == hi
    if lower_run == len(segs):
        low, low_closed = Fraction(1), False
    else:
        lo, hi, _ = segs[lower_run]
        low, low_closed = lo, lo == hi
    return low, low_closed, high, high_closed


def quota_partition(inst: Instance, atlas: BreakpointAtlas | None = None) -> QuotaPartition:
    """Delta thresholds for upper quota (a prefix of [0,1]) and lower quota (a suffix).

    The certified pair inverts the increasing level function at the multipliers
    where every state just reaches its floor (resp. stays under its ceiling).
    The level is piecewise linear on active lines, so each inverse is attained
    where some active line crosses the target value.
    """
    q = quotas(inst)
    pops, h = inst.populations, inst.house
    lam_floor = max(Fraction(math.floor(qi), p) for qi, p in zip(q, pops))
    lam_ceil = min(Fraction(math.ceil(qi), p) for qi, p in zip(q, pops))

    def level(d: Fraction) -> Fraction:
        return _kth_line_value(pops, h, d, h)

    lines = active_lines(inst)

    def crossings(target: Fraction) -> list[Fraction]:
        return sorted({d for d in (target * ln.population - ln.offset for ln in lines) if 0 <= d <= 1})

    if level(Fraction(0)) >= lam_floor:
        tau = Fraction(0)
    elif level(Fraction(1)) < lam_floor:
        tau = Fraction(1)
    else:
        tau = min(d for d in crossings(lam_floor) if level(d) >= lam_floor)
    if level(Fraction(1)) <= lam_ceil:
        tau_bar = Fraction(1)
    elif level(Fraction(0)) > lam_ceil:
        tau_bar = Fraction(0)
    else:
        tau_bar = max(d for d in crossings(lam_ceil) if level(d) <= lam_ceil)
    low, low_closed, high, high_closed = _tight_thresholds(inst, atlas or breakpoint_atlas(inst))
    return QuotaPartition(tau, tau_bar, low, low_closed, high, high_closed)


# ---------------------------------------------------------------- power means

INF = math.inf


class NonconvergedComparison(UserWarning):
    """Two signpost ratios could not be separated within the precision cap."""


def parse_q(value):
    """Exponent of a power mean: a rational, or ``+inf`` / ``-inf``."""
    if isinstance(value, float) and math.isinf(value):
        return value
    if isinstance(value, str) and value.strip().lower() in ("inf", "+inf", "-inf", "infinity", "-infinity"):
        return -INF if value.strip().startswith("-") else INF
    return as_rat(value)


_PREC_START = 64
_IV_LOCK = threading.Lock()
_PREC_CAP = 4096


@lru_cache(maxsize=65536)
def _signpost_interval(t: int, p: int, q: Fraction, prec: int):
    ctx = mpmath.iv
    with _IV_LOCK:
        saved = ctx.prec
        ctx.prec = prec
        try:
            qq = ctx.mpf(q.numerator) / q.denominator
            lo = ctx.mpf(0) if t == 0 else ctx.exp(qq * ctx.log(t))
            hi = ctx.exp(qq * ctx.log(t + 1))
            v = ctx.exp(ctx.log((lo + hi) / 2) / qq) / p
            return (v.a, v.b)
        finally:
            ctx.prec = saved


class _IrrationalKey:
    """Signpost ratio ``s_q(t) / p`` for a non-integer exponent, compared by certified intervals."""

    __slots__ = ("t", "p", "q")

    def __init__(self, t: int, p: int, q: Fraction):
        self.t, self.p, self.q = t, p, q

    def _zero(self) -> bool:
        return self.t == 0 and self.q < 0

    def cmp(self, other: "_IrrationalKey") -> int:
        if (self.t, self.p) == (other.t, other.p):
            return 0
        if self._zero() or other._zero():
            return (not self._zero()) - (not other._zero())
        if self.p == other.p:
            return (self.t > other.t) - (self.t < other.t)
        if self.t == other.t:
            return (self.p < other.p) - (self.p > other.p)
        prec = _PREC_START
        while prec <= _PREC_CAP:
            a_lo, a_hi = _signpost_interval(self.t, self.p, self.q, prec)
            b_lo, b_hi = _signpost_interval(other.t, other.p, other.q, prec)
            if a_hi < b_lo:
                return -1
            if b_hi < a_lo:
                return 1
            prec *= 2
        warnings.warn(
            f"could not separate signpost ratios ({self.t},{self.p}) and ({other.t},{other.p}); treated as a tie",
            NonconvergedComparison,
        )
        return 0

    def __lt__(self, other: "_IrrationalKey") -> bool:
        return self.cmp(other) < 0


def _signpost_key(t: int, p: int, q):
    """Order-preserving exact key of ``s_q(t) / p`` where one exists.

    Positive values map to ``(1, k)`` and zero to ``(0, 0)``. For integer q the
    q-th power of the ratio is rational; for q < 0 that power is decreasing,
    so its negation is used. Non-integer q falls back to interval comparison.
    """
    if q == INF:
        return (1, Fraction(t + 1, p))
    if q == -INF:
        return (1, Fraction(t, p)) if t else (0, 0)
    if q == 0:
        return (1, Fraction(t * (t + 1), p * p)) if t else (0, 0)
    if q.denominator == 1:
        e = q.numerator
        if e > 0:
            return (1, Fraction(t**e + (t + 1) ** e, 2 * p**e))
        if t == 0:
            return (0, 0)
        e = -e
        return (1, -Fraction((t + 1) ** e + t**e, 2 * (t * (t + 1)) ** e) * p**e)
    return _IrrationalKey(t, p, q)


def _cmp(a, b) -> int:
    if isinstance(a, _IrrationalKey):
        return a.cmp(b)
    return (a > b) - (a < b)


def apportion_power_mean(inst: Instance, q) -> Outcome:
    """Highest-averages selection with power-mean signposts, with full tie reporting."""
    q = parse_q(q)
    pops, h = inst.populations, inst.house
    if q <= 0 and h < inst.n:
        raise EmptyOutcome(f"signposts start at 0 for q <= 0, so H={h} < n={inst.n} is infeasible")
    taken = [0] * inst.n
    heap = [(_signpost_key(0, p, q), i) for i, p in enumerate(pops)]
    heapq.heapify(heap)
    last = [None] * inst.n
    for _ in range(h):
        key, i = heapq.heappop(heap)
        last[i] = key
        taken[i] += 1
        if taken[i] < h:
            heapq.heappush(heap, (_signpost_key(taken[i], pops[i], q), i))
    level = key
    base = list(taken)
    tied = set()
    for i, p in enumerate(pops):
        if last[i] is not None and _cmp(last[i], level) == 0:
            base[i] -= 1
            tied.add(i)
        elif taken[i] < h and _cmp(_signpost_key(taken[i], p, q), level) == 0:
            tied.add(i)
    return Outcome.normalized(base, tied, h - sum(base))


@dataclass(frozen=True)
class PowerMeanPiece:
    """Constant outcome on ``[lo, hi]``; the change to the next piece lies in ``(hi, next.lo)``."""

    lo: object
    hi: object
    outcome: Outcome
    flagged: bool = False


def power_mean_breakpoints(inst: Instance, q_lo, q_hi, tol, max_evals: int = 20000) -> list[PowerMeanPiece]:
    """Split ``[q_lo, q_hi]`` into pieces of constant outcome by bisection.

    Outcomes move monotonically in the majorization order as q grows, so equal
    outcomes at both ends of a sub-interval certify it is constant. Infinite
    ends are replaced by finite exponents with the same outcome, found by
    doubling. A piece is flagged when the evaluation cap stops refinement
    before the boundary bracket shrinks below ``tol``.
    """
    q_lo, q_hi, tol = parse_q(q_lo), parse_q(q_hi), as_rat(tol)
    if not q_lo < q_hi:
        raise ValidationError("q_lo must be smaller than q_hi")
    if tol <= 0:
        raise ValidationError("tol must be positive")
    budget = [max_evals]
    memo: dict = {}
    flagged = [False]

    def outcome(q):
        if q not in memo:
            budget[0] -= 1
            memo[q] = apportion_power_mean(inst, q)
        return memo[q]

    def stand_in(q, start, sign):
        step = Fraction(1)
        for _ in range(64):
            cand = start + sign * step
            if outcome(cand) == outcome(q):
                return cand
            step *= 2
        flagged[0] = True
        return cand

    a = stand_in(q_lo, min(Fraction(0), q_hi if q_hi != INF else Fraction(0)), -1) if q_lo == -INF else q_lo
    b = stand_in(q_hi, max(Fraction(0), a), 1) if q_hi == INF else q_hi

    samples: list[tuple[object, Outcome]] = []

    def split(a, oa, b, ob):
        if oa == ob or b - a <= tol:
            return
        if budget[0] <= 0:
            flagged[0] = True
            return
        m = (a + b) / 2
        om = outcome(m)
        split(a, oa, m, om)
        samples.append((m, om))
        split(m, om, b, ob)

    samples.append((q_lo, outcome(q_lo)))
    samples.append((a, outcome(a)))
    split(a, outcome(a), b, outcome(b))
    samples.append((b, outcome(b)))
    samples.append((q_hi, outcome(q_hi)))
    pieces: list[list] = []
    for q, o in samples:
        if pieces and pieces[-1][2] == o:
            pieces[-1][1] = q
        else:
            pieces.append([q, q, o])
    return [PowerMeanPiece(lo, hi, o, flagged[0]) for lo, hi, o in pieces]


def outcome_majorizes(hi: Outcome, lo: Outcome) -> bool:
    """Every vector of ``hi`` majorizes every vector of ``lo``."""
    return all(majorizes(x, y) for x in hi.vectors() for y in lo.vectors())


# ------------------------------------------------------- arrangement generator


@dataclass(frozen=True)
class ArrangementSpec:
    lines: tuple[tuple[Fraction, Fraction], ...]

    def __init__(self, lines):
        parsed = tuple((as_rat(m), as_rat(c)) for m, c in lines)
        object.__setattr__(self, "lines", parsed)

    @classmethod
    def from_json(cls, data: dict) -> "ArrangementSpec":
        return cls([(ln["m"], ln["c"]) for ln in data["lines"]])


@dataclass(frozen=True)
class ArrangementInstance:
    """Rational populations for an arrangement, and their integer scaling."""

    populations: tuple[Fraction, ...]
    house: int
    scale: int
    kept: tuple[int, ...]
    normalized: ArrangementSpec

    @property
    def instance(self) -> Instance:
        return Instance([int(p * self.scale) for p in self.populations], self.house)


def normalize_arrangement(spec: ArrangementSpec) -> ArrangementSpec:
    """Affine maps of slopes and intercepts that keep every level's combinatorics.

    Slopes land in (1, 2) and every ``c_i / m_i`` becomes a positive integer.
    """
    slopes = [m for m, _ in spec.lines]
    if len(set(slopes)) != len(slopes):
        raise ValidationError("arrangement slopes must be pairwise distinct")
    shifted = [m - min(slopes) + Fraction(1, 100) for m in slopes]
    top = max(shifted)
    slopes = [Fraction(99, 100) * m / top + 1 for m in shifted]
    cs = [c for _, c in spec.lines]
    cs = [c - min(cs) + Fraction(1, 100) for c in cs]
    ratios = [c / m for c, m in zip(cs, slopes)]
    alpha = Fraction(math.lcm(*(r.denominator for r in ratios)), math.gcd(*(r.numerator for r in ratios)))
    return ArrangementSpec([(m, alpha * c) for m, c in zip(slopes, cs)])


def _is_normal(spec: ArrangementSpec) -> bool:
    return all(m > 0 and c >= 0 and (c / m).denominator == 1 for m, c in spec.lines)


def level_vertices(spec: ArrangementSpec, k: int) -> list[Fraction]:
    """x-coordinates in (0,1) of the vertices of the k-level (k lines strictly below)."""
    lines = spec.lines
    out = []
    for a in range(len(lines)):
        for b in range(a + 1, len(lines)):
            (ma, ca), (mb, cb) = lines[a], lines[b]
            if ma == mb:
                continue
            x = (cb - ca) / (ma - mb)
            if not 0 < x < 1:
                continue
            y = ma * x + ca
            below = sum(1 for m, c in lines if m * x + c < y)
            if below in (k - 1, k):
                out.append(x)
    return sorted(out)


def instance_from_arrangement(spec: ArrangementSpec, k: int, normalize: bool = True) -> ArrangementInstance:
    """Instance whose H-th smallest line traces the k-level of the arrangement on [0,1].

    After normalization, line ``m x + c`` is the line of offset ``c/m`` of a
    state with population ``1/m``. Lines that never touch the k-level on
    ``[0,1]`` are dropped (those always below lower k by one).
    """
    if not 0 <= k < len(spec.lines):
        raise ValidationError(f"k must lie in 0..{len(spec.lines) - 1}")
    if len(set(m for m, _ in spec.lines)) != len(spec.lines):
        raise ValidationError("arrangement slopes must be pairwise distinct")
    norm = normalize_arrangement(spec) if normalize else spec
    if not _is_normal(norm):
        raise ValidationError("arrangement needs positive slopes and c/m in the naturals")
    bundles = [_Bundle(m, c, (j,)) for j, (m, c) in enumerate(norm.lines)]
    rank = k + 1
    touched = set()
    cuts = _level_events(bundles, rank)
    edges = [Fraction(0)] + cuts + [Fraction(1)]
    probes = set(edges) | {(a + b) / 2 for a, b in zip(edges, edges[1:])}
    for x in probes:
        values = sorted(b.at(x) for b in bundles)
        level = values[rank - 1]
        touched.update(j for j, (m, c) in enumerate(norm.lines) if m * x + c == level)
    kept = tuple(sorted(touched))
    level0 = sorted(b.at(Fraction(0)) for b in bundles)[rank - 1]
    always_below = sum(1 for j, b in enumerate(bundles) if j not in touched and b.at(Fraction(0)) < level0)
    new_k = k - always_below
    pops = tuple(1 / norm.lines[j][0] for j in kept)
    house = sum(int(norm.lines[j][1] / norm.lines[j][0]) for j in kept) + new_k + 1
    scale = math.lcm(*(p.denominator for p in pops))
    return ArrangementInstance(pops, house, scale, kept, norm)
