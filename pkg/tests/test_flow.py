import itertools
import math
from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from artifact.core import Instance, ResourceCapExceeded, ValidationError
from artifact.flow import (
    SeatSequence,
    decompose_quota,
    enumerate_hm_quota,
    enumerate_hm_quota_by_recursion,
    k_star,
    phi,
    phi_upper_bound,
    reach_layers,
    sample_hm_batch,
    sample_hm_method,
    tau,
)

from oracles import quota_sequences_reach

TIGHT = (30, 2, 1, 1, 1, 1)


def small_instances(max_n=4, max_p=6, max_h=8):
    return st.builds(
        Instance,
        st.lists(st.integers(1, max_p), min_size=1, max_size=max_n),
        st.integers(1, max_h),
    )


def brute_k_star(pops, house, y):
    total = sum(pops)
    for k in itertools.count(1):
        short = [i for i in range(len(pops)) if pops[i] * (house + k) // total > y[i]]
        if sum(pops[i] * (house + k) // total - y[i] for i in short) >= k:
            return k, short


class TestLookahead:
    def test_two_equal_states(self):
        assert k_star(Instance((1, 1), 1), 1, (1, 0)) == 1

    def test_tight_instance_tau(self):
        # twelve seats to the large state, then one each to states 2 and 3
        y = SeatSequence((0,) * 12 + (2, 3), 6).allocation(14)
        assert y == (12, 0, 1, 1, 0, 0)
        assert k_star(Instance(TIGHT, 14), 14, y) == 4
        assert tau(Instance(TIGHT, 14), 14, y) == 4

    def test_integral_point_next_round(self):
        inst = Instance((3, 2, 1), 6)
        # nobody is short until the next full round, where every state is
        assert k_star(inst, 6, (3, 2, 1)) == 6
        assert tau(inst, 6, (3, 2, 1)) == 1

    def test_all_short_gives_one(self):
        inst = Instance((1, 1), 1)
        assert k_star(inst, 0, (0, 0)) == 2 and tau(inst, 0, (0, 0)) == 1

    def test_one_break_scan(self):
        inst = Instance((5, 3, 1), 4)
        k, short = brute_k_star((5, 3, 1), 4, (2, 1, 1))
        assert k_star(inst, 4, (2, 1, 1)) == k
        assert tau(inst, 4, (2, 1, 1)) == (1 if len(short) == 3 else k)

    def test_rejects_infeasible_state(self):
        with pytest.raises(ValidationError):
            k_star(Instance((5, 3, 1), 4), 4, (4, 0, 0))

    @settings(max_examples=100, deadline=None)
    @given(small_instances(), st.data())
    def test_matches_scan(self, inst, data):
        layer = sorted(reach_layers(inst, inst.house)[inst.house])
        y = data.draw(st.sampled_from(layer))
        k, short = brute_k_star(inst.populations, inst.house, y)
        assert k_star(inst, inst.house, y) == k
        assert tau(inst, inst.house, y) == (1 if len(short) == inst.n else k)
        assert k <= (inst.house // inst.total + 1) * inst.total - inst.house


class TestPhi:
    def test_multiples_of_total(self):
        v = phi(Instance((3, 2, 1), 12), 12).values
        assert v[0] == 0 and v[6] == 6 and v[12] == 12

    def test_tight_instance(self):
        assert phi(Instance(TIGHT, 15), 15).values[15] >= 18

    def test_tight_instance_upper_bound(self):
        assert phi(Instance(TIGHT, 14), 14).values[14] <= phi_upper_bound(Instance(TIGHT, 14), 14) == 50

    def test_equal_populations_bound(self):
        assert phi_upper_bound(Instance((4, 4, 4), 5), 5) == 8

    def test_first_value(self):
        pops = (5, 3, 1)
        first = phi(Instance(pops, 1), 1).values[1]
        assert first == min(k for k in range(1, 10) if sum(p * k // 9 for p in pops) >= k)

    def test_cap_returns_partial_table(self):
        with pytest.raises(ResourceCapExceeded) as info:
            phi(Instance(TIGHT, 10), 10, max_horizon=20)
        assert info.value.partial.values[:2] == (0, 36)

    @settings(max_examples=80, deadline=None)
    @given(small_instances(max_h=14))
    def test_properties(self, inst):
        v = phi(inst, inst.house).values
        total = inst.total
        assert v[0] == 0
        assert all(v[h] >= h for h in range(len(v)))
        # the literal first value may exceed the second; from two on the table never drops
        assert all(a <= b for a, b in zip(v[2:], v[3:]))
        for h in range(2, len(v)):
            assert v[h] <= phi_upper_bound(inst, h)
            assert v[h] <= math.ceil(h / total) * total
        for c in (1, 2):
            if c * total < len(v):
                assert v[c * total] == c * total


class TestEnumeration:
    def test_two_states(self):
        assert enumerate_hm_quota(Instance((1, 1), 1)) == {(1, 0), (0, 1)}
        assert enumerate_hm_quota_by_recursion(Instance((1, 1), 2)) == {(1, 1)}
        assert enumerate_hm_quota(Instance((1, 1), 2)) == {(1, 1)}

    def test_full_round(self):
        assert enumerate_hm_quota(Instance((3, 2, 1), 6)) == {(3, 2, 1)}
        assert enumerate_hm_quota_by_recursion(Instance((3, 2, 1), 6)) == {(3, 2, 1)}

    def test_one_break(self):
        inst = Instance((5, 3, 1), 4)
        assert enumerate_hm_quota(inst) == enumerate_hm_quota_by_recursion(inst)

    @settings(max_examples=120, deadline=None)
    @given(small_instances())
    def test_agrees_with_recursion_and_oracle(self, inst):
        got = enumerate_hm_quota(inst)
        assert got == enumerate_hm_quota_by_recursion(inst)
        horizon = phi(inst, inst.house).values[inst.house]
        assert got == quota_sequences_reach(inst.populations, inst.house, horizon)
        # extendable to the next full round means extendable forever
        forever = math.ceil(inst.house / inst.total) * inst.total
        assert got == quota_sequences_reach(inst.populations, inst.house, forever)

    def test_layers_respect_bounds(self):
        inst = Instance((5, 3, 2), 10)
        for t, layer in enumerate(reach_layers(inst, 10)):
            for y in layer:
                assert sum(y) == t
                assert all(p * t // 10 <= v <= -(-p * t // 10) for p, v in zip(inst.populations, y))

    def test_cap(self):
        with pytest.raises(ResourceCapExceeded):
            enumerate_hm_quota(Instance((5, 4, 3, 2), 8), max_nodes=5)
        with pytest.raises(ResourceCapExceeded):
            enumerate_hm_quota_by_recursion(Instance((5, 4, 3, 2), 8), max_nodes=5)


def check_decomposition(pops):
    inst = Instance(pops, 1)
    dec = decompose_quota(inst)
    total = inst.total
    assert sum(dec.weights) == 1 and all(w > 0 for w in dec.weights)
    marg = dec.marginal()
    assert all(marg[i][t] == F(p, total) for i, p in enumerate(pops) for t in range(total))
    for x in dec.points:
        assert x.horizon == total and x.is_feasible(inst)
    return dec


class TestDecomposition:
    def test_two_equal(self):
        dec = check_decomposition((1, 1))
        assert sorted(x.assign for x in dec.points) == [(0, 1), (1, 0)]
        assert dec.weights == (F(1, 2), F(1, 2))

    def test_single_state(self):
        dec = check_decomposition((4,))
        assert dec.weights == (1,) and dec.points[0].assign == (0, 0, 0, 0)

    def test_two_one(self):
        check_decomposition((2, 1))

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.integers(1, 7), min_size=1, max_size=4))
    def test_exact_identities(self, pops):
        check_decomposition(tuple(pops))

    def test_vertex_closure(self):
        """Random convex combinations of found vertices stay inside the prefix bounds."""
        dec = check_decomposition((5, 3, 2))
        rng = np.random.default_rng(0)
        for _ in range(20):
            w = [F(int(v) + 1) for v in rng.integers(0, 9, size=len(dec.points))]
            s = sum(w)
            for i, p in enumerate((5, 3, 2)):
                cum = F(0)
                for t in range(10):
                    cum += sum(wj * (x.assign[t] == i) for wj, x in zip(w, dec.points)) / s
                    assert p * (t + 1) // 10 <= cum <= -(-p * (t + 1) // 10)

    def test_json(self):
        data = decompose_quota(Instance((2, 1), 1)).to_json()
        assert sum(F(w) for w in data["weights"]) == 1 and all(len(x) == 3 for x in data["points"])


class TestSampling:
    def test_deterministic(self):
        inst = Instance((3, 2, 1), 4)
        assert sample_hm_method(inst, 17) == sample_hm_method(inst, 17)
        assert tuple(sample_hm_batch(inst, 17, 5)[0]) == sample_hm_method(inst, 17)

    def test_house_above_total(self):
        with pytest.raises(ValidationError):
            sample_hm_method(Instance((1, 1), 3), 0)

    def test_two_one_frequency(self):
        draws = sample_hm_batch(Instance((2, 1), 1), 3, 100_000)
        freq = (draws[:, 0] == 1).mean()
        assert abs(freq - 2 / 3) <= 4 * math.sqrt(2 / 9 / 100_000)

    def test_monotone_in_house(self):
        inst = Instance((5, 3, 2), 4)
        lo = sample_hm_batch(inst, 9, 500)
        hi = sample_hm_batch(inst.with_house(5), 9, 500)
        assert (hi >= lo).all() and (hi.sum(axis=1) == 5).all()
