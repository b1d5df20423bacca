import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from lscov.logic_state import (
    LogicState,
    combine_edge,
    digest_block_sequence,
    digest_from_bytes,
    digest_halves,
    digest_to_bytes,
)

from reference_murmur3 import reference_hash128

uint32 = st.integers(min_value=0, max_value=2 ** 32 - 1)
uint128 = st.integers(min_value=0, max_value=2 ** 128 - 1)


def rotl1(x):
    return ((x << 1) | (x >> 31)) & 0xFFFFFFFF


class TestCombineEdge:
    def test_small_values(self):
        assert combine_edge(0x00000001, 0x00000003) == 0x00000001

    def test_rotation_wraps_top_bit(self):
        assert combine_edge(0x80000000, 0x00000000) == 0x00000001

    def test_self_edge_is_nonzero(self):
        v = combine_edge(0xDEADBEEF, 0xDEADBEEF)
        assert v == rotl1(0xDEADBEEF) ^ 0xDEADBEEF
        assert v != 0

    @given(uint32, uint32)
    def test_matches_formula(self, a, b):
        assert combine_edge(a, b) == rotl1(a) ^ b

    @given(uint32)
    def test_self_edge_vanishes_only_for_uniform_bit_patterns(self, a):
        # rotl1(a) == a holds exactly for the two uniform patterns
        if a in (0, 0xFFFFFFFF):
            assert combine_edge(a, a) == 0
        else:
            assert combine_edge(a, a) != 0

    def test_direction_sensitivity_collision_rate(self):
        rng = random.Random(1234)
        collisions = 0
        for _ in range(10_000):
            a = rng.getrandbits(32)
            b = rng.getrandbits(32)
            if a == b:
                continue
            if combine_edge(a, b) == combine_edge(b, a):
                # only legal when the defining identity holds
                assert rotl1(a) ^ b == rotl1(b) ^ a
                collisions += 1
        # expected collisions for random 32-bit pairs is about
        # 10^4 * 2^-31, i.e. essentially zero
        assert collisions <= 2


class TestLogicState:
    def test_record_into_empty(self):
        s = LogicState()
        s.record(5)
        assert s.edges == frozenset({5})

    def test_record_is_idempotent(self):
        s = LogicState({5})
        s.record(5)
        assert s.edges == frozenset({5})
        assert len(s) == 1

    def test_fold_of_sequence(self):
        s = LogicState()
        for e in [3, 1, 3, 2, 1]:
            s.record(e)
        assert s.edges == frozenset({1, 2, 3})

    def test_membership_and_iteration(self):
        s = LogicState({7, 9})
        assert 7 in s and 9 in s and 8 not in s
        assert sorted(s) == [7, 9]

    def test_equality_ignores_construction_order(self):
        a = LogicState([1, 2, 3])
        b = LogicState([3, 2, 1, 1])
        assert a == b and hash(a) == hash(b)

    def test_record_block_returns_the_edge(self):
        s = LogicState()
        e = s.record_block(0x01, 0x03)
        assert e == combine_edge(0x01, 0x03)
        assert e in s


class TestCanonicalBytes:
    def test_empty(self):
        assert LogicState().canonical_bytes() == b""

    def test_single_edge_little_endian(self):
        assert LogicState({0x01}).canonical_bytes() == b"\x01\x00\x00\x00"

    def test_ascending_sort(self):
        got = LogicState({0x0102, 0x01}).canonical_bytes()
        assert got == b"\x01\x00\x00\x00\x02\x01\x00\x00"

    @given(st.sets(uint32, max_size=40))
    def test_length_and_order(self, edges):
        raw = LogicState(edges).canonical_bytes()
        assert len(raw) == 4 * len(edges)
        decoded = [int.from_bytes(raw[i:i + 4], "little")
                   for i in range(0, len(raw), 4)]
        assert decoded == sorted(edges)


class TestDigest:
    def test_empty_state_digest_is_empty_input_hash(self):
        assert LogicState().digest() == reference_hash128(b"") == 0

    def test_digest_matches_reference_hash_of_canonical_bytes(self):
        for edges in ({1}, {2}, {1, 2, 3}, set(range(100))):
            s = LogicState(edges)
            assert s.digest() == reference_hash128(s.canonical_bytes())

    def test_distinct_singletons_differ(self):
        assert LogicState({1}).digest() != LogicState({2}).digest()

    def test_insertion_order_is_invisible(self):
        a = LogicState()
        for e in [1, 2, 3]:
            a.record(e)
        b = LogicState()
        for e in [3, 1, 2]:
            b.record(e)
        assert a.digest() == b.digest()

    @given(st.lists(uint32, max_size=30), st.randoms())
    def test_permutation_invariance(self, edges, rng):
        shuffled = list(edges)
        rng.shuffle(shuffled)
        a, b = LogicState(), LogicState()
        for e in edges:
            a.record(e)
        for e in shuffled:
            b.record(e)
        assert a.digest() == b.digest()

    @given(st.lists(uint32, min_size=1, max_size=20),
           st.integers(min_value=1, max_value=5))
    def test_repetition_invariance(self, edges, reps):
        a = LogicState(edges)
        b = LogicState(edges * reps)
        assert a.digest() == b.digest()


class TestDigestBytes:
    def test_sixteen_bytes_low_lane_first(self):
        raw = digest_to_bytes((2 << 64) | 1)
        assert raw == b"\x01" + b"\x00" * 7 + b"\x02" + b"\x00" * 7

    def test_wrong_length_rejected(self):
        with pytest.raises(ValueError):
            digest_from_bytes(b"\x00" * 15)

    @given(uint128)
    def test_round_trip(self, d):
        assert digest_from_bytes(digest_to_bytes(d)) == d

    @given(uint128)
    def test_halves(self, d):
        h1, h2 = digest_halves(d)
        assert (h2 << 64) | h1 == d


class TestDigestBlockSequence:
    def test_empty_sequence(self):
        assert digest_block_sequence([]) == LogicState().digest()

    def test_first_block_combines_with_zero(self):
        b = 0xCAFE
        assert digest_block_sequence([b]) == \
            LogicState({combine_edge(0, b)}).digest()

    def test_matches_manual_fold(self):
        blocks = [10, 20, 10, 30]
        s = LogicState()
        prev = 0
        for b in blocks:
            s.record(combine_edge(prev, b))
            prev = b
        assert digest_block_sequence(blocks) == s.digest()

    @given(st.lists(uint32, max_size=50))
    def test_deterministic(self, blocks):
        assert digest_block_sequence(blocks) == digest_block_sequence(blocks)
