"""Identifier core: bit vectors, LID generation, match semantics, FPR."""

import math
from fractions import Fraction
from random import Random

import pytest
from hypothesis import given, settings, strategies as st

from icnsim.fid import (BitVector, Exhausted, FidParams, WidthMismatch,
                        fid_matches, fid_or, new_lid, theoretical_fpr)


def bv(width, value):
    return BitVector(width, value)


class TestBitVector:
    def test_bit_zero_is_msb_of_first_byte(self):
        assert BitVector.from_bits(8, [0]).to_bytes() == b"\x80"
        assert BitVector.from_bits(16, [15]).to_bytes() == b"\x00\x01"

    def test_serialization_width(self):
        assert len(BitVector.zero(256).to_bytes()) == 32

    def test_round_trip(self):
        vec = BitVector.from_bits(64, [0, 7, 33, 63])
        assert BitVector.from_bytes(vec.to_bytes()) == vec

    def test_width_must_be_multiple_of_eight(self):
        with pytest.raises(ValueError):
            BitVector(7, 0)

    def test_value_must_fit(self):
        with pytest.raises(ValueError):
            BitVector(8, 256)

    def test_or_and(self):
        assert (bv(8, 0b0011) | bv(8, 0b0101)).value == 0b0111
        assert (bv(8, 0b0011) & bv(8, 0b0101)).value == 0b0001

    def test_width_mismatch(self):
        with pytest.raises(WidthMismatch):
            bv(8, 1) | bv(16, 1)

    @settings(derandomize=True, max_examples=200)
    @given(st.integers(min_value=0, max_value=2 ** 64 - 1))
    def test_codec_round_trip_property(self, value):
        vec = BitVector(64, value)
        assert BitVector.from_bytes(vec.to_bytes()) == vec
        assert len(vec.to_bytes()) == 8

    def test_popcount_and_positions(self):
        vec = BitVector.from_bits(16, [1, 2, 13])
        assert vec.popcount() == 3
        assert vec.bit_positions() == [1, 2, 13]


class TestNewLid:
    def test_popcount_forced(self):
        params = FidParams(m=8, k=2)
        lid = new_lid(Random(1), set(), params)
        assert lid.popcount() == 2

    def test_exhausted_by_pigeonhole(self):
        params = FidParams(m=8, k=2)
        registry = {BitVector.from_bits(8, [i, j]) for i in range(8) for j in range(i + 1, 8)}
        assert len(registry) == 28
        with pytest.raises(Exhausted):
            new_lid(Random(1), registry, params)

    def test_ten_thousand_unique_draws(self):
        params = FidParams(m=256, k=5)
        rng = Random(42)
        registry = set()
        lids = [new_lid(rng, registry, params) for _ in range(10_000)]
        assert len(set(lids)) == 10_000
        assert all(lid.popcount() == 5 for lid in lids)

    def test_deterministic_given_seed(self):
        params = FidParams(m=256, k=5)
        a = [new_lid(Random(7), set(), params) for _ in range(1)]
        b = [new_lid(Random(7), set(), params) for _ in range(1)]
        assert a == b

    def test_candidate_added_to_registry(self):
        params = FidParams(m=64, k=3)
        registry = set()
        lid = new_lid(Random(3), registry, params)
        assert lid in registry

    def test_never_all_zero(self):
        params = FidParams(m=8, k=1)
        rng = Random(5)
        for _ in range(50):
            assert not new_lid(rng, set(), params).is_zero()


class TestFidOps:
    def test_empty_or_is_zero(self):
        assert fid_or([], width=8) == BitVector.zero(8)

    def test_or_by_hand(self):
        assert fid_or([bv(8, 0b00000011), bv(8, 0b00001100)]) == bv(8, 0b00001111)

    def test_single_identity(self):
        lid = bv(8, 0b00100001)
        assert fid_or([lid]) == lid

    def test_matches_by_hand(self):
        assert fid_matches(bv(8, 0b00001111), bv(8, 0b00000011))
        assert not fid_matches(bv(8, 0b00001111), bv(8, 0b00110000))

    def test_reflexive(self):
        f = bv(8, 0b10100101)
        assert fid_matches(f, f)

    def test_false_positive_semantics(self):
        # 0b00000110 was never OR-ed in, yet its bits are covered.
        assert fid_matches(bv(8, 0b00001111), bv(8, 0b00000110))

    def test_match_width_mismatch(self):
        with pytest.raises(WidthMismatch):
            fid_matches(bv(8, 1), bv(16, 1))

    @settings(derandomize=True, max_examples=200)
    @given(st.data())
    def test_no_false_negatives(self, data):
        rng = Random(data.draw(st.integers(0, 2 ** 32)))
        params = FidParams(m=64, k=3)
        registry = set()
        lids = [new_lid(rng, registry, params) for _ in range(data.draw(st.integers(1, 10)))]
        fid = fid_or(lids)
        assert all(fid_matches(fid, lid) for lid in lids)

    @settings(derandomize=True, max_examples=200)
    @given(st.integers(0, 2 ** 16 - 1), st.integers(0, 2 ** 16 - 1), st.integers(0, 2 ** 16 - 1))
    def test_monotonicity(self, f, l, x):
        fid, lid, extra = bv(16, f), bv(16, l), bv(16, x)
        if fid_matches(fid, lid):
            assert fid_matches(fid | extra, lid)


class TestTheoreticalFpr:
    def test_zero_links_never_match(self):
        assert theoretical_fpr(256, 5, 0) == 0.0

    def test_formula_by_fraction_oracle(self):
        # independent evaluation with exact rationals
        for (m, k, n) in [(256, 5, 20), (8, 2, 4), (64, 3, 8)]:
            exact = float((1 - Fraction(m - 1, m) ** (k * n)) ** k)
            assert theoretical_fpr(m, k, n) == pytest.approx(exact, rel=1e-12)

    def test_spec_example_small(self):
        expected = float((1 - Fraction(7, 8) ** 8) ** 2)
        assert expected == pytest.approx(0.430849, abs=1e-6)
        assert theoretical_fpr(8, 2, 4) == pytest.approx(expected, rel=1e-12)

    def test_in_open_interval(self):
        assert 0 < theoretical_fpr(256, 5, 20) < 1

    def test_negative_n_rejected(self):
        with pytest.raises(ValueError):
            theoretical_fpr(256, 5, -1)


def test_empirical_fpr_converges_medium_width():
    # Monte Carlo against the analytic estimate; m large enough that the
    # exactly-k-bit process stays within 3 standard errors of the formula.
    # A fresh path is drawn periodically so the estimate covers the
    # unconditional rate, not one FID realization.
    m, k, n, trials = 256, 5, 10, 100_000
    rng = Random(1234)
    params = FidParams(m=m, k=k)
    hits = 0
    per_path = 500
    for _ in range(trials // per_path):
        registry = set()
        path = [new_lid(rng, registry, params) for _ in range(n)]
        fid = fid_or(path)
        path_set = set(path)
        for _ in range(per_path):
            probe = BitVector.from_bits(m, rng.sample(range(m), k))
            while probe in path_set:
                probe = BitVector.from_bits(m, rng.sample(range(m), k))
            if fid_matches(fid, probe):
                hits += 1
    p_hat = hits / trials
    p_theory = theoretical_fpr(m, k, n)
    se = math.sqrt(max(p_hat, 1e-12) * (1 - p_hat) / trials)
    assert abs(p_hat - p_theory) <= 3 * se
