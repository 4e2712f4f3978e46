"""Unit tests for the coincidence engine against brute-force oracles."""

import numpy as np
import pytest

from mcfqkd.coincidence import (
    CorrelationHistogram,
    NoPeakError,
    UnsortedStreamError,
    count_coincidences,
    cross_correlation,
    estimate_accidentals,
    find_peak_delay,
    tally_basis,
)
from mcfqkd.photonsim import TAG_DTYPE
from oracles import greedy_match_oracle, histogram_oracle


def make_tags(times, channels):
    tags = np.zeros(len(times), dtype=TAG_DTYPE)
    tags["time_ps"] = times
    tags["channel"] = channels
    return tags


class TestCrossCorrelation:
    def test_shifted_copy_peaks_at_shift(self):
        rng = np.random.default_rng(0)
        a = np.sort(rng.integers(0, 10_000_000, 5000))
        hist = cross_correlation(a, a + 1000, bin_width_ps=50, range_ps=5000)
        assert find_peak_delay(hist) == pytest.approx(1025.0)
        peak_bin = int(np.argmax(hist.bins))
        assert hist.bins[peak_bin] >= 5000

    def test_independent_streams_flat(self):
        rng = np.random.default_rng(1)
        duration_ps = int(10e12)
        a = np.sort(rng.integers(0, duration_ps, 40_000))
        b = np.sort(rng.integers(0, duration_ps, 40_000))
        hist = cross_correlation(a, b, bin_width_ps=1000, range_ps=100_000)
        mean = hist.bins.mean()
        sigma = np.sqrt(mean)
        assert np.all(np.abs(hist.bins - mean) < 5 * sigma + 5)

    def test_matches_bruteforce_on_small_streams(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            n_a = int(rng.integers(0, 400))
            n_b = int(rng.integers(0, 400))
            span = int(rng.integers(1000, 200_000))
            a = np.sort(rng.integers(0, span, n_a))
            b = np.sort(rng.integers(0, span, n_b))
            bw = int(rng.integers(10, 500))
            rng_ps = bw * int(rng.integers(1, 40))
            hist = cross_correlation(a, b, bw, rng_ps)
            np.testing.assert_array_equal(hist.bins, histogram_oracle(a, b, bw, rng_ps))

    def test_total_equals_pairs_in_range(self):
        a = np.array([0, 100, 200])
        b = np.array([50, 150, 10_000])
        hist = cross_correlation(a, b, bin_width_ps=50, range_ps=500)
        assert hist.total == 6  # all combinations of the first two b tags

    def test_rejects_unsorted(self):
        with pytest.raises(UnsortedStreamError):
            cross_correlation([10, 5], [1, 2], 10, 100)

    def test_rejects_bad_binning(self):
        with pytest.raises(ValueError):
            cross_correlation([1], [2], 0, 100)
        with pytest.raises(ValueError):
            cross_correlation([1], [2], 30, 100)  # 100 not a multiple of 30
        with pytest.raises(ValueError):
            cross_correlation([1], [2], 200, 100)


class TestFindPeakDelay:
    def test_single_incremented_bin(self):
        bins = np.zeros(200, dtype=np.int64)
        bins[90] = 7  # center -500 with bw=50, range 5000
        hist = CorrelationHistogram(50, 5000, bins)
        assert find_peak_delay(hist) == pytest.approx(-475.0)

    def test_flat_plus_one(self):
        bins = np.ones(100, dtype=np.int64)
        bins[40] += 1
        hist = CorrelationHistogram(100, 5000, bins)
        assert find_peak_delay(hist) == pytest.approx(-5000 + 40 * 100 + 50)

    def test_tie_prefers_smallest_absolute_then_negative(self):
        bins = np.zeros(10, dtype=np.int64)
        bins[2] = 5  # center -250
        bins[7] = 5  # center +250
        hist = CorrelationHistogram(100, 500, bins)
        assert find_peak_delay(hist) == pytest.approx(-250.0)

    def test_all_zero_raises(self):
        hist = CorrelationHistogram(50, 500, np.zeros(20, dtype=np.int64))
        with pytest.raises(NoPeakError):
            find_peak_delay(hist)


class TestCountCoincidences:
    def test_documented_example(self):
        pairs = count_coincidences([100, 500, 900], [150, 2000], window_ps=300)
        assert pairs.tolist() == [[0, 0]]

    def test_identical_streams_all_match(self):
        a = np.arange(0, 100_000, 1000)
        pairs = count_coincidences(a, a, window_ps=10)
        assert len(pairs) == len(a)
        np.testing.assert_array_equal(pairs[:, 0], pairs[:, 1])

    def test_empty_stream(self):
        assert len(count_coincidences([], [1, 2, 3], 100)) == 0
        assert len(count_coincidences([1, 2, 3], [], 100)) == 0

    def test_rejects_unsorted(self):
        with pytest.raises(UnsortedStreamError):
            count_coincidences([5, 1], [1], 100)

    def test_half_window_mode(self):
        # full mode: |dt| <= 150; half mode: |dt| <= 300
        assert len(count_coincidences([0], [200], 300, mode="full")) == 0
        assert len(count_coincidences([0], [200], 300, mode="half")) == 1

    def test_matches_bruteforce_randomized(self):
        rng = np.random.default_rng(3)
        for _ in range(120):
            n_a = int(rng.integers(0, 300))
            n_b = int(rng.integers(0, 300))
            span = int(rng.integers(100, 50_000))
            a = np.sort(rng.integers(0, span, n_a))
            b = np.sort(rng.integers(0, span, n_b))
            window = int(rng.integers(1, 2000))
            delay = int(rng.integers(-500, 500))
            got = count_coincidences(a, b, window, delay_ps=delay).tolist()
            expected = [list(p) for p in greedy_match_oracle(a, b, window, delay)]
            assert got == expected

    def test_shift_invariance(self):
        rng = np.random.default_rng(4)
        a = np.sort(rng.integers(0, 1_000_000, 500))
        b = np.sort(rng.integers(0, 1_000_000, 500))
        base = count_coincidences(a, b, 400)
        shifted = count_coincidences(a + 10**9, b + 10**9, 400)
        np.testing.assert_array_equal(base, shifted)

    def test_count_bounded_by_smaller_stream(self):
        rng = np.random.default_rng(5)
        a = np.sort(rng.integers(0, 10_000, 50))
        b = np.sort(rng.integers(0, 10_000, 400))
        pairs = count_coincidences(a, b, 10_000)
        assert len(pairs) <= 50

    def test_exact_beyond_double_precision(self):
        # timestamps beyond 2**53 must still match exactly
        base = 2**60
        a = np.array([base, base + 1000], dtype=np.int64)
        b = np.array([base + 149, base + 1151], dtype=np.int64)
        pairs = count_coincidences(a, b, 300)
        assert pairs.tolist() == [[0, 0]]  # 151 > 150 excluded, 149 included


class TestEstimateAccidentals:
    def test_poisson_streams_match_analytic(self):
        rng = np.random.default_rng(6)
        duration_s = 60.0
        rate = 100_000
        n = rng.poisson(rate * duration_s)
        a = np.sort(rng.integers(0, int(duration_s * 1e12), n))
        n = rng.poisson(rate * duration_s)
        b = np.sort(rng.integers(0, int(duration_s * 1e12), n))
        est = estimate_accidentals(a, b, window_ps=300, offset_ps=100_000, duration_s=duration_s)
        assert est.analytic == pytest.approx(180.0, rel=0.05)
        sigma = np.sqrt(est.analytic)
        assert abs(est.count - est.analytic) < 3 * sigma + 3

    def test_correlated_peak_excluded(self):
        rng = np.random.default_rng(7)
        a = np.sort(rng.integers(0, int(1e12), 20_000))
        b = a + rng.integers(-20, 20, a.size)  # tightly correlated
        b.sort()
        est = estimate_accidentals(a, b, window_ps=300, offset_ps=6000, duration_s=1.0)
        # true coincidences (20k) never appear at the offset window
        assert est.count < 500

    def test_offset_guard(self):
        with pytest.raises(ValueError):
            estimate_accidentals([1], [2], window_ps=300, offset_ps=2000, duration_s=1.0)


class TestTallyBasis:
    def test_classifies_ports(self):
        # two TT pairs, one TR pair, one RT pair, plus an unmatched bob tag
        alice = make_tags([1000, 2000, 3000, 4000], [0, 0, 0, 1])
        bob = make_tags([1010, 2010, 3010, 4010, 9_000_000], [2, 2, 3, 2, 2])
        tally = tally_basis(
            alice, bob, basis_a="HV", basis_b="HV", window_ps=300, duration_s=1.0, delay_ps=0
        )
        assert tally.counts.c_pp == 2
        assert tally.counts.c_pm == 1
        assert tally.counts.c_mp == 1
        assert tally.counts.c_mm == 0
        assert tally.coincidence_rate == pytest.approx(4.0)

    def test_auto_delay_from_peak(self):
        rng = np.random.default_rng(8)
        times = np.sort(rng.integers(0, int(1e12), 5000))
        alice = make_tags(times, np.zeros(times.size, dtype=int))
        bob = make_tags(times + 2000, np.full(times.size, 2))
        tally = tally_basis(
            alice, bob, basis_a="HV", basis_b="HV", window_ps=300, duration_s=1.0
        )
        assert abs(tally.delay_ps - 2000) <= 50
        assert tally.counts.total == 5000

    def test_empty_streams_zero_report(self):
        empty = np.zeros(0, dtype=TAG_DTYPE)
        tally = tally_basis(
            empty, empty, basis_a="HV", basis_b="HV", window_ps=300, duration_s=1.0
        )
        assert tally.counts.total == 0
        assert tally.delay_ps == 0
