"""Timetag stream analysis: cross-correlation, windowed coincidence matching
and accidental-coincidence estimation.

All operations work on sorted ``int64`` picosecond timestamp arrays and use
integer arithmetic throughout, so results stay exact even for timestamps far
beyond 2**53 (a day of picoseconds does not fit a double).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .qkdmath import BasisCounts

__all__ = [
    "CorrelationHistogram",
    "AccidentalEstimate",
    "CoincidenceTally",
    "NoPeakError",
    "UnsortedStreamError",
    "cross_correlation",
    "find_peak_delay",
    "count_coincidences",
    "estimate_accidentals",
    "tally_basis",
]

#: Interpretations of the coincidence window width. "full" treats the window
#: as the total width (|dt| <= w/2); "half" treats it as the half width
#: (|dt| <= w).
WINDOW_MODES = ("full", "half")


class UnsortedStreamError(ValueError):
    """A timetag stream was not sorted in non-decreasing time order."""


class NoPeakError(ValueError):
    """Peak lookup on a histogram with no counts."""


@dataclass(frozen=True)
class CorrelationHistogram:
    """Histogram of pairwise delays t_b - t_a over +-range_ps.

    ``bins[i]`` counts delays in [-range_ps + i*bin_width_ps,
    -range_ps + (i+1)*bin_width_ps), with the final bin closed on the right
    so the covered interval is exactly [-range_ps, +range_ps].
    """

    bin_width_ps: int
    range_ps: int
    bins: np.ndarray

    @property
    def total(self) -> int:
        return int(self.bins.sum())

    def bin_centers(self) -> np.ndarray:
        edges = -self.range_ps + self.bin_width_ps * np.arange(len(self.bins))
        return edges + 0.5 * self.bin_width_ps


@dataclass(frozen=True)
class AccidentalEstimate:
    """Offset-window accidental estimate plus its analytic prediction."""

    count: int
    analytic: float
    offset_ps: int


@dataclass
class CoincidenceTally:
    """Windowed coincidence counts of one acquisition at one basis setting."""

    basis_a: str
    basis_b: str
    counts: BasisCounts
    duration_s: float
    delay_ps: int
    accidentals: Optional[AccidentalEstimate] = None
    histogram: Optional[CorrelationHistogram] = field(default=None, repr=False)

    @property
    def coincidence_rate(self) -> float:
        return self.counts.total / self.duration_s


def _as_times(stream, name: str) -> np.ndarray:
    times = np.ascontiguousarray(stream, dtype=np.int64)
    if times.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    if times.size > 1 and np.any(np.diff(times) < 0):
        raise UnsortedStreamError(f"{name} is not sorted by time")
    return times


def _half_window(window_ps: int, mode: str) -> int:
    if mode not in WINDOW_MODES:
        raise ValueError(f"window mode must be one of {WINDOW_MODES}, got {mode!r}")
    window_ps = int(window_ps)
    if window_ps <= 0:
        raise ValueError(f"window must be > 0 ps, got {window_ps}")
    # integer half width: |dt| <= w/2 on integer dt equals |dt| <= floor(w/2)
    return window_ps // 2 if mode == "full" else window_ps


def cross_correlation(stream_a, stream_b, bin_width_ps: int, range_ps: int) -> CorrelationHistogram:
    """Delay histogram of all pairwise t_b - t_a within +-range_ps.

    The candidate window of each A tag is located with two moving bounds on
    the sorted B stream (vectorized two-pointer sweep), so the cost is
    O(n log n) plus the number of in-range pairs, never the full n^2.

    Raises:
        UnsortedStreamError: if either stream is not time-ordered.
        ValueError: on a non-positive bin width or a range that is not a
            multiple of the bin width.
    """
    bin_width_ps = int(bin_width_ps)
    range_ps = int(range_ps)
    if bin_width_ps <= 0:
        raise ValueError("bin width must be > 0")
    if range_ps < bin_width_ps:
        raise ValueError("range must be >= bin width")
    if range_ps % bin_width_ps != 0:
        raise ValueError("range must be an integer multiple of the bin width")
    a = _as_times(stream_a, "stream_a")
    b = _as_times(stream_b, "stream_b")

    n_bins = 2 * range_ps // bin_width_ps
    bins = np.zeros(n_bins, dtype=np.int64)
    if a.size == 0 or b.size == 0:
        return CorrelationHistogram(bin_width_ps, range_ps, bins)

    lo = np.searchsorted(b, a - range_ps, side="left")
    hi = np.searchsorted(b, a + range_ps, side="right")
    counts = hi - lo
    total = int(counts.sum())
    if total == 0:
        return CorrelationHistogram(bin_width_ps, range_ps, bins)

    start = np.zeros(a.size, dtype=np.int64)
    np.cumsum(counts[:-1], out=start[1:])
    flat = np.arange(total, dtype=np.int64) - np.repeat(start, counts) + np.repeat(lo, counts)
    delays = b[flat] - np.repeat(a, counts)
    idx = np.minimum((delays + range_ps) // bin_width_ps, n_bins - 1)
    bins += np.bincount(idx, minlength=n_bins).astype(np.int64)
    return CorrelationHistogram(bin_width_ps, range_ps, bins)


def find_peak_delay(hist: CorrelationHistogram) -> float:
    """Center of the maximum histogram bin.

    Ties are broken toward the smallest absolute delay, and between +-d
    toward the negative one.

    Raises:
        NoPeakError: if every bin is zero.
    """
    counts = np.asarray(hist.bins)
    if counts.size == 0 or int(counts.max(initial=0)) == 0:
        raise NoPeakError("histogram has no counts")
    centers = hist.bin_centers()
    order = np.lexsort((centers, np.abs(centers), -counts))
    return float(centers[order[0]])


def count_coincidences(
    stream_a,
    stream_b,
    window_ps: int,
    delay_ps: int = 0,
    mode: str = "full",
) -> np.ndarray:
    """Greedy one-to-one coincidence matching between two sorted streams.

    A pair (i, j) matches when ``|t_b[j] - t_a[i] - delay| <= w`` with w the
    half window; tags are consumed in time order and each tag is used at most
    once, earlier candidates winning.  Returns the matched index pairs as an
    (n, 2) array; ``len(result)`` is the coincidence count.

    Raises:
        UnsortedStreamError: if either stream is not time-ordered.
    """
    a = _as_times(stream_a, "stream_a")
    b = _as_times(stream_b, "stream_b")
    hw = _half_window(window_ps, mode)
    delay_ps = int(round(delay_ps))

    if a.size == 0 or b.size == 0:
        return np.empty((0, 2), dtype=np.int64)
    return _greedy_match(a, b - delay_ps, hw)


def _greedy_match(a: np.ndarray, b: np.ndarray, hw: int) -> np.ndarray:
    """Exact greedy matching, vectorized via candidate-interval segmentation.

    Tags without any in-window partner can never match and are dropped first;
    the remaining candidate intervals are split where they stop overlapping.
    Segments are independent under the greedy rule: within one, a segment
    with a single tag on either side yields exactly one match (first against
    first), and only genuinely contested segments fall back to the scalar
    two-pointer walk.
    """
    lo_a = np.searchsorted(b, a - hw, side="left")
    hi_a = np.searchsorted(b, a + hw, side="right")
    keep_a = np.flatnonzero(hi_a > lo_a)
    if keep_a.size == 0:
        return np.empty((0, 2), dtype=np.int64)
    lo_b = np.searchsorted(a, b - hw, side="left")
    hi_b = np.searchsorted(a, b + hw, side="right")
    keep_b = np.flatnonzero(hi_b > lo_b)

    a2 = a[keep_a]
    b2 = b[keep_b]
    lo = np.searchsorted(b2, a2 - hw, side="left")
    hi = np.searchsorted(b2, a2 + hw, side="right")

    new_seg = np.empty(a2.size, dtype=bool)
    new_seg[0] = True
    np.greater_equal(lo[1:], hi[:-1], out=new_seg[1:])
    seg_start = np.flatnonzero(new_seg)
    seg_end = np.append(seg_start[1:], a2.size)
    b_start = lo[seg_start]
    b_end = hi[seg_end - 1]

    n_a = seg_end - seg_start
    n_b = b_end - b_start
    trivial = (n_a == 1) | (n_b == 1)

    ia = [keep_a[seg_start[trivial]]]
    ib = [keep_b[b_start[trivial]]]
    for s in np.flatnonzero(~trivial):
        sa, ea = int(seg_start[s]), int(seg_end[s])
        sb, eb = int(b_start[s]), int(b_end[s])
        i, j = sa, sb
        seg_ia, seg_ib = [], []
        while i < ea and j < eb:
            d = b2[j] - a2[i]
            if d < -hw:
                j += 1
            elif d > hw:
                i += 1
            else:
                seg_ia.append(i)
                seg_ib.append(j)
                i += 1
                j += 1
        if seg_ia:
            ia.append(keep_a[np.asarray(seg_ia)])
            ib.append(keep_b[np.asarray(seg_ib)])

    ia = np.concatenate(ia)
    ib = np.concatenate(ib)
    order = np.argsort(ia, kind="stable")
    return np.column_stack((ia[order], ib[order]))


def estimate_accidentals(
    stream_a,
    stream_b,
    window_ps: int,
    offset_ps: int,
    duration_s: float,
    delay_ps: int = 0,
    mode: str = "full",
) -> AccidentalEstimate:
    """Accidental coincidences measured in a window displaced from the peak.

    Counts coincidences at ``delay + offset``, far enough from the true peak
    that only uncorrelated pairs contribute, and reports the analytic
    expectation ``S_a * S_b * window * duration`` alongside.

    Raises:
        ValueError: if the offset is closer than 10 windows or the duration
            is not positive.
    """
    window_ps = int(window_ps)
    offset_ps = int(offset_ps)
    if abs(offset_ps) < 10 * window_ps:
        raise ValueError(
            f"offset must be at least 10 windows ({10 * window_ps} ps), got {offset_ps}"
        )
    if duration_s <= 0:
        raise ValueError("duration must be > 0")
    a = _as_times(stream_a, "stream_a")
    b = _as_times(stream_b, "stream_b")
    matches = count_coincidences(a, b, window_ps, delay_ps=delay_ps + offset_ps, mode=mode)
    width_s = window_ps * 1e-12 if mode == "full" else 2 * window_ps * 1e-12
    analytic = len(a) * len(b) * width_s / duration_s
    return AccidentalEstimate(count=len(matches), analytic=analytic, offset_ps=offset_ps)


def tally_basis(
    alice_tags: np.ndarray,
    bob_tags: np.ndarray,
    *,
    basis_a: str,
    basis_b: str,
    window_ps: int,
    duration_s: float,
    delay_ps: Optional[int] = None,
    hist_bin_ps: int = 50,
    hist_range_ps: int = 5000,
    accidental_offset_ps: Optional[int] = None,
    mode: str = "full",
) -> CoincidenceTally:
    """Analyze one acquisition: align, match, and classify by detector port.

    ``alice_tags`` and ``bob_tags`` are structured timetag arrays (see
    ``mcfqkd.photonsim.TAG_DTYPE``); transmitted ports are even channels,
    reflected ports odd.  When ``delay_ps`` is None the peak of the
    cross-correlation histogram is used; a featureless histogram falls back
    to zero delay.
    """
    if duration_s <= 0:
        raise ValueError("duration must be > 0")
    t_a = alice_tags["time_ps"].astype(np.int64)
    t_b = bob_tags["time_ps"].astype(np.int64)

    hist = cross_correlation(t_a, t_b, hist_bin_ps, hist_range_ps)
    if delay_ps is None:
        try:
            delay_ps = int(round(find_peak_delay(hist)))
        except NoPeakError:
            delay_ps = 0

    pairs = count_coincidences(t_a, t_b, window_ps, delay_ps=delay_ps, mode=mode)
    if len(pairs):
        refl_a = (alice_tags["channel"][pairs[:, 0]] % 2).astype(np.int64)
        refl_b = (bob_tags["channel"][pairs[:, 1]] % 2).astype(np.int64)
        combo = np.bincount(2 * refl_a + refl_b, minlength=4)
        counts = BasisCounts(int(combo[0]), int(combo[1]), int(combo[2]), int(combo[3]))
    else:
        counts = BasisCounts(0, 0, 0, 0)

    accidentals = None
    if accidental_offset_ps is not None:
        accidentals = estimate_accidentals(
            t_a, t_b, window_ps, accidental_offset_ps, duration_s, delay_ps=delay_ps, mode=mode
        )
    return CoincidenceTally(
        basis_a=basis_a,
        basis_b=basis_b,
        counts=counts,
        duration_s=duration_s,
        delay_ps=int(delay_ps),
        accidentals=accidentals,
        histogram=hist,
    )
