"""Measurement orchestration: basis scans, ring reports and stability runs.

The runner turns a configuration into simulated acquisitions, feeds each one
through the coincidence analysis, and aggregates per-pair visibilities,
QBERs and key rates into ring-level reports.  Core pairs are independent, so
they are simulated on a thread pool (capped by ``MCFQKD_THREADS``); each
pair derives its own random stream, which keeps results identical no matter
how the pool schedules them.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .coincidence import CoincidenceTally, tally_basis
from .config import RunConfig, geometry_from_config, selected_pairs, worker_count
from .geometry import CorePair
from .photonsim import (
    AnalyzerSetting,
    SimChannel,
    SourceParams,
    apply_polarization_drift,
    simulate_run,
)
from .qkdmath import (
    BasisCounts,
    KeyRateInputs,
    UndefinedVisibilityError,
    qber_from_visibility,
    secret_key_rate,
    visibility_from_counts,
)

__all__ = [
    "ScheduleSegment",
    "MeasurementSchedule",
    "PairBasisResult",
    "PairReport",
    "KeyRateReport",
    "StabilityPoint",
    "run_basis_scan",
    "simulate_segment",
    "run_stability",
    "analyze_segment",
]

_BASIS_SETTINGS = {"HV": AnalyzerSetting.hv(), "DA": AnalyzerSetting.da()}
_PS_PER_S = 1_000_000_000_000


@dataclass(frozen=True)
class ScheduleSegment:
    basis: str
    start_s: float
    duration_s: float
    rate_scale: float = 1.0

    def __post_init__(self) -> None:
        if self.basis not in _BASIS_SETTINGS:
            raise ValueError(f"unknown basis {self.basis!r}")
        if self.duration_s <= 0:
            raise ValueError("segment duration must be > 0")


@dataclass(frozen=True)
class MeasurementSchedule:
    segments: Tuple[ScheduleSegment, ...]

    def __post_init__(self) -> None:
        end = 0.0
        for seg in self.segments:
            if seg.start_s < end - 1e-9:
                raise ValueError("schedule segments overlap or are out of order")
            end = seg.start_s + seg.duration_s

    @property
    def total_duration_s(self) -> float:
        last = self.segments[-1]
        return last.start_s + last.duration_s

    @classmethod
    def basis_scan(
        cls, acquisition_s: float, bases: Sequence[str], rate_scales: Dict[str, float]
    ) -> "MeasurementSchedule":
        segments = []
        for i, basis in enumerate(bases):
            segments.append(
                ScheduleSegment(
                    basis=basis,
                    start_s=i * acquisition_s,
                    duration_s=acquisition_s,
                    rate_scale=rate_scales.get(basis, 1.0),
                )
            )
        return cls(tuple(segments))

    @classmethod
    def stability(
        cls,
        total_hours: float,
        switch_minutes: float,
        acquisition_s: float,
        rate_scales: Dict[str, float],
    ) -> "MeasurementSchedule":
        if total_hours <= 0 or switch_minutes <= 0:
            raise ValueError("total_hours and switch_minutes must be > 0")
        n_slots = int(round(total_hours * 60.0 / switch_minutes))
        if n_slots < 1:
            raise ValueError("schedule yields no slots")
        if acquisition_s > switch_minutes * 60.0:
            raise ValueError("acquisition does not fit into one slot")
        segments = []
        for k in range(n_slots):
            basis = "HV" if k % 2 == 0 else "DA"
            segments.append(
                ScheduleSegment(
                    basis=basis,
                    start_s=k * switch_minutes * 60.0,
                    duration_s=acquisition_s,
                    rate_scale=rate_scales.get(basis, 1.0),
                )
            )
        return cls(tuple(segments))


@dataclass
class PairBasisResult:
    basis: str
    counts: BasisCounts
    duration_s: float
    coincidence_rate_cps: float
    visibility: Optional[float]
    qber: Optional[float]
    delay_ps: int
    accidental_count: int = 0
    accidental_rate_analytic: float = 0.0


@dataclass
class PairReport:
    pair_id: int
    ring: str
    hv: PairBasisResult
    da: PairBasisResult
    skr_bits_s: float
    skr_clamped_bits_s: float


@dataclass
class KeyRateReport:
    ring: str
    ec_efficiency: float
    pairs: List[PairReport] = field(default_factory=list)

    @property
    def total_bits_s(self) -> float:
        return sum(p.skr_clamped_bits_s for p in self.pairs)

    @property
    def mean_qber(self) -> float:
        values = [
            q
            for p in self.pairs
            for q in (p.hv.qber, p.da.qber)
            if q is not None
        ]
        return float(np.mean(values)) if values else math.nan


@dataclass
class StabilityPoint:
    slot: int
    time_hours: float
    basis: str
    coincidence_rate_cps: float
    visibility: Optional[float]
    qber: Optional[float]
    skr_bits_s: float
    skr_clamped_bits_s: float
    drift_offset_deg: float


def _tally_to_result(tally: CoincidenceTally, subtract: bool) -> PairBasisResult:
    counts = tally.counts
    if subtract and tally.accidentals is not None and counts.total > 0:
        # remove the estimated accidentals evenly from the four combinations
        share = tally.accidentals.count // 4
        counts = BasisCounts(
            max(0, counts.c_pp - share),
            max(0, counts.c_pm - share),
            max(0, counts.c_mp - share),
            max(0, counts.c_mm - share),
        )
    try:
        visibility = visibility_from_counts(counts)
        qber = qber_from_visibility(visibility)
    except UndefinedVisibilityError:
        visibility = None
        qber = None
    return PairBasisResult(
        basis=tally.basis_a,
        counts=counts,
        duration_s=tally.duration_s,
        coincidence_rate_cps=counts.total / tally.duration_s,
        visibility=visibility,
        qber=qber,
        delay_ps=tally.delay_ps,
        accidental_count=tally.accidentals.count if tally.accidentals else 0,
        accidental_rate_analytic=(
            tally.accidentals.analytic if tally.accidentals else 0.0
        ),
    )


def analyze_segment(
    alice_tags: np.ndarray,
    bob_tags: np.ndarray,
    *,
    basis: str,
    duration_s: float,
    cfg: RunConfig,
) -> PairBasisResult:
    """Run the coincidence chain on one acquisition's two tag streams."""
    tally = tally_basis(
        alice_tags,
        bob_tags,
        basis_a=basis,
        basis_b=basis,
        window_ps=cfg.analysis.window_ps,
        duration_s=duration_s,
        hist_bin_ps=cfg.analysis.hist_bin_ps,
        hist_range_ps=cfg.analysis.hist_range_ps,
        accidental_offset_ps=int(
            round(cfg.analysis.accidental_offset_windows * cfg.analysis.window_ps)
        ),
        mode=cfg.analysis.window_mode,
    )
    return _tally_to_result(tally, cfg.analysis.subtract_accidentals)


def _pair_key_rate(
    hv: PairBasisResult, da: PairBasisResult, ec_efficiency: float
) -> Tuple[float, float]:
    if hv.qber is None or da.qber is None:
        return 0.0, 0.0
    skr = secret_key_rate(
        KeyRateInputs(
            coin_rate_hv=hv.coincidence_rate_cps,
            coin_rate_da=da.coincidence_rate_cps,
            qber_hv=min(hv.qber, 0.5),
            qber_da=min(da.qber, 0.5),
            ec_efficiency=ec_efficiency,
        )
    )
    return skr, max(0.0, skr)


def simulate_segment(
    cfg: RunConfig,
    pair: CorePair,
    segment: ScheduleSegment,
    segment_index: int,
    angle_offset_deg: float,
):
    """One (pair, segment) acquisition; the seed mixes in the segment index."""
    link = cfg.link.to_link_params()
    source = SourceParams(
        pair_rate=cfg.source.pair_rate * segment.rate_scale,
        visibility=cfg.source.visibility,
        temperature_c=cfg.source.temperature_c,
    )
    setting = _BASIS_SETTINGS[segment.basis]
    result = simulate_run(
        source,
        [SimChannel(pair=pair, alice=link, bob=link)],
        setting,
        setting,
        segment.duration_s,
        seed=cfg.seed + 7919 * segment_index,
        angle_offset_deg=angle_offset_deg,
        time_offset_ps=int(round(segment.start_s * _PS_PER_S)),
        mark_dark_tags=cfg.emit_ground_truth,
    )
    return result


def run_basis_scan(cfg: RunConfig, pair_ids: Optional[Sequence[int]] = None) -> KeyRateReport:
    """Measure every selected pair in both bases and aggregate the ring.

    Each pair is acquired for the configured time in the HV and DA bases,
    analyzed to visibility, QBER and coincidence rate, and scored with the
    key-rate formula; the ring total sums the per-pair rates clamped at
    zero.
    """
    _, coupling = geometry_from_config(cfg)
    pairs = selected_pairs(cfg, coupling)
    if pair_ids is not None:
        wanted = set(pair_ids)
        pairs = tuple(p for p in pairs if p.pair_id in wanted)
    if not pairs:
        raise ValueError("empty pair set")

    schedule = MeasurementSchedule.basis_scan(
        cfg.schedule.acquisition_s, cfg.schedule.bases, cfg.schedule.rate_scales
    )

    def work(pair: CorePair) -> PairReport:
        per_basis: Dict[str, PairBasisResult] = {}
        for idx, segment in enumerate(schedule.segments):
            sim = simulate_segment(cfg, pair, segment, idx, 0.0)
            streams = sim.streams[pair.pair_id]
            per_basis[segment.basis] = analyze_segment(
                streams.alice,
                streams.bob,
                basis=segment.basis,
                duration_s=segment.duration_s,
                cfg=cfg,
            )
        hv = per_basis.get("HV")
        da = per_basis.get("DA", hv)
        if hv is None:
            hv = da
        skr, clamped = _pair_key_rate(hv, da, cfg.keyrate.ec_efficiency)
        return PairReport(
            pair_id=pair.pair_id,
            ring=pair.ring,
            hv=hv,
            da=da,
            skr_bits_s=skr,
            skr_clamped_bits_s=clamped,
        )

    with ThreadPoolExecutor(max_workers=worker_count(len(pairs))) as pool:
        reports = list(pool.map(work, pairs))
    reports.sort(key=lambda r: r.pair_id)
    return KeyRateReport(ring=cfg.ring, ec_efficiency=cfg.keyrate.ec_efficiency, pairs=reports)


def run_stability(
    cfg: RunConfig,
    total_hours: float = 24.0,
    switch_minutes: float = 30.0,
    acquisition_s: float = 60.0,
    pair_id: Optional[int] = None,
) -> List[StabilityPoint]:
    """Long-term protocol: one acquisition per slot, alternating bases.

    Emits one (QBER, key rate) point per slot.  The key rate combines the
    current slot with the most recent acquisition of the other basis; the
    very first slot reuses itself for both bases until the second basis has
    been measured.  Polarization drift accumulates across the run as a
    reflected random walk sampled at each slot start.
    """
    _, coupling = geometry_from_config(cfg)
    pairs = selected_pairs(cfg, coupling)
    if pair_id is not None:
        pairs = tuple(p for p in pairs if p.pair_id == pair_id)
    if not pairs:
        raise ValueError("empty pair set")
    pair = pairs[0]

    schedule = MeasurementSchedule.stability(
        total_hours, switch_minutes, acquisition_s, cfg.schedule.rate_scales
    )
    slot_hours = np.array([seg.start_s / 3600.0 for seg in schedule.segments])
    offsets = apply_polarization_drift(
        slot_hours, cfg.drift.rate_deg_per_hour, cfg.seed, cfg.drift.max_offset_deg
    )

    points: List[StabilityPoint] = []
    latest: Dict[str, PairBasisResult] = {}
    for k, segment in enumerate(schedule.segments):
        sim = simulate_segment(cfg, pair, segment, k, float(offsets[k]))
        streams = sim.streams[pair.pair_id]
        result = analyze_segment(
            streams.alice,
            streams.bob,
            basis=segment.basis,
            duration_s=segment.duration_s,
            cfg=cfg,
        )
        latest[segment.basis] = result
        hv = latest.get("HV", result)
        da = latest.get("DA", result)
        skr, clamped = _pair_key_rate(hv, da, cfg.keyrate.ec_efficiency)
        points.append(
            StabilityPoint(
                slot=k,
                time_hours=float(slot_hours[k]),
                basis=segment.basis,
                coincidence_rate_cps=result.coincidence_rate_cps,
                visibility=result.visibility,
                qber=result.qber,
                skr_bits_s=skr,
                skr_clamped_bits_s=clamped,
                drift_offset_deg=float(offsets[k]),
            )
        )
    return points
