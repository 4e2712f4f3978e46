"""Monte Carlo generation of detector timetag streams for entangled pairs.

Pair emission at the crystal is a Poisson process thinned three ways: into a
core pair (coupling probability), through per-arm transmission, and past the
detector efficiency.  The thinning is applied analytically before any event
is materialized, which is distribution-identical to simulating every crystal
emission but keeps the event count proportional to what the detectors
actually see.  Every stream derives its randomness from (master seed,
pair id), so runs are reproducible bit for bit and core pairs can be
simulated in any order or in parallel.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .geometry import CoreLayout, CorePair, adjacency_map

__all__ = [
    "CH_ALICE_T",
    "CH_ALICE_R",
    "CH_BOB_T",
    "CH_BOB_R",
    "FLAG_DARK",
    "TAG_DTYPE",
    "SourceParams",
    "LinkParams",
    "AnalyzerSetting",
    "SimChannel",
    "PairStreams",
    "PairTruth",
    "GroundTruth",
    "SimulationResult",
    "joint_outcome_probs",
    "simulate_run",
    "apply_polarization_drift",
]

CH_ALICE_T, CH_ALICE_R, CH_BOB_T, CH_BOB_R = 0, 1, 2, 3

#: flags bit 0 marks a dark count when ground-truth emission is enabled
FLAG_DARK = 0x01

#: in-memory record layout, identical to the 16-byte on-disk record
TAG_DTYPE = np.dtype(
    [("time_ps", "<u8"), ("channel", "u1"), ("flags", "u1"), ("reserved", "V6")]
)

_PICOSECONDS_PER_SECOND = 1_000_000_000_000

# seed-sequence salts keeping the independent random streams disjoint
# (core-pair streams use the bare pair id, crosstalk deposits 10000 + core id)
_MASTER_SALT = 0x4D435154
_XTALK_SALT = 10_000
_DRIFT_SALT = 0x0D21F7


@dataclass(frozen=True)
class SourceParams:
    """Photon-pair source: emission rate and Werner-type visibility."""

    pair_rate: float
    visibility: float
    temperature_c: float = 82.5

    def __post_init__(self) -> None:
        if self.pair_rate <= 0:
            raise ValueError("pair_rate must be > 0")
        if not 0.0 <= self.visibility <= 1.0:
            raise ValueError("visibility must be in [0, 1]")


@dataclass(frozen=True)
class LinkParams:
    """Loss, detector and noise parameters of one arm of one channel."""

    fiber_length_km: float = 0.411
    fiber_loss_db_per_km: float = 0.2
    system_loss_db: float = 0.0
    detector_efficiency: float = 1.0
    dark_rate_cps: float = 100.0
    jitter_sigma_ps: float = 50.0
    crosstalk_prob: float = 0.0
    propagation_delay_ps: int = 0

    def __post_init__(self) -> None:
        if self.fiber_length_km < 0 or self.fiber_loss_db_per_km < 0 or self.system_loss_db < 0:
            raise ValueError("losses and length must be >= 0")
        if not 0.0 < self.detector_efficiency <= 1.0:
            raise ValueError("detector_efficiency must be in (0, 1]")
        if self.dark_rate_cps < 0:
            raise ValueError("dark_rate_cps must be >= 0")
        if self.jitter_sigma_ps < 0:
            raise ValueError("jitter_sigma_ps must be >= 0")
        if not 0.0 <= self.crosstalk_prob < 1.0:
            raise ValueError("crosstalk_prob must be in [0, 1)")

    @property
    def transmission(self) -> float:
        """Survival probability of a photon entering this arm."""
        loss_db = self.fiber_loss_db_per_km * self.fiber_length_km + self.system_loss_db
        return 10.0 ** (-loss_db / 10.0) * self.detector_efficiency


@dataclass(frozen=True)
class AnalyzerSetting:
    """Half-wave plate angle of one polarization analysis module."""

    hwp_angle_deg: float

    @property
    def analyzer_angle_deg(self) -> float:
        """Polarization-frame analyzer angle (twice the plate angle)."""
        return 2.0 * self.hwp_angle_deg

    @property
    def basis(self) -> Optional[str]:
        if self.hwp_angle_deg == 0.0:
            return "HV"
        if self.hwp_angle_deg == 22.5:
            return "DA"
        return None

    @classmethod
    def hv(cls) -> "AnalyzerSetting":
        return cls(0.0)

    @classmethod
    def da(cls) -> "AnalyzerSetting":
        return cls(22.5)


@dataclass(frozen=True)
class SimChannel:
    """One opposite-core channel with its two arms."""

    pair: CorePair
    alice: LinkParams
    bob: LinkParams


@dataclass
class PairStreams:
    alice: np.ndarray  # TAG_DTYPE, channels 0/1
    bob: np.ndarray  # TAG_DTYPE, channels 2/3


@dataclass
class PairTruth:
    pair_id: int
    emitted: int
    outcome_counts: Tuple[int, int, int, int]
    true_coincidences: int
    photon_singles: Dict[int, int]
    dark_counts: Dict[int, int]
    crosstalk_out: int
    crosstalk_in: int = 0


@dataclass
class GroundTruth:
    duration_s: float
    seed: int
    total_emitted: int
    uncoupled_emissions: int
    pairs: Dict[int, PairTruth] = field(default_factory=dict)


@dataclass
class SimulationResult:
    streams: Dict[int, PairStreams]
    truth: GroundTruth


def joint_outcome_probs(
    theta_a_deg: float, theta_b_deg: float, visibility: float
) -> Tuple[float, float, float, float]:
    """Outcome probabilities (++, +-, -+, --) for analyzer angles a and b.

    P(a, b) = 1/4 (1 + a b V cos 2(theta_a - theta_b)) for a, b in {+1, -1},
    the correlation of a maximally entangled state mixed with isotropic
    noise of visibility V.
    """
    if not 0.0 <= visibility <= 1.0:
        raise ValueError("visibility must be in [0, 1]")
    c = visibility * math.cos(2.0 * math.radians(theta_a_deg - theta_b_deg))
    same = 0.25 * (1.0 + c)
    diff = 0.25 * (1.0 - c)
    return (same, diff, diff, same)


def _pair_rng(seed: int, pair_id: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, pair_id])))


def _clip_times(times: np.ndarray, duration_ps: int, slack_ps: int) -> np.ndarray:
    return np.clip(times, 0, duration_ps + slack_ps)


def simulate_run(
    source: SourceParams,
    channels: Sequence[SimChannel],
    alice_setting: AnalyzerSetting,
    bob_setting: AnalyzerSetting,
    duration_s: float,
    seed: int,
    *,
    layout: Optional[CoreLayout] = None,
    angle_offset_deg: float = 0.0,
    time_offset_ps: int = 0,
    mark_dark_tags: bool = False,
) -> SimulationResult:
    """Simulate one acquisition and return per-pair timetag streams.

    Emissions are assigned to core pairs by coupling probability; each photon
    independently survives its arm's transmission, receives Gaussian timing
    jitter (truncated at 6 sigma) and may be rerouted to an adjacent core by
    crosstalk, which breaks its coincidence.  Dark counts are added per
    detector as independent Poisson processes.  Streams come back sorted by
    time with a ground-truth record of what was generated.

    Args:
        layout: needed only to route crosstalk photons into simulated
            neighbor cores; without it rerouted photons are simply lost.
        angle_offset_deg: polarization drift added to Bob's analyzer angle.
        time_offset_ps: added to all timestamps (schedule segment start).
        mark_dark_tags: set the dark-count flag bit on dark tags.
    """
    if duration_s <= 0:
        raise ValueError("duration must be > 0")
    if not channels:
        raise ValueError("empty pair set")
    duration_ps = max(1, int(round(duration_s * _PICOSECONDS_PER_SECOND)))

    total_coupling = sum(ch.pair.coupling_prob for ch in channels)
    if total_coupling == 0.0:
        warnings.warn(
            "all selected core pairs have zero coupling probability; "
            "only dark counts will be generated",
            RuntimeWarning,
            stacklevel=2,
        )

    probs = joint_outcome_probs(
        alice_setting.analyzer_angle_deg,
        bob_setting.analyzer_angle_deg + angle_offset_deg,
        source.visibility,
    )
    cum_probs = np.cumsum(probs)
    cum_probs[-1] = 1.0

    core_owner: Dict[int, Tuple[int, str]] = {}
    for ch in channels:
        core_owner[ch.pair.core_a] = (ch.pair.pair_id, "alice")
        core_owner[ch.pair.core_b] = (ch.pair.pair_id, "bob")
    adjacency = adjacency_map(layout) if layout is not None else None

    master = _pair_rng(seed, _MASTER_SALT)
    uncoupled_rate = source.pair_rate * max(0.0, 1.0 - total_coupling)
    uncoupled = int(master.poisson(uncoupled_rate * duration_s))

    truth = GroundTruth(
        duration_s=duration_s,
        seed=seed,
        total_emitted=uncoupled,
        uncoupled_emissions=uncoupled,
    )
    # rerouted photons waiting for their destination stream: core -> (times, src pair)
    pending_xtalk: Dict[int, List[np.ndarray]] = {}
    parts: Dict[int, Dict[str, List[Tuple[np.ndarray, np.ndarray, np.ndarray]]]] = {}

    for ch in channels:
        pair = ch.pair
        rng = _pair_rng(seed, pair.pair_id)
        lam = source.pair_rate * pair.coupling_prob * duration_s
        n_emit = int(rng.poisson(lam)) if lam > 0 else 0
        truth.total_emitted += n_emit

        t_emit = rng.integers(0, duration_ps, n_emit, dtype=np.int64)
        t_emit.sort()
        surv_a = rng.random(n_emit) < ch.alice.transmission
        surv_b = rng.random(n_emit) < ch.bob.transmission

        both = surv_a & surv_b
        n_both = int(both.sum())
        outcome = np.searchsorted(cum_probs, rng.random(n_both), side="right")
        outcome_counts = np.bincount(outcome, minlength=4)

        # channel of each surviving photon: transmitted port for +, reflected for -
        a_sel = np.flatnonzero(surv_a)
        b_sel = np.flatnonzero(surv_b)
        a_ch = np.empty(a_sel.size, dtype=np.uint8)
        b_ch = np.empty(b_sel.size, dtype=np.uint8)
        both_in_a = both[a_sel]
        both_in_b = both[b_sel]
        a_ch[both_in_a] = np.where(outcome < 2, CH_ALICE_T, CH_ALICE_R)
        b_ch[both_in_b] = np.where(outcome % 2 == 0, CH_BOB_T, CH_BOB_R)
        n_only_a = int(a_sel.size - n_both)
        n_only_b = int(b_sel.size - n_both)
        a_ch[~both_in_a] = rng.integers(CH_ALICE_T, CH_ALICE_R + 1, n_only_a, dtype=np.uint8)
        b_ch[~both_in_b] = rng.integers(CH_BOB_T, CH_BOB_R + 1, n_only_b, dtype=np.uint8)

        def detect_times(select: np.ndarray, link: LinkParams) -> np.ndarray:
            t = t_emit[select] + link.propagation_delay_ps
            if link.jitter_sigma_ps > 0:
                slack = int(math.ceil(6.0 * link.jitter_sigma_ps))
                jitter = rng.normal(0.0, link.jitter_sigma_ps, select.size)
                np.clip(jitter, -slack, slack, out=jitter)
                t = t + np.rint(jitter).astype(np.int64)
            else:
                slack = 0
            return _clip_times(t, duration_ps, slack)

        t_a = detect_times(a_sel, ch.alice)
        t_b = detect_times(b_sel, ch.bob)

        # crosstalk rerouting removes the photon from its own core
        xtalk_a = rng.random(a_sel.size) < ch.alice.crosstalk_prob
        xtalk_b = rng.random(b_sel.size) < ch.bob.crosstalk_prob
        n_xtalk = int(xtalk_a.sum() + xtalk_b.sum())
        for mask, times, core_id in ((xtalk_a, t_a, pair.core_a), (xtalk_b, t_b, pair.core_b)):
            n_out = int(mask.sum())
            if n_out == 0 or adjacency is None:
                continue
            options = adjacency.get(core_id, ())
            if not options:
                continue
            targets = rng.integers(0, len(options), n_out)
            out_times = times[mask]
            for k, target_idx in enumerate(targets):
                target = options[int(target_idx)]
                if target in core_owner:
                    pending_xtalk.setdefault(target, []).append(out_times[k : k + 1])

        keep_a = ~xtalk_a
        keep_b = ~xtalk_b
        # a coincidence survives only if neither photon was rerouted
        kept_a_of_both = keep_a[both_in_a]
        kept_b_of_both = keep_b[both_in_b]
        true_coinc = int((kept_a_of_both & kept_b_of_both).sum())

        # dark counts per detector
        dark_parts = {"alice": [], "bob": []}
        dark_counts: Dict[int, int] = {}
        for det, party, link in (
            (CH_ALICE_T, "alice", ch.alice),
            (CH_ALICE_R, "alice", ch.alice),
            (CH_BOB_T, "bob", ch.bob),
            (CH_BOB_R, "bob", ch.bob),
        ):
            n_dark = int(rng.poisson(link.dark_rate_cps * duration_s))
            dark_counts[det] = n_dark
            d_times = rng.integers(0, duration_ps, n_dark, dtype=np.int64)
            d_flags = np.full(n_dark, FLAG_DARK if mark_dark_tags else 0, dtype=np.uint8)
            dark_parts[party].append(
                (d_times, np.full(n_dark, det, dtype=np.uint8), d_flags)
            )

        photon_singles = {
            CH_ALICE_T: int(np.sum((a_ch == CH_ALICE_T) & keep_a)),
            CH_ALICE_R: int(np.sum((a_ch == CH_ALICE_R) & keep_a)),
            CH_BOB_T: int(np.sum((b_ch == CH_BOB_T) & keep_b)),
            CH_BOB_R: int(np.sum((b_ch == CH_BOB_R) & keep_b)),
        }
        parts[pair.pair_id] = {
            "alice": [(t_a[keep_a], a_ch[keep_a], np.zeros(int(keep_a.sum()), dtype=np.uint8))]
            + dark_parts["alice"],
            "bob": [(t_b[keep_b], b_ch[keep_b], np.zeros(int(keep_b.sum()), dtype=np.uint8))]
            + dark_parts["bob"],
        }
        truth.pairs[pair.pair_id] = PairTruth(
            pair_id=pair.pair_id,
            emitted=n_emit,
            outcome_counts=tuple(int(v) for v in outcome_counts),
            true_coincidences=true_coinc,
            photon_singles=photon_singles,
            dark_counts=dark_counts,
            crosstalk_out=n_xtalk,
        )

    # deposit rerouted photons into their destination streams with a random port
    for core_id, chunks in sorted(pending_xtalk.items()):
        pair_id, party = core_owner[core_id]
        times = np.concatenate(chunks)
        rng = _pair_rng(seed, _XTALK_SALT + core_id)
        base = CH_ALICE_T if party == "alice" else CH_BOB_T
        chans = rng.integers(base, base + 2, times.size, dtype=np.uint8)
        parts[pair_id][party].append(
            (times, chans, np.zeros(times.size, dtype=np.uint8))
        )
        truth.pairs[pair_id].crosstalk_in += times.size

    streams = {
        pair_id: PairStreams(
            alice=_assemble(p["alice"], time_offset_ps),
            bob=_assemble(p["bob"], time_offset_ps),
        )
        for pair_id, p in parts.items()
    }
    return SimulationResult(streams=streams, truth=truth)


def _assemble(
    chunks: List[Tuple[np.ndarray, np.ndarray, np.ndarray]], time_offset_ps: int
) -> np.ndarray:
    times = np.concatenate([c[0] for c in chunks]) + time_offset_ps
    chans = np.concatenate([c[1] for c in chunks])
    flags = np.concatenate([c[2] for c in chunks])
    order = np.lexsort((chans, times))
    tags = np.zeros(times.size, dtype=TAG_DTYPE)
    tags["time_ps"] = times[order].astype(np.uint64)
    tags["channel"] = chans[order]
    tags["flags"] = flags[order]
    return tags


def apply_polarization_drift(
    sample_times_hours: Sequence[float],
    drift_rate_deg_per_hour: float,
    seed: int,
    max_offset_deg: float = 3.0,
) -> np.ndarray:
    """Polarization drift offsets at the requested times.

    A Gaussian random walk on the analyzer misalignment angle, with standard
    deviation ``drift_rate`` per hour of elapsed time, reflected at
    +-max_offset so the misalignment stays bounded, as it does for a fiber
    left alone at fixed temperature.
    """
    if drift_rate_deg_per_hour < 0:
        raise ValueError("drift rate must be >= 0")
    times = np.asarray(sample_times_hours, dtype=float)
    if times.size and np.any(np.diff(times) < 0):
        raise ValueError("sample times must be non-decreasing")
    if drift_rate_deg_per_hour == 0 or times.size == 0:
        return np.zeros(times.size)
    if max_offset_deg <= 0:
        raise ValueError("max_offset_deg must be > 0")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, _DRIFT_SALT])))
    dt = np.diff(np.concatenate(([0.0], times)))
    steps = rng.normal(0.0, 1.0, times.size) * drift_rate_deg_per_hour * np.sqrt(dt)
    walk = np.cumsum(steps)
    # reflect into [-max, +max] with a triangle-wave fold
    period = 4.0 * max_offset_deg
    folded = np.mod(walk + max_offset_deg, period)
    folded = np.where(folded > 2.0 * max_offset_deg, period - folded, folded)
    return folded - max_offset_deg
