"""Command-line front end.

Verbs:

* ``simulate``   - generate per-pair timetag files plus a ground-truth JSON
* ``analyze``    - run the coincidence chain on a simulate output directory
* ``linkbudget`` - key rate versus fiber length as CSV
* ``stability``  - long-term alternating-basis protocol as CSV + JSON
* ``reproduce``  - bundled reference scenarios (fig2 / fig3) as CSV + SVG

Every command exits non-zero on any error and zero only on full success.
``MCFQKD_THREADS`` caps the per-pair simulation parallelism.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
import warnings
from dataclasses import asdict
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from . import __version__
from .config import (
    ConfigError,
    RunConfig,
    dumps_config,
    geometry_from_config,
    load_config,
    loads_config,
    preset,
    preset_inner,
    preset_outer,
    preset_stability,
    selected_pairs,
)
from .linkbudget import (
    max_positive_length,
    model_from_config,
    sweep_lengths,
)
from .runner import (
    KeyRateReport,
    MeasurementSchedule,
    PairBasisResult,
    PairReport,
    analyze_segment,
    run_stability,
    simulate_segment,
    _pair_key_rate,
)
from .tagio import CHANNEL_ALICE, CHANNEL_BOB, TagFormatError, read_timetags, write_timetags

META_FILENAME = "ground_truth.json"
_PS_PER_S = 1_000_000_000_000

#: exact public contract for the linkbudget sweep CSV
LINKBUDGET_CSV_HEADER = ["length_km", "coin_rate", "qber", "skr_pair_bits_s", "skr_ring_bits_s"]

STABILITY_CSV_HEADER = [
    "slot",
    "time_hours",
    "basis",
    "coincidence_rate_cps",
    "visibility",
    "qber",
    "skr_bits_s",
    "skr_clamped_bits_s",
    "drift_offset_deg",
]

REPORT_CSV_HEADER = [
    "pair_id",
    "ring",
    "c_hv_cps",
    "c_da_cps",
    "visibility_hv",
    "visibility_da",
    "qber_hv",
    "qber_da",
    "accidentals_hv",
    "accidentals_da",
    "skr_bits_s",
    "skr_clamped_bits_s",
]


class CliError(Exception):
    """Raised for user-facing command failures."""


def _load_run_config(args) -> RunConfig:
    if getattr(args, "config", None):
        cfg = load_config(args.config)
    elif getattr(args, "preset", None):
        cfg = preset(args.preset)
    else:
        raise CliError("either --config or --preset is required")
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "window_ps", None) is not None:
        cfg.analysis.window_ps = args.window_ps
        cfg.validate()
    return cfg


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_csv(path: Path, header: List[str], rows: List[List]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _fmt(value) -> str:
    if value is None:
        return ""
    return repr(float(value))


# ---------------------------------------------------------------- simulate


def cmd_simulate(args) -> int:
    cfg = _load_run_config(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    _, coupling = geometry_from_config(cfg)
    pairs = selected_pairs(cfg, coupling)
    if not pairs:
        raise CliError("empty pair set")
    schedule = MeasurementSchedule.basis_scan(
        cfg.schedule.acquisition_s, cfg.schedule.bases, cfg.schedule.rate_scales
    )

    meta: Dict = {
        "format": "mcfqkd-run-meta",
        "version": 1,
        "seed": cfg.seed,
        "config": json.loads(dumps_config(cfg)),
        "schedule": [
            {
                "basis": seg.basis,
                "start_ps": int(round(seg.start_s * _PS_PER_S)),
                "duration_ps": int(round(seg.duration_s * _PS_PER_S)),
            }
            for seg in schedule.segments
        ],
        "files": {},
        "truth": {"per_pair": {}},
    }

    for pair in pairs:
        alice_parts, bob_parts = [], []
        truth_entry: Dict = {
            "ring": pair.ring,
            "coupling_prob": pair.coupling_prob,
            "emitted": 0,
            "true_coincidences": {},
        }
        for idx, segment in enumerate(schedule.segments):
            sim = simulate_segment(cfg, pair, segment, idx, 0.0)
            streams = sim.streams[pair.pair_id]
            alice_parts.append(streams.alice)
            bob_parts.append(streams.bob)
            pt = sim.truth.pairs[pair.pair_id]
            truth_entry["emitted"] += pt.emitted
            truth_entry["true_coincidences"][segment.basis] = pt.true_coincidences
        alice_name = f"pair{pair.pair_id}_alice.mcqt"
        bob_name = f"pair{pair.pair_id}_bob.mcqt"
        write_timetags(out_dir / alice_name, np.concatenate(alice_parts), CHANNEL_ALICE)
        write_timetags(out_dir / bob_name, np.concatenate(bob_parts), CHANNEL_BOB)
        meta["files"][str(pair.pair_id)] = {"alice": alice_name, "bob": bob_name}
        meta["truth"]["per_pair"][str(pair.pair_id)] = truth_entry

    _write_json(out_dir / META_FILENAME, meta)
    print(f"simulate: wrote {2 * len(pairs)} timetag files to {out_dir}")
    return 0


# ----------------------------------------------------------------- analyze


def _slice_segment(tags: np.ndarray, start_ps: int, end_ps: Optional[int]) -> np.ndarray:
    times = tags["time_ps"].astype(np.int64)
    lo = int(np.searchsorted(times, start_ps, side="left"))
    hi = int(np.searchsorted(times, end_ps, side="left")) if end_ps is not None else len(tags)
    out = tags[lo:hi].copy()
    out["time_ps"] -= np.uint64(start_ps)
    return out


def cmd_analyze(args) -> int:
    in_dir = Path(getattr(args, "in_dir"))
    meta_path = in_dir / META_FILENAME
    if not meta_path.exists():
        raise CliError(f"missing {META_FILENAME} in {in_dir}")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    if meta.get("format") != "mcfqkd-run-meta":
        raise CliError(f"{meta_path} is not a run metadata file")

    cfg = loads_config(json.dumps(meta["config"]))
    if getattr(args, "window_ps", None) is not None:
        cfg.analysis.window_ps = args.window_ps
        cfg.validate()

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    segments = meta["schedule"]
    boundaries = [seg["start_ps"] for seg in segments] + [None]

    reports: List[PairReport] = []
    truth_compare = {}
    for pair_id_str, files in sorted(meta["files"].items(), key=lambda kv: int(kv[0])):
        pair_id = int(pair_id_str)
        alice, ch_a = read_timetags(in_dir / files["alice"])
        bob, ch_b = read_timetags(in_dir / files["bob"])
        if ch_a != CHANNEL_ALICE or ch_b != CHANNEL_BOB:
            raise CliError(f"pair {pair_id}: file channel ids do not match their roles")
        alice, bob = _restrict_to_overlap(alice, bob, pair_id, segments)

        per_basis: Dict[str, PairBasisResult] = {}
        analyzed_counts: Dict[str, int] = {}
        for idx, seg in enumerate(segments):
            a = _slice_segment(alice, seg["start_ps"], boundaries[idx + 1])
            b = _slice_segment(bob, seg["start_ps"], boundaries[idx + 1])
            result = analyze_segment(
                a,
                b,
                basis=seg["basis"],
                duration_s=seg["duration_ps"] / _PS_PER_S,
                cfg=cfg,
            )
            per_basis[seg["basis"]] = result
            analyzed_counts[seg["basis"]] = result.counts.total
        hv = per_basis.get("HV") or next(iter(per_basis.values()))
        da = per_basis.get("DA", hv)
        skr, clamped = _pair_key_rate(hv, da, cfg.keyrate.ec_efficiency)
        reports.append(
            PairReport(
                pair_id=pair_id,
                ring=meta["truth"]["per_pair"][pair_id_str]["ring"],
                hv=hv,
                da=da,
                skr_bits_s=skr,
                skr_clamped_bits_s=clamped,
            )
        )
        truth_compare[pair_id_str] = {
            "analyzed": analyzed_counts,
            "ground_truth": meta["truth"]["per_pair"][pair_id_str]["true_coincidences"],
        }

    report = KeyRateReport(
        ring=cfg.ring, ec_efficiency=cfg.keyrate.ec_efficiency, pairs=reports
    )
    payload = {
        "ring": report.ring,
        "ec_efficiency": report.ec_efficiency,
        "total_bits_s": report.total_bits_s,
        "mean_qber": None if np.isnan(report.mean_qber) else report.mean_qber,
        "pairs": [asdict(p) for p in report.pairs],
        "truth_comparison": truth_compare,
    }
    _write_json(out_dir / "report.json", payload)
    _write_csv(
        out_dir / "report.csv",
        REPORT_CSV_HEADER,
        [
            [
                p.pair_id,
                p.ring,
                _fmt(p.hv.coincidence_rate_cps),
                _fmt(p.da.coincidence_rate_cps),
                _fmt(p.hv.visibility),
                _fmt(p.da.visibility),
                _fmt(p.hv.qber),
                _fmt(p.da.qber),
                p.hv.accidental_count,
                p.da.accidental_count,
                _fmt(p.skr_bits_s),
                _fmt(p.skr_clamped_bits_s),
            ]
            for p in report.pairs
        ],
    )
    print(
        f"analyze: {len(reports)} pairs, total {report.total_bits_s:.1f} bits/s, "
        f"mean QBER {report.mean_qber:.4f}"
    )
    return 0


def _restrict_to_overlap(alice: np.ndarray, bob: np.ndarray, pair_id: int, segments):
    """Warn on mismatched stream spans and keep only the common time range.

    Coincidence rates still use the nominal segment durations, so a
    truncated stream shows up as a low rate rather than a silently shifted
    one.
    """
    if len(alice) == 0 or len(bob) == 0:
        return alice, bob
    span = segments[-1]["start_ps"] + segments[-1]["duration_ps"]
    end_a = int(alice["time_ps"].max())
    end_b = int(bob["time_ps"].max())
    if abs(end_a - end_b) > max(0.01 * span, 1e9):
        warnings.warn(
            f"pair {pair_id}: stream durations differ "
            f"({end_a / _PS_PER_S:.3f} s vs {end_b / _PS_PER_S:.3f} s); "
            "analyzing the overlap",
            RuntimeWarning,
            stacklevel=2,
        )
        cutoff = np.uint64(min(end_a, end_b))
        alice = alice[alice["time_ps"] <= cutoff]
        bob = bob[bob["time_ps"] <= cutoff]
    return alice, bob


# -------------------------------------------------------------- linkbudget


def _sweep_rows(points) -> List[List[str]]:
    return [
        [
            _fmt(pt.length_km),
            _fmt(pt.coin_rate_cps),
            _fmt(pt.qber),
            _fmt(pt.skr_pair_bits_s),
            _fmt(pt.skr_ring_bits_s),
        ]
        for pt in points
    ]


def cmd_linkbudget(args) -> int:
    cfg = _load_run_config(args)
    if args.step_km <= 0:
        raise CliError(f"--step-km must be > 0, got {args.step_km}")
    model = model_from_config(cfg)
    if args.lmax_km < model.reference_length_km:
        raise CliError(
            f"--lmax-km {args.lmax_km} is below the reference length "
            f"{model.reference_length_km} km"
        )
    points = sweep_lengths(model, args.lmax_km, args.step_km)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    _write_csv(out, LINKBUDGET_CSV_HEADER, _sweep_rows(points))
    try:
        reach = max_positive_length(model)
        reach_text = f"{reach:.1f} km"
    except ValueError:
        reach_text = "none (already non-positive at reference)"
    print(f"linkbudget: {len(points)} grid points -> {out}; max positive length {reach_text}")
    return 0


# --------------------------------------------------------------- stability


def cmd_stability(args) -> int:
    cfg = _load_run_config(args)
    points = run_stability(
        cfg,
        total_hours=args.hours,
        switch_minutes=args.switch_min,
        acquisition_s=args.acquisition_s,
    )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = [
        [
            p.slot,
            _fmt(p.time_hours),
            p.basis,
            _fmt(p.coincidence_rate_cps),
            _fmt(p.visibility),
            _fmt(p.qber),
            _fmt(p.skr_bits_s),
            _fmt(p.skr_clamped_bits_s),
            _fmt(p.drift_offset_deg),
        ]
        for p in points
    ]
    _write_csv(out_dir / "stability.csv", STABILITY_CSV_HEADER, rows)
    _write_json(out_dir / "stability.json", [asdict(p) for p in points])
    qbers = [p.qber for p in points if p.qber is not None]
    print(
        f"stability: {len(points)} slots over {args.hours} h; "
        f"mean QBER {float(np.mean(qbers)):.4f}, "
        f"mean key rate {float(np.mean([p.skr_bits_s for p in points])):.0f} bits/s"
    )
    return 0


# --------------------------------------------------------------- reproduce


def cmd_reproduce(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.figure == "fig2":
        return _reproduce_fig2(out_dir)
    if args.figure == "fig3":
        return _reproduce_fig3(out_dir, args.hours)
    raise CliError(f"unknown figure id {args.figure!r}; expected fig2 or fig3")


def _reproduce_fig2(out_dir: Path) -> int:
    from .svgplot import Marker, Series, line_chart

    curves = {}
    for name, cfg in (("inner", preset_inner()), ("outer", preset_outer())):
        model = model_from_config(cfg)
        points = sweep_lengths(model, 250.0, 1.0)
        _write_csv(out_dir / f"fig2_{name}.csv", LINKBUDGET_CSV_HEADER, _sweep_rows(points))
        curves[name] = (model, points)

    series = [
        Series(
            name=f"{name} ring (model)",
            xs=[p.length_km for p in pts],
            ys=[p.skr_ring_bits_s for p in pts],
            color="#2a7a2a" if name == "inner" else "#e08020",
        )
        for name, (_, pts) in curves.items()
    ]
    markers = [
        Marker(0.411, 7300.0, "7.3 kbit/s at 411 m", "#2a7a2a"),
        Marker(0.411, 34_500.0, "34.5 kbit/s at 411 m", "#e08020"),
    ]
    line_chart(
        out_dir / "fig2.svg",
        series,
        title="Secret key rate vs multicore fiber length",
        x_label="fiber length (km)",
        y_label="ring secret key rate (bits/s)",
        markers=markers,
        y_log=True,
    )
    for name, (model, _) in curves.items():
        print(f"reproduce fig2: {name} max positive length {max_positive_length(model):.1f} km")
    print(f"reproduce fig2: wrote CSV + SVG to {out_dir}")
    return 0


def _reproduce_fig3(out_dir: Path, hours: float) -> int:
    from .svgplot import Series, line_chart

    cfg = preset_stability()
    points = run_stability(cfg, total_hours=hours, switch_minutes=30.0, acquisition_s=60.0)
    rows = [
        [
            p.slot,
            _fmt(p.time_hours),
            p.basis,
            _fmt(p.coincidence_rate_cps),
            _fmt(p.visibility),
            _fmt(p.qber),
            _fmt(p.skr_bits_s),
            _fmt(p.skr_clamped_bits_s),
            _fmt(p.drift_offset_deg),
        ]
        for p in points
    ]
    _write_csv(out_dir / "fig3.csv", STABILITY_CSV_HEADER, rows)
    times = [p.time_hours for p in points]
    line_chart(
        out_dir / "fig3_qber.svg",
        [Series("QBER (%)", times, [100.0 * p.qber for p in points], "#2060c0")],
        title="QBER stability over one core pair",
        x_label="time (hours)",
        y_label="QBER (%)",
    )
    line_chart(
        out_dir / "fig3_keyrate.svg",
        [Series("key rate (kbit/s)", times, [p.skr_bits_s / 1e3 for p in points], "#2a7a2a")],
        title="Key rate stability over one core pair",
        x_label="time (hours)",
        y_label="secret key rate (kbit/s)",
    )
    print(f"reproduce fig3: {len(points)} points over {hours} h -> {out_dir}")
    return 0


# -------------------------------------------------------------------- main


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mcfqkd",
        description="Entanglement QKD over opposite multicore-fiber cores: "
        "simulation, coincidence analysis and key-rate estimation.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_args(p):
        p.add_argument("--config", help="run configuration JSON")
        p.add_argument(
            "--preset",
            choices=["inner", "outer", "stability"],
            help="bundled calibrated configuration",
        )
        p.add_argument("--seed", type=int, help="override the configured seed")

    p = sub.add_parser("simulate", help="generate timetag files")
    add_config_args(p)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analyze", help="analyze a simulate output directory")
    p.add_argument("--in", dest="in_dir", required=True, help="simulate output directory")
    p.add_argument("--out", required=True, help="output directory for reports")
    p.add_argument("--window-ps", type=int, help="override the coincidence window")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("linkbudget", help="key rate versus fiber length")
    add_config_args(p)
    p.add_argument("--lmax-km", type=float, default=250.0)
    p.add_argument("--step-km", type=float, default=1.0)
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=cmd_linkbudget)

    p = sub.add_parser("stability", help="long-term alternating-basis run")
    add_config_args(p)
    p.add_argument("--hours", type=float, default=24.0)
    p.add_argument("--switch-min", type=float, default=30.0)
    p.add_argument("--acquisition-s", type=float, default=60.0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_stability)

    p = sub.add_parser("reproduce", help="bundled reference scenarios")
    p.add_argument("figure", choices=["fig2", "fig3"])
    p.add_argument("--hours", type=float, default=24.0, help="fig3 duration")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_reproduce)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CliError, ConfigError, TagFormatError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
