"""Pipeline orchestration and the busghg command line.

Stages communicate through documented CSV files in the output directory, so
``busghg run`` and the individual subcommands (ingest, sinuosity, emissions,
gapfill, analyze, synth) produce bit-identical artifacts. Exit codes:
0 success, 1 configuration error, 2 data error, 3 internal error.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import logging
import os
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import busghg
from busghg import _kernels, analytics, gapfill, sinuosity
from busghg.config import RunConfig, load_config
from busghg.emissions import (ConsumptionCurve, EmissionTable, build_emission_table,
                              load_fuels_csv, write_emissions_csv)
from busghg.errors import ConfigError, DataError
from busghg.geo import load_graph_csv, load_graph_geojson, GeoPoint
from busghg.ingest import (clean_records, dump_partitions, parse_records,
                           partition_by_vehicle_day)
from busghg.pairing import (PairingStats, build_segments, read_segments_csv,
                            write_segments_csv)
from busghg.synthgen import scenario_from_yaml, write_fixture

log = logging.getLogger("busghg")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DATA = 2
EXIT_INTERNAL = 3


def _out(cfg: RunConfig, name: str) -> Path:
    return Path(cfg.output_dir) / name


def _pair_chunk(args):
    # module-level for pickling by the process pool
    partitions, cfg, tz = args
    segments = []
    stats = PairingStats()
    for part in partitions:
        segs, st = build_segments(part, cfg, tz)
        segments.extend(segs)
        stats.merge(st)
    return segments, stats


def stage_ingest(cfg: RunConfig) -> dict:
    """gps.csv -> segments.csv (+ ingest_report.json, optional partition dump)."""
    outdir = Path(cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    try:
        # utf-8-sig: municipal exports often lead with a BOM
        stream = open(cfg.gps_path, newline="", encoding="utf-8-sig")
    except OSError as exc:
        raise DataError(f"cannot read GPS input {cfg.gps_path}: {exc}") from None
    with stream:
        clean, stats, diags = clean_records(parse_records(stream, cfg.schema), cfg.bounds)
    partitions = partition_by_vehicle_day(clean, cfg.tz)
    if cfg.dump_partitions:
        dump_partitions(partitions, outdir / "partitions")

    parts = list(partitions.values())
    pair_stats = PairingStats()
    segments = []
    if cfg.workers > 1 and len(parts) > 1:
        # contiguous chunks keep the sorted partition order, so concatenating
        # the mapped results is byte-identical to a serial pass
        size = max(1, -(-len(parts) // (cfg.workers * 4)))
        chunks = [parts[i:i + size] for i in range(0, len(parts), size)]
        with concurrent.futures.ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_pair_chunk, [(c, cfg.pairing, cfg.tz) for c in chunks]))
        for segs, st in results:
            segments.extend(segs)
            pair_stats.merge(st)
    else:
        for part in parts:
            segs, st = build_segments(part, cfg.pairing, cfg.tz)
            segments.extend(segs)
            pair_stats.merge(st)

    n_segments = write_segments_csv(segments, _out(cfg, "segments.csv"))
    report = {
        "rows_read": stats.rows_read,
        "rows_parsed": stats.rows_parsed,
        "rows_rejected_parse": stats.rows_rejected_parse,
        "rows_rejected_bounds": stats.rows_rejected_bounds,
        "clean_records": stats.clean_count,
        "partitions": len(parts),
        "segments": n_segments,
        "pairs_gap_skipped": pair_stats.gap_skipped,
        "pairs_duplicate_ts": pair_stats.duplicate_ts,
        "pairs_speed_rejected": pair_stats.speed_rejected,
        "line_changes": pair_stats.line_changes,
        "parse_diagnostics_sample": [
            {"row": d.source_row, "column": d.column, "message": d.message}
            for d in diags[:50]
        ],
    }
    _write_json(report, _out(cfg, "ingest_report.json"))
    log.info("ingest: %d rows -> %d clean records -> %d segments",
             stats.rows_read, stats.clean_count, n_segments)
    return report


def _load_graph(cfg: RunConfig):
    if cfg.graph_geojson is not None:
        return load_graph_geojson(cfg.graph_geojson)
    return load_graph_csv(cfg.graph_nodes, cfg.graph_edges)


def stage_sinuosity(cfg: RunConfig) -> dict:
    """segments.csv + street graph -> sinuosity_report.csv."""
    segments = read_segments_csv(_require_file(_out(cfg, "segments.csv"), "sinuosity"))
    graph = _load_graph(cfg)
    sample = sinuosity.sample_segments(segments, cfg.sample_fraction, cfg.seed)
    samples = sinuosity.reconstruct_sample(sample, graph, cfg.pairing, cfg.snap_radius_m)
    est = sinuosity.estimate_sinuosity(
        samples, fraction_sampled=cfg.sample_fraction,
        bin_width=cfg.hist_bin_width, hist_lo=cfg.hist_lo, hist_hi=cfg.hist_hi,
    )
    sinuosity.write_report_csv(est, _out(cfg, "sinuosity_report.csv"))
    log.info("sinuosity: mean_s=%.4f from %d used samples (of %d drawn)",
             est.mean_s, est.sample_size, len(sample))
    return {"mean_s": est.mean_s, "sample_drawn": len(sample),
            "sample_used": est.sample_size, "dispositions": est.dispositions}


def _effective_estimate(cfg: RunConfig, mean_s_override: float | None):
    if mean_s_override is not None:
        override = sinuosity.SinuosityEstimate(
            mean_s=float(mean_s_override), sample_size=1, fraction_sampled=0.0,
            histogram=(), dispositions={"used": 1},
        )
        return override, True
    report = _out(cfg, "sinuosity_report.csv")
    if not report.is_file():
        raise DataError(f"emissions: sinuosity report not found at {report} "
                        "(run the sinuosity stage or pass --mean-s)")
    return sinuosity.read_report_csv(report), False


def _emission_table(cfg: RunConfig, mean_s_override: float | None) -> tuple[EmissionTable, dict]:
    segments = read_segments_csv(_require_file(_out(cfg, "segments.csv"), "emissions"))
    est, overridden = _effective_estimate(cfg, mean_s_override)
    curve = ConsumptionCurve.from_csv(cfg.curve_path)
    fuels = load_fuels_csv(cfg.fuels_path)
    table = build_emission_table(segments, est, curve, fuels, cfg.pairing)
    info = {"mean_s_used": est.mean_s, "mean_s_overridden": overridden,
            "segments": len(table)}
    return table, info


def stage_emissions(cfg: RunConfig, mean_s_override: float | None = None) -> dict:
    """segments.csv + sinuosity report (or --mean-s) -> emissions.csv, daily_counts.csv."""
    table, info = _emission_table(cfg, mean_s_override)
    write_emissions_csv(table, _out(cfg, "emissions.csv"))
    days = gapfill.complete_days(gapfill.daily_counts(table))
    gapfill.write_daily_csv(days, _out(cfg, "daily_counts.csv"))
    info.update({
        "total_co2e_kg": float(table.co2e_kg.sum()),
        "total_fuel_l": float(table.fuel_l.sum()),
        "total_dist_km": float(table.dist_km.sum()),
        "days": len(days),
    })
    _write_json(info, _out(cfg, "emissions_report.json"))
    log.info("emissions: %d segments, %.1f kg CO2e", len(table), info["total_co2e_kg"])
    return info


def stage_gapfill(cfg: RunConfig) -> dict:
    """daily_counts.csv -> filled_days.csv, monthly_totals.csv."""
    days = gapfill.read_daily_csv(_require_file(_out(cfg, "daily_counts.csv"), "gapfill"))
    ranges = gapfill.compute_expected_ranges(days, cfg.gapfill_min_days)
    filled = gapfill.fill_missing_days(days, ranges)
    months = gapfill.monthly_band(filled)
    gapfill.write_filled_csv(filled, _out(cfg, "filled_days.csv"))
    gapfill.write_monthly_csv(months, _out(cfg, "monthly_totals.csv"))
    n_filled = sum(1 for f in filled if f.method != "passthrough")
    log.info("gapfill: %d of %d days filled across %d months", n_filled, len(filled), len(months))
    return {
        "days": len(filled),
        "days_filled": n_filled,
        "months": len(months),
        "insufficient_weekdays": [r.weekday for r in ranges.values() if r.insufficient],
    }


def stage_analyze(cfg: RunConfig, mean_s_override: float | None = None) -> dict:
    """Emission table (recomputed from segments.csv) + gapfill outputs ->
    lattice.geojson, temporal.csv, lines.csv, freeflow.csv, validation.csv."""
    table, info = _emission_table(cfg, mean_s_override)

    if cfg.lattice_origin_lat is not None and cfg.lattice_rows is not None:
        spec = analytics.LatticeSpec(
            GeoPoint(cfg.lattice_origin_lat, cfg.lattice_origin_lon),
            cfg.lattice_cell_m, cfg.lattice_rows, cfg.lattice_cols,
        )
    else:
        spec = analytics.LatticeSpec.covering(cfg.bounds, cfg.lattice_cell_m)

    day_filter = None
    if cfg.weekday_filter is not None or cfg.best_days_only:
        dates = None
        if cfg.best_days_only:
            days = gapfill.read_daily_csv(_require_file(_out(cfg, "daily_counts.csv"), "analyze"))
            ranges = gapfill.compute_expected_ranges(days, cfg.gapfill_min_days)
            dates = frozenset(gapfill.best_recorded_days(days, ranges))
        weekdays = None if cfg.weekday_filter is None else frozenset(cfg.weekday_filter)
        day_filter = analytics.DayFilter(weekdays=weekdays, dates=dates)

    lattice = analytics.aggregate_lattice(table, spec, day_filter)
    analytics.write_lattice_geojson(lattice, _out(cfg, "lattice.geojson"))
    profile = analytics.temporal_profile(table, day_filter)
    analytics.write_temporal_csv(profile, _out(cfg, "temporal.csv"))
    shares = analytics.line_distribution(table)
    analytics.write_lines_csv(shares, _out(cfg, "lines.csv"))
    freeflow = analytics.freeflow_analysis(table, cfg.dawn_window, cfg.peak_window,
                                           cfg.freeflow_min_samples)
    analytics.write_freeflow_csv(freeflow, _out(cfg, "freeflow.csv"),
                                 _out(cfg, "freeflow_excluded.csv"))

    validation_rows = 0
    missing_reference: list[str] = []
    if cfg.reference_path is not None:
        months = gapfill.read_monthly_csv(_require_file(_out(cfg, "monthly_totals.csv"), "analyze"))
        reference = analytics.load_reference_csv(cfg.reference_path)
        rows = analytics.topdown_compare(months, reference)
        analytics.write_validation_csv(rows, _out(cfg, "validation.csv"))
        validation_rows = len(rows)
        missing_reference = sorted({r.month for r in rows if r.reference is None})

    info.update({
        "lattice_cells_active": int((lattice.segment_count > 0).sum()),
        "lattice_overflow_segments": lattice.overflow.segment_count,
        "lines": len(shares),
        "freeflow_lines": len(freeflow.results),
        "freeflow_excluded": len(freeflow.excluded),
        "validation_rows": validation_rows,
        "missing_reference_months": missing_reference,
    })
    _write_json(info, _out(cfg, "analyze_report.json"))
    log.info("analyze: %d lines, %d free-flow results, %d active cells",
             len(shares), len(freeflow.results), info["lattice_cells_active"])
    return info


_STAGES = (
    ("ingest", stage_ingest),
    ("sinuosity", stage_sinuosity),
    ("emissions", stage_emissions),
    ("gapfill", stage_gapfill),
    ("analyze", stage_analyze),
)

# inputs each subcommand actually reads, so partial reruns from saved stage
# files do not demand the whole original input set
_STAGE_NEEDS = {
    "ingest": frozenset({"gps"}),
    "sinuosity": frozenset({"graph"}),
    "emissions": frozenset({"curve", "fuels"}),
    "gapfill": frozenset(),
    "analyze": frozenset({"curve", "fuels"}),
}


def run_pipeline(cfg: RunConfig, mean_s_override: float | None = None) -> dict:
    """Execute every stage in order and write the reproducibility manifest."""
    cfg.validate()
    manifest: dict = {
        "tool": "busghg",
        "version": busghg.__version__,
        "kernel_backend": _kernels.BACKEND,
        "created_utc": datetime.now(timezone.utc).isoformat(),
        "seed": cfg.seed,
        "config": cfg.snapshot(),
        "stages": {},
        "warnings": [],
    }
    for name, func in _STAGES:
        t0 = time.perf_counter()
        try:
            if name in ("emissions", "analyze"):
                info = func(cfg, mean_s_override)
            else:
                info = func(cfg)
        except (ConfigError, DataError) as exc:
            raise type(exc)(f"stage {name}: {exc}") from None
        manifest["stages"][name] = {"info": info,
                                    "duration_s": time.perf_counter() - t0}
    sin_info = manifest["stages"]["sinuosity"]["info"]
    manifest["mean_s"] = sin_info["mean_s"] if mean_s_override is None else mean_s_override
    manifest["mean_s_overridden"] = mean_s_override is not None
    gaps = manifest["stages"]["gapfill"]["info"]["insufficient_weekdays"]
    if gaps:
        manifest["warnings"].append(
            f"expected ranges for weekdays {gaps} rest on fewer than "
            f"{cfg.gapfill_min_days} observed days"
        )
    _write_json_atomic(manifest, _out(cfg, "manifest.json"))
    return manifest


def _require_file(path: Path, stage: str) -> Path:
    if not path.is_file():
        raise DataError(f"{stage}: required stage input {path} not found "
                        "(run the earlier stages first)")
    return path


def _write_json(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_json_atomic(obj, path) -> None:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    _write_json(obj, tmp)
    os.replace(tmp, path)


# ------------------------------------------------------------------ CLI


def _add_config_arg(p: argparse.ArgumentParser) -> None:
    p.add_argument("-c", "--config", required=True, help="run configuration YAML")
    p.add_argument("--output-dir", help="override the configured output directory")
    p.add_argument("--workers", type=int, help="parallel worker count (default from config)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="busghg",
        description="Estimate bus fleet GHG emissions from low-resolution GPS records.",
    )
    parser.add_argument("--version", action="version", version=f"busghg {busghg.__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute the full pipeline")
    _add_config_arg(p_run)
    p_run.add_argument("--mean-s", type=float, help="skip estimation and use this sinuosity factor")
    p_run.add_argument("--seed", type=int, help="override the sampling seed")
    p_run.add_argument("--fraction", type=float, help="override the sample fraction")

    for name, help_text in (
        ("ingest", "parse, clean and pair the GPS records into segments.csv"),
        ("sinuosity", "estimate the sinuosity factor from saved segments"),
        ("gapfill", "fill deficient days and write monthly bands"),
    ):
        p = sub.add_parser(name, help=help_text)
        _add_config_arg(p)
        if name == "sinuosity":
            p.add_argument("--seed", type=int, help="override the sampling seed")
            p.add_argument("--fraction", type=float, help="override the sample fraction")

    for name, help_text in (
        ("emissions", "compute per-segment fuel and CO2e from saved segments"),
        ("analyze", "produce lattice, temporal, line, free-flow and validation outputs"),
    ):
        p = sub.add_parser(name, help=help_text)
        _add_config_arg(p)
        p.add_argument("--mean-s", type=float,
                       help="override the estimated sinuosity factor (recorded in the report)")

    p_synth = sub.add_parser("synth", help="generate a synthetic fixture corpus")
    p_synth.add_argument("scenario", help="scenario YAML file")
    p_synth.add_argument("-o", "--outdir", required=True, help="fixture output directory")
    return parser


def _config_from_args(args) -> RunConfig:
    overrides = {}
    if getattr(args, "output_dir", None):
        overrides["output_dir"] = Path(args.output_dir)
    if getattr(args, "workers", None):
        overrides["workers"] = args.workers
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "fraction", None) is not None:
        overrides["sample_fraction"] = args.fraction
    return load_config(args.config, overrides)


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("BUSGHG_LOG", "INFO").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            cfg = _config_from_args(args)
            run_pipeline(cfg, getattr(args, "mean_s", None))
        elif args.command == "synth":
            scenario = scenario_from_yaml(args.scenario)
            write_fixture(scenario, args.outdir)
        else:
            cfg = _config_from_args(args)
            cfg.validate(_STAGE_NEEDS[args.command])
            Path(cfg.output_dir).mkdir(parents=True, exist_ok=True)
            stage = dict(_STAGES)[args.command]
            if args.command in ("emissions", "analyze"):
                stage(cfg, getattr(args, "mean_s", None))
            else:
                stage(cfg)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {exc!r}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
