"""Run configuration: one YAML file, flag overrides, documented defaults.

Precedence is flags > file > defaults. The README's configuration reference
lists every key and default in one place.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import timedelta, timezone
from pathlib import Path

import yaml

from busghg.errors import ConfigError
from busghg.ingest import DEFAULT_COLUMNS, BoundingBox, ColumnSchema
from busghg.pairing import PairingConfig


@dataclass
class RunConfig:
    gps_path: Path
    curve_path: Path
    fuels_path: Path
    output_dir: Path
    bounds: BoundingBox
    graph_nodes: Path | None = None
    graph_edges: Path | None = None
    graph_geojson: Path | None = None
    reference_path: Path | None = None
    schema: ColumnSchema = field(default_factory=ColumnSchema)
    local_utc_offset_hours: float = -3.0
    pairing: PairingConfig = field(default_factory=PairingConfig)
    sample_fraction: float = 0.01
    seed: int = 42
    snap_radius_m: float = 100.0
    hist_bin_width: float = 0.05
    hist_lo: float = 1.0
    hist_hi: float = 3.0
    lattice_cell_m: float = 500.0
    lattice_origin_lat: float | None = None
    lattice_origin_lon: float | None = None
    lattice_rows: int | None = None
    lattice_cols: int | None = None
    gapfill_min_days: int = 10
    dawn_window: tuple[int, int] = (0, 3)
    peak_window: tuple[int, int] = (8, 12)
    freeflow_min_samples: int = 30
    weekday_filter: tuple[int, ...] | None = None
    best_days_only: bool = False
    workers: int = 1
    dump_partitions: bool = False

    @property
    def tz(self) -> timezone:
        return timezone(timedelta(hours=self.local_utc_offset_hours))

    def validate(self, need: frozenset[str] = frozenset({"gps", "graph", "curve", "fuels"})
                 ) -> None:
        """Check parameters and the referenced inputs a command needs.

        Stage subcommands pass a smaller `need` so partial reruns work from
        the saved stage files alone (e.g. sinuosity needs only the graph).
        """
        if "gps" in need and not Path(self.gps_path).is_file():
            raise ConfigError(f"gps file not found: {self.gps_path}")
        for label, path in (("curve", self.curve_path), ("fuels", self.fuels_path)):
            if label in need and not Path(path).is_file():
                raise ConfigError(f"{label} file not found: {path}")
        if "graph" in need:
            if self.graph_geojson is not None:
                if not Path(self.graph_geojson).is_file():
                    raise ConfigError(f"graph geojson file not found: {self.graph_geojson}")
            elif self.graph_nodes is not None or self.graph_edges is not None:
                for label, path in (("graph nodes", self.graph_nodes),
                                    ("graph edges", self.graph_edges)):
                    if path is None or not Path(path).is_file():
                        raise ConfigError(f"{label} file not found: {path}")
            else:
                raise ConfigError(
                    "no street graph configured (graph_nodes/graph_edges or graph_geojson)")
        if self.reference_path is not None and not Path(self.reference_path).is_file():
            raise ConfigError(f"reference file not found: {self.reference_path}")
        if not (0.0 < self.sample_fraction <= 1.0):
            raise ConfigError(f"sample fraction must be in (0, 1], got {self.sample_fraction}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        d0, d1 = self.dawn_window
        p0, p1 = self.peak_window
        if not (0 <= d0 < d1 <= 24 and 0 <= p0 < p1 <= 24):
            raise ConfigError("free-flow windows must be ordered hour ranges within a day")

    def snapshot(self) -> dict:
        """JSON-friendly view of the effective configuration for the manifest."""
        return {
            "gps": str(self.gps_path),
            "curve": str(self.curve_path),
            "fuels": str(self.fuels_path),
            "graph_nodes": None if self.graph_nodes is None else str(self.graph_nodes),
            "graph_edges": None if self.graph_edges is None else str(self.graph_edges),
            "graph_geojson": None if self.graph_geojson is None else str(self.graph_geojson),
            "reference": None if self.reference_path is None else str(self.reference_path),
            "output_dir": str(self.output_dir),
            "bounds": [self.bounds.min_lat, self.bounds.max_lat,
                       self.bounds.min_lon, self.bounds.max_lon],
            "csv_schema": {"delimiter": self.schema.delimiter,
                           "has_header": self.schema.has_header,
                           "columns": dict(self.schema.columns)},
            "local_utc_offset_hours": self.local_utc_offset_hours,
            "pairing": {"max_gap_s": self.pairing.max_gap_s,
                        "max_speed_kmh": self.pairing.max_speed_kmh,
                        "near_threshold_m": self.pairing.near_threshold_m},
            "sample_fraction": self.sample_fraction,
            "seed": self.seed,
            "snap_radius_m": self.snap_radius_m,
            "histogram": [self.hist_lo, self.hist_hi, self.hist_bin_width],
            "lattice_cell_m": self.lattice_cell_m,
            "gapfill_min_days": self.gapfill_min_days,
            "dawn_window": list(self.dawn_window),
            "peak_window": list(self.peak_window),
            "freeflow_min_samples": self.freeflow_min_samples,
            "weekday_filter": None if self.weekday_filter is None else list(self.weekday_filter),
            "best_days_only": self.best_days_only,
            "workers": self.workers,
        }


def load_config(path, overrides: dict | None = None) -> RunConfig:
    """Build a RunConfig from a YAML file plus CLI flag overrides.

    Relative input paths resolve against the config file's directory.
    """
    path = Path(path)
    try:
        with open(path) as fh:
            doc = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config must be a mapping")
    base = path.parent

    def resolve(p) -> Path | None:
        if p is None:
            return None
        p = Path(p)
        return p if p.is_absolute() else base / p

    inputs = doc.get("inputs") or {}
    bounds_doc = doc.get("bounds") or {}
    try:
        bounds = BoundingBox(
            float(bounds_doc["min_lat"]), float(bounds_doc["max_lat"]),
            float(bounds_doc["min_lon"]), float(bounds_doc["max_lon"]),
        )
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"{path}: bad or missing bounds: {exc}") from None

    schema_doc = doc.get("csv_schema") or {}
    columns = schema_doc.get("columns") or dict(DEFAULT_COLUMNS)
    try:
        schema = ColumnSchema(
            delimiter=str(schema_doc.get("delimiter", ",")),
            has_header=bool(schema_doc.get("has_header", True)),
            columns={str(k): int(v) for k, v in columns.items()},
        )
        pairing_doc = doc.get("pairing") or {}
        pairing = PairingConfig(
            max_gap_s=float(pairing_doc.get("max_gap_s", 180.0)),
            max_speed_kmh=float(pairing_doc.get("max_speed_kmh", 120.0)),
            near_threshold_m=float(pairing_doc.get("near_threshold_m", 50.0)),
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None

    sin_doc = doc.get("sinuosity") or {}
    lat_doc = doc.get("lattice") or {}
    gap_doc = doc.get("gapfill") or {}
    ana_doc = doc.get("analytics") or {}
    debug_doc = doc.get("debug") or {}

    try:
        cfg = RunConfig(
            gps_path=_require(resolve(inputs.get("gps")), path, "inputs.gps"),
            curve_path=_require(resolve(inputs.get("curve")), path, "inputs.curve"),
            fuels_path=_require(resolve(inputs.get("fuels")), path, "inputs.fuels"),
            output_dir=_require(resolve(doc.get("output_dir")), path, "output_dir"),
            bounds=bounds,
            graph_nodes=resolve(inputs.get("graph_nodes")),
            graph_edges=resolve(inputs.get("graph_edges")),
            graph_geojson=resolve(inputs.get("graph_geojson")),
            reference_path=resolve(inputs.get("reference")),
            schema=schema,
            local_utc_offset_hours=float(doc.get("local_utc_offset_hours", -3.0)),
            pairing=pairing,
            sample_fraction=float(sin_doc.get("fraction", 0.01)),
            seed=int(sin_doc.get("seed", 42)),
            snap_radius_m=float(sin_doc.get("snap_radius_m", 100.0)),
            hist_bin_width=float(sin_doc.get("hist_bin_width", 0.05)),
            hist_lo=float(sin_doc.get("hist_lo", 1.0)),
            hist_hi=float(sin_doc.get("hist_hi", 3.0)),
            lattice_cell_m=float(lat_doc.get("cell_size_m", 500.0)),
            lattice_origin_lat=_opt_float(lat_doc.get("origin_lat")),
            lattice_origin_lon=_opt_float(lat_doc.get("origin_lon")),
            lattice_rows=_opt_int(lat_doc.get("rows")),
            lattice_cols=_opt_int(lat_doc.get("cols")),
            gapfill_min_days=int(gap_doc.get("min_days", 10)),
            dawn_window=_window(ana_doc.get("dawn", (0, 3))),
            peak_window=_window(ana_doc.get("peak", (8, 12))),
            freeflow_min_samples=int(ana_doc.get("freeflow_min_samples", 30)),
            weekday_filter=(tuple(int(w) for w in ana_doc["weekdays"])
                            if ana_doc.get("weekdays") else None),
            best_days_only=bool(ana_doc.get("best_days_only", False)),
            workers=int(doc.get("workers", 1)),
            dump_partitions=bool(debug_doc.get("dump_partitions", False)),
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None

    for key, value in (overrides or {}).items():
        if value is not None:
            setattr(cfg, key, value)
    return cfg


def _require(value, path, key):
    if value is None:
        raise ConfigError(f"{path}: missing required key {key}")
    return value


def _opt_float(v):
    return None if v is None else float(v)


def _opt_int(v):
    return None if v is None else int(v)


def _window(v) -> tuple[int, int]:
    lo, hi = v
    return (int(lo), int(hi))
