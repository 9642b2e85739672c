"""GPS record ingestion: CSV parsing, cleaning, vehicle-day partitioning.

Malformed rows become diagnostics and never abort a run; only an unreadable
stream raises. The reported instantaneous speed is parsed but dropped during
cleaning: the >120 km/h rule is applied downstream to speeds derived from
record pairs, which the method trusts over device readings.
"""

from __future__ import annotations

import csv
import sys
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta, timezone
from pathlib import Path
from typing import IO, Iterable, Iterator

DEFAULT_COLUMNS = {
    "vehicle_id": 0,
    "line_id": 1,
    "latitude": 2,
    "longitude": 3,
    "timestamp": 4,
    "reported_speed": 5,
}

_REQUIRED_FIELDS = ("vehicle_id", "line_id", "latitude", "longitude", "timestamp")


@dataclass(frozen=True, slots=True)
class BoundingBox:
    """Inclusive geographic box used to discard absurd positions."""

    min_lat: float
    max_lat: float
    min_lon: float
    max_lon: float

    def __post_init__(self):
        if not (self.min_lat < self.max_lat and self.min_lon < self.max_lon):
            raise ValueError("bounding box min must be strictly less than max on both axes")
        if not (-90.0 <= self.min_lat and self.max_lat <= 90.0):
            raise ValueError("bounding box latitudes outside [-90, 90]")
        if not (-180.0 <= self.min_lon and self.max_lon <= 180.0):
            raise ValueError("bounding box longitudes outside [-180, 180]")

    def contains(self, lat: float, lon: float) -> bool:
        return self.min_lat <= lat <= self.max_lat and self.min_lon <= lon <= self.max_lon


@dataclass(frozen=True, slots=True)
class ColumnSchema:
    """Column layout of the input CSV."""

    delimiter: str = ","
    has_header: bool = True
    columns: dict[str, int] = field(default_factory=lambda: dict(DEFAULT_COLUMNS))

    def __post_init__(self):
        missing = [f for f in _REQUIRED_FIELDS if f not in self.columns]
        if missing:
            raise ValueError(f"schema missing required columns: {missing}")


@dataclass(frozen=True, slots=True)
class RawRecord:
    """One parsed GPS ping, before cleaning."""

    vehicle_id: str
    line_id: str
    timestamp: datetime  # always offset-aware
    latitude: float
    longitude: float
    reported_speed: float | None
    source_row: int  # 1-based physical line number in the input file


@dataclass(frozen=True, slots=True)
class CleanRecord:
    """A validated ping; reported_speed has been dropped."""

    vehicle_id: str
    line_id: str
    timestamp: datetime
    latitude: float
    longitude: float
    source_row: int


@dataclass(frozen=True, slots=True)
class ParseDiagnostic:
    """Why one input line produced no record."""

    source_row: int
    column: str | None
    message: str


@dataclass
class IngestStats:
    rows_read: int = 0
    rows_parsed: int = 0
    rows_rejected_parse: int = 0
    rows_rejected_bounds: int = 0

    @property
    def clean_count(self) -> int:
        return self.rows_parsed - self.rows_rejected_bounds


def _parse_timestamp(text: str) -> datetime:
    ts = datetime.fromisoformat(text.replace("Z", "+00:00"))
    if ts.tzinfo is None:
        raise ValueError("timestamp has no UTC offset")
    return ts


def parse_records(
    stream: IO[str] | Iterable[str], schema: ColumnSchema
) -> Iterator[RawRecord | ParseDiagnostic]:
    """Parse delimited lines into RawRecords, yielding a diagnostic per bad line.

    Every data line yields exactly one item, in input order. Row numbers are
    1-based physical line numbers (the header, when present, is line 1 and is
    not counted in the stats).
    """
    cols = schema.columns
    need = max(cols[f] for f in _REQUIRED_FIELDS) + 1
    speed_idx = cols.get("reported_speed")
    reader = csv.reader(stream, delimiter=schema.delimiter)
    for row_no, row in enumerate(reader, start=1):
        if schema.has_header and row_no == 1:
            continue
        if not row or all(not cell.strip() for cell in row):
            yield ParseDiagnostic(row_no, None, "empty line")
            continue
        if len(row) < need:
            yield ParseDiagnostic(row_no, None, f"expected at least {need} columns, got {len(row)}")
            continue
        vehicle_id = sys.intern(row[cols["vehicle_id"]].strip())
        if not vehicle_id:
            yield ParseDiagnostic(row_no, "vehicle_id", "empty vehicle id")
            continue
        line_id = sys.intern(row[cols["line_id"]].strip())
        try:
            lat = float(row[cols["latitude"]])
        except ValueError:
            yield ParseDiagnostic(row_no, "latitude", f"not a number: {row[cols['latitude']]!r}")
            continue
        try:
            lon = float(row[cols["longitude"]])
        except ValueError:
            yield ParseDiagnostic(row_no, "longitude", f"not a number: {row[cols['longitude']]!r}")
            continue
        try:
            ts = _parse_timestamp(row[cols["timestamp"]].strip())
        except ValueError as exc:
            yield ParseDiagnostic(row_no, "timestamp", str(exc))
            continue
        speed = None
        if speed_idx is not None and speed_idx < len(row):
            raw = row[speed_idx].strip()
            if raw:
                try:
                    speed = float(raw)
                except ValueError:
                    speed = None  # device speeds are discarded anyway; keep the position
        yield RawRecord(vehicle_id, line_id, ts, lat, lon, speed, row_no)


def clean_records(
    items: Iterable[RawRecord | ParseDiagnostic | CleanRecord], bounds: BoundingBox
) -> tuple[list[CleanRecord], IngestStats, list[ParseDiagnostic]]:
    """Keep in-bounds records, dropping reported_speed and reconciling stats.

    Accepts the mixed record/diagnostic stream from parse_records (or a list
    of CleanRecords, on which cleaning is idempotent). Diagnostics are passed
    through untouched.
    """
    clean: list[CleanRecord] = []
    diags: list[ParseDiagnostic] = []
    stats = IngestStats()
    for item in items:
        stats.rows_read += 1
        if isinstance(item, ParseDiagnostic):
            stats.rows_rejected_parse += 1
            diags.append(item)
            continue
        stats.rows_parsed += 1
        if not bounds.contains(item.latitude, item.longitude):
            stats.rows_rejected_bounds += 1
            continue
        clean.append(
            CleanRecord(
                item.vehicle_id, item.line_id, item.timestamp,
                item.latitude, item.longitude, item.source_row,
            )
        )
    return clean, stats, diags


def partition_by_vehicle_day(
    records: Iterable[CleanRecord], tz: timezone = timezone(timedelta(hours=-3))
) -> dict[tuple[str, date], list[CleanRecord]]:
    """Group records by (vehicle, local calendar day), time-sorted within each.

    Day boundaries use the supplied fixed UTC offset (fleet operations are
    organized by local day); ties on timestamp break by source_row. Keys are
    returned in sorted order.
    """
    parts: dict[tuple[str, date], list[CleanRecord]] = {}
    for rec in records:
        key = (rec.vehicle_id, rec.timestamp.astimezone(tz).date())
        parts.setdefault(key, []).append(rec)
    out: dict[tuple[str, date], list[CleanRecord]] = {}
    for key in sorted(parts.keys()):
        out[key] = sorted(parts[key], key=lambda r: (r.timestamp, r.source_row))
    return out


def dump_partitions(partitions: dict[tuple[str, date], list[CleanRecord]], outdir) -> list[Path]:
    """Debug dump: one CSV per (vehicle, day)."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    for (vehicle, day), recs in partitions.items():
        safe = "".join(c if c.isalnum() or c in "-_" else "_" for c in vehicle)
        path = outdir / f"{safe}_{day.isoformat()}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["vehicle_id", "line_id", "timestamp", "latitude", "longitude", "source_row"])
            for r in recs:
                w.writerow([r.vehicle_id, r.line_id, r.timestamp.isoformat(),
                            repr(r.latitude), repr(r.longitude), r.source_row])
        written.append(path)
    return written
