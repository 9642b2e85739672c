"""Sequential GPS pair recognition: vehicle-day partitions to travel segments.

A segment joins two consecutive records of one vehicle when 0 < dt < max_gap;
pairs whose straight-line speed strictly exceeds max_speed are discarded and
counted. Average speed is always derived from a supplied distance, never from
device readings.
"""

from __future__ import annotations

import csv
import sys
from dataclasses import dataclass
from datetime import date, datetime, timedelta, timezone
from typing import Iterable

import numpy as np

from busghg import _kernels
from busghg.ingest import CleanRecord

speed_exceeds = _kernels.speed_exceeds


@dataclass(frozen=True, slots=True)
class PairingConfig:
    max_gap_s: float = 180.0
    max_speed_kmh: float = 120.0
    near_threshold_m: float = 50.0

    def __post_init__(self):
        if self.max_gap_s <= 0 or self.max_speed_kmh <= 0 or self.near_threshold_m <= 0:
            raise ValueError("pairing parameters must be strictly positive")


@dataclass(frozen=True, slots=True)
class TravelSegment:
    """An ordered pair of sequential pings from one vehicle.

    Local-time fields (start_hour, weekday with Monday=0, calendar month,
    start_date) are precomputed from the start record under the pairing
    timezone.
    """

    vehicle_id: str
    line_id: str
    start: CleanRecord
    end: CleanRecord
    dt_s: float
    euclid_m: float
    start_hour: int
    weekday: int
    month: int
    start_date: date


@dataclass
class PairingStats:
    segments: int = 0
    gap_skipped: int = 0
    duplicate_ts: int = 0
    speed_rejected: int = 0
    line_changes: int = 0

    def merge(self, other: "PairingStats") -> None:
        self.segments += other.segments
        self.gap_skipped += other.gap_skipped
        self.duplicate_ts += other.duplicate_ts
        self.speed_rejected += other.speed_rejected
        self.line_changes += other.line_changes


def segment_speed(seg: TravelSegment, dist_m: float) -> float:
    """Average speed in km/h over the supplied distance (straight-line for
    filtering, corrected for emissions)."""
    return dist_m / seg.dt_s * 3.6


def build_segments(
    partition: list[CleanRecord],
    cfg: PairingConfig,
    tz: timezone = timezone(timedelta(hours=-3)),
) -> tuple[list[TravelSegment], PairingStats]:
    """Emit a segment per valid consecutive pair of a time-sorted partition.

    When the two records disagree on line_id (vehicle reassigned mid-gap) the
    start record's line wins and the disagreement is counted.
    """
    stats = PairingStats()
    if len(partition) < 2:
        return [], stats
    ts = np.fromiter((r.timestamp.timestamp() for r in partition), dtype=np.float64,
                     count=len(partition))
    lat = np.fromiter((r.latitude for r in partition), dtype=np.float64, count=len(partition))
    lon = np.fromiter((r.longitude for r in partition), dtype=np.float64, count=len(partition))
    starts, dists, n_gap, n_dup, n_speed = _kernels.pair_partition(
        ts, lat, lon, cfg.max_gap_s, cfg.max_speed_kmh
    )
    stats.gap_skipped = n_gap
    stats.duplicate_ts = n_dup
    stats.speed_rejected = n_speed

    segments: list[TravelSegment] = []
    for k in range(len(starts)):
        i = int(starts[k])
        a = partition[i]
        b = partition[i + 1]
        if a.line_id != b.line_id:
            stats.line_changes += 1
        local = a.timestamp.astimezone(tz)
        segments.append(
            TravelSegment(
                vehicle_id=a.vehicle_id,
                line_id=a.line_id,
                start=a,
                end=b,
                dt_s=float(ts[i + 1] - ts[i]),
                euclid_m=float(dists[k]),
                start_hour=local.hour,
                weekday=local.weekday(),
                month=local.month,
                start_date=local.date(),
            )
        )
    stats.segments = len(segments)
    return segments, stats


SEGMENT_COLUMNS = [
    "vehicle_id", "line_id", "t_start", "t_end", "dt_s", "euclid_m", "speed_kmh",
    "start_lat", "start_lon", "end_lat", "end_lon",
    "start_hour", "weekday", "month", "start_date",
]


def write_segments_csv(segments: Iterable[TravelSegment], path) -> int:
    """Stage interface / debug dump; floats use repr for exact round-trips."""
    n = 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SEGMENT_COLUMNS)
        for s in segments:
            w.writerow([
                s.vehicle_id, s.line_id,
                s.start.timestamp.isoformat(), s.end.timestamp.isoformat(),
                repr(s.dt_s), repr(s.euclid_m), repr(segment_speed(s, s.euclid_m)),
                repr(s.start.latitude), repr(s.start.longitude),
                repr(s.end.latitude), repr(s.end.longitude),
                s.start_hour, s.weekday, s.month, s.start_date.isoformat(),
            ])
            n += 1
    return n


def read_segments_csv(path) -> list[TravelSegment]:
    """Rebuild segments from a stage file (source_row traceability is not kept).

    Uses a positional reader and caches repeated ids/dates: the file is read
    three times per run (sinuosity, emissions, analyze) and dominates stage
    startup on million-row corpora.
    """
    segments: list[TravelSegment] = []
    intern = sys.intern
    date_cache: dict[str, date] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != SEGMENT_COLUMNS:
            raise ValueError(f"{path}: unexpected segments header {header!r}")
        for row in reader:
            (vehicle, line, t_start, t_end, dt_s, euclid_m, _speed,
             s_lat, s_lon, e_lat, e_lon, hour, weekday, month, day) = row
            vehicle = intern(vehicle)
            line = intern(line)
            start_date = date_cache.get(day)
            if start_date is None:
                start_date = date_cache[day] = date.fromisoformat(day)
            start = CleanRecord(vehicle, line, datetime.fromisoformat(t_start),
                                float(s_lat), float(s_lon), -1)
            end = CleanRecord(vehicle, line, datetime.fromisoformat(t_end),
                              float(e_lat), float(e_lon), -1)
            segments.append(
                TravelSegment(
                    vehicle_id=vehicle,
                    line_id=line,
                    start=start,
                    end=end,
                    dt_s=float(dt_s),
                    euclid_m=float(euclid_m),
                    start_hour=int(hour),
                    weekday=int(weekday),
                    month=int(month),
                    start_date=start_date,
                )
            )
    return segments
