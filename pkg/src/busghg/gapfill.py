"""Statistical correction of days with deficient GPS transmission.

For each weekday the best-recorded days define an expected segment-count
range (nearest-rank P90 up to the maximum). Days falling short are scaled up
multiplicatively into a [low, high] band; monthly sums of the band bound the
fleet totals for comparison against top-down figures.
"""

from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import dataclass
from datetime import date, timedelta
from math import ceil, inf
from typing import Iterable, Sequence

import numpy as np

from busghg.emissions import EmissionTable
from busghg.errors import DataError


@dataclass(frozen=True, slots=True)
class DailyCount:
    day: date
    weekday: int
    segment_count: int
    co2e_kg: float
    fuel_l: float
    dist_km: float


@dataclass(frozen=True, slots=True)
class ExpectedRange:
    """[low, high] segment counts a healthy day of this weekday should show."""

    weekday: int
    low: int
    high: int
    n_observed: int
    insufficient: bool  # fewer than min_days observations backed this range


@dataclass(frozen=True, slots=True)
class FilledDay:
    observed: DailyCount
    scale_low: float
    scale_high: float
    co2e_low_kg: float
    co2e_high_kg: float
    fuel_low_l: float
    fuel_high_l: float
    dist_low_km: float
    dist_high_km: float
    method: str  # passthrough | scaled | zero_fill


@dataclass(frozen=True, slots=True)
class MonthlyTotals:
    month: str  # YYYY-MM
    co2e_raw_kg: float
    co2e_low_kg: float
    co2e_high_kg: float
    fuel_raw_l: float
    fuel_low_l: float
    fuel_high_l: float
    dist_raw_km: float
    dist_low_km: float
    dist_high_km: float


def daily_counts(table: EmissionTable) -> list[DailyCount]:
    """Aggregate an emission table into per-day totals, sorted by date."""
    if len(table) == 0:
        return []
    ords = table.date_ord
    uniq, inv = np.unique(ords, return_inverse=True)
    counts = np.bincount(inv)
    co2e = np.bincount(inv, weights=table.co2e_kg)
    fuel = np.bincount(inv, weights=table.fuel_l)
    dist = np.bincount(inv, weights=table.dist_km)
    out = []
    for k, o in enumerate(uniq):
        d = date.fromordinal(int(o))
        out.append(DailyCount(d, d.weekday(), int(counts[k]),
                              float(co2e[k]), float(fuel[k]), float(dist[k])))
    return out


def complete_days(days: Sequence[DailyCount], start: date | None = None,
                  end: date | None = None) -> list[DailyCount]:
    """Insert zero days for calendar dates missing between start and end
    (defaults: observed extremes), so fully silent days get filled too."""
    if not days:
        return []
    by_date = {d.day: d for d in days}
    start = start or min(by_date)
    end = end or max(by_date)
    out = []
    cur = start
    while cur <= end:
        out.append(by_date.get(cur) or DailyCount(cur, cur.weekday(), 0, 0.0, 0.0, 0.0))
        cur += timedelta(days=1)
    return out


def compute_expected_ranges(days: Sequence[DailyCount],
                            min_days: int = 10) -> dict[int, ExpectedRange]:
    """Per weekday: low = nearest-rank 90th percentile of daily counts,
    high = the maximum. Weekdays with fewer than min_days observations are
    flagged insufficient (the range still computes from what exists)."""
    by_weekday: dict[int, list[int]] = defaultdict(list)
    for d in days:
        by_weekday[d.weekday].append(d.segment_count)
    ranges: dict[int, ExpectedRange] = {}
    for wd, counts in sorted(by_weekday.items()):
        counts.sort()
        n = len(counts)
        rank = max(1, ceil(0.90 * n))  # nearest-rank, 1-based
        ranges[wd] = ExpectedRange(
            weekday=wd, low=counts[rank - 1], high=counts[-1],
            n_observed=n, insufficient=n < min_days,
        )
    return ranges


def fill_missing_days(days: Sequence[DailyCount],
                      ranges: dict[int, ExpectedRange]) -> list[FilledDay]:
    """Scale each deficient day's aggregates up to its weekday's expected band.

    A day below its weekday low is multiplied by low/count and high/count (a
    statistical fill, no synthetic geometry); days in or above the range pass
    through; a fully silent day is rebuilt from the weekday's mean
    per-segment emission times [low, high].
    """
    seg_tot: dict[int, int] = defaultdict(int)
    co2e_tot: dict[int, float] = defaultdict(float)
    fuel_tot: dict[int, float] = defaultdict(float)
    dist_tot: dict[int, float] = defaultdict(float)
    for d in days:
        if d.segment_count > 0:
            seg_tot[d.weekday] += d.segment_count
            co2e_tot[d.weekday] += d.co2e_kg
            fuel_tot[d.weekday] += d.fuel_l
            dist_tot[d.weekday] += d.dist_km

    out: list[FilledDay] = []
    for d in days:
        rng = ranges.get(d.weekday)
        if rng is None or d.segment_count >= rng.low:
            out.append(FilledDay(d, 1.0, 1.0, d.co2e_kg, d.co2e_kg,
                                 d.fuel_l, d.fuel_l, d.dist_km, d.dist_km, "passthrough"))
        elif d.segment_count == 0:
            n = seg_tot[d.weekday]
            mean_co2e = co2e_tot[d.weekday] / n if n else 0.0
            mean_fuel = fuel_tot[d.weekday] / n if n else 0.0
            mean_dist = dist_tot[d.weekday] / n if n else 0.0
            out.append(FilledDay(
                d, inf, inf,
                rng.low * mean_co2e, rng.high * mean_co2e,
                rng.low * mean_fuel, rng.high * mean_fuel,
                rng.low * mean_dist, rng.high * mean_dist,
                "zero_fill",
            ))
        else:
            s_lo = rng.low / d.segment_count
            s_hi = rng.high / d.segment_count
            out.append(FilledDay(
                d, s_lo, s_hi,
                d.co2e_kg * s_lo, d.co2e_kg * s_hi,
                d.fuel_l * s_lo, d.fuel_l * s_hi,
                d.dist_km * s_lo, d.dist_km * s_hi,
                "scaled",
            ))
    return out


def best_recorded_days(days: Sequence[DailyCount],
                       ranges: dict[int, ExpectedRange]) -> set[date]:
    """Dates whose count reaches their weekday's expected range (the
    best-recorded decile referenced by the spatial/temporal day filter)."""
    out = set()
    for d in days:
        rng = ranges.get(d.weekday)
        if rng is not None and d.segment_count >= rng.low:
            out.add(d.day)
    return out


def _month_key(day: date) -> str:
    return f"{day.year:04d}-{day.month:02d}"


def monthly_band(filled: Iterable[FilledDay]) -> list[MonthlyTotals]:
    """Per-month sums of observed values and of the filled low/high bounds."""
    acc: dict[str, list[float]] = {}
    for f in filled:
        key = _month_key(f.observed.day)
        row = acc.setdefault(key, [0.0] * 9)
        row[0] += f.observed.co2e_kg
        row[1] += f.co2e_low_kg
        row[2] += f.co2e_high_kg
        row[3] += f.observed.fuel_l
        row[4] += f.fuel_low_l
        row[5] += f.fuel_high_l
        row[6] += f.observed.dist_km
        row[7] += f.dist_low_km
        row[8] += f.dist_high_km
    return [MonthlyTotals(month, *acc[month]) for month in sorted(acc)]


DAILY_COLUMNS = ["date", "weekday", "segment_count", "co2e_kg", "fuel_l", "dist_km"]


def write_daily_csv(days: Sequence[DailyCount], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(DAILY_COLUMNS)
        for d in days:
            w.writerow([d.day.isoformat(), d.weekday, d.segment_count,
                        repr(d.co2e_kg), repr(d.fuel_l), repr(d.dist_km)])


def read_daily_csv(path) -> list[DailyCount]:
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != DAILY_COLUMNS:
            raise DataError(f"{path}: expected columns {DAILY_COLUMNS}, got {reader.fieldnames}")
        for row in reader:
            out.append(DailyCount(
                date.fromisoformat(row["date"]), int(row["weekday"]),
                int(row["segment_count"]), float(row["co2e_kg"]),
                float(row["fuel_l"]), float(row["dist_km"]),
            ))
    return out


FILLED_COLUMNS = [
    "date", "weekday", "segment_count", "method", "scale_low", "scale_high",
    "co2e_low_kg", "co2e_high_kg", "fuel_low_l", "fuel_high_l",
    "dist_low_km", "dist_high_km",
]


def write_filled_csv(filled: Sequence[FilledDay], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(FILLED_COLUMNS)
        for f in filled:
            w.writerow([
                f.observed.day.isoformat(), f.observed.weekday, f.observed.segment_count,
                f.method, repr(f.scale_low), repr(f.scale_high),
                repr(f.co2e_low_kg), repr(f.co2e_high_kg),
                repr(f.fuel_low_l), repr(f.fuel_high_l),
                repr(f.dist_low_km), repr(f.dist_high_km),
            ])


MONTHLY_COLUMNS = [
    "month", "km_raw", "km_low", "km_high", "fuel_raw_m3", "fuel_low", "fuel_high",
    "co2e_raw_t", "co2e_low", "co2e_high",
]


def write_monthly_csv(months: Sequence[MonthlyTotals], path) -> None:
    """Monthly totals in reporting units: km, fuel in m3, CO2e in tonnes."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(MONTHLY_COLUMNS)
        for m in months:
            w.writerow([
                m.month,
                repr(m.dist_raw_km), repr(m.dist_low_km), repr(m.dist_high_km),
                repr(m.fuel_raw_l / 1000.0), repr(m.fuel_low_l / 1000.0),
                repr(m.fuel_high_l / 1000.0),
                repr(m.co2e_raw_kg / 1000.0), repr(m.co2e_low_kg / 1000.0),
                repr(m.co2e_high_kg / 1000.0),
            ])


def read_monthly_csv(path) -> list[MonthlyTotals]:
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != MONTHLY_COLUMNS:
            raise DataError(f"{path}: expected columns {MONTHLY_COLUMNS}, got {reader.fieldnames}")
        for row in reader:
            out.append(MonthlyTotals(
                month=row["month"],
                co2e_raw_kg=float(row["co2e_raw_t"]) * 1000.0,
                co2e_low_kg=float(row["co2e_low"]) * 1000.0,
                co2e_high_kg=float(row["co2e_high"]) * 1000.0,
                fuel_raw_l=float(row["fuel_raw_m3"]) * 1000.0,
                fuel_low_l=float(row["fuel_low"]) * 1000.0,
                fuel_high_l=float(row["fuel_high"]) * 1000.0,
                dist_raw_km=float(row["km_raw"]),
                dist_low_km=float(row["km_low"]),
                dist_high_km=float(row["km_high"]),
            ))
    return out
