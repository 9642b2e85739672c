"""Policy-facing aggregations: lattice map, temporal profiles, line ranking,
free-flow congestion impact, and the top-down validation comparison."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from datetime import date
from typing import Sequence

import numpy as np

from busghg.emissions import EmissionTable
from busghg.errors import ConfigError, DataError
from busghg.gapfill import MonthlyTotals
from busghg.geo import M_PER_DEG_LAT, GeoPoint
from busghg.ingest import BoundingBox

_BAND_REL_TOL = 1e-9  # numeric slack when testing a reference against band edges


@dataclass(frozen=True, slots=True)
class LatticeSpec:
    """Square grid anchored at a southwest origin; cells indexed (row, col).

    Meters convert to degrees with the equirectangular scale at the origin
    latitude, so cell assignment is a pure affine map.
    """

    origin: GeoPoint
    cell_size_m: float
    rows: int
    cols: int

    def __post_init__(self):
        if self.cell_size_m <= 0:
            raise ConfigError("lattice cell size must be positive")
        if self.rows <= 0 or self.cols <= 0:
            raise ConfigError("lattice must have positive extent")

    @classmethod
    def covering(cls, bounds: BoundingBox, cell_size_m: float) -> "LatticeSpec":
        origin = GeoPoint(bounds.min_lat, bounds.min_lon)
        m_lon = M_PER_DEG_LAT * math.cos(math.radians(origin.latitude))
        rows = int((bounds.max_lat - bounds.min_lat) * M_PER_DEG_LAT / cell_size_m) + 1
        cols = int((bounds.max_lon - bounds.min_lon) * m_lon / cell_size_m) + 1
        return cls(origin, cell_size_m, rows, cols)

    def cell_indices(self, lats: np.ndarray, lons: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        m_lon = M_PER_DEG_LAT * math.cos(math.radians(self.origin.latitude))
        r = np.floor((lats - self.origin.latitude) * M_PER_DEG_LAT / self.cell_size_m)
        c = np.floor((lons - self.origin.longitude) * m_lon / self.cell_size_m)
        return r.astype(np.int64), c.astype(np.int64)


@dataclass(frozen=True, slots=True)
class EmissionAggregate:
    """Emissions summed over one key of a partition."""

    key: object
    co2e_kg: float
    fuel_l: float
    dist_km: float
    segment_count: int


@dataclass(frozen=True, slots=True)
class DayFilter:
    """Optional restriction to weekdays and/or an explicit set of dates
    (e.g. the best-recorded decile from gapfill.best_recorded_days)."""

    weekdays: frozenset[int] | None = None
    dates: frozenset[date] | None = None

    def mask(self, table: EmissionTable) -> np.ndarray:
        m = np.ones(len(table), dtype=bool)
        if self.weekdays is not None:
            m &= np.isin(table.weekday, list(self.weekdays))
        if self.dates is not None:
            ords = np.array(sorted(d.toordinal() for d in self.dates), dtype=np.int64)
            m &= np.isin(table.date_ord, ords)
        return m


@dataclass
class LatticeResult:
    spec: LatticeSpec
    co2e_kg: np.ndarray  # rows x cols
    fuel_l: np.ndarray
    dist_km: np.ndarray
    segment_count: np.ndarray
    normalized: np.ndarray  # co2e / max(co2e), zeros when the grid is empty
    overflow: EmissionAggregate  # segments starting outside the lattice


def aggregate_lattice(table: EmissionTable, spec: LatticeSpec,
                      day_filter: DayFilter | None = None) -> LatticeResult:
    """Bin each segment's emissions into the cell containing its start point.

    Out-of-lattice segments land in an overflow bucket, never silently
    dropped; normalized values are co2e / max cell co2e.
    """
    mask = day_filter.mask(table) if day_filter else np.ones(len(table), dtype=bool)
    lats = table.start_lat[mask]
    lons = table.start_lon[mask]
    r, c = spec.cell_indices(lats, lons)
    inside = (r >= 0) & (r < spec.rows) & (c >= 0) & (c < spec.cols)
    flat = r[inside] * spec.cols + c[inside]
    size = spec.rows * spec.cols

    def grid(values: np.ndarray) -> np.ndarray:
        return np.bincount(flat, weights=values[mask][inside], minlength=size).reshape(
            spec.rows, spec.cols
        )

    co2e = grid(table.co2e_kg)
    fuel = grid(table.fuel_l)
    dist = grid(table.dist_km)
    count = np.bincount(flat, minlength=size).reshape(spec.rows, spec.cols)

    out_mask = ~inside
    overflow = EmissionAggregate(
        key="overflow",
        co2e_kg=float(table.co2e_kg[mask][out_mask].sum()),
        fuel_l=float(table.fuel_l[mask][out_mask].sum()),
        dist_km=float(table.dist_km[mask][out_mask].sum()),
        segment_count=int(out_mask.sum()),
    )
    peak = co2e.max() if co2e.size else 0.0
    normalized = co2e / peak if peak > 0 else np.zeros_like(co2e)
    return LatticeResult(spec, co2e, fuel, dist, count, normalized, overflow)


@dataclass(frozen=True, slots=True)
class TemporalRow:
    kind: str  # "weekday" or "hour"
    key: int  # 0-6 Monday-based, or 0-23
    days: int  # distinct dates backing the average
    segment_count: int
    total_co2e_kg: float
    avg_co2e_kg: float  # per included day


@dataclass(frozen=True, slots=True)
class TemporalProfile:
    weekday_rows: tuple[TemporalRow, ...]  # always 7 entries
    hour_rows: tuple[TemporalRow, ...]  # always 24 entries


def temporal_profile(table: EmissionTable,
                     day_filter: DayFilter | None = None) -> TemporalProfile:
    """Average daily emissions per weekday and per start hour.

    Weekday averages divide by the number of distinct included dates of that
    weekday; hour averages divide by the number of distinct included dates
    overall. Keys with no data report zeros.
    """
    mask = day_filter.mask(table) if day_filter else np.ones(len(table), dtype=bool)
    wd = table.weekday[mask]
    hr = table.hour[mask]
    co2e = table.co2e_kg[mask]
    ords = table.date_ord[mask]

    weekday_rows = []
    for w in range(7):
        sel = wd == w
        days = len(np.unique(ords[sel]))
        total = float(co2e[sel].sum())
        count = int(sel.sum())
        weekday_rows.append(TemporalRow("weekday", w, days, count, total,
                                        total / days if days else 0.0))
    n_days = len(np.unique(ords))
    hour_rows = []
    for h in range(24):
        sel = hr == h
        total = float(co2e[sel].sum())
        count = int(sel.sum())
        hour_rows.append(TemporalRow("hour", h, n_days, count, total,
                                     total / n_days if n_days else 0.0))
    return TemporalProfile(tuple(weekday_rows), tuple(hour_rows))


@dataclass(frozen=True, slots=True)
class LineShare:
    line_id: str
    co2e_kg: float
    fuel_l: float
    dist_km: float
    segment_count: int
    share: float
    cumulative_share: float


def line_distribution(table: EmissionTable) -> list[LineShare]:
    """Lines ranked by CO2e descending (ties by line id) with cumulative share."""
    n_lines = len(table.line_vocab)
    if n_lines == 0 or len(table) == 0:
        return []
    co2e = np.bincount(table.line_codes, weights=table.co2e_kg, minlength=n_lines)
    fuel = np.bincount(table.line_codes, weights=table.fuel_l, minlength=n_lines)
    dist = np.bincount(table.line_codes, weights=table.dist_km, minlength=n_lines)
    count = np.bincount(table.line_codes, minlength=n_lines)
    order = sorted(range(n_lines), key=lambda i: (-co2e[i], table.line_vocab[i]))
    total = float(co2e.sum())
    out = []
    running = 0.0
    for i in order:
        share = float(co2e[i]) / total if total > 0 else 0.0
        running += share
        out.append(LineShare(table.line_vocab[i], float(co2e[i]), float(fuel[i]),
                             float(dist[i]), int(count[i]), share, running))
    return out


@dataclass(frozen=True, slots=True)
class FreeFlowResult:
    line_id: str
    dawn_speed_kmh: float
    peak_speed_kmh: float
    dawn_rate_kg_per_km: float
    peak_rate_kg_per_km: float
    impact: float  # peak_rate / dawn_rate
    dawn_sample: int
    peak_sample: int
    tag: str  # "top10" | "bottom10" | ""


@dataclass(frozen=True, slots=True)
class FreeFlowReport:
    results: tuple[FreeFlowResult, ...]
    excluded: tuple[tuple[str, str], ...]  # (line_id, reason)


def freeflow_analysis(
    table: EmissionTable,
    dawn_window: tuple[int, int] = (0, 3),
    peak_window: tuple[int, int] = (8, 12),
    min_samples: int = 30,
) -> FreeFlowReport:
    """Per line, compare emission intensity at dawn against peak hours.

    Windows are half-open hour ranges and must not overlap. Speeds are
    aggregate (total distance over total time); rates are total kg CO2e per
    total km in the window. Lines missing min_samples segments in either
    window are excluded with a reason. The top and bottom 10% of qualifying
    lines by impact are tagged (most and least congestion-affected).
    """
    d0, d1 = dawn_window
    p0, p1 = peak_window
    if max(d0, p0) < min(d1, p1):
        raise ValueError("dawn and peak windows overlap")
    n_lines = len(table.line_vocab)
    in_dawn = (table.hour >= d0) & (table.hour < d1)
    in_peak = (table.hour >= p0) & (table.hour < p1)

    results = []
    excluded = []
    for code in range(n_lines):
        line = table.line_vocab[code]
        sel = table.line_codes == code
        dawn = sel & in_dawn
        peak = sel & in_peak
        nd, np_ = int(dawn.sum()), int(peak.sum())
        if nd < min_samples or np_ < min_samples:
            excluded.append((line, f"samples below minimum (dawn {nd}, peak {np_}, need {min_samples})"))
            continue
        dawn_km = float(table.dist_km[dawn].sum())
        peak_km = float(table.dist_km[peak].sum())
        if dawn_km <= 0.0 or peak_km <= 0.0:
            excluded.append((line, "zero distance in a window"))
            continue
        dawn_rate = float(table.co2e_kg[dawn].sum()) / dawn_km
        peak_rate = float(table.co2e_kg[peak].sum()) / peak_km
        dawn_speed = dawn_km * 1000.0 / float(table.dt_s[dawn].sum()) * 3.6
        peak_speed = peak_km * 1000.0 / float(table.dt_s[peak].sum()) * 3.6
        results.append(FreeFlowResult(line, dawn_speed, peak_speed, dawn_rate,
                                      peak_rate, peak_rate / dawn_rate, nd, np_, ""))

    results.sort(key=lambda r: (-r.impact, r.line_id))
    n = len(results)
    if n:
        k = math.ceil(0.10 * n)
        top = {r.line_id for r in results[:k]}
        bottom = {r.line_id for r in results[-k:]} - top
        results = [
            FreeFlowResult(r.line_id, r.dawn_speed_kmh, r.peak_speed_kmh,
                           r.dawn_rate_kg_per_km, r.peak_rate_kg_per_km, r.impact,
                           r.dawn_sample, r.peak_sample,
                           "top10" if r.line_id in top else
                           "bottom10" if r.line_id in bottom else "")
            for r in results
        ]
    return FreeFlowReport(tuple(results), tuple(excluded))


@dataclass(frozen=True, slots=True)
class ReferenceMonth:
    """One row of the top-down reference file (fuel-sales based totals)."""

    month: str
    km: float
    diesel_m3: float
    co2e_t: float


@dataclass(frozen=True, slots=True)
class MonthComparison:
    month: str
    metric: str  # km | diesel_m3 | co2e_t
    raw: float
    low: float
    high: float
    reference: float | None  # None when the reference month is missing
    inside_band: bool | None
    gap: float | None  # 0 inside; signed relative distance to the nearest edge


def load_reference_csv(path) -> list[ReferenceMonth]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            try:
                out.append(ReferenceMonth(row["month"].strip(), float(row["km"]),
                                          float(row["diesel_m3"]), float(row["co2e_t"])))
            except (KeyError, ValueError) as exc:
                raise DataError(f"{path}: bad reference row {row!r}: {exc}") from None
    return out


def _band_position(raw: float, low: float, high: float,
                   ref: float) -> tuple[bool, float]:
    slack = _BAND_REL_TOL * max(abs(low), abs(high), 1.0)
    if low - slack <= ref <= high + slack:
        return True, 0.0
    if ref > high:
        return False, (ref - high) / high if high > 0 else math.inf
    return False, (ref - low) / low if low > 0 else -math.inf


def topdown_compare(monthly: Sequence[MonthlyTotals],
                    reference: Sequence[ReferenceMonth]) -> list[MonthComparison]:
    """Compare each computed month band against the top-down reference.

    Missing reference months produce rows with a None reference rather than
    an imputed value.
    """
    ref_by_month = {r.month: r for r in reference}
    rows: list[MonthComparison] = []
    for m in monthly:
        ref = ref_by_month.get(m.month)
        triples = [
            ("km", m.dist_raw_km, m.dist_low_km, m.dist_high_km,
             ref.km if ref else None),
            ("diesel_m3", m.fuel_raw_l / 1000.0, m.fuel_low_l / 1000.0,
             m.fuel_high_l / 1000.0, ref.diesel_m3 if ref else None),
            ("co2e_t", m.co2e_raw_kg / 1000.0, m.co2e_low_kg / 1000.0,
             m.co2e_high_kg / 1000.0, ref.co2e_t if ref else None),
        ]
        for metric, raw, low, high, rv in triples:
            if rv is None:
                rows.append(MonthComparison(m.month, metric, raw, low, high, None, None, None))
            else:
                inside, gap = _band_position(raw, low, high, rv)
                rows.append(MonthComparison(m.month, metric, raw, low, high, rv, inside, gap))
    return rows


# ---------------------------------------------------------------- writers


def write_lattice_geojson(result: LatticeResult, path) -> None:
    """One polygon feature per active cell; collection-level properties carry
    the overflow bucket and the normalization peak."""
    spec = result.spec
    m_lon = M_PER_DEG_LAT * math.cos(math.radians(spec.origin.latitude))
    dlat = spec.cell_size_m / M_PER_DEG_LAT
    dlon = spec.cell_size_m / m_lon
    features = []
    for r in range(spec.rows):
        for c in range(spec.cols):
            if result.segment_count[r, c] == 0:
                continue
            lat0 = spec.origin.latitude + r * dlat
            lon0 = spec.origin.longitude + c * dlon
            ring = [
                [lon0, lat0], [lon0 + dlon, lat0], [lon0 + dlon, lat0 + dlat],
                [lon0, lat0 + dlat], [lon0, lat0],
            ]
            features.append({
                "type": "Feature",
                "geometry": {"type": "Polygon", "coordinates": [ring]},
                "properties": {
                    "row": r, "col": c,
                    "co2e_kg": float(result.co2e_kg[r, c]),
                    "normalized": float(result.normalized[r, c]),
                    "segment_count": int(result.segment_count[r, c]),
                },
            })
    doc = {
        "type": "FeatureCollection",
        "properties": {
            "cell_size_m": spec.cell_size_m,
            "rows": spec.rows,
            "cols": spec.cols,
            "max_co2e_kg": float(result.co2e_kg.max()) if result.co2e_kg.size else 0.0,
            "overflow_co2e_kg": result.overflow.co2e_kg,
            "overflow_segments": result.overflow.segment_count,
        },
        "features": features,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, separators=(",", ":"))


def write_temporal_csv(profile: TemporalProfile, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["kind", "key", "days", "segment_count", "total_co2e_kg", "avg_co2e_kg"])
        for row in profile.weekday_rows + profile.hour_rows:
            w.writerow([row.kind, row.key, row.days, row.segment_count,
                        repr(row.total_co2e_kg), repr(row.avg_co2e_kg)])


def write_lines_csv(shares: Sequence[LineShare], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["line_id", "segment_count", "dist_km", "fuel_l", "co2e_kg",
                    "share", "cumulative_share"])
        for s in shares:
            w.writerow([s.line_id, s.segment_count, repr(s.dist_km), repr(s.fuel_l),
                        repr(s.co2e_kg), repr(s.share), repr(s.cumulative_share)])


def write_freeflow_csv(report: FreeFlowReport, path, excluded_path=None) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["line_id", "dawn_segments", "peak_segments", "dawn_speed_kmh",
                    "peak_speed_kmh", "dawn_rate_kg_per_km", "peak_rate_kg_per_km",
                    "impact", "tag"])
        for r in report.results:
            w.writerow([r.line_id, r.dawn_sample, r.peak_sample, repr(r.dawn_speed_kmh),
                        repr(r.peak_speed_kmh), repr(r.dawn_rate_kg_per_km),
                        repr(r.peak_rate_kg_per_km), repr(r.impact), r.tag])
    if excluded_path is not None:
        with open(excluded_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["line_id", "reason"])
            for line, reason in report.excluded:
                w.writerow([line, reason])


def write_validation_csv(rows: Sequence[MonthComparison], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["month", "metric", "raw", "low", "high", "reference",
                    "inside_band", "gap"])
        for r in rows:
            w.writerow([
                r.month, r.metric, repr(r.raw), repr(r.low), repr(r.high),
                "" if r.reference is None else repr(r.reference),
                "" if r.inside_band is None else int(r.inside_band),
                "" if r.gap is None else repr(r.gap),
            ])
