"""Synthetic fleets with exact ground truth, the oracle for end-to-end tests.

Buses ping-pong along fixed routes of a generated grid street network at
hourly-modulated speeds; positions are sampled at the configured interval
into the same gps.csv schema the ingest stage consumes. A ledger records the
true distance, fuel and CO2e of every (vehicle, day) leg by leg, using the
same consumption curve and emission factors the pipeline will apply.
"""

from __future__ import annotations

import csv
import math
from bisect import bisect_left, bisect_right
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta, timezone
from pathlib import Path
from typing import Sequence

import numpy as np
import yaml

from busghg.emissions import ConsumptionCurve, FuelSpec, co2e_emissions, write_fuels_csv
from busghg.errors import ConfigError, DataError
from busghg.geo import (M_PER_DEG_LAT, GeoPoint, StreetGraph, haversine_distance,
                        write_graph_csv)

_WALK_SNAP_M = 1e-9  # residues below this land exactly on a vertex


@dataclass(frozen=True)
class RouteSpec:
    """One bus line: a node path, its fleet size and service window.

    hourly_mult scales the base speed for intervals starting in that local
    hour (congestion emulation); missing hours default to 1.0.
    """

    line_id: str
    nodes: tuple[str, ...]
    n_buses: int = 1
    service_start_h: float = 6.0
    service_end_h: float = 22.0
    hourly_mult: dict[int, float] = field(default_factory=dict)

    def __post_init__(self):
        if len(self.nodes) < 2:
            raise ConfigError(f"route {self.line_id}: needs at least two nodes")
        if self.n_buses < 1:
            raise ConfigError(f"route {self.line_id}: needs at least one bus")
        if not (0.0 <= self.service_start_h < self.service_end_h <= 24.0):
            raise ConfigError(f"route {self.line_id}: bad service window")


@dataclass(frozen=True)
class SyntheticScenario:
    seed: int
    start_date: date
    n_days: int
    grid_rows: int
    grid_cols: int
    routes: tuple[RouteSpec, ...]
    curve: ConsumptionCurve
    fuels: tuple[FuelSpec, ...]
    edge_len_m: float = 250.0
    origin_lat: float = -22.95
    origin_lon: float = -43.40
    base_speed_kmh: float = 30.0
    sample_interval_s: float = 120.0
    jitter_sigma_m: float = 0.0
    utc_offset_hours: float = -3.0
    degraded_days: dict[date, float] = field(default_factory=dict)
    daily_service: dict[date, tuple[float, float]] = field(default_factory=dict)

    def __post_init__(self):
        for d, retention in self.degraded_days.items():
            if not (0.0 <= retention <= 1.0):
                raise ConfigError(f"retention for {d} outside [0, 1]")

    @property
    def tz(self) -> timezone:
        return timezone(timedelta(hours=self.utc_offset_hours))

    def dates(self) -> list[date]:
        return [self.start_date + timedelta(days=i) for i in range(self.n_days)]


def grid_graph(rows: int, cols: int, edge_len_m: float,
               origin_lat: float, origin_lon: float) -> StreetGraph:
    """Rectangular street grid; node (r, c) is named 'r{r}c{c}'.

    Rows advance north along meridians, columns east; edge lengths are the
    haversine distances of their endpoints, consistent with the geo module.
    """
    dlat = edge_len_m / M_PER_DEG_LAT
    dlon = edge_len_m / (M_PER_DEG_LAT * math.cos(math.radians(origin_lat)))
    nodes: dict[str, GeoPoint] = {}
    for r in range(rows):
        for c in range(cols):
            nodes[f"r{r}c{c}"] = GeoPoint(origin_lat + r * dlat, origin_lon + c * dlon)
    edges: list[tuple[str, str, float, bool]] = []
    for r in range(rows):
        for c in range(cols):
            a = f"r{r}c{c}"
            if c + 1 < cols:
                b = f"r{r}c{c + 1}"
                edges.append((a, b, haversine_distance(nodes[a], nodes[b]), False))
            if r + 1 < rows:
                b = f"r{r + 1}c{c}"
                edges.append((a, b, haversine_distance(nodes[a], nodes[b]), False))
    return StreetGraph(nodes, edges)


def column_route(col: int, r0: int, r1: int) -> tuple[str, ...]:
    """Node ids of a straight north-south route along one column."""
    step = 1 if r1 >= r0 else -1
    return tuple(f"r{r}c{col}" for r in range(r0, r1 + step, step))


def row_route(row: int, c0: int, c1: int) -> tuple[str, ...]:
    step = 1 if c1 >= c0 else -1
    return tuple(f"r{row}c{c}" for c in range(c0, c1 + step, step))


def staircase_route(r0: int, c0: int, pairs: int) -> tuple[str, ...]:
    """Monotone staircase heading northeast: east, north, east, north, ...

    Between diagonal fixes the traveled path is a Manhattan path, so pair
    sinuosity approaches sqrt(2) when fixes land on the diagonal.
    """
    nodes = [f"r{r0}c{c0}"]
    r, c = r0, c0
    for _ in range(pairs):
        c += 1
        nodes.append(f"r{r}c{c}")
        r += 1
        nodes.append(f"r{r}c{c}")
    return tuple(nodes)


@dataclass
class VehicleDayTruth:
    dist_m: float = 0.0
    fuel_l: float = 0.0
    co2e_kg: float = 0.0


class GroundTruthLedger:
    """True per-(vehicle, day) activity; monthly rollups are exact sums."""

    def __init__(self):
        self.days: dict[tuple[str, date], VehicleDayTruth] = {}

    def add_leg(self, vehicle: str, day: date, dist_m: float, fuel_l: float,
                co2e_kg: float) -> None:
        truth = self.days.get((vehicle, day))
        if truth is None:
            truth = self.days[(vehicle, day)] = VehicleDayTruth()
        truth.dist_m += dist_m
        truth.fuel_l += fuel_l
        truth.co2e_kg += co2e_kg

    def total_dist_m(self) -> float:
        return sum(t.dist_m for _, t in sorted(self.days.items()))

    def daily_totals(self) -> dict[date, VehicleDayTruth]:
        out: dict[date, VehicleDayTruth] = {}
        for (_, day), t in sorted(self.days.items()):
            acc = out.setdefault(day, VehicleDayTruth())
            acc.dist_m += t.dist_m
            acc.fuel_l += t.fuel_l
            acc.co2e_kg += t.co2e_kg
        return out

    def monthly_rollup(self) -> list[tuple[str, float, float, float]]:
        """(month, km, diesel_m3, co2e_t) rows shaped like the top-down input."""
        acc: dict[str, VehicleDayTruth] = {}
        for (_, day), t in sorted(self.days.items()):
            key = f"{day.year:04d}-{day.month:02d}"
            m = acc.setdefault(key, VehicleDayTruth())
            m.dist_m += t.dist_m
            m.fuel_l += t.fuel_l
            m.co2e_kg += t.co2e_kg
        return [
            (month, m.dist_m / 1000.0, m.fuel_l / 1000.0, m.co2e_kg / 1000.0)
            for month, m in sorted(acc.items())
        ]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["vehicle_id", "date", "dist_km", "fuel_l", "co2e_kg"])
            for (vehicle, day), t in sorted(self.days.items()):
                w.writerow([vehicle, day.isoformat(), repr(t.dist_m / 1000.0),
                            repr(t.fuel_l), repr(t.co2e_kg)])

    def write_reference_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["month", "km", "diesel_m3", "co2e_t"])
            for month, km, m3, t in self.monthly_rollup():
                w.writerow([month, repr(km), repr(m3), repr(t)])


class _PathWalker:
    """Arc-length position on a node path with ping-pong folding at the ends.

    State is (pos, direction) with pos assigned *exactly* to vertex arc
    values whenever a whole edge is consumed, so long runs accumulate no
    floating drift and every iteration makes progress.
    """

    def __init__(self, graph: StreetGraph, nodes: Sequence[str], line_id: str):
        self.lats: list[float] = []
        self.lons: list[float] = []
        self.cum: list[float] = [0.0]
        adjacency: dict[tuple[str, str], float] = {}
        for a, b, length, oneway in graph.edges:
            adjacency[(a, b)] = length
            if not oneway:
                adjacency[(b, a)] = length
        for nid in nodes:
            p = graph.node_point(nid)  # raises KeyError on unknown nodes
            self.lats.append(p.latitude)
            self.lons.append(p.longitude)
        for a, b in zip(nodes, nodes[1:]):
            length = adjacency.get((a, b))
            if length is None:
                raise DataError(f"route {line_id}: {a} -> {b} is not a graph edge")
            self.cum.append(self.cum[-1] + length)
        self.length = self.cum[-1]
        self.pos = 0.0  # folded position in [0, L]
        self.direction = 1

    def seek(self, offset_m: float) -> None:
        u = offset_m % (2.0 * self.length)
        if u <= self.length:
            self.pos, self.direction = u, 1
        else:
            self.pos, self.direction = 2.0 * self.length - u, -1

    def point_at(self, pos: float) -> tuple[float, float]:
        i = bisect_right(self.cum, pos) - 1
        if i >= len(self.cum) - 1:
            return self.lats[-1], self.lons[-1]
        i = max(i, 0)
        f = (pos - self.cum[i]) / (self.cum[i + 1] - self.cum[i])
        return (self.lats[i] + f * (self.lats[i + 1] - self.lats[i]),
                self.lons[i] + f * (self.lons[i + 1] - self.lons[i]))

    def position(self) -> tuple[float, float]:
        return self.point_at(self.pos)

    def _flip_at_ends(self) -> None:
        if self.direction > 0 and self.pos >= self.length:
            self.pos = self.length
            self.direction = -1
        elif self.direction < 0 and self.pos <= 0.0:
            self.pos = 0.0
            self.direction = 1

    def walk(self, dist_m: float, on_leg) -> None:
        """Advance by dist_m, invoking on_leg(leg_m) per straight
        constant-direction sub-leg (split at vertices and turnarounds).

        The position is updated before the callback runs, so position()
        inside on_leg reports the leg's end point. Residues below the snap
        tolerance land exactly on a vertex instead of emitting micro-legs.
        """
        remaining = dist_m
        self._flip_at_ends()
        while remaining > _WALK_SNAP_M:
            if self.direction > 0:
                j = bisect_right(self.cum, self.pos)
                limit = self.cum[j] if j < len(self.cum) else self.length
                avail = limit - self.pos
            else:
                j = bisect_left(self.cum, self.pos) - 1
                limit = self.cum[j] if j >= 0 else 0.0
                avail = self.pos - limit
            if avail <= _WALK_SNAP_M:
                self.pos = limit  # exact vertex assignment: no drift
                self._flip_at_ends()
                continue
            if remaining >= avail:
                step = avail
                self.pos = limit
            else:
                step = remaining
                self.pos = self.pos + self.direction * step
            remaining -= step
            self._flip_at_ends()
            on_leg(step)


@dataclass
class SynthResult:
    ledger: GroundTruthLedger
    graph: StreetGraph
    n_records: int
    records: list[tuple] | None = None  # (vehicle, line, lat, lon, iso_ts, speed)
    drive_log: list[tuple] | None = None


GPS_HEADER = ["vehicle_id", "line_id", "latitude", "longitude", "timestamp", "reported_speed"]


def generate(scenario: SyntheticScenario, gps_path=None,
             collect_drive_log: bool = False) -> SynthResult:
    """Drive the fleet and emit sampled GPS records plus the truth ledger.

    Records stream to gps_path when given, otherwise they are returned in
    memory. Buses start spread along their route (offsets quantized to the
    edge length); movement covers whole sampling intervals only, so the
    ledger matches exactly what the record pairs can see. Degraded days drop
    records uniformly at random at the planned retention; the ledger is
    unaffected. Identical scenarios produce byte-identical outputs.
    """
    graph = grid_graph(scenario.grid_rows, scenario.grid_cols, scenario.edge_len_m,
                       scenario.origin_lat, scenario.origin_lon)
    rng = np.random.default_rng(scenario.seed)
    ledger = GroundTruthLedger()
    tz = scenario.tz
    interval = scenario.sample_interval_s
    jitter = scenario.jitter_sigma_m
    dlat_per_m = 1.0 / M_PER_DEG_LAT
    dlon_per_m = 1.0 / (M_PER_DEG_LAT * math.cos(math.radians(scenario.origin_lat)))

    records: list[tuple] | None = None
    writer = None
    fh = None
    n_records = 0
    drive_log: list[tuple] | None = [] if collect_drive_log else None
    if gps_path is not None:
        fh = open(gps_path, "w", newline="")
        writer = csv.writer(fh)
        writer.writerow(GPS_HEADER)
    else:
        records = []

    def emit(vehicle, line, lat, lon, ts: datetime, speed_kmh, retention):
        nonlocal n_records
        if jitter > 0.0:
            lat += rng.normal(0.0, jitter) * dlat_per_m
            lon += rng.normal(0.0, jitter) * dlon_per_m
        if retention < 1.0 and rng.random() >= retention:
            return
        row = (vehicle, line, repr(lat), repr(lon), ts.isoformat(), repr(speed_kmh))
        if writer is not None:
            writer.writerow(row)
        else:
            records.append(row)
        n_records += 1

    try:
        for day in scenario.dates():
            retention = scenario.degraded_days.get(day, 1.0)
            midnight = datetime.combine(day, datetime.min.time(), tz)
            override = scenario.daily_service.get(day)
            for route in scenario.routes:
                walker = _PathWalker(graph, route.nodes, route.line_id)
                start_h, end_h = override if override else (route.service_start_h,
                                                            route.service_end_h)
                span_s = (end_h - start_h) * 3600.0
                # epsilon guards fractional-hour spans against float slop
                n_intervals = int(math.floor(span_s / interval + 1e-9))
                if n_intervals < 0:
                    continue
                offset_step = max(1.0, scenario.edge_len_m)
                for b in range(route.n_buses):
                    vehicle = f"{route.line_id}-{b:02d}"
                    offset = round(b * walker.length / route.n_buses / offset_step) * offset_step
                    walker.seek(offset)
                    t_s = start_h * 3600.0
                    ts = midnight + timedelta(seconds=t_s)
                    hour = int(t_s // 3600.0) % 24
                    speed = scenario.base_speed_kmh * route.hourly_mult.get(hour, 1.0)
                    lat, lon = walker.position()
                    emit(vehicle, route.line_id, lat, lon, ts, speed, retention)
                    if drive_log is not None:
                        drive_log.append((vehicle, route.line_id, lat, lon, ts.isoformat()))
                    for k in range(n_intervals):
                        t_s = start_h * 3600.0 + k * interval
                        hour = int(t_s // 3600.0) % 24
                        speed = scenario.base_speed_kmh * route.hourly_mult.get(hour, 1.0)
                        clock = [t_s]
                        walker.walk(
                            speed / 3.6 * interval,
                            lambda leg_m, s=speed, vh=vehicle, dy=day, ck=clock:
                                _ledger_leg(ledger, scenario, walker, drive_log, leg_m,
                                            s, vh, route.line_id, dy, ck, midnight),
                        )
                        ts = midnight + timedelta(seconds=t_s + interval)
                        hour_next = int((t_s + interval) // 3600.0) % 24
                        speed_next = scenario.base_speed_kmh * route.hourly_mult.get(hour_next, 1.0)
                        lat, lon = walker.position()
                        emit(vehicle, route.line_id, lat, lon, ts, speed_next, retention)
    finally:
        if fh is not None:
            fh.close()
    return SynthResult(ledger, graph, n_records, records, drive_log)


def _ledger_leg(ledger, scenario, walker, drive_log, leg_m, speed_kmh, vehicle,
                line_id, day, clock, midnight):
    fuel = leg_m / 1000.0 * scenario.curve.rate_for(speed_kmh)
    co2e = co2e_emissions(fuel, day, scenario.fuels)
    ledger.add_leg(vehicle, day, leg_m, fuel, co2e)
    if drive_log is not None:
        clock[0] += leg_m / (speed_kmh / 3.6)
        lat, lon = walker.position()
        ts = midnight + timedelta(seconds=clock[0])
        drive_log.append((vehicle, line_id, lat, lon, ts.isoformat()))


def write_fixture(scenario: SyntheticScenario, outdir) -> dict[str, Path]:
    """Emit the full fixture corpus: gps.csv, graph, curve, fuels, ledger and
    the top-down-shaped reference file."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = {
        "gps": outdir / "gps.csv",
        "nodes": outdir / "nodes.csv",
        "edges": outdir / "edges.csv",
        "curve": outdir / "curve.csv",
        "fuels": outdir / "fuels.csv",
        "ledger": outdir / "ledger.csv",
        "reference": outdir / "reference_monthly.csv",
    }
    result = generate(scenario, gps_path=paths["gps"])
    write_graph_csv(result.graph, paths["nodes"], paths["edges"])
    scenario.curve.to_csv(paths["curve"])
    write_fuels_csv(scenario.fuels, paths["fuels"])
    result.ledger.write_csv(paths["ledger"])
    result.ledger.write_reference_csv(paths["reference"])
    return paths


def scenario_from_yaml(path) -> SyntheticScenario:
    """Load a scenario description (see README for the schema)."""
    with open(path) as fh:
        doc = yaml.safe_load(fh)
    try:
        routes = tuple(
            RouteSpec(
                line_id=str(r["line_id"]),
                nodes=tuple(r["nodes"]),
                n_buses=int(r.get("n_buses", 1)),
                service_start_h=float(r.get("service_start_h", 6.0)),
                service_end_h=float(r.get("service_end_h", 22.0)),
                hourly_mult={int(k): float(v) for k, v in (r.get("hourly_mult") or {}).items()},
            )
            for r in doc["routes"]
        )
        curve = ConsumptionCurve(tuple(
            (float(lo), float(hi), float(rate)) for lo, hi, rate in doc["curve"]
        ))
        fuels = tuple(
            FuelSpec(str(f["name"]), float(f["factor_tco2e_per_m3"]),
                     _as_date(f["from_date"]), _as_date(f["to_date"]))
            for f in doc["fuels"]
        )
        return SyntheticScenario(
            seed=int(doc["seed"]),
            start_date=_as_date(doc["start_date"]),
            n_days=int(doc["n_days"]),
            grid_rows=int(doc["grid_rows"]),
            grid_cols=int(doc["grid_cols"]),
            routes=routes,
            curve=curve,
            fuels=fuels,
            edge_len_m=float(doc.get("edge_len_m", 250.0)),
            origin_lat=float(doc.get("origin_lat", -22.95)),
            origin_lon=float(doc.get("origin_lon", -43.40)),
            base_speed_kmh=float(doc.get("base_speed_kmh", 30.0)),
            sample_interval_s=float(doc.get("sample_interval_s", 120.0)),
            jitter_sigma_m=float(doc.get("jitter_sigma_m", 0.0)),
            utc_offset_hours=float(doc.get("utc_offset_hours", -3.0)),
            degraded_days={_as_date(k): float(v)
                           for k, v in (doc.get("degraded_days") or {}).items()},
            daily_service={_as_date(k): (float(v[0]), float(v[1]))
                           for k, v in (doc.get("daily_service") or {}).items()},
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: bad scenario: {exc}") from None


def _as_date(value) -> date:
    if isinstance(value, date) and not isinstance(value, datetime):
        return value
    if isinstance(value, datetime):
        return value.date()
    return date.fromisoformat(str(value))
