"""Fuel and CO2e estimation from corrected distance and mean speed.

Fuel use follows a piecewise speed-band curve (liters per km against the
segment's mean speed, computed on the corrected distance); CO2e applies the
emission factor of whichever fuel blend covers the segment's date. The curve
shipped as ILLUSTRATIVE_BUS_CURVE is a placeholder: replace it with
jurisdiction data for real estimates.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from datetime import date
from typing import Sequence

import numpy as np

from busghg.errors import ConfigError
from busghg.pairing import PairingConfig, TravelSegment, segment_speed
from busghg.sinuosity import SinuosityEstimate, corrected_distance


@dataclass(frozen=True)
class ConsumptionCurve:
    """Ordered, contiguous speed bands [low, high) mapping to liters per km.

    Speeds below the first band (including 0) clamp to the first rate and
    speeds at or above the top of the last band clamp to the last rate.
    """

    bands: tuple[tuple[float, float, float], ...]

    def __post_init__(self):
        if not self.bands:
            raise ConfigError("consumption curve has no bands")
        prev_high = None
        for k, (low, high, rate) in enumerate(self.bands):
            if not (high > low >= 0.0):
                raise ConfigError(f"curve band {k} has invalid range [{low}, {high})")
            if not (rate > 0.0):
                raise ConfigError(f"curve band {k} has non-positive rate {rate}")
            if prev_high is not None and low != prev_high:
                raise ConfigError(
                    f"curve bands must be contiguous: band {k} starts at {low}, "
                    f"previous ends at {prev_high}"
                )
            prev_high = high

    @classmethod
    def flat(cls, rate_l_per_km: float, top_kmh: float = 120.0) -> "ConsumptionCurve":
        return cls(((0.0, top_kmh, rate_l_per_km),))

    @classmethod
    def from_csv(cls, path) -> "ConsumptionCurve":
        bands = []
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                try:
                    bands.append((float(row["speed_low_kmh"]), float(row["speed_high_kmh"]),
                                  float(row["liters_per_km"])))
                except (KeyError, ValueError) as exc:
                    raise ConfigError(f"{path}: bad curve row {row!r}: {exc}") from None
        return cls(tuple(sorted(bands)))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["speed_low_kmh", "speed_high_kmh", "liters_per_km"])
            for low, high, rate in self.bands:
                w.writerow([repr(low), repr(high), repr(rate)])

    @property
    def _lows(self) -> np.ndarray:
        return np.array([b[0] for b in self.bands])

    @property
    def _rates(self) -> np.ndarray:
        return np.array([b[2] for b in self.bands])

    def rate_for(self, speed_kmh: float) -> float:
        for low, high, rate in reversed(self.bands):
            if speed_kmh >= low:
                return rate
        return self.bands[0][2]

    def rates_for(self, speeds_kmh: np.ndarray) -> np.ndarray:
        idx = np.searchsorted(self._lows, speeds_kmh, side="right") - 1
        return self._rates[np.clip(idx, 0, len(self.bands) - 1)]


# Shipped example only (shape: slow urban crawl burns more per km). Replace
# with a curve measured for the studied fleet and jurisdiction.
ILLUSTRATIVE_BUS_CURVE = ConsumptionCurve((
    (0.0, 10.0, 0.75),
    (10.0, 20.0, 0.60),
    (20.0, 40.0, 0.48),
    (40.0, 60.0, 0.42),
    (60.0, 120.0, 0.45),
))


@dataclass(frozen=True, slots=True)
class FuelSpec:
    """One fuel blend with its emission factor and validity window (inclusive)."""

    name: str
    factor_tco2e_per_m3: float
    effective_from: date
    effective_to: date

    def __post_init__(self):
        if not (self.factor_tco2e_per_m3 > 0.0):
            raise ConfigError(f"fuel {self.name}: emission factor must be positive")
        if self.effective_from > self.effective_to:
            raise ConfigError(f"fuel {self.name}: effective_from after effective_to")

    def covers(self, day: date) -> bool:
        return self.effective_from <= day <= self.effective_to


def validate_fuels(fuels: Sequence[FuelSpec]) -> None:
    """Reject overlapping validity windows at load time."""
    if not fuels:
        raise ConfigError("no fuel specifications configured")
    ordered = sorted(fuels, key=lambda f: f.effective_from)
    for a, b in zip(ordered, ordered[1:]):
        if b.effective_from <= a.effective_to:
            raise ConfigError(
                f"fuel windows overlap: {a.name} (until {a.effective_to}) and "
                f"{b.name} (from {b.effective_from})"
            )


def load_fuels_csv(path) -> list[FuelSpec]:
    fuels = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            try:
                fuels.append(FuelSpec(
                    row["name"].strip(),
                    float(row["factor_tco2e_per_m3"]),
                    date.fromisoformat(row["from_date"].strip()),
                    date.fromisoformat(row["to_date"].strip()),
                ))
            except (KeyError, ValueError) as exc:
                raise ConfigError(f"{path}: bad fuel row {row!r}: {exc}") from None
    validate_fuels(fuels)
    return fuels


def write_fuels_csv(fuels: Sequence[FuelSpec], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["name", "factor_tco2e_per_m3", "from_date", "to_date"])
        for f in fuels:
            w.writerow([f.name, repr(f.factor_tco2e_per_m3),
                        f.effective_from.isoformat(), f.effective_to.isoformat()])


def fuel_consumption(dist_m: float, speed_kmh: float, curve: ConsumptionCurve) -> float:
    """Liters burned over dist_m at the band rate for speed_kmh."""
    return dist_m / 1000.0 * curve.rate_for(speed_kmh)


def co2e_emissions(fuel_l: float, at: date, fuels: Sequence[FuelSpec]) -> float:
    """kg CO2e for fuel_l liters under the fuel covering the date.

    liters x 1e-3 m3/L x factor t/m3 x 1e3 kg/t collapses to fuel x factor,
    which is computed directly so the conversion costs no extra rounding.
    """
    for f in fuels:
        if f.covers(at):
            return fuel_l * f.factor_tco2e_per_m3
    raise ConfigError(f"no configured fuel covers {at.isoformat()}")


@dataclass(frozen=True, slots=True)
class SegmentEmission:
    """Corrected distance, mean speed, fuel and CO2e attributed to one segment."""

    segment: TravelSegment
    corrected_m: float
    mean_speed_kmh: float
    fuel_l: float
    co2e_kg: float


def emissions_for_segment(
    seg: TravelSegment,
    est: SinuosityEstimate,
    curve: ConsumptionCurve,
    fuels: Sequence[FuelSpec],
    cfg: PairingConfig,
) -> SegmentEmission:
    """Compose correction -> speed -> fuel -> CO2e for one segment."""
    dist = corrected_distance(seg, est, cfg)
    speed = segment_speed(seg, dist)
    fuel = fuel_consumption(dist, speed, curve)
    co2e = co2e_emissions(fuel, seg.start_date, fuels)
    return SegmentEmission(seg, dist, speed, fuel, co2e)


class EmissionTable:
    """Column store of per-segment emissions, the input to every aggregation.

    Arrays are parallel; line ids are dictionary-encoded. Values are computed
    with exactly the same expressions as emissions_for_segment, vectorized.
    """

    __slots__ = (
        "vehicle_ids", "line_codes", "line_vocab", "date_ord", "hour", "weekday",
        "month", "start_lat", "start_lon", "dt_s", "euclid_m", "corrected_m",
        "speed_kmh", "fuel_l", "co2e_kg",
    )

    def __init__(self, **arrays):
        for name in self.__slots__:
            setattr(self, name, arrays[name])

    def __len__(self) -> int:
        return len(self.co2e_kg)

    @property
    def dist_km(self) -> np.ndarray:
        return self.corrected_m / 1000.0


def build_emission_table(
    segments: Sequence[TravelSegment],
    est: SinuosityEstimate,
    curve: ConsumptionCurve,
    fuels: Sequence[FuelSpec],
    cfg: PairingConfig,
) -> EmissionTable:
    """Vectorized emissions_for_segment over a segment list."""
    n = len(segments)
    euclid = np.fromiter((s.euclid_m for s in segments), dtype=np.float64, count=n)
    dt = np.fromiter((s.dt_s for s in segments), dtype=np.float64, count=n)
    date_ord = np.fromiter((s.start_date.toordinal() for s in segments), dtype=np.int64, count=n)

    vocab: list[str] = []
    code_of: dict[str, int] = {}
    line_codes = np.empty(n, dtype=np.int32)
    for i, s in enumerate(segments):
        code = code_of.get(s.line_id)
        if code is None:
            code = len(vocab)
            code_of[s.line_id] = code
            vocab.append(s.line_id)
        line_codes[i] = code

    corrected = np.where(euclid < cfg.near_threshold_m, euclid, euclid * est.mean_s)
    with np.errstate(divide="ignore", invalid="ignore"):
        speed = np.where(dt > 0, corrected / dt * 3.6, 0.0)
    fuel = corrected / 1000.0 * curve.rates_for(speed)

    validate_fuels(fuels)
    ordered = sorted(fuels, key=lambda f: f.effective_from)
    from_ords = np.array([f.effective_from.toordinal() for f in ordered], dtype=np.int64)
    to_ords = np.array([f.effective_to.toordinal() for f in ordered], dtype=np.int64)
    factors = np.array([f.factor_tco2e_per_m3 for f in ordered])
    if n:
        which = np.searchsorted(from_ords, date_ord, side="right") - 1
        bad = (which < 0) | (date_ord > to_ords[np.clip(which, 0, len(ordered) - 1)])
        if np.any(bad):
            missing = date.fromordinal(int(date_ord[np.argmax(bad)]))
            raise ConfigError(f"no configured fuel covers {missing.isoformat()}")
        co2e = fuel * factors[which]
    else:
        co2e = np.empty(0, dtype=np.float64)

    return EmissionTable(
        vehicle_ids=[s.vehicle_id for s in segments],
        line_codes=line_codes,
        line_vocab=vocab,
        date_ord=date_ord,
        hour=np.fromiter((s.start_hour for s in segments), dtype=np.int8, count=n),
        weekday=np.fromiter((s.weekday for s in segments), dtype=np.int8, count=n),
        month=np.fromiter((s.month for s in segments), dtype=np.int8, count=n),
        start_lat=np.fromiter((s.start.latitude for s in segments), dtype=np.float64, count=n),
        start_lon=np.fromiter((s.start.longitude for s in segments), dtype=np.float64, count=n),
        dt_s=dt,
        euclid_m=euclid,
        corrected_m=corrected,
        speed_kmh=speed,
        fuel_l=fuel,
        co2e_kg=co2e,
    )


EMISSION_COLUMNS = [
    "vehicle_id", "line_id", "start_date", "start_hour", "weekday", "month",
    "dt_s", "euclid_m", "corrected_m", "speed_kmh", "fuel_l", "co2e_kg",
    "start_lat", "start_lon",
]


def write_emissions_csv(table: EmissionTable, path) -> int:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(EMISSION_COLUMNS)
        for i in range(len(table)):
            w.writerow([
                table.vehicle_ids[i], table.line_vocab[table.line_codes[i]],
                date.fromordinal(int(table.date_ord[i])).isoformat(),
                int(table.hour[i]), int(table.weekday[i]), int(table.month[i]),
                repr(float(table.dt_s[i])), repr(float(table.euclid_m[i])),
                repr(float(table.corrected_m[i])), repr(float(table.speed_kmh[i])),
                repr(float(table.fuel_l[i])), repr(float(table.co2e_kg[i])),
                repr(float(table.start_lat[i])), repr(float(table.start_lon[i])),
            ])
    return len(table)
