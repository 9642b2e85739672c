"""Shared fixtures: tiny graphs, scenarios, and record builders."""

from __future__ import annotations

from datetime import date, datetime, timedelta, timezone

import pytest

from busghg.emissions import ConsumptionCurve, FuelSpec
from busghg.geo import GeoPoint, StreetGraph
from busghg.ingest import BoundingBox, CleanRecord
from busghg.pairing import PairingConfig

TZ_RIO = timezone(timedelta(hours=-3))
RIO_BOUNDS = BoundingBox(-23.2, -22.6, -43.9, -43.0)

B6 = FuelSpec("B6", 2.51, date(2014, 1, 1), date(2015, 6, 30))
B7 = FuelSpec("B7", 2.49, date(2015, 7, 1), date(2016, 12, 31))


def make_record(vehicle="V1", line="409", t=0.0, lat=-22.95, lon=-43.40, row=1,
                base=datetime(2015, 3, 2, 6, 0, tzinfo=TZ_RIO)):
    """CleanRecord t seconds after the base instant."""
    return CleanRecord(vehicle, line, base + timedelta(seconds=t), lat, lon, row)


@pytest.fixture
def pairing_cfg():
    return PairingConfig()


@pytest.fixture
def flat_curve():
    return ConsumptionCurve.flat(0.4)


@pytest.fixture
def banded_curve():
    return ConsumptionCurve(((0.0, 20.0, 0.6), (20.0, 40.0, 0.5), (40.0, 120.0, 0.45)))


@pytest.fixture
def fuels():
    return [B6, B7]


@pytest.fixture
def triangle_graph():
    """A-B 100 m, B-C 100 m, A-C 250 m (the long way is direct)."""
    m = 1.0 / 111194.92664455873  # degrees per meter of latitude
    nodes = {
        "A": GeoPoint(0.0, 0.0),
        "B": GeoPoint(100 * m, 0.0),
        "C": GeoPoint(200 * m, 0.0),
    }
    edges = [("A", "B", 100.0, False), ("B", "C", 100.0, False), ("A", "C", 250.0, False)]
    return StreetGraph(nodes, edges)
