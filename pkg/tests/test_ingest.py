"""Ingest: parsing, cleaning, partitioning, and the row-conservation laws."""

import io
from datetime import datetime, timezone

import numpy as np
import pytest

from busghg.ingest import (BoundingBox, CleanRecord, ColumnSchema, ParseDiagnostic,
                           RawRecord, clean_records, parse_records,
                           partition_by_vehicle_day)
from conftest import RIO_BOUNDS, TZ_RIO, make_record

SCHEMA = ColumnSchema(has_header=False)


def parse_lines(*lines, schema=SCHEMA):
    return list(parse_records(io.StringIO("\n".join(lines) + "\n"), schema))


class TestParse:
    def test_direct_field_mapping(self):
        items = parse_lines("B123,409,-22.90,-43.20,2015-03-01T10:00:00-03:00,35")
        (rec,) = items
        assert isinstance(rec, RawRecord)
        assert rec.vehicle_id == "B123"
        assert rec.line_id == "409"
        assert rec.latitude == -22.90
        assert rec.longitude == -43.20
        assert rec.reported_speed == 35.0
        assert rec.timestamp == datetime(2015, 3, 1, 10, 0, tzinfo=TZ_RIO)

    def test_empty_line_yields_diagnostic(self):
        items = parse_lines("")
        (diag,) = items
        assert isinstance(diag, ParseDiagnostic)
        assert "empty" in diag.message

    def test_bad_latitude_names_column(self):
        items = parse_lines("B123,409,abc,-43.20,2015-03-01T10:00:00-03:00,35")
        (diag,) = items
        assert isinstance(diag, ParseDiagnostic)
        assert diag.column == "latitude"

    def test_timestamp_without_offset_rejected(self):
        (diag,) = parse_lines("B123,409,-22.9,-43.2,2015-03-01T10:00:00,35")
        assert isinstance(diag, ParseDiagnostic)
        assert diag.column == "timestamp"

    def test_missing_speed_column_is_none(self):
        (rec,) = parse_lines("B123,409,-22.9,-43.2,2015-03-01T10:00:00-03:00")
        assert rec.reported_speed is None

    def test_header_skipped_and_rows_numbered_physically(self):
        schema = ColumnSchema(has_header=True)
        items = parse_lines("vehicle,line,lat,lon,ts,speed",
                            "B1,409,-22.9,-43.2,2015-03-01T10:00:00-03:00,1",
                            schema=schema)
        (rec,) = items
        assert rec.source_row == 2

    def test_every_line_yields_exactly_one_item_in_order(self):
        lines = [
            "B1,409,-22.9,-43.2,2015-03-01T10:00:00-03:00,1",
            "",
            "B2,409,nope,-43.2,2015-03-01T10:02:00-03:00,1",
            "B3,409,-22.9,-43.2,2015-03-01T10:04:00-03:00,1",
        ]
        items = parse_lines(*lines)
        assert len(items) == 4
        assert [it.source_row for it in items] == [1, 2, 3, 4]

    def test_unreadable_stream_aborts(self):
        class Broken:
            def __iter__(self):
                return self

            def __next__(self):
                raise OSError("device gone")

        with pytest.raises(OSError):
            list(parse_records(Broken(), SCHEMA))

    def test_schema_requires_core_columns(self):
        with pytest.raises(ValueError):
            ColumnSchema(columns={"vehicle_id": 0})


class TestClean:
    def test_interior_point_kept(self):
        bounds = BoundingBox(-23.10, -22.70, -43.80, -43.10)
        (rec,) = parse_lines("B1,409,-22.90,-43.20,2015-03-01T10:00:00-03:00,35")
        clean, stats, _ = clean_records([rec], bounds)
        assert len(clean) == 1
        assert isinstance(clean[0], CleanRecord)
        assert stats.rows_rejected_bounds == 0

    def test_exterior_point_rejected(self):
        bounds = BoundingBox(-23.10, -22.70, -43.80, -43.10)
        (rec,) = parse_lines("B1,409,0.0,0.0,2015-03-01T10:00:00-03:00,35")
        clean, stats, _ = clean_records([rec], bounds)
        assert clean == []
        assert stats.rows_rejected_bounds == 1

    def test_empty_stream(self):
        clean, stats, diags = clean_records([], RIO_BOUNDS)
        assert clean == [] and diags == []
        assert (stats.rows_read, stats.rows_parsed, stats.rows_rejected_parse,
                stats.rows_rejected_bounds) == (0, 0, 0, 0)

    def test_reported_speed_dropped(self):
        (rec,) = parse_lines("B1,409,-22.9,-43.2,2015-03-01T10:00:00-03:00,250")
        clean, _, _ = clean_records([rec], RIO_BOUNDS)
        assert not hasattr(clean[0], "reported_speed")

    def test_row_conservation_under_fuzz(self):
        rng = np.random.default_rng(3)
        lines = []
        for i in range(500):
            kind = rng.integers(0, 4)
            if kind == 0:
                lines.append("")
            elif kind == 1:
                lines.append(f"B{i},409,junk,-43.2,2015-03-01T10:00:00-03:00,1")
            elif kind == 2:
                lines.append(f"B{i},409,{rng.uniform(-80, 80):.4f},{rng.uniform(-170, 170):.4f},"
                             "2015-03-01T10:00:00-03:00,1")
            else:
                lines.append(f"B{i},409,-22.9,-43.2,2015-03-01T10:00:00-03:00,1")
        clean, stats, diags = clean_records(parse_lines(*lines), RIO_BOUNDS)
        assert stats.rows_read == 500
        assert stats.rows_read == stats.rows_parsed + stats.rows_rejected_parse
        assert len(clean) == stats.rows_parsed - stats.rows_rejected_bounds
        assert len(diags) == stats.rows_rejected_parse

    def test_idempotence_on_own_output(self):
        lines = [f"B{i},409,-22.9{i % 7},-43.2,2015-03-01T1{i % 10}:00:00-03:00,{i}"
                 for i in range(50)]
        clean1, _, _ = clean_records(parse_lines(*lines), RIO_BOUNDS)
        clean2, stats2, _ = clean_records(clean1, RIO_BOUNDS)
        assert clean2 == clean1
        assert stats2.rows_rejected_bounds == 0


class TestPartition:
    def test_two_vehicles_two_partitions(self):
        recs = [make_record("V1", row=1), make_record("V2", row=2)]
        parts = partition_by_vehicle_day(recs, TZ_RIO)
        assert len(parts) == 2

    def test_day_boundary_splits_on_local_day(self):
        base = datetime(2015, 3, 1, 23, 59, tzinfo=TZ_RIO)
        recs = [make_record("V1", t=0, row=1, base=base),
                make_record("V1", t=120, row=2, base=base)]
        parts = partition_by_vehicle_day(recs, TZ_RIO)
        assert len(parts) == 2

    def test_utc_timestamp_partitioned_by_local_day(self):
        # 01:00 UTC is 22:00 the previous local day in Rio
        utc = timezone.utc
        rec = make_record("V1", base=datetime(2015, 3, 2, 1, 0, tzinfo=utc))
        ((_, day),) = partition_by_vehicle_day([rec], TZ_RIO).keys()
        assert day.isoformat() == "2015-03-01"

    def test_duplicate_timestamps_keep_source_row_order(self):
        recs = [make_record("V1", t=0, row=5), make_record("V1", t=0, row=2)]
        ((_, part),) = partition_by_vehicle_day(recs, TZ_RIO).items()
        assert [r.source_row for r in part] == [2, 5]

    def test_partition_soundness(self):
        rng = np.random.default_rng(4)
        recs = [
            make_record(f"V{rng.integers(0, 5)}", t=float(rng.integers(0, 3 * 86400)),
                        row=i)
            for i in range(400)
        ]
        parts = partition_by_vehicle_day(recs, TZ_RIO)
        merged = [r for part in parts.values() for r in part]
        assert sorted(merged, key=lambda r: (r.vehicle_id, r.timestamp, r.source_row)) == \
            sorted(recs, key=lambda r: (r.vehicle_id, r.timestamp, r.source_row))
        assert len(merged) == len(recs)

    def test_bounding_box_validation(self):
        with pytest.raises(ValueError):
            BoundingBox(1.0, 1.0, 0.0, 1.0)
        with pytest.raises(ValueError):
            BoundingBox(-91.0, 0.0, 0.0, 1.0)
