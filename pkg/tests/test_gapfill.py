"""Expected ranges, multiplicative filling, and monthly bands."""

from datetime import date, timedelta

import pytest

from busghg.gapfill import (DailyCount, best_recorded_days, complete_days,
                            compute_expected_ranges, fill_missing_days, monthly_band,
                            read_daily_csv, read_monthly_csv, write_daily_csv,
                            write_monthly_csv)

MONDAY = date(2015, 6, 1)  # a Monday


def day_of(weekday, week, count, co2e=0.0, fuel=0.0, dist=0.0):
    d = MONDAY + timedelta(days=weekday + 7 * week)
    return DailyCount(d, d.weekday(), count, co2e, fuel, dist)


class TestExpectedRanges:
    def test_ten_tuesdays_nearest_rank(self):
        # oracle: nearest-rank P90 of 10,20,...,100 is the ceil(0.9*10)=9th
        # ascending value = 90; the top bound is the max = 100
        days = [day_of(1, w, (w + 1) * 10) for w in range(10)]
        rng = compute_expected_ranges(days)[1]
        assert (rng.low, rng.high) == (90, 100)
        assert not rng.insufficient

    def test_degenerate_equal_counts(self):
        days = [day_of(2, w, 55) for w in range(12)]
        rng = compute_expected_ranges(days)[2]
        assert (rng.low, rng.high) == (55, 55)

    def test_single_observation_flagged_insufficient(self):
        (rng,) = compute_expected_ranges([day_of(0, 0, 37)]).values()
        assert rng.insufficient
        assert (rng.low, rng.high) == (37, 37)


class TestFill:
    def test_hand_computed_band(self):
        # oracle: 500 x 90/45 = 1000 and 500 x 100/45 = 1111.11...
        days = [day_of(1, w, (w + 1) * 10, co2e=float((w + 1) * 10)) for w in range(10)]
        target = day_of(1, 50, 45, co2e=500.0)
        ranges = compute_expected_ranges(days)
        (filled,) = [f for f in fill_missing_days(days + [target], ranges)
                     if f.observed.day == target.day]
        assert filled.method == "scaled"
        assert filled.scale_low == pytest.approx(2.0)
        assert filled.co2e_low_kg == pytest.approx(1000.0)
        assert filled.co2e_high_kg == pytest.approx(1111.111111, rel=1e-6)

    def test_in_range_day_passes_through_bit_identical(self):
        days = [day_of(3, w, 100, co2e=41.25, fuel=17.5, dist=103.001) for w in range(12)]
        ranges = compute_expected_ranges(days)
        for f in fill_missing_days(days, ranges):
            assert f.method == "passthrough"
            assert (f.scale_low, f.scale_high) == (1.0, 1.0)
            assert f.co2e_low_kg == 41.25 and f.co2e_high_kg == 41.25
            assert f.fuel_low_l == 17.5 and f.dist_high_km == 103.001

    def test_zero_day_filled_from_weekday_mean(self):
        days = [day_of(4, w, 100, co2e=200.0) for w in range(10)]
        zero = day_of(4, 30, 0)
        ranges = compute_expected_ranges(days)
        (f,) = [x for x in fill_missing_days(days + [zero], ranges)
                if x.observed.day == zero.day]
        assert f.method == "zero_fill"
        # mean per segment = 200/100 = 2.0; band = [100, 100] x 2.0
        assert f.co2e_low_kg == pytest.approx(200.0)
        assert f.co2e_high_kg == pytest.approx(200.0)

    def test_above_range_day_passes_through(self):
        days = [day_of(5, w, 100, co2e=5.0) for w in range(10)] + [day_of(5, 20, 130, co2e=6.5)]
        ranges = compute_expected_ranges(days[:-1])
        f = [x for x in fill_missing_days(days, ranges) if x.observed.segment_count == 130][0]
        assert f.method == "passthrough"


class TestMonthlyBand:
    def test_no_filling_collapses_band(self):
        days = [day_of(0, w, 100, co2e=10.0, fuel=4.0, dist=25.0) for w in range(4)]
        ranges = compute_expected_ranges(days)
        (m,) = monthly_band(fill_missing_days(days, ranges))
        assert m.co2e_raw_kg == m.co2e_low_kg == m.co2e_high_kg

    def test_band_widths_add_over_filled_days(self):
        days = [day_of(1, w, 100, co2e=10.0) for w in range(10)]
        deficient = [day_of(1, 30, 50, co2e=5.0), day_of(1, 31, 25, co2e=2.5)]
        ranges = compute_expected_ranges(days)
        filled = fill_missing_days(days + deficient, ranges)
        months = monthly_band(filled)
        low = sum(m.co2e_low_kg for m in months)
        high = sum(m.co2e_high_kg for m in months)
        # each deficient day fills to exactly [100, 100] x 0.1 kg/segment
        assert low == pytest.approx(sum(m.co2e_raw_kg for m in months) + 5.0 + 7.5)
        assert high == low

    def test_filling_never_reduces_any_month(self):
        days = ([day_of(w % 7, w // 7, 80 + (w % 5), co2e=8.0) for w in range(70)]
                + [day_of(2, 20, 10, co2e=1.0)])
        ranges = compute_expected_ranges(days)
        for m in monthly_band(fill_missing_days(days, ranges)):
            assert m.co2e_raw_kg <= m.co2e_low_kg <= m.co2e_high_kg
            assert m.fuel_raw_l <= m.fuel_low_l <= m.fuel_high_l
            assert m.dist_raw_km <= m.dist_low_km <= m.dist_high_km

    def test_doubling_emissions_doubles_every_total(self):
        days = [day_of(w % 7, w // 7, 90 + (w % 3), co2e=7.0, fuel=3.0, dist=20.0)
                for w in range(35)] + [day_of(1, 30, 9, co2e=0.7, fuel=0.3, dist=2.0)]
        doubled = [DailyCount(d.day, d.weekday, d.segment_count, 2 * d.co2e_kg,
                              2 * d.fuel_l, 2 * d.dist_km) for d in days]
        ranges = compute_expected_ranges(days)
        ranges2 = compute_expected_ranges(doubled)
        months = monthly_band(fill_missing_days(days, ranges))
        months2 = monthly_band(fill_missing_days(doubled, ranges2))
        for a, b in zip(months, months2):
            assert b.co2e_low_kg == pytest.approx(2 * a.co2e_low_kg, rel=1e-12)
            assert b.co2e_high_kg == pytest.approx(2 * a.co2e_high_kg, rel=1e-12)
            assert b.dist_raw_km == pytest.approx(2 * a.dist_raw_km, rel=1e-12)


class TestHelpers:
    def test_complete_days_inserts_zero_days(self):
        days = [day_of(0, 0, 10), day_of(3, 0, 12)]
        full = complete_days(days)
        assert len(full) == 4
        assert [d.segment_count for d in full] == [10, 0, 0, 12]

    def test_best_recorded_days_selects_top_decile(self):
        days = [day_of(1, w, (w + 1) * 10) for w in range(10)]
        ranges = compute_expected_ranges(days)
        best = best_recorded_days(days, ranges)
        assert best == {day_of(1, 8, 0).day, day_of(1, 9, 0).day}

    def test_daily_csv_round_trip(self, tmp_path):
        days = [day_of(0, 0, 10, co2e=1.25, fuel=0.5, dist=3.75)]
        write_daily_csv(days, tmp_path / "d.csv")
        assert read_daily_csv(tmp_path / "d.csv") == days

    def test_monthly_csv_round_trip_units(self, tmp_path):
        days = [day_of(0, 0, 100, co2e=1250.0, fuel=500.0, dist=3200.0)]
        ranges = compute_expected_ranges(days)
        months = monthly_band(fill_missing_days(days, ranges))
        write_monthly_csv(months, tmp_path / "m.csv")
        (back,) = read_monthly_csv(tmp_path / "m.csv")
        assert back.co2e_raw_kg == pytest.approx(1250.0, rel=1e-12)
        assert back.fuel_raw_l == pytest.approx(500.0, rel=1e-12)
        assert back.dist_raw_km == pytest.approx(3200.0, rel=1e-12)
        with open(tmp_path / "m.csv") as fh:
            header = fh.readline().strip()
        assert header == ("month,km_raw,km_low,km_high,fuel_raw_m3,fuel_low,fuel_high,"
                          "co2e_raw_t,co2e_low,co2e_high")
