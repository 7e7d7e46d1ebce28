import numpy as np
import pytest

from qrse import (
    AllExcluded,
    CleanedSample,
    DegenerateRange,
    DistrictRecord,
    HistogramSpec,
    ParseError,
    ZeroDenominator,
    build_histogram,
    clean,
    compute_returns,
    fiscal_summary,
    read_records,
)
from tests.conftest import CSV_HEADER


def record(**overrides) -> DistrictRecord:
    base = dict(
        district_id="d-1",
        year=2005,
        total_local_education_expenditures=24.0,
        total_local_taxes_and_charges=3.0,
        enrollment=2.0,
        population=6.0,
    )
    base.update(overrides)
    return DistrictRecord(**base)


class TestReadRecords:
    def test_reads_and_filters_years(self, district_csv):
        records, skipped = read_records(district_csv, (2000, 2016))
        assert len(records) == 9
        assert skipped == 1
        assert records[0].district_id == "d-001"
        assert records[0].year == 2005
        assert records[0].total_local_education_expenditures == 24.0

    def test_missing_field_becomes_nan(self, district_csv):
        records, _ = read_records(district_csv, (2000, 2016))
        by_id = {r.district_id: r for r in records}
        assert np.isnan(by_id["d-005"].total_local_education_expenditures)

    def test_year_window_single_year(self, district_csv):
        records, skipped = read_records(district_csv, (2010, 2010))
        assert {r.year for r in records} == {2010}
        assert skipped == 4

    def test_rejects_wrong_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b,c\n1,2,3\n", encoding="utf-8")
        with pytest.raises(ParseError):
            read_records(path, (2000, 2016))

    def test_rejects_non_numeric_with_line_number(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text(
            CSV_HEADER + "\nd-1,2005,abc,3.0,2,6\n", encoding="utf-8"
        )
        with pytest.raises(ParseError, match="line 2"):
            read_records(path, (2000, 2016))

    def test_rejects_bad_year(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text(
            CSV_HEADER + "\nd-1,20x5,24.0,3.0,2,6\n", encoding="utf-8"
        )
        with pytest.raises(ParseError):
            read_records(path, (2000, 2016))


class TestComputeReturns:
    def test_hand_value(self):
        # kappa = 24/2 = 12, tau = 3/6 = 0.5, x = 11.5
        assert compute_returns(record()) == 11.5

    def test_zero_enrollment(self):
        with pytest.raises(ZeroDenominator):
            compute_returns(record(enrollment=0.0))

    def test_zero_population(self):
        with pytest.raises(ZeroDenominator):
            compute_returns(record(population=0.0))


class TestClean:
    def test_exclusion_counts(self, district_csv):
        records, _ = read_records(district_csv, (2000, 2016))
        cleaned = clean(records)
        # 9 in-window records: 4 clean, 3 missing-ish, 2 extreme.
        assert cleaned.values.size == 4
        assert cleaned.excluded_missing == 3
        assert cleaned.excluded_extreme == 2
        assert sorted(cleaned.values.tolist()) == [8.5, 11.5, 13.5, 16.0]

    def test_summary_statistics(self, district_csv):
        records, _ = read_records(district_csv, (2000, 2016))
        cleaned = clean(records)
        xs = np.array([11.5, 13.5, 8.5, 16.0])
        assert cleaned.x_mean == pytest.approx(xs.mean())
        assert cleaned.x_sd == pytest.approx(xs.std(ddof=1))
        assert cleaned.x_min == 8.5
        assert cleaned.x_max == 16.0

    def test_bounds_inclusive(self):
        records = [
            record(total_local_education_expenditures=240.0, enrollment=2.0,
                   total_local_taxes_and_charges=0.0),  # x = 120 exactly
            record(total_local_education_expenditures=0.0,
                   total_local_taxes_and_charges=300.0, population=6.0),  # x = -50
        ]
        cleaned = clean(records)
        assert sorted(cleaned.values.tolist()) == [-50.0, 120.0]
        assert cleaned.excluded_extreme == 0

    def test_all_excluded(self):
        with pytest.raises(AllExcluded):
            clean([record(enrollment=0.0)])
        with pytest.raises(AllExcluded):
            clean([])

    def test_single_record_sd_zero(self):
        cleaned = clean([record()])
        assert cleaned.x_sd == 0.0

    def test_json_round_trip(self, district_csv):
        records, _ = read_records(district_csv, (2000, 2016))
        cleaned = clean(records)
        restored = CleanedSample.from_json(cleaned.to_json())
        np.testing.assert_array_equal(restored.values, cleaned.values)
        assert restored.excluded_missing == cleaned.excluded_missing
        assert restored.x_sd == cleaned.x_sd


class TestFiscalSummary:
    def test_keys_and_consistency(self, district_csv):
        records, _ = read_records(district_csv, (2000, 2016))
        summary = fiscal_summary(records)
        assert set(summary) == {"x", "kappa", "tau"}
        cleaned = clean(records)
        mean, sd, low, high = summary["x"]
        assert mean == pytest.approx(cleaned.x_mean)
        assert sd == pytest.approx(cleaned.x_sd)
        assert (low, high) == (cleaned.x_min, cleaned.x_max)
        # kappa for the retained rows: 12, 15, 9, 20
        assert summary["kappa"][0] == pytest.approx(14.0)


class TestBuildHistogram:
    def test_fixed_bin_count(self):
        values = np.array([1.0, 2.0, 2.5, 3.0, 10.0])
        hist = build_histogram(values, 4)
        assert hist.frequencies.size == 4
        assert hist.n == 5
        assert float(hist.frequencies.sum()) == pytest.approx(1.0, abs=1e-15)
        assert hist.edges[0] == 1.0
        assert hist.edges[-1] == 10.0

    def test_fd_rule_matches_numpy(self):
        rng = np.random.default_rng(3)
        values = rng.normal(10.0, 2.0, size=500)
        hist = build_histogram(values, "fd")
        counts, edges = np.histogram(values, bins="fd")
        np.testing.assert_array_equal(hist.edges, edges)
        np.testing.assert_array_equal(hist.counts, counts.astype(float))

    def test_degenerate_range(self):
        with pytest.raises(DegenerateRange):
            build_histogram(np.full(10, 3.3))

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            build_histogram(np.array([]))

    def test_json_round_trip(self):
        rng = np.random.default_rng(4)
        hist = build_histogram(rng.normal(size=200), 12)
        restored = HistogramSpec.from_json(hist.to_json())
        np.testing.assert_array_equal(restored.edges, hist.edges)
        np.testing.assert_array_equal(restored.frequencies, hist.frequencies)
        assert restored.n == hist.n

    def test_validation(self):
        with pytest.raises(ValueError):
            HistogramSpec(
                edges=np.array([0.0, 1.0, 2.0]),
                frequencies=np.array([0.5, 0.6]),  # sums to 1.1
                counts=np.array([5.0, 6.0]),
            )
        with pytest.raises(ValueError):
            HistogramSpec(
                edges=np.array([0.0, 1.0]),
                frequencies=np.array([0.5, 0.5]),  # wrong length
                counts=np.array([1.0, 1.0]),
            )
