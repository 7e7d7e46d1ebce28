"""District fiscal records to cleaned educational-returns samples.

The input is a CSV of district-year rows with local education expenditures,
local taxes and charges, enrollment, and population. The returns variable is

    x = expenditures / enrollment - taxes / population   (kappa - tau)

in thousands of dollars per pupil and per capita respectively. Cleaning drops
rows with missing or zero-denominator fields (counted as excluded_missing)
and rows whose x falls outside configurable extreme-value bounds (counted as
excluded_extreme), then summarizes the survivors.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import AllExcluded, DegenerateRange, ParseError, ZeroDenominator

CSV_HEADER = [
    "district_id",
    "year",
    "total_local_education_expenditures",
    "total_local_taxes_and_charges",
    "enrollment",
    "population",
]

DEFAULT_YEARS = (2000, 2016)
# Bounds bracket every plausible district-level value; anything outside is a
# data-entry artifact, not a real return.
DEFAULT_EXTREME_LOW = -50.0
DEFAULT_EXTREME_HIGH = 120.0


@dataclass(frozen=True)
class DistrictRecord:
    """One district-year row. Monetary fields are in thousands of dollars.

    Missing numeric fields are carried as NaN and resolved by ``clean``.
    """

    district_id: str
    year: int
    total_local_education_expenditures: float
    total_local_taxes_and_charges: float
    enrollment: float
    population: float


@dataclass(frozen=True, eq=False)
class CleanedSample:
    """Retained returns values plus exclusion counts and summary statistics."""

    values: np.ndarray
    excluded_missing: int
    excluded_extreme: int
    kappa_mean: float
    tau_mean: float
    x_mean: float
    x_sd: float
    x_min: float
    x_max: float

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(values)):
            raise ValueError("cleaned values must all be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def to_json(self) -> dict:
        return {
            "values": self.values.tolist(),
            "excluded_missing": self.excluded_missing,
            "excluded_extreme": self.excluded_extreme,
            "kappa_mean": self.kappa_mean,
            "tau_mean": self.tau_mean,
            "x_mean": self.x_mean,
            "x_sd": self.x_sd,
            "x_min": self.x_min,
            "x_max": self.x_max,
        }

    @classmethod
    def from_json(cls, payload: dict) -> "CleanedSample":
        return cls(
            values=np.asarray(payload["values"], dtype=float),
            excluded_missing=int(payload["excluded_missing"]),
            excluded_extreme=int(payload["excluded_extreme"]),
            kappa_mean=float(payload["kappa_mean"]),
            tau_mean=float(payload["tau_mean"]),
            x_mean=float(payload["x_mean"]),
            x_sd=float(payload["x_sd"]),
            x_min=float(payload["x_min"]),
            x_max=float(payload["x_max"]),
        )


@dataclass(frozen=True, eq=False)
class HistogramSpec:
    """Observed histogram: edges, relative frequencies, and raw counts."""

    edges: np.ndarray
    frequencies: np.ndarray
    counts: np.ndarray

    def __post_init__(self) -> None:
        edges = np.asarray(self.edges, dtype=float)
        frequencies = np.asarray(self.frequencies, dtype=float)
        counts = np.asarray(self.counts, dtype=float)
        if len(frequencies) != len(edges) - 1 or len(counts) != len(frequencies):
            raise ValueError("histogram arrays have inconsistent lengths")
        if abs(float(np.sum(frequencies)) - 1.0) > 1e-12:
            raise ValueError("frequencies must sum to 1")
        for name, arr in (("edges", edges), ("frequencies", frequencies), ("counts", counts)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return int(round(float(np.sum(self.counts))))

    def to_json(self) -> dict:
        return {
            "edges": self.edges.tolist(),
            "frequencies": self.frequencies.tolist(),
            "counts": self.counts.tolist(),
        }

    @classmethod
    def from_json(cls, payload: dict) -> "HistogramSpec":
        return cls(
            edges=np.asarray(payload["edges"], dtype=float),
            frequencies=np.asarray(payload["frequencies"], dtype=float),
            counts=np.asarray(payload["counts"], dtype=float),
        )


def _parse_number(field: str, line_no: int, column: str) -> float:
    if field.strip() == "":
        return math.nan  # empty field = missing
    try:
        return float(field)
    except ValueError:
        raise ParseError(f"line {line_no}: column {column!r} is not numeric: {field!r}") from None


def read_records(path, years: tuple[int, int] = DEFAULT_YEARS) -> tuple[list[DistrictRecord], int]:
    """Parse a district CSV.

    Rows whose year falls outside ``years`` are skipped and counted; the
    count is returned alongside the records. Structural problems (bad
    header, wrong field count, non-numeric values) raise ParseError with the
    offending line number.
    """
    year_low, year_high = years
    records: list[DistrictRecord] = []
    skipped_years = 0
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("line 1: file is empty, expected a header row") from None
        if [h.strip() for h in header] != CSV_HEADER:
            raise ParseError(
                f"line 1: header must be {','.join(CSV_HEADER)!r}, got {','.join(header)!r}"
            )
        for line_no, row in enumerate(reader, start=2):
            if len(row) == 0:
                continue  # tolerate trailing blank lines
            if len(row) != len(CSV_HEADER):
                raise ParseError(
                    f"line {line_no}: expected {len(CSV_HEADER)} fields, got {len(row)}"
                )
            try:
                year = int(row[1])
            except ValueError:
                raise ParseError(f"line {line_no}: column 'year' is not an integer: {row[1]!r}") from None
            if not (year_low <= year <= year_high):
                skipped_years += 1
                continue
            records.append(
                DistrictRecord(
                    district_id=row[0],
                    year=year,
                    total_local_education_expenditures=_parse_number(row[2], line_no, CSV_HEADER[2]),
                    total_local_taxes_and_charges=_parse_number(row[3], line_no, CSV_HEADER[3]),
                    enrollment=_parse_number(row[4], line_no, CSV_HEADER[4]),
                    population=_parse_number(row[5], line_no, CSV_HEADER[5]),
                )
            )
    return records, skipped_years


def compute_returns(record: DistrictRecord) -> float:
    """Educational returns x = kappa - tau for one record.

    kappa is per-pupil expenditures, tau per-capita taxes and charges.

    Raises
    ------
    ZeroDenominator
        If enrollment or population is exactly zero. Cleaning routes such
        records to excluded_missing.
    """
    if record.enrollment == 0.0 or record.population == 0.0:
        raise ZeroDenominator(
            f"district {record.district_id!r} year {record.year}: "
            f"enrollment={record.enrollment!r} population={record.population!r}"
        )
    kappa = record.total_local_education_expenditures / record.enrollment
    tau = record.total_local_taxes_and_charges / record.population
    return kappa - tau


def _split(records, extreme_low: float, extreme_high: float):
    """Partition records into retained (x, kappa, tau) arrays and exclusion counts."""
    xs: list[float] = []
    kappas: list[float] = []
    taus: list[float] = []
    n_missing = 0
    n_extreme = 0
    for record in records:
        fields = (
            record.total_local_education_expenditures,
            record.total_local_taxes_and_charges,
            record.enrollment,
            record.population,
        )
        # Negative money or counts are recording errors, grouped with missing.
        if any(not math.isfinite(f) or f < 0.0 for f in fields):
            n_missing += 1
            continue
        try:
            x = compute_returns(record)
        except ZeroDenominator:
            n_missing += 1
            continue
        if not (extreme_low <= x <= extreme_high):
            n_extreme += 1
            continue
        xs.append(x)
        kappas.append(record.total_local_education_expenditures / record.enrollment)
        taus.append(record.total_local_taxes_and_charges / record.population)
    return np.asarray(xs), np.asarray(kappas), np.asarray(taus), n_missing, n_extreme


def clean(
    records,
    extreme_low: float = DEFAULT_EXTREME_LOW,
    extreme_high: float = DEFAULT_EXTREME_HIGH,
) -> CleanedSample:
    """Apply the exclusion rules and summarize the retained sample.

    Raises
    ------
    AllExcluded
        If no record survives.
    """
    if len(records) == 0:
        raise AllExcluded("no input records")
    xs, kappas, taus, n_missing, n_extreme = _split(records, extreme_low, extreme_high)
    if xs.size == 0:
        raise AllExcluded(
            f"all {len(records)} records excluded "
            f"({n_missing} missing, {n_extreme} extreme)"
        )
    return CleanedSample(
        values=xs,
        excluded_missing=n_missing,
        excluded_extreme=n_extreme,
        kappa_mean=float(np.mean(kappas)),
        tau_mean=float(np.mean(taus)),
        x_mean=float(np.mean(xs)),
        x_sd=float(np.std(xs, ddof=1)) if xs.size > 1 else 0.0,
        x_min=float(np.min(xs)),
        x_max=float(np.max(xs)),
    )


def fiscal_summary(
    records,
    extreme_low: float = DEFAULT_EXTREME_LOW,
    extreme_high: float = DEFAULT_EXTREME_HIGH,
) -> dict[str, tuple[float, float, float, float]]:
    """Mean, sd, min, max of x, kappa, tau over the retained records."""
    xs, kappas, taus, _, _ = _split(records, extreme_low, extreme_high)
    if xs.size == 0:
        raise AllExcluded("all records excluded")
    out = {}
    for name, arr in (("x", xs), ("kappa", kappas), ("tau", taus)):
        sd = float(np.std(arr, ddof=1)) if arr.size > 1 else 0.0
        out[name] = (float(np.mean(arr)), sd, float(np.min(arr)), float(np.max(arr)))
    return out


def build_histogram(values, bins: int | str = "fd") -> HistogramSpec:
    """Bin a sample into a relative-frequency histogram.

    ``bins`` is either a fixed bin count or "fd" for the Freedman-Diaconis
    rule. Edges span exactly [min(values), max(values)].

    Raises
    ------
    DegenerateRange
        If all values are identical.
    """
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("cannot bin an empty sample")
    if float(np.min(values)) == float(np.max(values)):
        raise DegenerateRange(f"all {values.size} values equal {values[0]!r}")
    counts, edges = np.histogram(values, bins=bins)
    return HistogramSpec(
        edges=edges,
        frequencies=counts / counts.sum(),
        counts=counts.astype(float),
    )
