import numpy as np
import pytest

from qrse import QrseParams

# Reference parameter point used across the suite. Scales in thousands of
# dollars, locations likewise; see the package docs for interpretation.
REF = QrseParams(T=2.1, S=4.9, mu=8.66, alpha=17.8)

CSV_HEADER = (
    "district_id,year,total_local_education_expenditures,"
    "total_local_taxes_and_charges,enrollment,population"
)


@pytest.fixture
def district_csv(tmp_path):
    """A small district file exercising every cleaning branch.

    Rows: four clean in-range records, one with a missing field, one with a
    negative count, one with zero enrollment, one extreme high, one extreme
    low, one outside the year window, plus a blank line.
    """
    lines = [
        CSV_HEADER,
        "d-001,2005,24.0,3.0,2,6",       # x = 12 - 0.5 = 11.5
        "d-002,2005,30.0,6.0,2,4",       # x = 15 - 1.5 = 13.5
        "d-003,2010,18.0,2.0,2,4",       # x = 9 - 0.5 = 8.5
        "d-004,2016,40.0,8.0,2,2",       # x = 20 - 4 = 16
        "d-005,2010,,3.0,2,6",           # missing expenditures
        "d-006,2010,24.0,3.0,-2,6",      # negative enrollment
        "d-007,2010,24.0,3.0,0,6",       # zero enrollment
        "d-008,2010,500.0,1.0,2,4",      # x = 249.75, above 120
        "d-009,2010,2.0,400.0,2,4",      # x = -99, below -50
        "d-010,1999,24.0,3.0,2,6",       # outside 2000-2016
        "",
    ]
    path = tmp_path / "districts.csv"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def iid_normal_chains(n_chains: int, n_draws: int, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.standard_normal((n_chains, n_draws))
