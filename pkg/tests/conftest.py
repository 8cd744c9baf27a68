import numpy as np
import pandas as pd
import pytest

from resloc.domain import CELL_COLUMNS
from resloc.synthetic import generate_synthetic_region

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def region():
    """A 25-cell synthetic region shared by the tests that only read it."""
    return generate_synthetic_region(25, 400, seed=3)


def make_cells(n, **overrides) -> pd.DataFrame:
    """Plain cell table: unit prices, one dwelling, a row of cells 1 km apart."""
    base = {
        "cell_id": np.arange(n, dtype=np.int64),
        "x": np.arange(n) * 1000.0,
        "y": np.zeros(n),
        "land_price": np.full(n, 10_000.0),
        "housing_stock": np.ones(n, dtype=np.int64),
        "share_building": np.zeros(n),
        "share_agricultural": np.zeros(n),
        "share_freshwater": np.zeros(n),
        "share_forest": np.zeros(n),
        "share_industrial": np.zeros(n),
        "city": np.array(["Other"] * n),
        "employees_primary_secondary": np.ones(n),
        "employees_tertiary": np.ones(n),
        "in_daa": np.zeros(n, dtype=bool),
        "in_ufaa": np.zeros(n, dtype=bool),
        "logsum_work": np.zeros(n),
        "logsum_education": np.zeros(n),
        "logsum_other": np.zeros(n),
    }
    base.update(overrides)
    return pd.DataFrame(base, columns=list(CELL_COLUMNS))


@pytest.fixture
def cells_factory():
    return make_cells
