"""Core data model: mesh cells, households, market segments, scenarios.

Cell and household tables are plain :class:`pandas.DataFrame` objects with
the fixed column layouts :data:`CELL_COLUMNS` and :data:`HOUSEHOLD_COLUMNS`.
The record types (:class:`MeshCell`, :class:`Household`) describe one row and
carry the validation rules.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields, replace
from enum import Enum
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

from .errors import ConfigError, DataError, DomainError


class City(str, Enum):
    TAKASAKI = "Takasaki"
    MAEBASHI = "Maebashi"
    OTA = "Ota"
    ISESAKI = "Isesaki"
    KIRYU = "Kiryu"
    OTHER = "Other"


# Cities carrying a dummy variable in the land-price and location models.
# ``Other`` is the omitted baseline.
DUMMY_CITIES = (City.TAKASAKI, City.MAEBASHI, City.OTA, City.ISESAKI, City.KIRYU)


class PersonCategory(str, Enum):
    WORKER = "worker"
    STUDENT = "student"
    UNEMPLOYED = "unemployed"


CATEGORIES = tuple(PersonCategory)

LAND_USE_SHARES = (
    "share_building",
    "share_agricultural",
    "share_freshwater",
    "share_forest",
    "share_industrial",
)

CELL_COLUMNS = (
    "cell_id",
    "x",
    "y",
    "land_price",
    "housing_stock",
    *LAND_USE_SHARES,
    "city",
    "employees_primary_secondary",
    "employees_tertiary",
    "in_daa",
    "in_ufaa",
    "logsum_work",
    "logsum_education",
    "logsum_other",
)

HOUSEHOLD_COLUMNS = (
    "household_id",
    "home_cell",
    "age_of_head",
    "n_workers",
    "n_students",
    "n_unemployed",
    "n_members",
    "segment",
)

# household column holding the member count of each person category
CATEGORY_COUNT_COLUMN = {
    PersonCategory.WORKER: "n_workers",
    PersonCategory.STUDENT: "n_students",
    PersonCategory.UNEMPLOYED: "n_unemployed",
}


@dataclass(frozen=True)
class MeshCell:
    """One 1 km square analysis zone.

    Employee counts are in thousands. Land price is in JPY per square meter.
    """

    cell_id: int
    x: float
    y: float
    land_price: float
    housing_stock: int
    share_building: float = 0.0
    share_agricultural: float = 0.0
    share_freshwater: float = 0.0
    share_forest: float = 0.0
    share_industrial: float = 0.0
    city: City = City.OTHER
    employees_primary_secondary: float = 0.0
    employees_tertiary: float = 0.0
    in_daa: bool = False
    in_ufaa: bool = False
    logsum_work: float = 0.0
    logsum_education: float = 0.0
    logsum_other: float = 0.0

    @property
    def centroid(self) -> tuple[float, float]:
        return (self.x, self.y)

    def problems(self) -> list[str]:
        out = []
        if self.housing_stock < 0:
            out.append("housing_stock < 0")
        if self.housing_stock > 0 and not self.land_price > 0:
            out.append("land_price must be > 0 for a residence candidate")
        shares = [getattr(self, s) for s in LAND_USE_SHARES]
        for name, v in zip(LAND_USE_SHARES, shares):
            if not 0.0 <= v <= 1.0:
                out.append(f"{name}={v} outside [0, 1]")
        if sum(shares) > 1.0 + 1e-9:
            out.append(f"land-use shares sum to {sum(shares):.6f} > 1")
        for name in ("logsum_work", "logsum_education", "logsum_other"):
            if not math.isfinite(getattr(self, name)):
                out.append(f"{name} is not finite")
        if self.employees_primary_secondary < 0 or self.employees_tertiary < 0:
            out.append("negative employee count")
        return out


@dataclass(frozen=True)
class Household:
    household_id: int
    home_cell: int
    age_of_head: float
    n_workers: int
    n_students: int
    n_unemployed: int
    n_members: int
    segment: int

    def count(self, category: PersonCategory) -> int:
        return int(getattr(self, CATEGORY_COUNT_COLUMN[PersonCategory(category)]))

    def problems(self) -> list[str]:
        out = []
        counts = (self.n_workers, self.n_students, self.n_unemployed)
        if min(counts) < 0:
            out.append("negative member count")
        if self.n_members < 1:
            out.append("n_members < 1")
        if sum(counts) > self.n_members:
            out.append("workers + students + unemployed exceeds n_members")
        try:
            expected = assign_segment(self.age_of_head, self.n_members)
        except DomainError as exc:
            out.append(str(exc))
        else:
            if expected != self.segment:
                out.append(f"segment {self.segment} but rule gives {expected}")
        return out


SEGMENTS = (1, 2, 3, 4, 5)


def assign_segment(age_of_head: float, n_members: int) -> int:
    """Market segment from the household head's age and the member count.

    Intervals follow the published segment table literally:

    ====  ============  =========
    seg   age           members
    ====  ============  =========
    1     (6, 50]       3 or more
    2     (6, 50]       1 or 2
    3     (50, 100]     3 or more
    4     (50, 65)      1 or 2
    5     [65, 100]     1 or 2
    ====  ============  =========
    """
    if not (6 < age_of_head <= 100):
        raise DomainError(f"age of household head {age_of_head} outside (6, 100]")
    if n_members < 1:
        raise DomainError(f"household must have at least one member, got {n_members}")
    large = n_members >= 3
    if age_of_head <= 50:
        return 1 if large else 2
    if large:
        return 3
    return 4 if age_of_head < 65 else 5


@dataclass(frozen=True)
class MovingRateTable:
    """Five-year did-not-move ratios by age band of the household head.

    ``bands`` holds ``(lower, upper, ratio)`` triples, each band covering
    ``lower <= age < upper``. Bands must be contiguous.
    """

    bands: tuple[tuple[float, float, float], ...]

    def __post_init__(self):
        bands = tuple((float(lo), float(hi), float(r)) for lo, hi, r in self.bands)
        if not bands:
            raise DataError("moving-rate table is empty")
        for lo, hi, r in bands:
            if not lo < hi:
                raise DataError(f"band [{lo}, {hi}) is empty")
            if not 0.0 <= r <= 1.0:
                raise DataError(f"did-not-move ratio {r} outside [0, 1]")
        for (_, hi, _), (lo, _, _) in zip(bands, bands[1:]):
            if hi != lo:
                raise DataError(f"bands leave a gap or overlap at {hi} / {lo}")
        object.__setattr__(self, "bands", bands)

    def ratio(self, age: float) -> float:
        for lo, hi, r in self.bands:
            if lo <= age < hi:
                return r
        raise DomainError(f"age {age} not covered by the moving-rate table")

    def ratios(self, ages) -> np.ndarray:
        ages = np.asarray(ages, dtype=float)
        lowers = np.array([b[0] for b in self.bands])
        uppers = np.array([b[1] for b in self.bands])
        idx = np.searchsorted(uppers, ages, side="right")
        bad = (idx >= len(self.bands)) | (ages < lowers[0])
        if np.any(bad):
            raise DomainError(f"age {ages[bad][0]} not covered by the moving-rate table")
        return np.array([b[2] for b in self.bands])[idx]

    @property
    def lowest_age(self) -> float:
        return self.bands[0][0]

    @property
    def highest_age(self) -> float:
        return self.bands[-1][1]


# Only the two ends are published: moving probability 100% for heads aged
# 15-29 and 16.1% for heads over 85. The bands in between are placeholders
# shaped like a typical census mobility profile.
DEFAULT_MOVING_RATES = MovingRateTable(
    (
        (0, 30, 0.0),
        (30, 40, 0.70),
        (40, 50, 0.86),
        (50, 60, 0.90),
        (60, 70, 0.92),
        (70, 80, 0.94),
        (80, 85, 0.955),
        (85, math.inf, 0.839 ** 0.2),
    )
)


@dataclass(frozen=True)
class ScenarioSpec:
    """Scenario settings. Defaults are the Base Scenario for 2040."""

    name: str = "base"
    population_ratio: float = 0.8245
    vot_commute_multiplier: float = 1.0
    vot_other_multiplier: float = 1.0
    road_capacity_factor: float = 1.0
    policy1_subsidy_rate: float = 0.0
    policy2_ufaa_employee_boost: float = 0.0
    n_monte_carlo_runs: int = 10
    seed: int = 0
    resample_movers_per_run: bool = True

    def __post_init__(self):
        if not self.name:
            raise ConfigError("scenario name must be non-empty")
        if not 0 < self.population_ratio <= 1:
            raise ConfigError(f"population_ratio {self.population_ratio} outside (0, 1]")
        for attr in ("vot_commute_multiplier", "vot_other_multiplier"):
            v = getattr(self, attr)
            if not 0 < v <= 1:
                raise ConfigError(f"{attr}={v} outside (0, 1]")
        if self.road_capacity_factor < 1:
            raise ConfigError("road_capacity_factor must be >= 1")
        if not 0 <= self.policy1_subsidy_rate < 1:
            raise ConfigError("policy1_subsidy_rate outside [0, 1)")
        if self.policy2_ufaa_employee_boost < 0:
            raise ConfigError("policy2_ufaa_employee_boost must be >= 0")
        if self.n_monte_carlo_runs < 1:
            raise ConfigError("n_monte_carlo_runs must be >= 1")

    @property
    def is_transport_base(self) -> bool:
        return (
            self.vot_commute_multiplier == 1.0
            and self.vot_other_multiplier == 1.0
            and self.road_capacity_factor == 1.0
        )

    def with_overrides(self, **kwargs) -> "ScenarioSpec":
        return replace(self, **{k: v for k, v in kwargs.items() if v is not None})

    @classmethod
    def from_mapping(cls, data: Mapping) -> "ScenarioSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown scenario keys: {sorted(unknown)}")
        return cls(**data)

    def to_mapping(self) -> dict:
        return asdict(self)


def preset_scenarios(seed: int = 0, n_runs: int = 10) -> dict[str, ScenarioSpec]:
    """Built-in scenarios: Base, the two AV scenarios and their policy variants."""
    base = ScenarioSpec(name="base", seed=seed, n_monte_carlo_runs=n_runs)
    s1 = replace(base, name="s1", vot_commute_multiplier=0.75,
                 vot_other_multiplier=0.85, road_capacity_factor=1.2)
    s2 = replace(base, name="s2", vot_commute_multiplier=0.50,
                 vot_other_multiplier=0.70, road_capacity_factor=1.2)
    out = {"base": base, "s1": s1, "s2": s2}
    for av in (s1, s2):
        out[f"{av.name}_p1"] = replace(av, name=f"{av.name}_p1", policy1_subsidy_rate=0.2)
        out[f"{av.name}_p2"] = replace(av, name=f"{av.name}_p2", policy2_ufaa_employee_boost=0.3)
    return out


# ---------------------------------------------------------------------------
# table helpers


def cells_from_records(records: Iterable[MeshCell]) -> pd.DataFrame:
    rows = []
    for c in records:
        row = asdict(c)
        row["city"] = City(row["city"]).value
        rows.append(row)
    return pd.DataFrame(rows, columns=list(CELL_COLUMNS))


def cell_records(cells: pd.DataFrame) -> list[MeshCell]:
    out = []
    for row in cells[list(CELL_COLUMNS)].itertuples(index=False):
        d = row._asdict()
        d["city"] = City(d["city"])
        d["in_daa"] = bool(d["in_daa"])
        d["in_ufaa"] = bool(d["in_ufaa"])
        d["housing_stock"] = int(d["housing_stock"])
        d["cell_id"] = int(d["cell_id"])
        out.append(MeshCell(**d))
    return out


def households_from_records(records: Iterable[Household]) -> pd.DataFrame:
    return pd.DataFrame([asdict(h) for h in records], columns=list(HOUSEHOLD_COLUMNS))


def household_records(households: pd.DataFrame) -> list[Household]:
    return [Household(**row._asdict())
            for row in households[list(HOUSEHOLD_COLUMNS)].itertuples(index=False)]


def validate_cells(cells: pd.DataFrame) -> None:
    """Raise :class:`DataError` listing every invalid cell row."""
    missing = [c for c in CELL_COLUMNS if c not in cells.columns]
    if missing:
        raise DataError(f"cell table lacks columns {missing}")
    if cells["cell_id"].duplicated().any():
        raise DataError("duplicate cell_id values")
    bad = []
    for rec in cell_records(cells):
        for p in rec.problems():
            bad.append(f"cell {rec.cell_id}: {p}")
    if bad:
        raise DataError("; ".join(bad[:10]) + (" ..." if len(bad) > 10 else ""))


def validate_households(households: pd.DataFrame, cells: pd.DataFrame | None = None) -> None:
    missing = [c for c in HOUSEHOLD_COLUMNS if c not in households.columns]
    if missing:
        raise DataError(f"household table lacks columns {missing}")
    if households["household_id"].duplicated().any():
        raise DataError("duplicate household_id values")
    bad = []
    for rec in household_records(households):
        for p in rec.problems():
            bad.append(f"household {rec.household_id}: {p}")
    if cells is not None:
        unknown = ~households["home_cell"].isin(cells["cell_id"])
        for hid in households.loc[unknown, "household_id"].head(10):
            bad.append(f"household {hid}: home_cell not in cell table")
    if bad:
        raise DataError("; ".join(bad[:10]) + (" ..." if len(bad) > 10 else ""))


def cell_positions(cells: pd.DataFrame, cell_ids: Sequence[int] | np.ndarray) -> np.ndarray:
    """Row positions of ``cell_ids`` within ``cells``."""
    index = pd.Index(cells["cell_id"].to_numpy())
    pos = index.get_indexer(np.asarray(cell_ids))
    if np.any(pos < 0):
        missing = np.asarray(cell_ids)[pos < 0][:5]
        raise DataError(f"unknown cell ids {list(missing)}")
    return pos


def city_dummies(cells: pd.DataFrame) -> dict[str, np.ndarray]:
    city = cells["city"].astype(str).to_numpy()
    return {f"is_{c.value.lower()}": (city == c.value).astype(float) for c in DUMMY_CITIES}


# ---------------------------------------------------------------------------
# location-model coefficients

ALPHA_NAMES = ("alpha_worker", "alpha_student", "alpha_unemployed")
ALPHA_CATEGORY = dict(zip(ALPHA_NAMES, CATEGORIES))

# Location attributes in the residential model. Land price is in
# 10,000 JPY per square meter and employee counts in thousands.
BETA_NAMES = (
    "land_price",
    "share_building",
    "share_agricultural",
    "share_freshwater",
    "share_forest",
    "is_takasaki",
    "is_maebashi",
    "is_ota",
    "is_isesaki",
    "is_kiryu",
    "employees_primary_secondary",
    "employees_tertiary",
)
COEFFICIENT_NAMES = ALPHA_NAMES + BETA_NAMES
SIZE_COEFFICIENT = 1.0
LAND_PRICE_UNIT = 10_000.0


@dataclass(frozen=True)
class SegmentCoefficients:
    """Coefficients of one market segment.

    Terms missing from ``beta`` are zero. The size variable always enters
    with a unit coefficient.
    """

    segment: int
    alpha_worker: float = 0.0
    alpha_student: float = 0.0
    alpha_unemployed: float = 0.0
    beta: Mapping[str, float] = field(default_factory=dict)
    size_coefficient: float = SIZE_COEFFICIENT

    def __post_init__(self):
        if self.size_coefficient != SIZE_COEFFICIENT:
            raise ConfigError("the size-variable coefficient is fixed at 1.0")
        unknown = set(self.beta) - set(BETA_NAMES)
        if unknown:
            raise ConfigError(f"unknown location coefficients {sorted(unknown)}")
        beta = {name: float(self.beta.get(name, 0.0)) for name in BETA_NAMES}
        object.__setattr__(self, "beta", beta)

    def alpha(self, category: PersonCategory) -> float:
        return getattr(self, f"alpha_{PersonCategory(category).value}")

    def vector(self, names: Sequence[str] = COEFFICIENT_NAMES) -> np.ndarray:
        d = self.as_dict()
        return np.array([d[n] for n in names])

    def as_dict(self) -> dict[str, float]:
        out = {n: float(getattr(self, n)) for n in ALPHA_NAMES}
        out.update(self.beta)
        return out

    @classmethod
    def from_dict(cls, segment: int, values: Mapping[str, float]) -> "SegmentCoefficients":
        values = dict(values)
        size = float(values.pop("size", SIZE_COEFFICIENT))
        alphas = {n: float(values.pop(n, 0.0)) for n in ALPHA_NAMES}
        return cls(segment=segment, size_coefficient=size, beta=values, **alphas)
