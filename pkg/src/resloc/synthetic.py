"""Synthetic monocentric region standing in for survey and mesh statistics."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from typing import Mapping

import numpy as np
import pandas as pd

from .accessibility import ProviderConfig, tertiary_logsum_for_hedonic
from .domain import (
    CELL_COLUMNS,
    HOUSEHOLD_COLUMNS,
    City,
    assign_segment,
)
from .errors import ConfigError, DomainError
from .hedonic import linear_predictor
from .network import all_pairs_distances, grid_edges

# Land-price slopes used to price the synthetic cells (published land-price
# model, without its intercept; see RegionConfig.price_intercept).
PRICE_SLOPES = {
    "logsum_work": 0.15,
    "logsum_education": 0.043,
    "logsum_other": 0.13,
    "is_takasaki": 0.30,
    "is_maebashi": 0.21,
    "is_kiryu": -0.11,
    "share_agricultural": -0.48,
    "share_industrial": -0.58,
}

# outer cities by compass sector, counter-clockwise from east
SECTOR_CITIES = (City.MAEBASHI, City.OTHER, City.OTA, City.ISESAKI, City.OTHER, City.KIRYU)


@dataclass(frozen=True)
class RegionConfig:
    """Layout knobs for :func:`generate_synthetic_region`."""

    cell_size_m: float = 1000.0
    centroid_jitter_m: float = 150.0
    diagonal_links: bool = True
    ufaa_radius_m: float = 1600.0
    daa_radius_m: float = 2600.0
    core_city_radius_m: float = 3500.0
    tertiary_center: float = 8.0            # thousands of employees
    tertiary_decay_m: float = 2000.0
    tertiary_floor: float = 0.05
    primary_secondary_center: float = 1.5
    primary_secondary_decay_m: float = 6000.0
    price_intercept: float = 9.4
    price_noise: float = 0.15
    housing_slack: float = 1.25
    provider: ProviderConfig = field(default_factory=ProviderConfig)

    @classmethod
    def from_mapping(cls, data: Mapping) -> "RegionConfig":
        known = {f.name for f in fields(cls)} - {"provider"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown region keys: {sorted(unknown)}")
        return cls(**data)


def grid_shape(n_cells: int) -> tuple[int, int]:
    n_cols = math.ceil(math.sqrt(n_cells))
    return math.ceil(n_cells / n_cols), n_cols


def generate_synthetic_region(n_cells: int, n_households: int, seed: int,
                              config: RegionConfig | None = None):
    """Return ``(cells, households, edges)`` for a square grid region.

    Cells are laid out row-major on a square grid (the last row may be
    partial). Employment and building density fall off with distance from the
    grid center, where the UFAA and the wider DAA sit. Land prices come from
    the land-price model applied to the generated attributes, so they too
    decay away from the center. Households are placed with probability
    proportional to housing stock.
    """
    if n_cells < 4:
        raise DomainError(f"need at least 4 cells, got {n_cells}")
    if n_households < 1:
        raise DomainError(f"need at least 1 household, got {n_households}")
    cfg = config or RegionConfig()
    rng = np.random.default_rng(seed)

    n_rows, n_cols = grid_shape(n_cells)
    idx = np.arange(n_cells)
    row, col = np.divmod(idx, n_cols)
    size = cfg.cell_size_m
    x = (col + 0.5) * size + rng.uniform(-cfg.centroid_jitter_m, cfg.centroid_jitter_m, n_cells)
    y = (row + 0.5) * size + rng.uniform(-cfg.centroid_jitter_m, cfg.centroid_jitter_m, n_cells)
    cx, cy = n_cols * size / 2.0, n_rows * size / 2.0
    r = np.hypot(x - cx, y - cy)
    center = int(np.argmin(r))

    # the most central cell always belongs to both attraction areas
    in_ufaa = (r <= cfg.ufaa_radius_m) | (idx == center)
    in_daa = (r <= cfg.daa_radius_m) | in_ufaa

    angle = np.mod(np.arctan2(y - cy, x - cx), 2 * np.pi)
    sector = np.minimum((angle / (2 * np.pi) * len(SECTOR_CITIES)).astype(int),
                        len(SECTOR_CITIES) - 1)
    city = np.array([SECTOR_CITIES[s].value for s in sector], dtype=object)
    city[r <= cfg.core_city_radius_m] = City.TAKASAKI.value

    r_max = max(float(r.max()), 1.0)
    jitter = lambda: rng.uniform(0.8, 1.2, n_cells)  # noqa: E731
    building = (0.55 * np.exp(-r / 2500.0) + 0.03) * jitter()
    agricultural = 0.55 * (1.0 - np.exp(-r / 4000.0)) * jitter()
    forest = 0.45 * (r / r_max) ** 2 * jitter()
    freshwater = 0.03 * rng.uniform(0.0, 1.0, n_cells)
    industrial = 0.08 * rng.uniform(0.0, 1.0, n_cells)
    shares = np.column_stack([building, agricultural, freshwater, forest, industrial])
    total = shares.sum(axis=1, keepdims=True)
    shares = np.where(total > 0.98, shares * 0.98 / total, shares)

    tertiary = (cfg.tertiary_center * np.exp(-r / cfg.tertiary_decay_m)
                + cfg.tertiary_floor) * rng.lognormal(0.0, 0.2, n_cells)
    primary_secondary = (cfg.primary_secondary_center * np.exp(-r / cfg.primary_secondary_decay_m)
                         * rng.lognormal(0.0, 0.3, n_cells))

    weight = 0.1 + shares[:, 0]
    stock = np.maximum(1, np.round(weight / weight.sum() * cfg.housing_slack * n_households))
    stock = stock.astype(np.int64)
    shortfall = n_households - int(stock.sum())
    if shortfall > 0:
        stock[np.argmax(weight)] += shortfall

    cells = pd.DataFrame({
        "cell_id": idx.astype(np.int64),
        "x": x,
        "y": y,
        "land_price": np.nan,
        "housing_stock": stock,
        "share_building": shares[:, 0],
        "share_agricultural": shares[:, 1],
        "share_freshwater": shares[:, 2],
        "share_forest": shares[:, 3],
        "share_industrial": shares[:, 4],
        "city": city.astype(str),
        "employees_primary_secondary": primary_secondary,
        "employees_tertiary": tertiary,
        "in_daa": in_daa,
        "in_ufaa": in_ufaa,
        "logsum_work": 0.0,
        "logsum_education": 0.0,
        "logsum_other": 0.0,
    }, columns=list(CELL_COLUMNS))

    edges = grid_edges(cells, n_cols, diagonal=cfg.diagonal_links)
    dist = all_pairs_distances(cells, edges)
    for purpose in ("work", "education", "other"):
        cells[f"logsum_{purpose}"] = tertiary_logsum_for_hedonic(cells, dist, purpose, cfg.provider)
    coef = {"intercept": cfg.price_intercept, **PRICE_SLOPES}
    cells["land_price"] = np.exp(linear_predictor(coef, cells)
                                 + rng.normal(0.0, cfg.price_noise, n_cells))

    households = _households(n_households, stock, rng)
    return cells, households, edges


def _households(n: int, stock: np.ndarray, rng: np.random.Generator) -> pd.DataFrame:
    home = rng.choice(len(stock), size=n, p=stock / stock.sum())
    age = rng.integers(20, 96, size=n).astype(float)
    young = age <= 50
    # younger heads have larger households
    size_p_young = np.array([0.22, 0.25, 0.22, 0.2, 0.08, 0.03])
    size_p_old = np.array([0.3, 0.4, 0.15, 0.1, 0.04, 0.01])
    members = np.where(young,
                       rng.choice(6, size=n, p=size_p_young),
                       rng.choice(6, size=n, p=size_p_old)) + 1
    under_six = np.where(young & (members >= 3), rng.binomial(np.maximum(members - 2, 0), 0.35), 0)
    persons = members - under_six
    adults = np.minimum(persons, 2)
    students = persons - adults
    work_p = np.where(age < 65, 0.8, 0.25)
    workers = rng.binomial(adults, work_p)
    unemployed = adults - workers
    segment = np.array([assign_segment(a, m) for a, m in zip(age, members)], dtype=np.int64)
    return pd.DataFrame({
        "household_id": np.arange(n, dtype=np.int64),
        "home_cell": home.astype(np.int64),
        "age_of_head": age,
        "n_workers": workers.astype(np.int64),
        "n_students": students.astype(np.int64),
        "n_unemployed": unemployed.astype(np.int64),
        "n_members": members.astype(np.int64),
        "segment": segment,
    }, columns=list(HOUSEHOLD_COLUMNS))
