"""Activity-based accessibility (ABA).

ABA for a person is the logsum over that person's daily activity pattern
choice set. Raw logsums are turned into minutes-equivalent values by dividing
the change against a reference by the marginal utility of one extra minute of
travel (the scaling factor).

The transport model that produces pattern utilities is pluggable: anything
implementing :class:`AccessibilityProvider` works. :class:`GravityProvider` is
a small synthetic stand-in with one tour pattern per destination.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Protocol, Sequence

import numpy as np
import pandas as pd
from scipy.special import logsumexp

from .domain import (
    CATEGORIES,
    Household,
    PersonCategory,
    ScenarioSpec,
)
from .errors import DataError, DegenerateScalingError, DomainError

SCALING_EPSILON = 1e-12
ABA_CONSTANT = 0.0


def aba_logsum(utilities: Sequence[float], constant: float = ABA_CONSTANT) -> float:
    """``ln(sum(exp(V_p))) + constant`` over the activity patterns, overflow safe."""
    v = np.asarray(utilities, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise DomainError("pattern utility set must be a non-empty sequence")
    if not np.all(np.isfinite(v)):
        raise DomainError("pattern utilities must be finite")
    top = v.max()
    return float(top + math.log(np.exp(v - top).sum()) + constant)


@dataclass(frozen=True)
class PatternUtilitySet:
    person_category: PersonCategory
    cell: int
    utilities: tuple[float, ...]

    def __post_init__(self):
        if len(self.utilities) == 0:
            raise DomainError("empty pattern choice set")
        if not all(math.isfinite(u) for u in self.utilities):
            raise DomainError("pattern utilities must be finite")

    def logsum(self, constant: float = ABA_CONSTANT) -> float:
        return aba_logsum(self.utilities, constant)


@dataclass(frozen=True)
class ScalingFactor:
    """Utility change per minute of added travel time."""

    person_category: PersonCategory
    value: float
    delta_t: float = 1.0

    def __post_init__(self):
        if not math.isfinite(self.value) or abs(self.value) < SCALING_EPSILON:
            raise DegenerateScalingError(
                f"scaling factor {self.value!r} for {self.person_category} is degenerate; "
                "accessibility does not respond to travel time"
            )


class AccessibilityProvider(Protocol):
    """Source of daily-activity-pattern utilities.

    ``time_shift`` minutes are added to every travel time entering every
    pattern utility. Implementations must be pure.
    """

    n_cells: int

    def pattern_utilities(self, category: PersonCategory, cell: int,
                          time_shift: float = 0.0) -> np.ndarray:
        ...


def provider_aba(provider: AccessibilityProvider, category: PersonCategory,
                 time_shift: float = 0.0, constant: float = ABA_CONSTANT) -> np.ndarray:
    """Raw ABA for every cell."""
    vectorized = getattr(provider, "pattern_matrix", None)
    if vectorized is not None:
        return logsumexp(vectorized(category, time_shift), axis=1) + constant
    return np.array([
        aba_logsum(provider.pattern_utilities(category, c, time_shift), constant)
        for c in range(provider.n_cells)
    ])


def scaling_factor(provider: AccessibilityProvider, person_category: PersonCategory,
                   reference_cell: int, delta_t: float = 1.0,
                   constant: float = ABA_CONSTANT) -> ScalingFactor:
    """Finite-difference marginal utility of travel time at ``reference_cell``."""
    if not delta_t > 0:
        raise DomainError("delta_t must be positive")
    a = aba_logsum(provider.pattern_utilities(person_category, reference_cell, 0.0), constant)
    a_dt = aba_logsum(provider.pattern_utilities(person_category, reference_cell, delta_t),
                      constant)
    return ScalingFactor(PersonCategory(person_category), (a_dt - a) / delta_t, delta_t)


def scaling_factors(provider: AccessibilityProvider, category: PersonCategory,
                    delta_t: float = 1.0) -> np.ndarray:
    """Scaling factor at every cell; raises on any degenerate cell."""
    if not delta_t > 0:
        raise DomainError("delta_t must be positive")
    s = (provider_aba(provider, category, delta_t) - provider_aba(provider, category)) / delta_t
    bad = ~np.isfinite(s) | (np.abs(s) < SCALING_EPSILON)
    if np.any(bad):
        raise DegenerateScalingError(
            f"degenerate {PersonCategory(category).value} scaling factor at cell "
            f"position {int(np.flatnonzero(bad)[0])}"
        )
    return s


def normalize_aba(A: float, A_original: float, s: ScalingFactor | float) -> float:
    """Minutes-equivalent ABA change; positive when accessibility improves.

    Divides by ``|s|``: the scaling factor is negative because extra travel
    time lowers utility, and an accessibility gain should read as positive.
    """
    value = s.value if isinstance(s, ScalingFactor) else float(s)
    if abs(value) < SCALING_EPSILON:
        raise DegenerateScalingError(f"scaling factor {value!r} is degenerate")
    return (A - A_original) / abs(value)


# ---------------------------------------------------------------------------
# surfaces


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class AccessibilitySurface:
    """ABA for every (person category, cell) under one scenario.

    ``raw`` is the scenario's ABA. ``reference`` and ``scale`` are the
    Base-Scenario ABA and scaling factor at each cell; they are the
    normalization anchors for a household whose current home is that cell.
    """

    scenario: str
    cell_ids: np.ndarray
    raw: Mapping[PersonCategory, np.ndarray]
    reference: Mapping[PersonCategory, np.ndarray]
    scale: Mapping[PersonCategory, np.ndarray]

    def __post_init__(self):
        object.__setattr__(self, "cell_ids", np.array(self.cell_ids, dtype=np.int64))
        n = len(self.cell_ids)
        for name in ("raw", "reference", "scale"):
            table = {PersonCategory(k): _frozen(v) for k, v in getattr(self, name).items()}
            for k, v in table.items():
                if v.shape != (n,):
                    raise DataError(f"{name}[{k.value}] has shape {v.shape}, expected ({n},)")
                if not np.all(np.isfinite(v)):
                    raise DataError(f"{name}[{k.value}] holds non-finite values")
            object.__setattr__(self, name, table)
        if set(self.raw) != set(self.reference) or set(self.raw) != set(self.scale):
            raise DataError("raw, reference and scale must cover the same categories")
        for k, s in self.scale.items():
            if np.any(np.abs(s) < SCALING_EPSILON):
                raise DegenerateScalingError(f"degenerate scaling factor for {k.value}")

    @property
    def categories(self) -> tuple[PersonCategory, ...]:
        return tuple(c for c in CATEGORIES if c in self.raw)

    def normalized(self, category: PersonCategory) -> np.ndarray:
        """Per-cell normalized ABA, measured against the same cell's reference."""
        c = PersonCategory(category)
        return (self.raw[c] - self.reference[c]) / np.abs(self.scale[c])

    def relative_to_home(self, category: PersonCategory, home_pos, cell_pos) -> np.ndarray:
        """Normalized ABA at ``cell_pos`` for a household living at ``home_pos``."""
        c = PersonCategory(category)
        if c not in self.raw:
            raise DataError(f"surface {self.scenario!r} has no {c.value} entries")
        home_pos = np.asarray(home_pos)
        return (self.raw[c][cell_pos] - self.reference[c][home_pos]) / np.abs(self.scale[c][home_pos])

    def position(self, cell_id: int) -> int:
        hits = np.flatnonzero(self.cell_ids == cell_id)
        if hits.size == 0:
            raise DataError(f"surface {self.scenario!r} does not cover cell {cell_id}")
        return int(hits[0])

    def to_frame(self) -> pd.DataFrame:
        parts = []
        for c in self.categories:
            parts.append(pd.DataFrame({
                "scenario": self.scenario,
                "category": c.value,
                "cell_id": self.cell_ids,
                "raw_aba": self.raw[c],
                "normalized_aba": self.normalized(c),
                "reference_aba": self.reference[c],
                "scaling_factor": self.scale[c],
            }))
        return pd.concat(parts, ignore_index=True)

    @classmethod
    def from_frame(cls, frame: pd.DataFrame, scenario: str | None = None) -> "AccessibilitySurface":
        needed = {"scenario", "category", "cell_id", "raw_aba", "reference_aba", "scaling_factor"}
        missing = needed - set(frame.columns)
        if missing:
            raise DataError(f"surface table lacks columns {sorted(missing)}")
        if scenario is None:
            names = frame["scenario"].unique()
            if len(names) != 1:
                raise DataError(f"surface table holds several scenarios {list(names)}")
            scenario = str(names[0])
        frame = frame[frame["scenario"] == scenario]
        cell_ids = np.sort(frame["cell_id"].unique())
        raw, ref, scale = {}, {}, {}
        for cat, grp in frame.groupby("category"):
            grp = grp.set_index("cell_id").reindex(cell_ids)
            if grp["raw_aba"].isna().any():
                raise DataError(f"surface table misses cells for category {cat}")
            c = PersonCategory(cat)
            raw[c] = grp["raw_aba"].to_numpy()
            ref[c] = grp["reference_aba"].to_numpy()
            scale[c] = grp["scaling_factor"].to_numpy()
        return cls(scenario, cell_ids, raw, ref, scale)


def average_member_aba(values: Mapping[PersonCategory, Sequence[float]]) -> dict[PersonCategory, float]:
    """Category-wise mean of member ABA values.

    Categories without members are left out entirely, so their utility term
    drops rather than contributing zero.
    """
    out = {}
    for cat, vals in values.items():
        vals = np.asarray(vals, dtype=float)
        if vals.size:
            out[PersonCategory(cat)] = float(vals.mean())
    return out


def household_average_aba(surface: AccessibilitySurface, household: Household,
                          cell: int) -> dict[PersonCategory, float]:
    """Household-average normalized ABA per present category at ``cell``.

    Members of one category share a home cell, so under a cell-level surface
    they share one ABA value.
    """
    home = surface.position(household.home_cell)
    pos = surface.position(cell)
    members = {}
    for cat in CATEGORIES:
        n = household.count(cat)
        if n == 0:
            continue
        if cat not in surface.raw:
            raise DataError(f"surface lacks {cat.value} ABA for household {household.household_id}")
        members[cat] = np.repeat(float(surface.relative_to_home(cat, home, pos)), n)
    return average_member_aba(members)


# ---------------------------------------------------------------------------
# synthetic gravity provider


COMMUTE = "commute"
OTHER = "other"


@dataclass(frozen=True)
class TourType:
    purpose: str          # attraction key: work, education, other
    vot_class: str        # COMMUTE or OTHER
    asc: float


@dataclass(frozen=True)
class ProviderConfig:
    """Parameters of the synthetic gravity provider.

    Travel time is network distance over ``speed_kmh`` plus
    ``terminal_minutes`` per tour. ``attraction`` maps a tour purpose to the
    cell column whose count attracts that tour.
    """

    speed_kmh: float = 40.0
    terminal_minutes: float = 5.0
    beta_time: float = 0.05
    home_asc: float = 0.0
    attraction: Mapping[str, str] = field(default_factory=lambda: {
        "work": "employees_tertiary",
        "education": "employees_tertiary",
        "other": "employees_tertiary",
    })
    tours: Mapping[PersonCategory, tuple[TourType, ...]] = field(default_factory=lambda: {
        PersonCategory.WORKER: (TourType("work", COMMUTE, 2.0), TourType("other", OTHER, -1.0)),
        PersonCategory.STUDENT: (TourType("education", COMMUTE, 2.0), TourType("other", OTHER, -1.5)),
        PersonCategory.UNEMPLOYED: (TourType("other", OTHER, 0.5),),
    })
    # hedonic tour logsums: decay per minute, by purpose
    hedonic_theta: Mapping[str, float] = field(default_factory=lambda: {
        "work": 0.08,
        "education": 0.2,
        "other": 0.12,
    })
    hedonic_sector: Mapping[str, str] = field(default_factory=lambda: {
        "work": "employees_total",
        "education": "employees_tertiary",
        "other": "employees_tertiary",
    })


def travel_time_matrix(distances_m: np.ndarray, speed_kmh: float,
                       road_capacity_factor: float = 1.0) -> np.ndarray:
    """Minutes between cells; higher road capacity divides every time."""
    if speed_kmh <= 0 or road_capacity_factor <= 0:
        raise DomainError("speed and road capacity factor must be positive")
    return np.asarray(distances_m, dtype=float) / 1000.0 / speed_kmh * 60.0 / road_capacity_factor


def sector_employees(cells: pd.DataFrame, sector: str) -> np.ndarray:
    if sector == "employees_total":
        return (cells["employees_primary_secondary"].to_numpy(dtype=float)
                + cells["employees_tertiary"].to_numpy(dtype=float))
    return cells[sector].to_numpy(dtype=float)


class GravityProvider:
    """Gravity-style pattern utilities over a synthetic region.

    A person's pattern set is staying home plus, for every tour type of the
    category and every destination with positive attraction, a one-tour
    pattern with utility

        asc - beta_time * vot_multiplier * (travel_time + time_shift) + ln(attraction)
    """

    def __init__(self, cells: pd.DataFrame, distances_m: np.ndarray,
                 scenario: ScenarioSpec | None = None, config: ProviderConfig | None = None):
        self.config = config or ProviderConfig()
        self.scenario = scenario or ScenarioSpec()
        dist = np.asarray(distances_m, dtype=float)
        if dist.shape != (len(cells), len(cells)):
            raise DataError("distance matrix does not match the cell table")
        self.n_cells = len(cells)
        self.travel_time = travel_time_matrix(dist, self.config.speed_kmh,
                                              self.scenario.road_capacity_factor)
        self._log_attraction = {}
        for purpose, column in self.config.attraction.items():
            attr = sector_employees(cells, column)
            with np.errstate(divide="ignore"):
                self._log_attraction[purpose] = np.where(attr > 0, np.log(np.maximum(attr, 1e-300)),
                                                         -np.inf)

    def _multiplier(self, vot_class: str) -> float:
        if vot_class == COMMUTE:
            return self.scenario.vot_commute_multiplier
        return self.scenario.vot_other_multiplier

    def pattern_matrix(self, category: PersonCategory, time_shift: float = 0.0) -> np.ndarray:
        """Rows: home cells. Columns: home-only pattern, then tours by destination.

        Destinations without attraction get ``-inf`` columns (they vanish in
        the logsum).
        """
        cfg = self.config
        cols = [np.full((self.n_cells, 1), cfg.home_asc)]
        for tour in cfg.tours[PersonCategory(category)]:
            time = self.travel_time + cfg.terminal_minutes + time_shift
            v = (tour.asc - cfg.beta_time * self._multiplier(tour.vot_class) * time
                 + self._log_attraction[tour.purpose][None, :])
            cols.append(v)
        return np.hstack(cols)

    def pattern_utilities(self, category: PersonCategory, cell: int,
                          time_shift: float = 0.0) -> np.ndarray:
        row = self.pattern_matrix(category, time_shift)[cell]
        return row[np.isfinite(row)]


def synthetic_provider(cells: pd.DataFrame, distances_m: np.ndarray,
                       scenario: ScenarioSpec | None = None,
                       config: ProviderConfig | None = None,
                       reference_cells: pd.DataFrame | None = None,
                       delta_t: float = 1.0) -> AccessibilitySurface:
    """Build the scenario's accessibility surface with the gravity provider.

    The normalization anchors come from the Base Scenario transport settings
    on ``reference_cells`` (default: ``cells``), so a policy that moves jobs
    is still measured against today's accessibility.
    """
    scenario = scenario or ScenarioSpec()
    config = config or ProviderConfig()
    base = ScenarioSpec(name="base")
    ref_provider = GravityProvider(reference_cells if reference_cells is not None else cells,
                                   distances_m, base, config)
    provider = GravityProvider(cells, distances_m, scenario, config)
    raw, ref, scale = {}, {}, {}
    for cat in CATEGORIES:
        ref[cat] = provider_aba(ref_provider, cat)
        scale[cat] = scaling_factors(ref_provider, cat, delta_t)
        raw[cat] = provider_aba(provider, cat)
    return AccessibilitySurface(scenario.name, cells["cell_id"].to_numpy(), raw, ref, scale)


def tertiary_logsum_for_hedonic(cells: pd.DataFrame, distances_m: np.ndarray, purpose: str,
                                config: ProviderConfig | None = None,
                                road_capacity_factor: float = 1.0) -> np.ndarray:
    """Tour-based logsum ``ln sum_d E_d exp(-theta * t(o, d))`` for every origin.

    ``E_d`` is the purpose's sector employee count at the destination.
    """
    config = config or ProviderConfig()
    try:
        sector = config.hedonic_sector[purpose]
        theta = float(config.hedonic_theta[purpose])
    except KeyError:
        raise DomainError(f"unknown tour purpose {purpose!r}") from None
    if not theta > 0:
        raise DomainError(f"decay for {purpose} tours must be positive")
    emp = sector_employees(cells, sector)
    if np.any(emp < 0):
        raise DataError("negative employee counts")
    tt = travel_time_matrix(distances_m, config.speed_kmh, road_capacity_factor)
    with np.errstate(divide="ignore"):
        log_emp = np.log(emp)
    # inf travel time (disconnected) contributes nothing
    terms = log_emp[None, :] - theta * tt
    out = logsumexp(terms, axis=1)
    if np.any(~np.isfinite(out)):
        bad = int(np.flatnonzero(~np.isfinite(out))[0])
        raise DataError(f"cell position {bad} reaches no {purpose} employment; logsum is -inf")
    return out
