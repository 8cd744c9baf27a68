"""Long-term relocation simulation, scenarios and policy mandates."""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Callable, Mapping

import numpy as np
import pandas as pd

from .accessibility import AccessibilitySurface, ProviderConfig, tertiary_logsum_for_hedonic
from .choice import (
    DEFAULT_CORRECTION,
    N_DRAWS,
    LocationTable,
    sampling_corrections,
    sampling_probabilities,
)
from .domain import (
    ALPHA_NAMES,
    BETA_NAMES,
    CATEGORIES,
    CATEGORY_COUNT_COLUMN,
    MovingRateTable,
    ScenarioSpec,
    SegmentCoefficients,
    cell_positions,
)
from .errors import ContractError, DataError, DomainError, InfeasiblePolicyError
from .hedonic import linear_predictor
from .metrics import DistanceOracle, indicators

log = logging.getLogger(__name__)

CONSERVATION_RTOL = 1e-9
MOVE_STREAM = 1
CHOICE_STREAM = 2


def scale_population(households: pd.DataFrame, ratio: float,
                     rng: np.random.Generator) -> pd.DataFrame:
    """Uniform random subset of ``round(ratio * n)`` households, original order kept."""
    if not 0 < ratio <= 1:
        raise DomainError(f"population ratio {ratio} outside (0, 1]")
    n = len(households)
    k = int(np.floor(ratio * n + 0.5))
    if k == n:
        return households.copy()
    keep = np.sort(rng.choice(n, size=k, replace=False))
    return households.iloc[keep].reset_index(drop=True)


def moving_probability(age_of_head: float, rates: MovingRateTable) -> float:
    """Probability of moving within 25 years: one minus the five-year stay ratio to the fifth."""
    return 1.0 - rates.ratio(age_of_head) ** 5


def moving_probabilities(ages, rates: MovingRateTable) -> np.ndarray:
    return 1.0 - rates.ratios(ages) ** 5


# ---------------------------------------------------------------------------
# policies


@dataclass(frozen=True)
class PolicyState:
    """Effective cell attributes after policies, plus what was recomputed."""

    cells: pd.DataFrame
    surface: AccessibilitySurface | None = None
    ledger: tuple[str, ...] = ()

    def recorded(self, entry: str) -> int:
        return sum(1 for e in self.ledger if e == entry)


def apply_policy1(state: PolicyState, subsidy_rate: float) -> PolicyState:
    """Cut land prices in DAA cells by ``subsidy_rate``; nothing else changes."""
    if not 0 <= subsidy_rate < 1:
        raise DomainError(f"subsidy rate {subsidy_rate} outside [0, 1)")
    if subsidy_rate == 0:
        return replace(state, ledger=state.ledger + ("policy1:noop",))
    cells = state.cells.copy()
    daa = cells["in_daa"].to_numpy(dtype=bool)
    price = cells["land_price"].to_numpy(dtype=float).copy()
    price[daa] *= 1.0 - subsidy_rate
    cells["land_price"] = price
    return replace(state, cells=cells, ledger=state.ledger + ("policy1:land_prices",))


def redistribute_tertiary(tertiary: np.ndarray, in_ufaa: np.ndarray, boost: float) -> np.ndarray:
    """Grow UFAA tertiary jobs by ``boost`` and take the gain from the other
    cells in proportion to their own tertiary jobs."""
    t = np.asarray(tertiary, dtype=float)
    in_ufaa = np.asarray(in_ufaa, dtype=bool)
    gain = boost * t[in_ufaa].sum()
    outside = t[~in_ufaa].sum()
    if gain > outside:
        raise InfeasiblePolicyError(
            f"UFAA gain of {gain:.6g} exceeds the {outside:.6g} tertiary jobs outside UFAA"
        )
    out = t.copy()
    out[in_ufaa] *= 1.0 + boost
    if gain > 0:
        out[~in_ufaa] -= gain * t[~in_ufaa] / outside
    return out


def apply_policy2(state: PolicyState, boost: float, distances_m: np.ndarray,
                  hedonic: Mapping[str, float],
                  provider_config: ProviderConfig | None = None,
                  surface_builder: Callable[[pd.DataFrame], AccessibilitySurface] | None = None,
                  ) -> PolicyState:
    """Move tertiary jobs into UFAA, then refresh logsums, land prices and ABA.

    Land prices keep each cell's residual from the land-price model: the new
    price is the old one times ``exp`` of the change in the linear predictor.
    """
    if boost < 0:
        raise DomainError("employee boost must be >= 0")
    if boost == 0:
        return replace(state, ledger=state.ledger + ("policy2:noop",))
    cells = state.cells.copy()
    before = cells["employees_tertiary"].to_numpy(dtype=float)
    after = redistribute_tertiary(before, cells["in_ufaa"].to_numpy(dtype=bool), boost)
    if not np.isclose(after.sum(), before.sum(), rtol=CONSERVATION_RTOL, atol=0):
        raise InfeasiblePolicyError("redistribution failed to conserve tertiary employment")
    old_predictor = linear_predictor(hedonic, cells)
    cells["employees_tertiary"] = after
    ledger = list(state.ledger)

    for purpose in ("work", "education", "other"):
        cells[f"logsum_{purpose}"] = tertiary_logsum_for_hedonic(cells, distances_m, purpose,
                                                                 provider_config)
    ledger.append("policy2:logsums")

    new_predictor = linear_predictor(hedonic, cells)
    cells["land_price"] = cells["land_price"].to_numpy(dtype=float) * np.exp(new_predictor - old_predictor)
    ledger.append("policy2:land_prices")

    surface = state.surface
    if surface_builder is not None:
        surface = surface_builder(cells)
        ledger.append("policy2:aba_surface")
    return PolicyState(cells, surface, tuple(ledger))


# ---------------------------------------------------------------------------
# relocation


@dataclass(frozen=True)
class SimulationRun:
    scenario: str
    run_index: int
    household_ids: np.ndarray
    home: np.ndarray          # cell positions
    final: np.ndarray         # cell positions
    moved: np.ndarray         # bool

    def outcome_frame(self, cell_ids: np.ndarray) -> pd.DataFrame:
        return pd.DataFrame({
            "household_id": self.household_ids,
            "home_cell": cell_ids[self.home],
            "final_cell": cell_ids[self.final],
            "moved": self.moved,
        })

    def cell_counts(self, n_cells: int) -> np.ndarray:
        return np.bincount(self.final, minlength=n_cells)


@dataclass(frozen=True)
class LocationModel:
    """Everything a relocation draw needs besides the households."""

    cells: pd.DataFrame
    surface: AccessibilitySurface
    segments: Mapping[int, SegmentCoefficients]
    n_draws: int = N_DRAWS
    correction: str = DEFAULT_CORRECTION

    def __post_init__(self):
        if not np.array_equal(self.surface.cell_ids, self.cells["cell_id"].to_numpy()):
            raise ContractError("accessibility surface and cell table list different cells")


def _prepare(model: LocationModel):
    locations = LocationTable.from_cells(model.cells)
    probs = sampling_probabilities(locations.land_price, locations.eligible)
    cdf = np.cumsum(probs)
    corr_by_cell = np.full(len(probs), np.nan)
    ok = probs > 0
    corr_by_cell[ok] = sampling_corrections(probs[ok], model.n_draws, model.correction)
    loc_util = {}
    for seg, coef in model.segments.items():
        beta = np.array([coef.beta[n] for n in BETA_NAMES])
        loc_util[seg] = locations.covariates @ beta + coef.size_coefficient * locations.size_terms
    raw = np.column_stack([model.surface.raw[c] for c in CATEGORIES])
    ref = np.column_stack([model.surface.reference[c] for c in CATEGORIES])
    scale = np.abs(np.column_stack([model.surface.scale[c] for c in CATEGORIES]))
    return probs, cdf, corr_by_cell, loc_util, raw, ref, scale


def _household_stream(seed: int, tag: int, run: int, hid: int) -> np.random.Generator:
    return np.random.default_rng([seed, tag, run, hid])


def simulate_relocation(households: pd.DataFrame, model: LocationModel, scenario: ScenarioSpec,
                        run_index: int = 0, rates: MovingRateTable | None = None,
                        force_move: bool = False) -> SimulationRun:
    """One Monte-Carlo pass: move-or-stay, then a sampled MNL draw for movers.

    Each household draws from its own random streams keyed by
    ``(seed, run, household_id)``; the move decision uses a run-independent
    stream when ``scenario.resample_movers_per_run`` is false.
    """
    if not force_move and rates is None:
        raise DomainError("a moving-rate table is needed unless every household moves")
    probs, cdf, corr_by_cell, loc_util, raw, ref, scale = _prepare(model)
    missing = set(households["segment"].unique()) - set(model.segments)
    if missing:
        raise DataError(f"no coefficients for segments {sorted(missing)}")
    home = cell_positions(model.cells, households["home_cell"].to_numpy())
    move_p = (np.ones(len(households)) if force_move
              else moving_probabilities(households["age_of_head"].to_numpy(), rates))
    alphas = {s: np.array([getattr(c, n) for n in ALPHA_NAMES]) for s, c in model.segments.items()}
    present = np.column_stack([households[CATEGORY_COUNT_COLUMN[c]].to_numpy() > 0
                               for c in CATEGORIES])
    hids = households["household_id"].to_numpy()
    segs = households["segment"].to_numpy()

    final = home.copy()
    moved = np.zeros(len(households), dtype=bool)
    move_run = run_index if scenario.resample_movers_per_run else 0
    for i in range(len(households)):
        hid = int(hids[i])
        if move_p[i] < 1.0:
            u = _household_stream(scenario.seed, MOVE_STREAM, move_run, hid).random()
            if u >= move_p[i]:
                continue
        moved[i] = True
        rng = _household_stream(scenario.seed, CHOICE_STREAM, run_index, hid)
        draws = np.searchsorted(cdf, rng.random(model.n_draws) * cdf[-1], side="right")
        cand, counts = np.unique(np.minimum(draws, len(cdf) - 1), return_counts=True)
        h = home[i]
        weights = np.where(present[i], alphas[segs[i]] / scale[h], 0.0)
        v = loc_util[segs[i]][cand] + (raw[cand] - ref[h]) @ weights + corr_by_cell[cand]
        if model.correction == "draw_count":
            v = v + np.log(counts)
        p = np.exp(v - v.max())
        c = np.cumsum(p)
        pick = int(np.searchsorted(c, rng.random() * c[-1], side="right"))
        final[i] = cand[min(pick, len(cand) - 1)]
    return SimulationRun(scenario.name, run_index, hids, home, final, moved)


@dataclass(frozen=True)
class ScenarioOutcome:
    scenario: ScenarioSpec
    runs: tuple[SimulationRun, ...]
    per_run: pd.DataFrame               # one row of indicators per run
    mean: pd.Series                     # indicator means over runs
    mean_cell_counts: pd.DataFrame      # cell_id, mean_households
    cells: pd.DataFrame                 # effective cells used


def run_scenario(households: pd.DataFrame, model: LocationModel, scenario: ScenarioSpec,
                 oracle: DistanceOracle, rates: MovingRateTable | None = None,
                 force_move: bool = False) -> ScenarioOutcome:
    """``scenario.n_monte_carlo_runs`` passes, their indicators and averages."""
    runs, rows = [], []
    n_cells = len(model.cells)
    counts = np.zeros(n_cells)
    for r in range(scenario.n_monte_carlo_runs):
        run = simulate_relocation(households, model, scenario, r, rates, force_move)
        runs.append(run)
        rows.append(indicators(run.final, model.cells, oracle))
        counts += run.cell_counts(n_cells)
        log.info("scenario %s run %d: %d of %d households moved", scenario.name, r,
                 int(run.moved.sum()), len(run.moved))
    per_run = pd.DataFrame(rows)
    per_run.insert(0, "run", range(len(rows)))
    mean = per_run.drop(columns="run").mean()
    cell_table = pd.DataFrame({
        "cell_id": model.cells["cell_id"].to_numpy(),
        "mean_households": counts / len(runs),
    })
    return ScenarioOutcome(scenario, tuple(runs), per_run, mean, cell_table, model.cells)
