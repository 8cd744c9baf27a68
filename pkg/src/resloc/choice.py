"""Multinomial-logit residential location choice.

Utilities of a household ``h`` for a cell ``l``::

    V = beta . X_l
        + sum over present person categories of alpha_c * (mean normalized ABA)
        + ln(housing stock of l)            (size variable, coefficient 1)
        + sampling correction of l

Choice sets are drawn by importance sampling with replacement using land
price as the weight. Estimation works on a stacked "long" layout: one row per
(observation, alternative), rows of an observation contiguous.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd
from scipy.optimize import minimize

from .accessibility import AccessibilitySurface
from .domain import (
    ALPHA_NAMES,
    BETA_NAMES,
    CATEGORIES,
    CATEGORY_COUNT_COLUMN,
    COEFFICIENT_NAMES,
    LAND_PRICE_UNIT,
    SIZE_COEFFICIENT,
    PersonCategory,
    SegmentCoefficients,
    city_dummies,
)
from .errors import ContractError, ConvergenceError, DataError, DomainError, IdentificationError

N_DRAWS = 50
GRADIENT_TOLERANCE = 1e-6
MAX_ITERATIONS = 200

# Sampling corrections, each ln(1 / probability) of some sampling event:
#   inclusion_probability  the cell enters the set: 1 - (1 - pi)^R
#   inverse_probability    one draw hits the cell: pi
#   draw_count             ln(k / pi), k = times the cell was drawn; the chosen
#                          cell counts as one extra draw
# With many cells and few draws all three agree up to a constant. On small
# regions only inclusion_probability and draw_count estimate consistently.
INCLUSION_PROBABILITY = "inclusion_probability"
INVERSE_PROBABILITY = "inverse_probability"
DRAW_COUNT = "draw_count"
CORRECTIONS = (INCLUSION_PROBABILITY, INVERSE_PROBABILITY, DRAW_COUNT)
DEFAULT_CORRECTION = INCLUSION_PROBABILITY


# ---------------------------------------------------------------------------
# alternatives and choice sets


@dataclass(frozen=True)
class Alternative:
    cell: int
    covariates: Mapping[str, float]
    aba_averages: Mapping[PersonCategory, float]
    size_term: float
    sampling_correction: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.size_term):
            raise DataError(f"cell {self.cell}: size term undefined (no housing stock)")
        if not math.isfinite(self.sampling_correction):
            raise DataError(f"cell {self.cell}: sampling correction not finite")


@dataclass(frozen=True)
class ChoiceSet:
    """Unique sampled cells (row positions) for one household.

    ``draws`` is how many times each cell was drawn. ``X`` and
    ``size_terms`` are filled in by :func:`describe_alternatives`.
    """

    household_id: int
    cells: np.ndarray
    corrections: np.ndarray
    draws: np.ndarray
    chosen: int | None = None
    X: np.ndarray | None = None
    size_terms: np.ndarray | None = None
    names: tuple[str, ...] = COEFFICIENT_NAMES

    def __post_init__(self):
        if len(np.unique(self.cells)) != len(self.cells):
            raise DataError("choice set alternatives must be unique cells")
        if self.chosen is not None and not 0 <= self.chosen < len(self.cells):
            raise DataError("chosen index outside the choice set")

    def __len__(self) -> int:
        return len(self.cells)

    @property
    def offsets(self) -> np.ndarray:
        if self.size_terms is None:
            raise ContractError("choice set has no alternative attributes attached")
        return SIZE_COEFFICIENT * self.size_terms + self.corrections

    def alternatives(self, cell_ids: np.ndarray | None = None) -> list[Alternative]:
        if self.X is None:
            raise ContractError("choice set has no alternative attributes attached")
        out = []
        a = len(ALPHA_NAMES)
        for i, cell in enumerate(self.cells):
            row = dict(zip(self.names, self.X[i]))
            aba = {c: row[n] for n, c in zip(ALPHA_NAMES, CATEGORIES) if n in row}
            out.append(Alternative(
                int(cell_ids[cell]) if cell_ids is not None else int(cell),
                {n: row[n] for n in self.names[a:]},
                aba,
                float(self.size_terms[i]),
                float(self.corrections[i]),
            ))
        return out


def sampling_probabilities(weights: np.ndarray, eligible: np.ndarray | None = None) -> np.ndarray:
    """Per-draw probabilities ``w_j / sum(w)`` over eligible cells."""
    w = np.asarray(weights, dtype=float)
    eligible = np.ones(len(w), dtype=bool) if eligible is None else np.asarray(eligible, bool)
    if np.any(~np.isfinite(w[eligible])) or np.any(w[eligible] <= 0):
        bad = np.flatnonzero(eligible & ~(w > 0))
        raise DataError(f"non-positive sampling weight on eligible cell position {bad[:5].tolist()}")
    if not eligible.any():
        raise DataError("no eligible cells to sample")
    p = np.where(eligible, w, 0.0)
    return p / p.sum()


def sample_choice_set(weights: np.ndarray, rng: np.random.Generator, n_draws: int = N_DRAWS,
                      chosen: int | None = None, eligible: np.ndarray | None = None,
                      household_id: int = -1, correction: str = DEFAULT_CORRECTION,
                      probabilities: np.ndarray | None = None) -> ChoiceSet:
    """Importance sampling with replacement.

    Draws ``n_draws`` cells with per-draw probability ``w / sum(w)`` and
    collapses duplicates. ``chosen`` is a cell position; when given
    (estimation) it is added if it was not drawn. ``probabilities`` may be
    passed precomputed to skip normalizing the weights.
    """
    if correction not in CORRECTIONS:
        raise DomainError(f"unknown sampling correction {correction!r}")
    if n_draws < 1:
        raise DomainError("n_draws must be positive")
    p = probabilities if probabilities is not None else sampling_probabilities(weights, eligible)
    cdf = np.cumsum(p)
    draws = np.searchsorted(cdf, rng.random(n_draws) * cdf[-1], side="right")
    draws = np.minimum(draws, len(p) - 1)
    cells, counts = np.unique(draws, return_counts=True)
    chosen_idx = None
    if chosen is not None:
        if p[chosen] <= 0:
            raise DataError(f"chosen cell position {chosen} is not eligible")
        hit = np.flatnonzero(cells == chosen)
        if hit.size:
            chosen_idx = int(hit[0])
            if correction == DRAW_COUNT:
                counts = counts.copy()
                counts[chosen_idx] += 1
        else:
            cells = np.append(cells, chosen)
            # forced in without being drawn
            counts = np.append(counts, 1 if correction == DRAW_COUNT else 0)
            chosen_idx = len(cells) - 1
    corrections = sampling_corrections(p[cells], n_draws, correction)
    if correction == DRAW_COUNT:
        corrections = corrections + np.log(counts)
    return ChoiceSet(household_id, cells, corrections, counts, chosen_idx)


def sampling_corrections(p: np.ndarray, n_draws: int,
                         correction: str = DEFAULT_CORRECTION) -> np.ndarray:
    """Count-independent part of the correction for per-draw probabilities ``p``."""
    p = np.asarray(p, dtype=float)
    if correction == INCLUSION_PROBABILITY:
        # a cell drawn with certainty (p = 1) is always included: correction 0
        with np.errstate(divide="ignore"):
            return -np.log(-np.expm1(n_draws * np.log1p(-p)))
    return -np.log(p)


def full_choice_set(n_cells: int, chosen: int | None = None, household_id: int = -1,
                    eligible: np.ndarray | None = None) -> ChoiceSet:
    """Every eligible cell, no correction."""
    cells = np.arange(n_cells) if eligible is None else np.flatnonzero(eligible)
    idx = None
    if chosen is not None:
        hit = np.flatnonzero(cells == chosen)
        if not hit.size:
            raise DataError(f"chosen cell position {chosen} is not eligible")
        idx = int(hit[0])
    return ChoiceSet(household_id, cells, np.zeros(len(cells)), np.ones(len(cells), int), idx)


# ---------------------------------------------------------------------------
# attributes


@dataclass(frozen=True)
class LocationTable:
    """Cell attributes in the layout the location model needs."""

    cell_ids: np.ndarray
    covariates: np.ndarray      # n_cells x len(BETA_NAMES)
    size_terms: np.ndarray      # ln(housing stock), -inf when empty
    land_price: np.ndarray      # JPY per m2

    @property
    def eligible(self) -> np.ndarray:
        return np.isfinite(self.size_terms)

    @classmethod
    def from_cells(cls, cells: pd.DataFrame) -> "LocationTable":
        dummies = city_dummies(cells)
        cols = []
        for name in BETA_NAMES:
            if name == "land_price":
                cols.append(cells["land_price"].to_numpy(dtype=float) / LAND_PRICE_UNIT)
            elif name in dummies:
                cols.append(dummies[name])
            else:
                cols.append(cells[name].to_numpy(dtype=float))
        stock = cells["housing_stock"].to_numpy(dtype=float)
        with np.errstate(divide="ignore"):
            size = np.where(stock > 0, np.log(np.maximum(stock, 1e-300)), -np.inf)
        return cls(cells["cell_id"].to_numpy(), np.column_stack(cols), size,
                   cells["land_price"].to_numpy(dtype=float))


def household_aba(surface: AccessibilitySurface, counts: Mapping[PersonCategory, int],
                  home_pos: int, cell_pos: np.ndarray) -> np.ndarray:
    """Household-average normalized ABA at each of ``cell_pos`` (n x 3).

    Absent categories get 0, which removes their term from the utility.
    """
    out = np.zeros((len(cell_pos), len(CATEGORIES)))
    for k, cat in enumerate(CATEGORIES):
        if counts.get(cat, 0) > 0:
            out[:, k] = surface.relative_to_home(cat, home_pos, cell_pos)
    return out


def describe_alternatives(choice_set: ChoiceSet, locations: LocationTable,
                          aba: np.ndarray) -> ChoiceSet:
    """Attach the design rows (ABA columns then location covariates)."""
    if aba.shape != (len(choice_set), len(ALPHA_NAMES)):
        raise ContractError("ABA block does not match the choice set")
    size = locations.size_terms[choice_set.cells]
    if not np.all(np.isfinite(size)):
        raise DataError("choice set contains a cell without housing stock")
    X = np.hstack([aba, locations.covariates[choice_set.cells]])
    return ChoiceSet(choice_set.household_id, choice_set.cells, choice_set.corrections,
                     choice_set.draws, choice_set.chosen, X, size, COEFFICIENT_NAMES)


def household_counts(row) -> dict[PersonCategory, int]:
    return {c: int(getattr(row, CATEGORY_COUNT_COLUMN[c])) for c in CATEGORIES}


# ---------------------------------------------------------------------------
# utilities and probabilities


def household_utility(segment: SegmentCoefficients, alt: Alternative) -> float:
    if set(alt.covariates) != set(BETA_NAMES):
        raise ContractError(
            f"alternative covariates {sorted(alt.covariates)} do not match the coefficient schema"
        )
    v = sum(segment.beta[n] * float(alt.covariates[n]) for n in BETA_NAMES)
    for cat, value in alt.aba_averages.items():
        v += segment.alpha(cat) * value
    return v + segment.size_coefficient * alt.size_term + alt.sampling_correction


def utilities(choice_set: ChoiceSet, segment: SegmentCoefficients) -> np.ndarray:
    if choice_set.X is None:
        raise ContractError("choice set has no alternative attributes attached")
    return choice_set.X @ segment.vector(choice_set.names) + choice_set.offsets


def softmax(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.size == 0:
        raise DomainError("empty choice set")
    e = np.exp(v - v.max())
    return e / e.sum()


def choice_probabilities(choice_set: ChoiceSet, segment: SegmentCoefficients) -> np.ndarray:
    return softmax(utilities(choice_set, segment))


# ---------------------------------------------------------------------------
# estimation


@dataclass(frozen=True)
class ChoiceData:
    """Stacked estimation data.

    Rows ``starts[i]:starts[i+1]`` are observation ``i``'s alternatives and
    ``chosen[i]`` is the absolute row of its choice.
    """

    X: np.ndarray
    offsets: np.ndarray
    starts: np.ndarray
    chosen: np.ndarray
    names: tuple[str, ...]

    @property
    def n_obs(self) -> int:
        return len(self.chosen)

    @property
    def row_obs(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_obs), np.diff(self.starts))

    def select(self, names: Sequence[str]) -> "ChoiceData":
        idx = [self.names.index(n) for n in names]
        return ChoiceData(self.X[:, idx], self.offsets, self.starts, self.chosen, tuple(names))

    def without_offsets(self) -> "ChoiceData":
        return ChoiceData(self.X, np.zeros_like(self.offsets), self.starts, self.chosen, self.names)


def stack_choice_sets(sets: Iterable[ChoiceSet]) -> ChoiceData:
    Xs, offs, lens, chosen = [], [], [], []
    names = None
    row = 0
    for cs in sets:
        if cs.chosen is None:
            raise DataError(f"household {cs.household_id} has no chosen alternative")
        if names is None:
            names = cs.names
        elif cs.names != names:
            raise ContractError("choice sets disagree on the coefficient schema")
        Xs.append(cs.X)
        offs.append(cs.offsets)
        lens.append(len(cs))
        chosen.append(row + cs.chosen)
        row += len(cs)
    if not lens:
        raise DataError("no observations")
    starts = np.concatenate([[0], np.cumsum(lens)])
    return ChoiceData(np.vstack(Xs), np.concatenate(offs), starts, np.array(chosen), names)


def _probabilities(data: ChoiceData, b: np.ndarray):
    v = data.X @ b + data.offsets
    s = data.starts[:-1]
    top = np.maximum.reduceat(v, s)
    obs = data.row_obs
    e = np.exp(v - top[obs])
    denom = np.add.reduceat(e, s)
    return v, top, denom, e / denom[obs]


def log_likelihood(data: ChoiceData, b: np.ndarray) -> float:
    v, top, denom, _ = _probabilities(data, np.asarray(b, dtype=float))
    return float(np.sum(v[data.chosen] - top - np.log(denom)))


def log_likelihood_and_gradient(data: ChoiceData, b: np.ndarray) -> tuple[float, np.ndarray]:
    v, top, denom, p = _probabilities(data, np.asarray(b, dtype=float))
    ll = float(np.sum(v[data.chosen] - top - np.log(denom)))
    grad = data.X[data.chosen].sum(axis=0) - p @ data.X
    return ll, grad


def hessian(data: ChoiceData, b: np.ndarray) -> np.ndarray:
    *_, p = _probabilities(data, np.asarray(b, dtype=float))
    obs = data.row_obs
    weighted = np.add.reduceat(p[:, None] * data.X, data.starts[:-1], axis=0)
    centered = data.X - weighted[obs]
    return -(centered * p[:, None]).T @ centered


def unidentified_columns(data: ChoiceData) -> list[str]:
    """Columns constant within every observation (no within-set variation)."""
    s = data.starts[:-1]
    spread = np.maximum.reduceat(data.X, s, axis=0) - np.minimum.reduceat(data.X, s, axis=0)
    dead = np.all(spread == 0, axis=0)
    return [n for n, d in zip(data.names, dead) if d]


def goodness_of_fit(ll0: float, llf: float, k: int) -> float:
    """Adjusted rho squared ``1 - (LL_final - K) / LL_0``."""
    if ll0 == 0:
        raise DomainError("initial log-likelihood of 0 leaves rho squared undefined")
    return 1.0 - (llf - k) / ll0


@dataclass(frozen=True)
class EstimationResult:
    names: tuple[str, ...]
    coefficients: np.ndarray
    std_errors: np.ndarray
    t_values: np.ndarray
    ll_initial: float
    ll_final: float
    rho2_adjusted: float
    n_obs: int
    n_params: int
    iterations: int
    gradient_norm: float
    fixed: tuple[str, ...] = ()
    segment: int | None = None
    message: str = ""

    def coefficient_map(self) -> dict[str, float]:
        return dict(zip(self.names, map(float, self.coefficients)))

    def confidence_interval(self, level_z: float = 1.959963984540054) -> np.ndarray:
        return np.column_stack([self.coefficients - level_z * self.std_errors,
                                self.coefficients + level_z * self.std_errors])

    def to_segment(self, segment: int | None = None) -> SegmentCoefficients:
        seg = segment if segment is not None else (self.segment or 0)
        return SegmentCoefficients.from_dict(seg, self.coefficient_map())

    def summary_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "variable": self.names,
            "coefficient": self.coefficients,
            "std_error": self.std_errors,
            "t_value": self.t_values,
            "fixed": [n in self.fixed for n in self.names],
        })


def estimate_segment(data: ChoiceData, names: Sequence[str] | None = None,
                     start: np.ndarray | None = None, on_unidentified: str = "raise",
                     gtol: float = GRADIENT_TOLERANCE, maxiter: int = MAX_ITERATIONS,
                     segment: int | None = None) -> EstimationResult:
    """Maximum likelihood by BFGS on the analytic gradient.

    ``names`` picks the estimated coefficients out of ``data.names``.
    Columns without within-set variation raise :class:`IdentificationError`,
    or with ``on_unidentified="fix"`` are held at zero and reported as fixed.
    Standard errors come from the inverse of the negative analytic Hessian.
    """
    names = tuple(names) if names is not None else data.names
    data = data.select(names)
    if data.n_obs < 1:
        raise DataError("no observations")
    dead = unidentified_columns(data)
    if dead and on_unidentified == "raise":
        raise IdentificationError(
            f"coefficients not identified (no variation within choice sets): {', '.join(dead)}",
            dead,
        )
    if on_unidentified not in ("raise", "fix"):
        raise DomainError(f"on_unidentified must be 'raise' or 'fix', not {on_unidentified!r}")
    free = [n for n in names if n not in dead]
    free_data = data.select(free)
    ll0 = log_likelihood(data, np.zeros(len(names)))

    x0 = np.zeros(len(free)) if start is None else np.asarray(start, dtype=float)[
        [names.index(n) for n in free]]

    def objective(b):
        ll, g = log_likelihood_and_gradient(free_data, b)
        return -ll, -g

    if free:
        res = minimize(objective, x0, jac=True, method="BFGS",
                       options={"gtol": gtol, "maxiter": maxiter, "norm": np.inf})
        b_free = res.x
        ll_f, grad = log_likelihood_and_gradient(free_data, b_free)
        gnorm = float(np.max(np.abs(grad)))
        iterations = int(res.nit)
        message = str(res.message)
        if gnorm >= gtol:
            # BFGS can stall on line-search precision near the optimum of a
            # large sum; finish with Newton steps on the analytic Hessian.
            b_free, ll_f, gnorm, extra = _newton_polish(free_data, b_free, gtol, maxiter - iterations)
            iterations += extra
        if gnorm >= gtol or not np.all(np.isfinite(b_free)):
            raise ConvergenceError(
                f"no convergence after {iterations} iterations "
                f"(gradient max-norm {gnorm:.3g}): {message}",
                last_iterate=dict(zip(free, b_free)), gradient=grad,
            )
        H = hessian(free_data, b_free)
        try:
            cov = np.linalg.inv(-H)
            se_free = np.sqrt(np.diag(cov))
        except np.linalg.LinAlgError:
            se_free = np.full(len(free), np.nan)
    else:
        b_free, ll_f, gnorm, iterations, message = np.zeros(0), ll0, 0.0, 0, "nothing to estimate"
        se_free = np.zeros(0)

    coef = np.zeros(len(names))
    se = np.full(len(names), np.nan)
    for i, n in enumerate(free):
        coef[names.index(n)] = b_free[i]
        se[names.index(n)] = se_free[i]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(se > 0, coef / se, np.nan)
    k = len(free)
    return EstimationResult(
        names, coef, se, t, ll0, ll_f, goodness_of_fit(ll0, ll_f, k), data.n_obs, k,
        iterations, gnorm, tuple(dead), segment, message,
    )


def _newton_polish(data: ChoiceData, b: np.ndarray, gtol: float, max_steps: int):
    ll, g = log_likelihood_and_gradient(data, b)
    steps = 0
    while np.max(np.abs(g)) >= gtol and steps < max(max_steps, 1):
        H = hessian(data, b)
        try:
            step = np.linalg.solve(-H, g)
        except np.linalg.LinAlgError:
            break
        t = 1.0
        while t > 1e-8:
            cand = b + t * step
            ll_c, g_c = log_likelihood_and_gradient(data, cand)
            if ll_c >= ll - 1e-12 * abs(ll):
                break
            t /= 2
        b, ll, g = cand, ll_c, g_c
        steps += 1
    return b, ll, float(np.max(np.abs(g))), steps
