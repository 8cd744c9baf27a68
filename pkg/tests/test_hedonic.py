import math

import numpy as np
import pandas as pd
import pytest

from resloc.errors import DataError, DomainError, SingularDesignError
from resloc.hedonic import (
    HEDONIC_TERMS,
    fit_hedonic,
    fit_ols,
    hedonic_design,
    linear_predictor,
    predict_land_price,
)
from resloc.io import preset_hedonic

# published land-price model, typed in from the source table
PUBLISHED_LAND_PRICE = {
    "intercept": 7.83,
    "logsum_work": 0.15,
    "logsum_education": 0.043,
    "logsum_other": 0.13,
    "is_takasaki": 0.30,
    "is_maebashi": 0.21,
    "is_kiryu": -0.11,
    "share_agricultural": -0.48,
    "share_industrial": -0.58,
}


def random_design(rng, n):
    """Covariates shaped like mesh statistics for every published term."""
    city = rng.choice(["Takasaki", "Maebashi", "Kiryu", "Other"], size=n)
    return pd.DataFrame({
        "logsum_work": rng.normal(5, 1, n),
        "logsum_education": rng.normal(3, 1, n),
        "logsum_other": rng.normal(4, 1, n),
        "share_agricultural": rng.uniform(0, 0.6, n),
        "share_industrial": rng.uniform(0, 0.2, n),
        "city": city,
    })


NAMES = tuple(PUBLISHED_LAND_PRICE)
TRUE = np.array([PUBLISHED_LAND_PRICE[n] for n in NAMES])


def test_preset_matches_published_table():
    preset = preset_hedonic()
    for name, value in PUBLISHED_LAND_PRICE.items():
        assert preset[name] == value
    assert set(preset) == set(HEDONIC_TERMS)
    assert all(preset[n] == 0 for n in set(HEDONIC_TERMS) - set(PUBLISHED_LAND_PRICE))


def test_noiseless_recovery():
    rng = np.random.default_rng(0)
    cells = random_design(rng, 200)
    X = hedonic_design(cells, NAMES)
    fit = fit_ols(X, X @ TRUE, NAMES)
    np.testing.assert_allclose(fit.coefficients, TRUE, atol=1e-10)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-12)
    assert np.abs(fit.residuals).max() < 1e-10


def test_against_lstsq_and_summary_statistics():
    rng = np.random.default_rng(1)
    X = np.column_stack([np.ones(80), rng.normal(size=(80, 3))])
    y = X @ np.array([1.0, 0.5, -0.2, 0.0]) + rng.normal(0, 0.3, 80)
    fit = fit_ols(X, y)
    ref, *_ = np.linalg.lstsq(X, y, rcond=None)
    np.testing.assert_allclose(fit.coefficients, ref, atol=1e-12)
    # classical formulas
    resid = y - X @ ref
    n, k = X.shape
    s2 = resid @ resid / (n - k)
    se = np.sqrt(np.diag(s2 * np.linalg.inv(X.T @ X)))
    np.testing.assert_allclose(fit.std_errors, se, rtol=1e-10)
    r2 = 1 - resid @ resid / ((y - y.mean()) ** 2).sum()
    assert fit.r_squared == pytest.approx(r2)
    assert fit.adj_r_squared == pytest.approx(1 - (1 - r2) * (n - 1) / (n - k))
    assert fit.f_statistic == pytest.approx((r2 / (k - 1)) / ((1 - r2) / (n - k)))


def test_permutation_invariance():
    rng = np.random.default_rng(2)
    X = np.column_stack([np.ones(50), rng.normal(size=(50, 2))])
    y = rng.normal(size=50)
    perm = rng.permutation(50)
    a, b = fit_ols(X, y), fit_ols(X[perm], y[perm])
    np.testing.assert_allclose(a.coefficients, b.coefficients, atol=1e-12)
    np.testing.assert_allclose(a.std_errors, b.std_errors, rtol=1e-10)


def test_coverage_on_noisy_replications():
    """557 observations, sigma 0.3: truth within 3 SE in at least 95% of fits."""
    hits = np.zeros(len(NAMES))
    n_rep = 200
    for seed in range(n_rep):
        rng = np.random.default_rng(1000 + seed)
        cells = random_design(rng, 557)
        X = hedonic_design(cells, NAMES)
        fit = fit_ols(X, X @ TRUE + rng.normal(0, 0.3, 557), NAMES)
        hits += np.abs(fit.coefficients - TRUE) <= 3 * fit.std_errors
    assert np.all(hits / n_rep >= 0.95), dict(zip(NAMES, hits / n_rep))


def test_collinear_columns_are_named():
    rng = np.random.default_rng(3)
    a = rng.normal(size=30)
    X = np.column_stack([np.ones(30), a, 2 * a])
    with pytest.raises(SingularDesignError) as err:
        fit_ols(X, rng.normal(size=30), ("intercept", "a", "twice_a"))
    assert set(err.value.columns) & {"a", "twice_a"}


def test_needs_more_rows_than_columns():
    with pytest.raises(DomainError):
        fit_ols(np.ones((2, 2)), np.ones(2))


def test_predict_intercept_only():
    cells = pd.DataFrame({"logsum_work": [0.0], "city": ["Other"]})
    price = predict_land_price({"intercept": 7.83, "logsum_work": 0.15}, cells)[0]
    assert price == pytest.approx(2514.9, abs=0.1)
    assert price == pytest.approx(math.exp(7.83))


def test_takasaki_premium():
    cells = pd.DataFrame({"city": ["Takasaki", "Other"]})
    p = predict_land_price({"intercept": 7.83, "is_takasaki": 0.30}, cells)
    assert p[0] / p[1] == pytest.approx(math.exp(0.30))
    assert p[0] / p[1] == pytest.approx(1.3499, abs=1e-4)


def test_log_round_trip(region):
    cells, _, _ = region
    coef = preset_hedonic()
    np.testing.assert_allclose(np.log(predict_land_price(coef, cells)),
                               linear_predictor(coef, cells), rtol=0, atol=1e-12)
    assert np.all(predict_land_price(coef, cells) > 0)


def test_missing_covariate():
    with pytest.raises(DataError):
        predict_land_price({"intercept": 1.0, "logsum_work": 0.1}, pd.DataFrame({"x": [1.0]}))


def test_fit_on_cell_table(region):
    cells, _, _ = region
    fit = fit_hedonic(cells, ("intercept", "logsum_work", "share_agricultural"))
    assert fit.n_obs == len(cells)
    assert list(fit.summary_frame()["variable"]) == ["intercept", "logsum_work", "share_agricultural"]
    bad = cells.copy()
    bad.loc[0, "land_price"] = 0.0
    with pytest.raises(DataError):
        fit_hedonic(bad)


def test_collinear_terms_dropped_on_request():
    rng = np.random.default_rng(5)
    cells = random_design(rng, 60)
    cells["city"] = rng.choice(["Takasaki", "Maebashi"], size=60)    # no baseline city
    names = ("intercept", "logsum_work", "is_takasaki", "is_maebashi")
    X = hedonic_design(cells, names)
    cells["land_price"] = np.exp(X @ np.array([7.0, 0.2, 0.3, 0.0]) + rng.normal(0, 0.1, 60))
    with pytest.raises(SingularDesignError):
        fit_hedonic(cells, names)
    fit = fit_hedonic(cells, names, drop_collinear=True)
    assert len(fit.dropped) == 1 and "intercept" in fit.names
    assert set(fit.names) | set(fit.dropped) == set(names)
