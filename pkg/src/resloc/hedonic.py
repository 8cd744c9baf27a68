"""Hedonic regression of log land price on cell attributes."""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Mapping

import numpy as np
import pandas as pd
import scipy.linalg

from .domain import city_dummies
from .errors import DataError, DomainError, SingularDesignError

# Regressor order of the land-price model; the intercept is implicit.
HEDONIC_COVARIATES = (
    "housing_stock",
    "logsum_work",
    "logsum_education",
    "logsum_other",
    "is_takasaki",
    "is_maebashi",
    "is_ota",
    "is_isesaki",
    "is_kiryu",
    "share_agricultural",
    "share_forest",
    "share_freshwater",
    "share_industrial",
)
HEDONIC_TERMS = ("intercept", *HEDONIC_COVARIATES)

RANK_TOLERANCE = 1e-10


@dataclass(frozen=True)
class HedonicFit:
    names: tuple[str, ...]
    coefficients: np.ndarray
    std_errors: np.ndarray
    t_values: np.ndarray
    r_squared: float
    adj_r_squared: float
    f_statistic: float
    n_obs: int
    residuals: np.ndarray
    dropped: tuple[str, ...] = ()

    def coefficient_map(self) -> dict[str, float]:
        return dict(zip(self.names, map(float, self.coefficients)))

    def summary_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "variable": self.names,
            "coefficient": self.coefficients,
            "std_error": self.std_errors,
            "t_value": self.t_values,
        })


def hedonic_design(cells: pd.DataFrame, names=HEDONIC_TERMS) -> np.ndarray:
    """Design matrix with columns in ``names`` order, read from a cell table."""
    dummies = city_dummies(cells) if "city" in cells.columns else {}
    cols = []
    for name in names:
        if name == "intercept":
            cols.append(np.ones(len(cells)))
        elif name in cells.columns:
            cols.append(cells[name].to_numpy(dtype=float))
        elif name in dummies:
            cols.append(dummies[name])
        else:
            raise DataError(f"missing hedonic covariate {name!r}")
    X = np.column_stack(cols) if cols else np.empty((len(cells), 0))
    if not np.all(np.isfinite(X)):
        raise DataError("hedonic covariates contain non-finite values")
    return X


def fit_ols(X: np.ndarray, y: np.ndarray, names=None) -> HedonicFit:
    """Least squares through a column-pivoted QR decomposition.

    The first column is taken to be the intercept when computing the F
    statistic (all remaining coefficients tested jointly).
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, k = X.shape
    names = tuple(names) if names is not None else tuple(f"x{i}" for i in range(k))
    if len(names) != k:
        raise DataError("names do not match the design columns")
    if y.shape != (n,):
        raise DataError("response length does not match the design")
    if n <= k:
        raise DomainError(f"need more observations than coefficients (n={n}, k={k})")

    Q, R, piv = scipy.linalg.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > RANK_TOLERANCE * diag[0])) if k else 0
    if rank < k:
        dropped = [names[i] for i in piv[rank:]]
        raise SingularDesignError(
            f"design matrix has rank {rank} < {k}; collinear columns: {', '.join(dropped)}",
            dropped,
        )
    beta_p = scipy.linalg.solve_triangular(R, Q.T @ y)
    beta = np.empty(k)
    beta[piv] = beta_p

    resid = y - X @ beta
    rss = float(resid @ resid)
    tss = float(((y - y.mean()) ** 2).sum())
    dof = n - k
    sigma2 = rss / dof
    r_inv = scipy.linalg.solve_triangular(R, np.eye(k))
    cov_p = sigma2 * (r_inv @ r_inv.T)
    se = np.empty(k)
    se[piv] = np.sqrt(np.diag(cov_p))
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(se > 0, beta / se, np.nan)
        r2 = 1.0 - rss / tss if tss > 0 else np.nan
        adj = 1.0 - (1.0 - r2) * (n - 1) / dof
        f = ((tss - rss) / (k - 1)) / (rss / dof) if k > 1 else np.nan
    return HedonicFit(names, beta, se, t, float(r2), float(adj), float(f), n, resid)


def fit_hedonic(cells: pd.DataFrame, names=HEDONIC_TERMS, drop_collinear: bool = False) -> HedonicFit:
    """Fit log land price on the standard covariates of a cell table.

    Parameters
    ----------
    cells : DataFrame
        Cell table with ``land_price`` and the covariates behind ``names``.
    names : sequence of str
        Model terms, ``intercept`` included when wanted.
    drop_collinear : bool
        When the design is rank deficient, drop one offending term at a time
        (never the intercept) and refit, instead of raising.  Small regions
        often lack a city or land-use class entirely.  Dropped terms are
        listed in ``HedonicFit.dropped``.
    """
    price = cells["land_price"].to_numpy(dtype=float)
    if np.any(price <= 0):
        raise DataError("land prices must be positive to take logs")
    y = np.log(price)
    names = tuple(names)
    dropped: list[str] = []
    while True:
        try:
            fit = fit_ols(hedonic_design(cells, names), y, names)
        except SingularDesignError:
            if not drop_collinear:
                raise
            # terms with weight in a null-space direction take part in the dependency
            X = hedonic_design(cells, names)
            null = scipy.linalg.null_space(X / np.maximum(np.abs(X).max(axis=0), 1e-300))
            involved = np.abs(null).max(axis=1) > 1e-8 if null.size else np.zeros(len(names), bool)
            candidates = [n for n, hit in zip(names, involved) if hit and n != "intercept"]
            if not candidates:
                raise
            dropped.append(candidates[-1])
            names = tuple(n for n in names if n != candidates[-1])
            continue
        return replace(fit, dropped=tuple(dropped))


def linear_predictor(coefficients: Mapping[str, float] | HedonicFit,
                     cells: pd.DataFrame) -> np.ndarray:
    coef = coefficients.coefficient_map() if isinstance(coefficients, HedonicFit) else dict(coefficients)
    names = tuple(coef)
    X = hedonic_design(cells, names)
    return X @ np.array([coef[n] for n in names])


def predict_land_price(coefficients: Mapping[str, float] | HedonicFit,
                       cells: pd.DataFrame) -> np.ndarray:
    """Land price (JPY per square meter) as ``exp`` of the linear predictor."""
    return np.exp(linear_predictor(coefficients, cells))
