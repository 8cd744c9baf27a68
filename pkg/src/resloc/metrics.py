"""Evaluation indicators: distance to the nearest DAA/UFAA, DAA shares, changes."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import pandas as pd
from scipy.sparse.csgraph import dijkstra

from .errors import DataError, DomainError, EmptySummaryError
from .network import adjacency_matrix, euclidean_distances

FILTER_THRESHOLD_M = 10_000.0
DEFAULT_BINS_M = (0, 1000, 2000, 3000, 4000, 5000, 7500, 10_000, 15_000, np.inf)


class DistanceOracle:
    """Distances between cell centroids over the road network.

    ``mode="euclidean"`` skips the network. In graph mode a residence that
    cannot reach any target gets ``inf`` (``disconnected="sentinel"``) or the
    straight-line distance (``disconnected="euclidean"``).
    """

    def __init__(self, cells: pd.DataFrame, edges: pd.DataFrame | None = None,
                 mode: str = "graph", disconnected: str = "sentinel"):
        if mode not in ("graph", "euclidean"):
            raise DomainError(f"unknown distance mode {mode!r}")
        if disconnected not in ("sentinel", "euclidean"):
            raise DomainError(f"unknown disconnected policy {disconnected!r}")
        if mode == "graph" and edges is None:
            raise DataError("graph mode needs an edge table")
        self.cells = cells
        self.mode = mode
        self.disconnected = disconnected
        self._graph = adjacency_matrix(cells, edges) if mode == "graph" else None
        self._cache: dict[tuple[int, ...], np.ndarray] = {}
        self._euclid = None

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    def _euclidean(self) -> np.ndarray:
        if self._euclid is None:
            self._euclid = euclidean_distances(self.cells)
        return self._euclid

    def to_nearest(self, targets) -> np.ndarray:
        """Distance from every cell to its nearest target (cell positions or mask)."""
        targets = np.asarray(targets)
        if targets.dtype == bool:
            targets = np.flatnonzero(targets)
        key = tuple(sorted(set(int(t) for t in targets)))
        if not key:
            raise DomainError("target set is empty")
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        idx = np.array(key)
        if self.mode == "euclidean":
            d = self._euclidean()[:, idx].min(axis=1)
        else:
            d = dijkstra(self._graph, directed=False, indices=idx, min_only=True)
            if self.disconnected == "euclidean":
                lost = ~np.isfinite(d)
                if lost.any():
                    d[lost] = self._euclidean()[np.ix_(lost, idx)].min(axis=1)
        d[idx] = 0.0
        d.setflags(write=False)
        self._cache[key] = d
        return d

    def pairwise(self, a: int, b: int) -> float:
        if self.mode == "euclidean":
            return float(self._euclidean()[a, b])
        return float(dijkstra(self._graph, directed=False, indices=a)[b])


def nearest_target_distance(oracle: DistanceOracle, residence, targets) -> float | np.ndarray:
    """Meters from residence cell position(s) to the closest target cell."""
    d = oracle.to_nearest(targets)
    return d[residence] if np.ndim(residence) else float(d[int(residence)])


@dataclass(frozen=True)
class Summary:
    n: int
    mean: float
    median: float
    min: float
    max: float
    std: float
    n_excluded: int = 0


def summarize(values: Sequence[float], filter_threshold: float | None = None) -> Summary:
    """Mean, median, min, max and population standard deviation.

    Non-finite values (disconnected residences) are dropped and counted in
    ``n_excluded``; with ``filter_threshold`` so are values strictly above it.
    """
    v = np.asarray(values, dtype=float)
    keep = np.isfinite(v)
    if filter_threshold is not None:
        keep &= v <= filter_threshold
    kept = v[keep]
    if kept.size == 0:
        raise EmptySummaryError("nothing left to summarize")
    return Summary(int(kept.size), float(kept.mean()), float(np.median(kept)),
                   float(kept.min()), float(kept.max()), float(kept.std()),
                   int(v.size - kept.size))


def daa_share(final_cells: Sequence[int], cells: pd.DataFrame) -> float:
    """Fraction of households whose cell (row position) lies in a DAA."""
    pos = np.asarray(final_cells)
    if pos.size == 0:
        raise DomainError("no households")
    in_daa = cells["in_daa"].to_numpy(dtype=bool)
    return float(in_daa[pos].mean())


def percent_change(value: float, baseline: float) -> float:
    if baseline == 0:
        raise DomainError("percent change against a zero baseline")
    return 100.0 * (value - baseline) / baseline


def format_percent(x: float) -> str:
    """One decimal with an explicit sign, e.g. ``+7.2%``."""
    s = f"{x:+.1f}%"
    return "+0.0%" if s == "-0.0%" else s


def distance_histogram(distances: Sequence[float], bin_edges: Sequence[float] = DEFAULT_BINS_M) -> np.ndarray:
    """Share of values per bin ``[e_i, e_i+1)``; values outside every bin are ignored."""
    edges = np.asarray(bin_edges, dtype=float)
    if edges.ndim != 1 or edges.size < 2 or np.any(np.diff(edges) <= 0):
        raise DomainError("bin edges must be strictly increasing")
    v = np.asarray(distances, dtype=float)
    idx = np.searchsorted(edges, v, side="right") - 1
    inside = (idx >= 0) & (idx < edges.size - 1)
    counts = np.bincount(idx[inside], minlength=edges.size - 1).astype(float)
    total = counts.sum()
    return counts / total if total else counts


# ---------------------------------------------------------------------------
# indicator reports

INDICATOR_ORDER = (
    "daa_mean", "daa_median", "daa_min", "daa_max", "daa_std",
    "daa_f_mean", "daa_f_median", "daa_f_min", "daa_f_max", "daa_f_std",
    "ufaa_mean", "ufaa_median", "ufaa_min", "ufaa_max", "ufaa_std",
    "ufaa_f_mean", "ufaa_f_median", "ufaa_f_min", "ufaa_f_max", "ufaa_f_std",
    "daa_households", "daa_share", "n_households", "n_excluded",
)


def indicators(final_cells: np.ndarray, cells: pd.DataFrame, oracle: DistanceOracle,
               threshold: float = FILTER_THRESHOLD_M) -> dict[str, float]:
    """All evaluation indicators for one set of household locations."""
    final_cells = np.asarray(final_cells)
    out: dict[str, float] = {}
    excluded = 0
    for area, col in (("daa", "in_daa"), ("ufaa", "in_ufaa")):
        d = nearest_target_distance(oracle, final_cells, cells[col].to_numpy(dtype=bool))
        for tag, thr in ((area, None), (f"{area}_f", threshold)):
            s = summarize(d, thr)
            for stat in ("mean", "median", "min", "max", "std"):
                out[f"{tag}_{stat}"] = getattr(s, stat)
        excluded = max(excluded, int(np.sum(~np.isfinite(d))))
    share = daa_share(final_cells, cells)
    out["daa_households"] = float(round(share * len(final_cells)))
    out["daa_share"] = share
    out["n_households"] = float(len(final_cells))
    out["n_excluded"] = float(excluded)
    return {k: out[k] for k in INDICATOR_ORDER}


@dataclass(frozen=True)
class IndicatorReport:
    """Indicator values per scenario (rows) with changes against a baseline."""

    values: pd.DataFrame          # index: scenario, columns: INDICATOR_ORDER

    def __post_init__(self):
        bad = self.values[(self.values["daa_min"] > self.values["daa_median"])
                          | (self.values["daa_median"] > self.values["daa_max"])]
        if len(bad):
            raise DataError(f"inconsistent summary rows {list(bad.index)}")

    def changes(self, baseline: str, columns=("daa_median", "ufaa_median", "daa_share")) -> pd.DataFrame:
        if baseline not in self.values.index:
            raise DataError(f"baseline {baseline!r} not in report")
        base = self.values.loc[baseline]
        return pd.DataFrame({
            c: [percent_change(v, base[c]) for v in self.values[c]] for c in columns
        }, index=self.values.index)

    def to_frame(self) -> pd.DataFrame:
        return self.values.reset_index().rename(columns={"index": "scenario"})
