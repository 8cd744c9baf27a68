"""Cell-centroid road network: edge tables and shortest-path distances."""
from __future__ import annotations

import numpy as np
import pandas as pd
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from .domain import cell_positions
from .errors import DataError

EDGE_COLUMNS = ("from_cell", "to_cell", "length_m")


def adjacency_matrix(cells: pd.DataFrame, edges: pd.DataFrame) -> csr_matrix:
    """Symmetric sparse adjacency with edge lengths in meters.

    Parallel edges keep the shortest length.
    """
    n = len(cells)
    if len(edges) == 0:
        return csr_matrix((n, n))
    lengths = edges["length_m"].to_numpy(dtype=float)
    if np.any(~np.isfinite(lengths)) or np.any(lengths < 0):
        raise DataError("edge lengths must be finite and non-negative")
    a = cell_positions(cells, edges["from_cell"].to_numpy())
    b = cell_positions(cells, edges["to_cell"].to_numpy())
    # csr_matrix sums duplicate entries, so drop all but the shortest first
    rows = np.concatenate([a, b])
    cols = np.concatenate([b, a])
    vals = np.concatenate([lengths, lengths])
    order = np.lexsort((vals, cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    keep = np.ones(len(rows), dtype=bool)
    keep[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
    rows, cols, vals = rows[keep], cols[keep], vals[keep]
    # csgraph treats explicit zeros as missing edges; nudge zero-length links
    vals = np.where(vals == 0, 1e-12, vals)
    return csr_matrix((vals, (rows, cols)), shape=(n, n))


def all_pairs_distances(cells: pd.DataFrame, edges: pd.DataFrame) -> np.ndarray:
    """Dense matrix of shortest-path distances (meters); ``inf`` when disconnected."""
    graph = adjacency_matrix(cells, edges)
    d = dijkstra(graph, directed=False)
    # both triangles hold valid path lengths; summation order can make them
    # differ in the last bit, so keep the smaller to be exactly symmetric
    return np.minimum(d, d.T)


def euclidean_distances(cells: pd.DataFrame) -> np.ndarray:
    xy = cells[["x", "y"]].to_numpy(dtype=float)
    diff = xy[:, None, :] - xy[None, :, :]
    return np.sqrt((diff ** 2).sum(axis=-1))


def grid_edges(cells: pd.DataFrame, n_cols: int, diagonal: bool = True) -> pd.DataFrame:
    """Edges between grid neighbours of a row-major grid of ``n_cols`` columns.

    Edge lengths are the centroid distances.
    """
    n = len(cells)
    ids = cells["cell_id"].to_numpy()
    xy = cells[["x", "y"]].to_numpy(dtype=float)
    offsets = [(0, 1), (1, 0)]
    if diagonal:
        offsets += [(1, 1), (1, -1)]
    rows = []
    for i in range(n):
        r, c = divmod(i, n_cols)
        for dr, dc in offsets:
            rr, cc = r + dr, c + dc
            if cc < 0 or cc >= n_cols:
                continue
            j = rr * n_cols + cc
            if j >= n:
                continue
            rows.append((ids[i], ids[j], float(np.hypot(*(xy[i] - xy[j])))))
    return pd.DataFrame(rows, columns=list(EDGE_COLUMNS))
