"""Radius neighbourhood graphs and their connected components."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .data import PointCloud

__all__ = ["NeighborhoodGraph", "build_graph", "components", "write_edge_list"]


@dataclass(frozen=True, eq=False)
class NeighborhoodGraph:
    """Symmetric radius graph with self-loops.

    ``adjacency`` is a boolean CSR matrix with sorted column indices, so
    ``neighbors(i)`` is already the sorted adjacency list of ``i``.
    """

    radius: float
    adjacency: sp.csr_matrix
    component_id: np.ndarray
    dim: int = 1

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    def neighbors(self, i: int) -> np.ndarray:
        a = self.adjacency
        return a.indices[a.indptr[i]:a.indptr[i + 1]]

    def degree(self) -> np.ndarray:
        return np.diff(self.adjacency.indptr)

    def edges(self) -> np.ndarray:
        """Undirected edges ``(i, j)`` with ``i < j``, self-loops omitted."""
        coo = sp.triu(self.adjacency, k=1).tocoo()
        order = np.lexsort((coo.col, coo.row))
        return np.column_stack([coo.row[order], coo.col[order]])


def _pair_distance(points, i, j):
    return np.sqrt(((points[i] - points[j]) ** 2).sum(axis=1))


def build_graph(cloud: PointCloud, radius: float) -> NeighborhoodGraph:
    """Connect every pair at Euclidean distance <= ``radius``.

    The k-d tree only proposes candidate pairs (with a slightly inflated
    radius); each pair is then kept or dropped by the same distance
    expression a brute-force double loop would use.
    """
    if not radius > 0:
        raise ValueError(f"radius must be > 0, got {radius}")
    pts = cloud.points
    n = cloud.n
    tree = cKDTree(pts)
    pairs = tree.query_pairs(r=radius * (1 + 1e-9), output_type="ndarray")
    if len(pairs):
        keep = _pair_distance(pts, pairs[:, 0], pairs[:, 1]) <= radius
        pairs = pairs[keep]
    diag = np.arange(n)
    rows = np.concatenate([pairs[:, 0], pairs[:, 1], diag])
    cols = np.concatenate([pairs[:, 1], pairs[:, 0], diag])
    adj = sp.csr_matrix((np.ones(len(rows), dtype=bool), (rows, cols)), shape=(n, n))
    adj.sort_indices()
    return NeighborhoodGraph(float(radius), adj, _component_labels(adj), cloud.dim)


def _component_labels(adj) -> np.ndarray:
    _, raw = connected_components(adj, directed=False)
    # relabel each component by the smallest vertex it contains
    first = np.full(raw.max() + 1, len(raw), dtype=np.int64)
    np.minimum.at(first, raw, np.arange(len(raw)))
    return first[raw]


def components(graph: NeighborhoodGraph) -> np.ndarray:
    """Component id per vertex; the id is the smallest vertex index in the component."""
    return graph.component_id.copy()


def write_edge_list(graph: NeighborhoodGraph, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "j"])
        w.writerows(graph.edges().tolist())
