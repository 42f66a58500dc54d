"""Prominence-based hard clustering on the graph and cluster-core extraction.

Vertices are swept in decreasing log-density. Each one either opens a new
peak or joins the cluster of its highest already-swept neighbour; when it
bridges two clusters, the one with the lower peak is absorbed if its
prominence (peak height minus current level) is below ``kappa``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse.csgraph import connected_components

from .density import DensityEstimate
from .graph import NeighborhoodGraph

__all__ = [
    "HardClustering",
    "ClusterCores",
    "hard_cluster",
    "extract_cores",
    "single_point_cores",
]

UNASSIGNED = -1


@dataclass(frozen=True, eq=False)
class HardClustering:
    """Retained peaks in decreasing height and the basin assignment.

    ``assignment[i]`` is the position of i's peak in ``peak_vertices``, or
    -1 for vertices with no neighbour besides themselves. ``prominence`` is
    the peak's log-density minus the level at which its connected part of
    the superlevel graph first joins a higher peak (inf if it never does).
    """

    peak_vertices: np.ndarray
    prominence: np.ndarray
    assignment: np.ndarray
    kappa: float
    peak_values: np.ndarray

    @property
    def k(self) -> int:
        return len(self.peak_vertices)


@dataclass(frozen=True, eq=False)
class ClusterCores:
    cores: tuple
    kappa: float
    peaks: np.ndarray | None = None

    @property
    def k(self) -> int:
        return len(self.cores)

    def labels(self, n: int) -> np.ndarray:
        """Per-vertex core index (0-based) or -1 outside every core."""
        out = np.full(n, -1, dtype=np.int64)
        for c, members in enumerate(self.cores):
            if np.any(out[members] >= 0):
                raise ValueError("cluster cores overlap")
            out[members] = c
        return out


def _find(parent, i):
    root = i
    while parent[root] != root:
        root = parent[root]
    while parent[i] != root:
        parent[i], i = root, parent[i]
    return root


def _check_kappa(kappa):
    if not kappa > 0:
        raise ValueError(f"kappa must be > 0, got {kappa}")


def hard_cluster(graph: NeighborhoodGraph, density: DensityEstimate, kappa: float) -> HardClustering:
    """Mode-seeking clustering with prominence threshold ``kappa``.

    Ties in log-density are swept by increasing vertex index, and the
    "highest neighbour" tie goes to the smaller index, which is the same
    thing as taking the earliest-swept neighbour.
    """
    _check_kappa(kappa)
    g = np.log(np.asarray(density.values, dtype=float))
    n = graph.n
    if g.shape != (n,):
        raise ValueError("density and graph sizes differ")
    order = np.lexsort((np.arange(n), -g))
    rank = np.empty(n, dtype=np.int64)
    rank[order] = np.arange(n)
    adj = graph.adjacency
    indptr, indices = adj.indptr, adj.indices
    gl = g.tolist()

    parent = list(range(n))
    # plain connectivity of the swept subgraph, for reporting prominence
    conn = list(range(n))
    swept = [False] * n
    prominence = {}
    first_meet = {}
    isolated = np.diff(indptr) <= 1
    attach = np.full(n, -1, dtype=np.int64)

    for v in order.tolist():
        if isolated[v]:
            swept[v] = True
            continue
        nbrs = [u for u in indices[indptr[v]:indptr[v + 1]].tolist() if swept[u]]
        swept[v] = True
        if not nbrs:
            continue
        best = min(nbrs, key=rank.__getitem__)
        attach[v] = best
        parent[v] = _find(parent, best)
        conn[v] = _find(conn, best)
        for u in nbrs:
            cu, cv = _find(conn, u), _find(conn, v)
            if cu != cv:
                chigh, clow = (cu, cv) if rank[cu] < rank[cv] else (cv, cu)
                prominence[clow] = gl[clow] - gl[v]
                conn[clow] = chigh
            ru = _find(parent, u)
            rv = _find(parent, v)
            if ru == rv:
                continue
            high, low = (ru, rv) if rank[ru] < rank[rv] else (rv, ru)
            # the merge test uses the level at which the lower cluster first meets a higher one
            if low not in first_meet:
                first_meet[low] = gl[low] - gl[v]
            if first_meet[low] < kappa:
                parent[low] = high

    roots = np.array([_find(parent, i) for i in range(n)], dtype=np.int64)
    is_peak = (roots == np.arange(n)) & ~isolated
    peaks = order[is_peak[order]]
    slot = np.full(n, UNASSIGNED, dtype=np.int64)
    slot[peaks] = np.arange(len(peaks))
    assignment = np.where(isolated, UNASSIGNED, slot[roots])
    prom = np.array([prominence.get(int(p), math.inf) for p in peaks], dtype=float)
    return HardClustering(peaks, prom, assignment, float(kappa), g[peaks])


def extract_cores(graph: NeighborhoodGraph, density: DensityEstimate,
                  clustering: HardClustering, kappa: float) -> ClusterCores:
    """Core i = component of ``{x : log f(x) > log f(v_i) - kappa}`` holding peak v_i."""
    _check_kappa(kappa)
    if kappa != clustering.kappa:
        raise ValueError(f"cores requested with kappa={kappa} but the clustering used {clustering.kappa}")
    g = np.log(np.asarray(density.values, dtype=float))
    adj = graph.adjacency
    cores = []
    for v in clustering.peak_vertices.tolist():
        keep = np.flatnonzero(g > g[v] - kappa)
        sub = adj[keep][:, keep]
        _, lab = connected_components(sub, directed=False)
        pos = np.searchsorted(keep, v)
        cores.append(keep[lab == lab[pos]])
    return ClusterCores(tuple(cores), float(kappa), clustering.peak_vertices.copy())


def single_point_cores(clustering: HardClustering) -> ClusterCores:
    """Degenerate cores made of the peak vertices alone."""
    cores = tuple(np.array([v], dtype=np.int64) for v in clustering.peak_vertices.tolist())
    return ClusterCores(cores, clustering.kappa, clustering.peak_vertices.copy())
