"""Density-guided random walk on the neighbourhood graph.

The walk from ``X_i`` moves to a neighbour ``X_j`` with probability
proportional to ``1 + (beta - 1) * f(X_i) / f(X_j)`` (clamped at zero).
One step stands for ``radius**2 / ((d + 2) * beta)`` units of diffusion
time, which makes the walk's local covariance per unit time ``beta * I``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .data import PointCloud
from .density import DensityEstimate
from .graph import NeighborhoodGraph

__all__ = [
    "TransitionKernel",
    "WalkDiagnostics",
    "Trajectory",
    "build_kernel",
    "step_time",
    "printed_step_time",
    "simulate_walk",
    "nearest_vertex",
    "diagnostics",
    "block_rng",
    "RowSampler",
]


@dataclass(frozen=True, eq=False)
class TransitionKernel:
    """Row-stochastic CSR matrix over the sample plus its calibration."""

    rows: sp.csr_matrix
    beta: float
    step_time: float
    radius: float
    clamp_count: int = 0

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    def row(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        k = self.rows
        sl = slice(k.indptr[i], k.indptr[i + 1])
        return k.indices[sl], k.data[sl]


def step_time(radius: float, d: int, beta: float) -> float:
    """Diffusion time of one walk step, ``radius**2 / ((d + 2) * beta)``."""
    _check_step_args(radius, d, beta)
    return radius * radius / ((d + 2) * beta)


def printed_step_time(radius: float, d: int, beta: float) -> float:
    """The alternative constant Gamma(1+d/2) h^2 / (2 beta Gamma(1+(d+1)/2)).

    Kept only for comparison against :func:`step_time`; it does not match
    the second moment of the uniform ball.
    """
    _check_step_args(radius, d, beta)
    return math.gamma(1 + d / 2) * radius ** 2 / (beta * math.gamma(1 + (d + 1) / 2) * 2)


def _check_step_args(radius, d, beta):
    if not radius > 0:
        raise ValueError(f"radius must be > 0, got {radius}")
    if int(d) != d or d < 1:
        raise ValueError(f"dimension must be a positive integer, got {d}")
    if not beta > 0:
        raise ValueError(f"beta must be > 0, got {beta}")


def build_kernel(graph: NeighborhoodGraph, density: DensityEstimate, beta: float) -> TransitionKernel:
    """Build the transition matrix of the walk on ``graph``.

    Parameters
    ----------
    graph : NeighborhoodGraph
    density : DensityEstimate
        Values at the same points the graph was built on.
    beta : float
        Temperature, > 0.

    Notes
    -----
    For ``beta < 1`` a raw weight goes negative when the neighbour is much
    less dense than the current point. Such weights are clamped to zero and
    counted in ``clamp_count``. A row whose weights all vanish becomes a
    self-loop.
    """
    if not (beta > 0 and math.isfinite(beta)):
        raise ValueError(f"beta must be a positive finite number, got {beta}")
    f = np.asarray(density.values, dtype=float)
    n = graph.n
    if f.shape != (n,):
        raise ValueError(f"density has {f.shape[0]} values but the graph has {n} vertices")
    if not np.all(f > 0):
        raise ValueError("density values must be strictly positive")
    adj = graph.adjacency
    row = np.repeat(np.arange(n), np.diff(adj.indptr))
    col = adj.indices
    w = 1.0 + (beta - 1.0) * (f[row] / f[col])
    neg = w < 0
    clamp_count = int(np.count_nonzero(neg))
    w[neg] = 0.0
    totals = np.bincount(row, weights=w, minlength=n)
    dead = totals <= 0
    if np.any(dead):
        w[dead[row]] = 0.0
        w[dead[row] & (row == col)] = 1.0
        totals[dead] = 1.0
    probs = w / totals[row]
    k = sp.csr_matrix((probs, col.copy(), adj.indptr.copy()), shape=(n, n))
    k.eliminate_zeros()
    k.sort_indices()
    return TransitionKernel(k, float(beta), step_time(graph.radius, graph.dim, beta),
                            graph.radius, clamp_count)


def block_rng(seed: int, block: int) -> np.random.Generator:
    """Independent stream number ``block`` derived from a root seed."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(block,))))


class RowSampler:
    """Vectorised next-state sampling from a CSR stochastic matrix."""

    def __init__(self, kernel: TransitionKernel):
        k = kernel.rows
        self.indptr = k.indptr
        self.indices = k.indices
        n = k.shape[0]
        row = np.repeat(np.arange(n), np.diff(k.indptr))
        cum = np.cumsum(k.data)
        starts = np.concatenate([[0.0], cum])[k.indptr[:-1]]
        # within-row cumulative mass, shifted by 2*row so the array is globally sorted
        self.keys = (cum - starts[row]) + 2.0 * row
        if np.any(np.diff(self.indptr) == 0):
            raise RuntimeError("transition matrix has an empty row")

    def step(self, states: np.ndarray, u: np.ndarray) -> np.ndarray:
        pos = np.searchsorted(self.keys, 2.0 * states + u, side="right")
        pos = np.minimum(pos, self.indptr[states + 1] - 1)
        return self.indices[pos]


@dataclass(frozen=True)
class Trajectory:
    visited: np.ndarray
    absorbed_in: int | None

    @property
    def steps(self) -> int:
        return len(self.visited) - 1


def _core_lookup(n: int, absorbing) -> np.ndarray:
    label = np.full(n, -1, dtype=np.int64)
    for c, members in enumerate(absorbing):
        members = np.asarray(list(members), dtype=np.int64)
        if np.any(label[members] >= 0):
            raise ValueError("absorbing sets must be disjoint")
        label[members] = c
    return label


def simulate_walk(kernel: TransitionKernel, start: int, absorbing, max_steps: int,
                  seed: int = 0) -> Trajectory:
    """Run one trajectory until it enters an absorbing set or ``max_steps`` elapse.

    ``absorbed_in`` is the 0-based index into ``absorbing``, or None.
    """
    n = kernel.n
    if not 0 <= start < n:
        raise IndexError(f"start vertex {start} out of range")
    if max_steps < 0:
        raise ValueError("max_steps must be >= 0")
    label = _core_lookup(n, absorbing)
    sampler = RowSampler(kernel)
    rng = np.random.default_rng(seed)
    state = int(start)
    visited = [state]
    if label[state] >= 0:
        return Trajectory(np.array(visited), int(label[state]))
    for _ in range(max_steps):
        state = int(sampler.step(np.array([state]), rng.random(1))[0])
        visited.append(state)
        if label[state] >= 0:
            return Trajectory(np.array(visited), int(label[state]))
    return Trajectory(np.array(visited), None)


def nearest_vertex(cloud: PointCloud, query) -> int:
    """Index of the closest sample point; ties go to the smallest index."""
    q = np.asarray(query, dtype=float).reshape(-1)
    if q.shape[0] != cloud.dim:
        raise ValueError(f"query has dimension {q.shape[0]}, cloud has {cloud.dim}")
    dist = np.sqrt(((cloud.points - q) ** 2).sum(axis=1))
    return int(np.argmin(dist))


@dataclass(frozen=True)
class WalkDiagnostics:
    """Per-probe local moments of the walk, scaled by the step time.

    ``a_hat`` (m, d, d) is the second moment of one step divided by s,
    ``b_hat`` (m, d) the mean step divided by s and ``delta`` (m,) the mass
    leaving the gamma-ball divided by s.
    """

    probes: np.ndarray
    a_hat: np.ndarray
    b_hat: np.ndarray
    delta: np.ndarray
    gamma: float
    step_time: float


def diagnostics(kernel: TransitionKernel, cloud: PointCloud, probe_points, gamma: float) -> WalkDiagnostics:
    if not gamma > 0:
        raise ValueError(f"gamma must be > 0, got {gamma}")
    probes = np.asarray(probe_points, dtype=np.int64).reshape(-1)
    pts = cloud.points
    d = cloud.dim
    s = kernel.step_time
    a_hat = np.empty((len(probes), d, d))
    b_hat = np.empty((len(probes), d))
    delta = np.empty(len(probes))
    for m, i in enumerate(probes):
        idx, p = kernel.row(int(i))
        disp = pts[idx] - pts[i]
        weighted = disp * p[:, None]
        a_hat[m] = weighted.T @ disp / s
        # elementwise products then a plain sum: symmetric neighbours cancel exactly
        b_hat[m] = weighted.sum(axis=0) / s
        far = np.sqrt((disp ** 2).sum(axis=1)) > gamma
        delta[m] = p[far].sum() / s
    return WalkDiagnostics(probes, a_hat, b_hat, delta, float(gamma), s)
