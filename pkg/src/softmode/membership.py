"""Cluster memberships as hitting probabilities of the absorbing walk.

Column i (1..k) of the membership matrix is the probability that the walk
started at a vertex enters core i before any other core; column 0 holds the
remaining mass (never absorbed). On transient vertices each column is
harmonic, ``mu(v) = sum_u K(v, u) mu(u)``, with boundary values 1 on its own
core and 0 on the others.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import breadth_first_order
from scipy.sparse.linalg import splu

from .data import PointCloud
from .graph import NeighborhoodGraph
from .modeseek import ClusterCores
from .walk import RowSampler, TransitionKernel, block_rng, nearest_vertex

__all__ = [
    "MembershipMatrix",
    "ConvergenceError",
    "solve_membership",
    "membership_at",
    "monte_carlo_membership",
    "harmonic_residual",
]

METHODS = ("direct", "iterative")
DEFAULT_TOL = {"direct": 1e-10, "iterative": 1e-8}
DEFAULT_MAX_ITERS = 1_000_000
# permitted negative excess before the never-absorbed column is floored at 0
NEGATIVE_SLACK = 1e-9
# iterations over which the contraction rate of the iterative solve is measured
RATE_WINDOW = 1000
# walkers simulated together per random stream
WALK_BLOCK = 4096


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class MembershipMatrix:
    mu: np.ndarray
    method: str = "direct"
    iterations: int = 0
    residual: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def k(self) -> int:
        return self.mu.shape[1] - 1

    def argmax_label(self) -> np.ndarray:
        """0 for never-absorbed-dominant rows, else the 1-based cluster index."""
        return np.argmax(self.mu, axis=1)


def _transient_set(kernel: TransitionKernel, core_label: np.ndarray) -> np.ndarray:
    """Non-core vertices from which some core is reachable under the kernel."""
    in_core = np.flatnonzero(core_label >= 0)
    n = kernel.n
    if len(in_core) == 0:
        return np.zeros(n, dtype=bool)
    # reverse reachability: walk the transposed kernel from a virtual sink
    rev = kernel.rows.T.tocsr()
    sink = sp.csr_matrix((np.ones(len(in_core)), (np.full(len(in_core), n), in_core)), shape=(n + 1, n + 1))
    big = sp.bmat([[rev, None], [None, sp.csr_matrix((1, 1))]], format="csr") + sink
    reached = breadth_first_order(big, n, directed=True, return_predecessors=False)
    mask = np.zeros(n + 1, dtype=bool)
    mask[reached] = True
    return mask[:n] & (core_label < 0)


def _remaining_error(history) -> float:
    """Extrapolated distance to the fixed point from the recent sup-norm changes.

    The contraction rate is the geometric mean ratio over the window; a
    single-step ratio is too noisy once changes approach rounding level.
    """
    m = len(history) - 1
    rho = (history[-1] / history[0]) ** (1.0 / m)
    if rho >= 1:
        return math.inf
    return history[-1] * rho / (1 - rho)


def harmonic_residual(kernel: TransitionKernel, mu: np.ndarray, cores: ClusterCores) -> float:
    """Largest |mu(v) - (K mu)(v)| over non-core vertices (columns 1..k)."""
    label = cores.labels(kernel.n)
    free = label < 0
    if not np.any(free):
        return 0.0
    r = mu[:, 1:] - kernel.rows @ mu[:, 1:]
    return float(np.abs(r[free]).max())


def solve_membership(kernel: TransitionKernel, graph: NeighborhoodGraph | None, cores: ClusterCores,
                     method: str = "direct", tol: float | None = None,
                     max_iters: int = DEFAULT_MAX_ITERS) -> MembershipMatrix:
    """Hitting probabilities of every core from every vertex.

    Parameters
    ----------
    kernel : TransitionKernel
    graph : NeighborhoodGraph or None
        Only used to check that kernel and graph describe the same sample.
    cores : ClusterCores
        Non-empty, pairwise disjoint vertex sets.
    method : {"direct", "iterative"}
        ``direct`` factorises ``I - Q`` on the transient block. ``iterative``
        repeats ``mu <- K mu`` on non-core vertices starting from the core
        indicators; it stops once the sup-norm change and the extrapolated
        distance to the fixed point, ``change * rho / (1 - rho)`` with
        ``rho`` the contraction rate observed over the last (up to) 1000
        iterations, are both below ``tol``.
    tol : float, optional
        Defaults to 1e-10 (direct residual check) or 1e-8 (iterative).
    max_iters : int

    Returns
    -------
    MembershipMatrix
        ``mu`` has shape (n, k + 1).

    Raises
    ------
    ConvergenceError
        The iteration did not settle within ``max_iters``, the direct
        residual exceeded ``tol``, or rounding pushed the never-absorbed
        mass below ``-1e-9``.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    tol = DEFAULT_TOL[method] if tol is None else float(tol)
    if not tol > 0:
        raise ValueError("tol must be > 0")
    n = kernel.n
    if graph is not None and graph.n != n:
        raise ValueError("kernel and graph are built on different samples")
    if cores.k == 0 or any(len(c) == 0 for c in cores.cores):
        raise ValueError("cores must be non-empty")
    label = cores.labels(n)
    k = cores.k
    # boundary values: indicator of the own core, zero on other cores
    boundary = np.zeros((n, k))
    hit = label >= 0
    boundary[np.flatnonzero(hit), label[hit]] = 1.0
    transient = _transient_set(kernel, label)
    t_idx = np.flatnonzero(transient)

    mu = boundary.copy()
    iterations = 0
    if len(t_idx):
        K = kernel.rows
        Q = K[t_idx][:, t_idx].tocsc()
        rhs = np.asarray(K[t_idx] @ boundary)
        if method == "direct":
            lu = splu(sp.identity(len(t_idx), format="csc") - Q)
            mu[t_idx] = lu.solve(rhs)
        else:
            Qr = Q.tocsr()
            x = np.zeros_like(rhs)
            history = deque(maxlen=RATE_WINDOW + 1)
            while True:
                if iterations >= max_iters:
                    raise ConvergenceError(f"iterative solve did not converge in {max_iters} iterations")
                x_new = Qr @ x + rhs
                iterations += 1
                change = float(np.abs(x_new - x).max()) if x.size else 0.0
                x = x_new
                if change == 0.0:
                    break
                history.append(change)
                if change < tol and len(history) > 1:
                    if _remaining_error(history) < tol:
                        break
            mu[t_idx] = x

    residual = harmonic_residual(kernel, np.column_stack([np.zeros(n), mu]), cores) if len(t_idx) else 0.0
    if method == "direct" and residual > tol:
        raise ConvergenceError(f"direct solve residual {residual:.3e} exceeds tol {tol:.1e}")

    np.clip(mu, 0.0, 1.0, out=mu)
    total = mu.sum(axis=1)
    excess = total - 1.0
    if np.any(excess > NEGATIVE_SLACK):
        raise ConvergenceError(f"membership rows exceed 1 by {excess.max():.3e}")
    over = excess > 0
    mu[over] /= total[over, None]
    mu0 = np.maximum(1.0 - mu.sum(axis=1), 0.0)
    out = np.column_stack([mu0, mu])
    return MembershipMatrix(out, method, iterations, residual,
                            {"tol": tol, "transient": int(len(t_idx)),
                             "unreachable": int(n - len(t_idx) - int(hit.sum()))})


def membership_at(query, cloud: PointCloud, membership: MembershipMatrix) -> np.ndarray:
    """Membership of an arbitrary point: the row of its nearest sample vertex."""
    return membership.mu[nearest_vertex(cloud, query)].copy()


def monte_carlo_membership(kernel: TransitionKernel, cores: ClusterCores, start: int,
                           n_walks: int, max_steps: int, seed: int = 0) -> np.ndarray:
    """Empirical absorption frequencies from ``start``.

    Returns a (k + 1)-vector; entry 0 collects walks still unabsorbed after
    ``max_steps``. Walks are simulated in blocks of 4096, block b drawing
    from stream ``block_rng(seed, b)``, so any split of the blocks across
    workers reproduces the serial result.
    """
    if n_walks < 1:
        raise ValueError("n_walks must be >= 1")
    if max_steps < 0:
        raise ValueError("max_steps must be >= 0")
    n = kernel.n
    if not 0 <= start < n:
        raise IndexError(f"start vertex {start} out of range")
    label = cores.labels(n)
    counts = np.zeros(cores.k + 1, dtype=np.int64)
    if label[start] >= 0:
        counts[label[start] + 1] = n_walks
        return counts / n_walks
    sampler = RowSampler(kernel)
    for b, lo in enumerate(range(0, n_walks, WALK_BLOCK)):
        counts += _walk_block(sampler, label, start, min(WALK_BLOCK, n_walks - lo),
                              max_steps, block_rng(seed, b), cores.k)
    return counts / n_walks


def _walk_block(sampler, label, start, m, max_steps, rng, k):
    counts = np.zeros(k + 1, dtype=np.int64)
    states = np.full(m, start, dtype=np.int64)
    for _ in range(max_steps):
        if len(states) == 0:
            break
        states = sampler.step(states, rng.random(len(states)))
        lab = label[states]
        done = lab >= 0
        if np.any(done):
            counts[1:] += np.bincount(lab[done], minlength=k)
            states = states[~done]
    counts[0] += len(states)
    return counts
