"""Kernel density estimates evaluated at the sample points."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

from .data import PointCloud

__all__ = [
    "KERNELS",
    "DensityEstimate",
    "unit_ball_volume",
    "default_bandwidth",
    "default_radius",
    "estimate_density",
    "evaluate_at",
]

KERNELS = ("gaussian", "ball")

# rows per block of the dense gaussian sum; keeps the distance block near 16 MB
_BLOCK_ELEMS = 2_000_000


@dataclass(frozen=True)
class DensityEstimate:
    values: np.ndarray
    bandwidth: float
    kernel_kind: str = "gaussian"

    @property
    def log_values(self) -> np.ndarray:
        return np.log(self.values)


def unit_ball_volume(d: int) -> float:
    return math.pi ** (d / 2) / math.gamma(1 + d / 2)


def default_bandwidth(cloud: PointCloud) -> float:
    """Rule-of-thumb scale n^(-1/(d+4)) times the mean per-axis standard deviation."""
    n, d = cloud.points.shape
    spread = float(np.mean(np.std(cloud.points, axis=0)))
    if spread <= 0:
        spread = 1.0
    return n ** (-1.0 / (d + 4)) * spread


def default_radius(bandwidth: float, kernel_kind: str = "gaussian") -> float:
    """Neighbourhood radius tied to the density scale: 3 sigma or the ball radius."""
    _check_kernel(kernel_kind)
    return 3.0 * bandwidth if kernel_kind == "gaussian" else bandwidth


def _check_kernel(kernel_kind):
    if kernel_kind not in KERNELS:
        raise ValueError(f"unknown kernel {kernel_kind!r}; expected one of {KERNELS}")


def _check_bandwidth(bandwidth):
    if not (bandwidth > 0 and math.isfinite(bandwidth)):
        raise ValueError(f"bandwidth must be a positive finite number, got {bandwidth}")


def _gaussian_sum(points: np.ndarray, queries: np.ndarray, sigma: float) -> np.ndarray:
    n, d = points.shape
    out = np.empty(len(queries))
    step = max(1, _BLOCK_ELEMS // max(n, 1))
    inv = 1.0 / (2.0 * sigma * sigma)
    for start in range(0, len(queries), step):
        sq = cdist(queries[start:start + step], points, "sqeuclidean")
        sq *= -inv
        np.exp(sq, out=sq)
        # row sums run in a fixed order along the sample axis
        out[start:start + step] = sq.sum(axis=1)
    with np.errstate(over="ignore"):
        scale = n * (2 * math.pi) ** (d / 2) * np.float64(sigma) ** d
    return out / scale


def _ball_count(points: np.ndarray, queries: np.ndarray, h: float) -> np.ndarray:
    n, d = points.shape
    tree = cKDTree(points)
    # candidates from the tree, membership decided by the exact distance test
    cand = tree.query_ball_point(queries, r=h * (1 + 1e-9) + 1e-300)
    counts = np.empty(len(queries))
    for i, idx in enumerate(cand):
        idx = np.asarray(idx, dtype=int)
        dist = np.sqrt(((points[idx] - queries[i]) ** 2).sum(axis=1))
        counts[i] = np.count_nonzero(dist <= h)
    with np.errstate(over="ignore"):
        scale = n * unit_ball_volume(d) * np.float64(h) ** d
    return counts / scale


def estimate_density(cloud: PointCloud, bandwidth: float | None = None,
                     kernel_kind: str = "gaussian") -> DensityEstimate:
    """Evaluate the kernel density estimate at every sample point.

    Parameters
    ----------
    cloud : PointCloud
    bandwidth : float, optional
        Gaussian standard deviation, or ball radius for ``kernel_kind="ball"``.
        ``None`` or 0 selects :func:`default_bandwidth`.
    kernel_kind : {"gaussian", "ball"}

    Returns
    -------
    DensityEstimate
        Strictly positive values; the ball estimate counts each point itself.
    """
    _check_kernel(kernel_kind)
    if bandwidth is None or bandwidth == 0:
        bandwidth = default_bandwidth(cloud)
    _check_bandwidth(bandwidth)
    pts = cloud.points
    if kernel_kind == "gaussian":
        values = _gaussian_sum(pts, pts, bandwidth)
    else:
        values = _ball_count(pts, pts, bandwidth)
    if not np.all(values > 0):
        raise FloatingPointError("density underflowed to zero; increase the bandwidth")
    return DensityEstimate(values, float(bandwidth), kernel_kind)


def evaluate_at(cloud: PointCloud, bandwidth: float, kernel_kind: str, query) -> float:
    """Same estimator as :func:`estimate_density`, at an arbitrary point."""
    _check_kernel(kernel_kind)
    _check_bandwidth(bandwidth)
    q = np.asarray(query, dtype=float).reshape(-1)
    if q.shape[0] != cloud.dim:
        raise ValueError(f"query has dimension {q.shape[0]}, cloud has {cloud.dim}")
    if kernel_kind == "gaussian":
        return float(_gaussian_sum(cloud.points, q[None, :], bandwidth)[0])
    return float(_ball_count(cloud.points, q[None, :], bandwidth)[0])
