"""Point clouds: CSV ingestion, coordinate normalization and synthetic generators."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "PointCloud",
    "GeneratorSpec",
    "GENERATOR_KINDS",
    "load_csv",
    "save_csv",
    "normalize_coordinates",
    "generate",
]


@dataclass(frozen=True)
class PointCloud:
    """An n x d sample with optional integer ground-truth labels."""

    points: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
            raise ValueError(f"points must be a non-empty n x d array, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("all coordinates must be finite")
        object.__setattr__(self, "points", pts)
        if self.labels is not None:
            lab = np.asarray(self.labels)
            if lab.shape != (pts.shape[0],):
                raise ValueError(f"labels must have length {pts.shape[0]}, got shape {lab.shape}")
            object.__setattr__(self, "labels", lab.astype(int))

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


def _parse_float(cell: str, row: int, col: int) -> float:
    try:
        value = float(cell)
    except ValueError:
        raise ValueError(f"non-numeric cell {cell!r} at row {row}, column {col}") from None
    if not math.isfinite(value):
        raise ValueError(f"non-finite cell {cell!r} at row {row}, column {col}")
    return value


def _is_numeric_row(row: list[str]) -> bool:
    try:
        for cell in row:
            float(cell)
    except ValueError:
        return False
    return True


def load_csv(path, label_column: int | None = None) -> PointCloud:
    """Read a comma-separated point file.

    A first row that does not parse as numbers is treated as a header and
    skipped. ``label_column`` (0-based, negative values count from the end)
    is split off as integer labels.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise ValueError(f"{path}: no data rows")
    rows = [[c.strip() for c in r] for r in rows]
    # header only if the first row is non-numeric *and* later rows are numeric
    first = 0
    if not _is_numeric_row(rows[0]) and len(rows) > 1 and _is_numeric_row(rows[1]):
        first = 1
    body = rows[first:]
    width = len(body[0])
    for k, r in enumerate(body):
        if len(r) != width:
            raise ValueError(f"{path}: ragged row {k + first} has {len(r)} cells, expected {width}")
    if label_column is not None:
        col = label_column + width if label_column < 0 else label_column
        if not 0 <= col < width:
            raise ValueError(f"label column {label_column} out of range for {width} columns")
        if width < 2:
            raise ValueError("a label column needs at least one coordinate column besides it")
    else:
        col = None
    values = np.array(
        [[_parse_float(c, k + first, j) for j, c in enumerate(r)] for k, r in enumerate(body)]
    )
    if col is None:
        return PointCloud(values)
    labels = values[:, col]
    if not np.all(labels == np.round(labels)):
        raise ValueError("label column must hold integers")
    return PointCloud(np.delete(values, col, axis=1), labels.astype(int))


def save_csv(cloud: PointCloud, path, header: bool = True) -> None:
    """Write coordinates (and a trailing ``label`` column when present)."""
    cols = [f"x{j}" for j in range(cloud.dim)]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        if header:
            w.writerow(cols + (["label"] if cloud.labels is not None else []))
        for i in range(cloud.n):
            row = [repr(float(v)) for v in cloud.points[i]]
            if cloud.labels is not None:
                row.append(int(cloud.labels[i]))
            w.writerow(row)


def normalize_coordinates(cloud: PointCloud) -> PointCloud:
    """Affinely map every coordinate's [min, max] onto [-1, 1].

    Constant coordinates are sent to 0.
    """
    pts = cloud.points
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    span = hi - lo
    out = np.zeros_like(pts)
    ok = span > 0
    out[:, ok] = 2.0 * (pts[:, ok] - lo[ok]) / span[ok] - 1.0
    # rounding can overshoot the endpoints by an ulp
    out[:, ok] = np.clip(out[:, ok], -1.0, 1.0)
    return PointCloud(out, cloud.labels)


GENERATOR_KINDS = ("overlap-pair", "spirals", "unbalanced-mixture", "gaussian-mixture")

_DEFAULTS: dict[str, dict[str, float]] = {
    "overlap-pair": {"noise": 0.15, "x_half_width": 2.0, "offset": 1.0, "slope": 0.2, "mirrored": 0.0},
    "spirals": {"noise": 0.05, "pitch": 0.25, "theta_min": math.pi / 2, "theta_max": 4 * math.pi},
    "unbalanced-mixture": {"weight0": 0.9, "separation": 4.0, "sigma": 1.0},
    "gaussian-mixture": {"separation": 6.0, "sigma": 1.0, "weight0": 0.5, "dim": 2.0},
}


@dataclass(frozen=True)
class GeneratorSpec:
    """Recipe for a synthetic cloud; ``params`` override the kind's defaults."""

    kind: str
    n: int
    seed: int = 0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in GENERATOR_KINDS:
            raise ValueError(f"unknown generator kind {self.kind!r}; expected one of {GENERATOR_KINDS}")
        if int(self.n) < 1:
            raise ValueError("n must be >= 1")
        unknown = set(self.params) - set(_DEFAULTS[self.kind])
        if unknown:
            raise ValueError(f"unknown parameters for {self.kind}: {sorted(unknown)}")

    def resolved(self) -> dict[str, float]:
        return {**_DEFAULTS[self.kind], **{k: float(v) for k, v in self.params.items()}}


def _check_positive(params, *names):
    for name in names:
        if not params[name] > 0:
            raise ValueError(f"parameter {name} must be > 0, got {params[name]}")


def _check_weight(w):
    if not 0 < w < 1:
        raise ValueError(f"mixture weight must lie in (0, 1), got {w}")


def _component_sizes(rng, n, w0):
    n0 = int(rng.binomial(n, w0))
    return n0, n - n0


def _overlap_pair(rng, n, p):
    _check_positive(p, "noise", "x_half_width")
    a = p["x_half_width"]

    def branch(m):
        x = rng.uniform(-a, a, size=m)
        y = p["offset"] - p["slope"] * (x + a) + p["noise"] * rng.standard_normal(m)
        return np.column_stack([x, y])

    if p["mirrored"]:
        # exact mirror sample: point i of B is the reflection of point i of A
        m = n // 2
        upper = branch(m)
        pts = np.vstack([upper, upper * [1.0, -1.0]])
        labels = np.repeat([0, 1], m)
        if n % 2:
            pts = np.vstack([pts, branch(1)])
            labels = np.append(labels, 0)
        return pts, labels
    n0, n1 = _component_sizes(rng, n, 0.5)
    pts = np.vstack([branch(n0), branch(n1) * [1.0, -1.0]])
    return pts, np.repeat([0, 1], [n0, n1])


def _spirals(rng, n, p):
    _check_positive(p, "noise", "pitch")
    if not p["theta_max"] > p["theta_min"] >= 0:
        raise ValueError("spirals need 0 <= theta_min < theta_max")
    n0, n1 = _component_sizes(rng, n, 0.5)
    parts = []
    for rot, m in ((0.0, n0), (math.pi, n1)):
        theta = rng.uniform(p["theta_min"], p["theta_max"], size=m)
        r = p["pitch"] * theta
        xy = np.column_stack([r * np.cos(theta + rot), r * np.sin(theta + rot)])
        parts.append(xy + p["noise"] * rng.standard_normal((m, 2)))
    return np.vstack(parts), np.repeat([0, 1], [n0, n1])


def _two_gaussians(rng, n, p, dim):
    _check_positive(p, "sigma", "separation")
    _check_weight(p["weight0"])
    n0, n1 = _component_sizes(rng, n, p["weight0"])
    half = p["separation"] / 2
    mean = np.zeros(dim)
    mean[0] = half
    pts = np.vstack([
        -mean + p["sigma"] * rng.standard_normal((n0, dim)),
        mean + p["sigma"] * rng.standard_normal((n1, dim)),
    ])
    return pts, np.repeat([0, 1], [n0, n1])


def generate(spec: GeneratorSpec) -> PointCloud:
    """Draw a labelled synthetic cloud; a pure function of ``spec``.

    Labels hold the index of the generating component. Kinds:

    ``overlap-pair``
        Branch A has x ~ U[-a, a] and y = offset - slope*(x + a) + noise;
        branch B is its reflection across y = 0. With ``mirrored=1`` the B
        sample is the exact reflection of the A sample.
    ``spirals``
        Two Archimedean spirals r = pitch*theta, the second rotated by pi,
        with isotropic Gaussian noise.
    ``unbalanced-mixture``
        N((-2, 0), I) and N((2, 0), I) with weights (weight0, 1 - weight0).
    ``gaussian-mixture``
        Two isotropic Gaussians at -/+ separation/2 on the first axis in
        ``dim`` dimensions.
    """
    p = spec.resolved()
    rng = np.random.default_rng(spec.seed)
    n = int(spec.n)
    if spec.kind == "overlap-pair":
        pts, labels = _overlap_pair(rng, n, p)
    elif spec.kind == "spirals":
        pts, labels = _spirals(rng, n, p)
    elif spec.kind == "unbalanced-mixture":
        pts, labels = _two_gaussians(rng, n, p, 2)
    else:
        dim = int(p["dim"])
        if dim < 1:
            raise ValueError("dim must be >= 1")
        pts, labels = _two_gaussians(rng, n, p, dim)
    return PointCloud(pts, labels)
