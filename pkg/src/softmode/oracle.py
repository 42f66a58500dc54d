"""Continuous-side reference: analytic mixtures and the Langevin diffusion.

The diffusion is ``dY = grad log f(Y) dt + sqrt(beta) dW``; it is simulated
with Euler-Maruyama and stopped at the first step that lands in a core.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .walk import block_rng

__all__ = [
    "AnalyticDensity",
    "GeometricCore",
    "SimulationError",
    "grad_log_density",
    "euler_maruyama",
    "sde_membership",
    "sde_endpoints",
    "ball_moment_check",
    "parse_density_spec",
    "parse_cores",
    "check_cores",
]

DEFAULT_DT = 1e-3
DEFAULT_TMAX = 50.0
RUN_BLOCK = 4096


class SimulationError(FloatingPointError):
    pass


@dataclass(frozen=True, eq=False)
class AnalyticDensity:
    """Gaussian mixture with diagonal covariances."""

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        m = np.asarray(self.means, dtype=float)
        if m.ndim == 1:
            m = m[:, None]
        v = np.asarray(self.variances, dtype=float)
        if v.ndim == 0:
            v = np.full(m.shape, float(v))
        elif v.ndim == 1:
            # one isotropic variance per component
            if len(v) != m.shape[0]:
                raise ValueError("need one variance per component")
            v = np.repeat(v[:, None], m.shape[1], axis=1)
        if v.shape != m.shape:
            raise ValueError(f"variances must have shape {m.shape}, got {v.shape}")
        if len(w) != m.shape[0]:
            raise ValueError("one weight per component is required")
        if np.any(w <= 0) or abs(w.sum() - 1) > 1e-9:
            raise ValueError("weights must be positive and sum to 1")
        if np.any(v <= 0):
            raise ValueError("variances must be positive")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "variances", v)
        lognorm = -0.5 * (m.shape[1] * math.log(2 * math.pi) + np.log(v).sum(axis=1))
        object.__setattr__(self, "_log_const", np.log(w) + lognorm)

    @classmethod
    def gaussian(cls, mean, var=1.0):
        mean = np.atleast_1d(np.asarray(mean, dtype=float))
        return cls(np.array([1.0]), mean[None, :], np.full((1, len(mean)), var))

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def _log_components(self, x):
        # x: (m, d) -> (m, c) log of w_c N_c(x)
        diff = x[:, None, :] - self.means[None, :, :]
        quad = (diff ** 2 / self.variances[None]).sum(axis=-1)
        return self._log_const[None] - 0.5 * quad

    def log_pdf(self, x) -> np.ndarray:
        x = self._as_points(x)
        return logsumexp(self._log_components(x), axis=1)

    def pdf(self, x) -> np.ndarray:
        return np.exp(self.log_pdf(x))

    def grad_log(self, x) -> np.ndarray:
        """Vectorised gradient of log f at an (m, d) array of points."""
        x = self._as_points(x)
        logc = self._log_components(x)
        resp = np.exp(logc - logc.max(axis=1, keepdims=True))
        resp /= resp.sum(axis=1, keepdims=True)
        pull = (self.means[None, :, :] - x[:, None, :]) / self.variances[None]
        return (resp[:, :, None] * pull).sum(axis=1)

    def sample(self, n: int, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
        rng = np.random.default_rng(seed)
        comp = rng.choice(len(self.weights), size=n, p=self.weights)
        z = rng.standard_normal((n, self.dim))
        return self.means[comp] + z * np.sqrt(self.variances[comp]), comp

    def _as_points(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim <= 1:
            x = x.reshape(-1, self.dim)
        if x.shape[1] != self.dim:
            raise ValueError(f"points have dimension {x.shape[1]}, density has {self.dim}")
        return x


@dataclass(frozen=True)
class GeometricCore:
    """Closed ball (``center``, ``radius``) or axis-aligned box (``lo``, ``hi``)."""

    shape: str
    center: tuple = ()
    radius: float = 0.0
    lo: tuple = ()
    hi: tuple = ()

    def __post_init__(self):
        if self.shape == "ball":
            if not self.radius > 0 or not self.center:
                raise ValueError("a ball core needs a center and a positive radius")
        elif self.shape == "box":
            if len(self.lo) == 0 or len(self.lo) != len(self.hi) or any(a >= b for a, b in zip(self.lo, self.hi)):
                raise ValueError("a box core needs lo < hi in every coordinate")
        else:
            raise ValueError(f"unknown core shape {self.shape!r}")

    @classmethod
    def ball(cls, center, radius):
        return cls("ball", center=tuple(float(c) for c in np.atleast_1d(center)), radius=float(radius))

    @classmethod
    def box(cls, lo, hi):
        return cls("box", lo=tuple(float(c) for c in np.atleast_1d(lo)),
                   hi=tuple(float(c) for c in np.atleast_1d(hi)))

    @property
    def dim(self) -> int:
        return len(self.center) if self.shape == "ball" else len(self.lo)

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1, self.dim)
        if self.shape == "ball":
            return ((x - np.asarray(self.center)) ** 2).sum(axis=1) <= self.radius ** 2
        return np.all((x >= np.asarray(self.lo)) & (x <= np.asarray(self.hi)), axis=1)

    def to_dict(self) -> dict:
        if self.shape == "ball":
            return {"shape": "ball", "center": list(self.center), "radius": self.radius}
        return {"shape": "box", "lo": list(self.lo), "hi": list(self.hi)}


def grad_log_density(density: AnalyticDensity, x) -> np.ndarray:
    """Exact gradient of log f at a single point."""
    return density.grad_log(np.asarray(x, dtype=float).reshape(1, -1))[0]


def _disjoint(a: GeometricCore, b: GeometricCore) -> bool:
    if a.shape == "box" and b.shape == "ball":
        a, b = b, a
    if a.shape == "ball" and b.shape == "ball":
        return math.dist(a.center, b.center) > a.radius + b.radius
    if a.shape == "ball":
        c = np.asarray(a.center)
        nearest = np.clip(c, b.lo, b.hi)
        return float(np.linalg.norm(nearest - c)) > a.radius
    return any(ah < bl or bh < al for al, ah, bl, bh in zip(a.lo, a.hi, b.lo, b.hi))


def check_cores(cores, dim: int) -> list[GeometricCore]:
    cores = list(cores)
    for c in cores:
        if c.dim != dim:
            raise ValueError(f"core of dimension {c.dim} used with a {dim}-dimensional density")
    for i in range(len(cores)):
        for j in range(i + 1, len(cores)):
            if not _disjoint(cores[i], cores[j]):
                raise ValueError(f"cores {i} and {j} overlap")
    return cores


def _core_index(cores, x):
    # first core containing each row, -1 if none
    idx = np.full(len(x), -1, dtype=np.int64)
    for c in range(len(cores) - 1, -1, -1):
        idx[cores[c].contains(x)] = c
    return idx


def _check_sde_args(beta, dt, t_max):
    if not beta >= 0:
        raise ValueError(f"beta must be >= 0, got {beta}")
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    if not t_max >= dt:
        raise ValueError("t_max must be at least dt")


def _run_block(density, beta, x0, dt, n_steps, cores, m, rng):
    """Simulate ``m`` paths; return (core index or -1, hitting time, final position)."""
    d = density.dim
    x = np.tile(np.asarray(x0, dtype=float).reshape(1, d), (m, 1))
    hit = np.full(m, -1, dtype=np.int64)
    when = np.full(m, n_steps * dt)
    alive = np.arange(m)
    if cores:
        first = _core_index(cores, x)
        done = first >= 0
        hit[done], when[done] = first[done], 0.0
        alive = alive[~done]
    noise = math.sqrt(beta * dt)
    # states of live paths are kept compacted and written back on absorption
    xa = x[alive]
    for step in range(1, n_steps + 1):
        if len(alive) == 0:
            break
        # overflow shows up as a non-finite state and is reported below
        with np.errstate(over="ignore", invalid="ignore"):
            xa = xa + density.grad_log(xa) * dt
        if noise > 0:
            xa += noise * rng.standard_normal(xa.shape)
        if not np.all(np.isfinite(xa)):
            x[alive] = xa
            raise SimulationError(f"non-finite state at step {step}; reduce dt")
        if cores:
            c = _core_index(cores, xa)
            done = c >= 0
            if np.any(done):
                hit[alive[done]] = c[done]
                when[alive[done]] = step * dt
                x[alive[done]] = xa[done]
                alive, xa = alive[~done], xa[~done]
    x[alive] = xa
    return hit, when, x


def euler_maruyama(density: AnalyticDensity, beta: float, x0, dt: float = DEFAULT_DT,
                   t_max: float = DEFAULT_TMAX, cores=(), seed: int = 0):
    """One Euler-Maruyama path of the Langevin diffusion.

    Returns ``(hit, time, position)`` with ``hit`` the 0-based index of the
    first core entered (or None) and ``time`` the hitting time (or the
    simulated horizon when no core is hit).
    """
    _check_sde_args(beta, dt, t_max)
    n_steps = int(round(t_max / dt))
    cores = check_cores(cores, density.dim)
    hit, when, x = _run_block(density, beta, x0, dt, n_steps, cores, 1, np.random.default_rng(seed))
    return (None if hit[0] < 0 else int(hit[0])), float(when[0]), x[0]


def sde_membership(density: AnalyticDensity, beta: float, x0, cores, dt: float = DEFAULT_DT,
                   t_max: float = DEFAULT_TMAX, n_runs: int = 20000, seed: int = 0) -> np.ndarray:
    """Empirical core-hitting distribution from ``x0``.

    Entry 0 holds the runs that reached ``t_max`` without entering a core;
    entry i the runs that entered core i (1-based) first. Runs are grouped
    in blocks of 4096 with one derived random stream per block.
    """
    _check_sde_args(beta, dt, t_max)
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    cores = check_cores(cores, density.dim)
    n_steps = int(round(t_max / dt))
    counts = np.zeros(len(cores) + 1, dtype=np.int64)
    for b, lo in enumerate(range(0, n_runs, RUN_BLOCK)):
        m = min(RUN_BLOCK, n_runs - lo)
        hit, _, _ = _run_block(density, beta, x0, dt, n_steps, cores, m, block_rng(seed, b))
        counts[0] += np.count_nonzero(hit < 0)
        counts[1:] += np.bincount(hit[hit >= 0], minlength=len(cores))
    return counts / n_runs


def sde_endpoints(density: AnalyticDensity, beta: float, x0, dt: float = DEFAULT_DT,
                  t_max: float = DEFAULT_TMAX, n_runs: int = 20000, seed: int = 0) -> np.ndarray:
    """Positions at ``t_max`` of ``n_runs`` core-free paths, shape (n_runs, d)."""
    _check_sde_args(beta, dt, t_max)
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    n_steps = int(round(t_max / dt))
    out = []
    for b, lo in enumerate(range(0, n_runs, RUN_BLOCK)):
        m = min(RUN_BLOCK, n_runs - lo)
        out.append(_run_block(density, beta, x0, dt, n_steps, [], m, block_rng(seed, b))[2])
    return np.vstack(out)


@dataclass(frozen=True)
class BallMoment:
    monte_carlo: float
    corrected_formula: float
    printed_formula: float


def ball_moment_check(d: int, R: float, n_samples: int = 1_000_000, seed: int = 0) -> BallMoment:
    """Integral of <lambda, u>^2 over the d-ball of radius R, three ways.

    ``monte_carlo`` samples the bounding cube; ``corrected_formula`` is
    pi^(d/2) R^(d+2) / (2 Gamma(2 + d/2)); ``printed_formula`` uses
    Gamma(1 + (d+1)/2) in the denominator instead.
    """
    if int(d) != d or d < 1:
        raise ValueError("d must be a positive integer")
    if not R > 0:
        raise ValueError("R must be > 0")
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(d)
    u /= np.linalg.norm(u)
    total = 0.0
    chunk = 250_000
    for lo in range(0, n_samples, chunk):
        m = min(chunk, n_samples - lo)
        lam = rng.uniform(-R, R, size=(m, d))
        inside = (lam ** 2).sum(axis=1) <= R * R
        total += float(((lam[inside] @ u) ** 2).sum())
    mc = total / n_samples * (2 * R) ** d
    corrected = math.pi ** (d / 2) * R ** (d + 2) / (2 * math.gamma(2 + d / 2))
    printed = math.pi ** (d / 2) * R ** (d + 2) / (2 * math.gamma(1 + (d + 1) / 2))
    return BallMoment(mc, corrected, printed)


def parse_density_spec(text_or_obj) -> AnalyticDensity:
    """Build a mixture from JSON such as
    ``{"weights": [0.5, 0.5], "means": [[-2], [2]], "variances": [[1], [1]]}``.
    """
    obj = json.loads(text_or_obj) if isinstance(text_or_obj, str) else text_or_obj
    if "components" in obj:
        comps = obj["components"]
        return AnalyticDensity([c["weight"] for c in comps], [c["mean"] for c in comps],
                               [c.get("variance", 1.0) for c in comps])
    return AnalyticDensity(obj["weights"], obj["means"], obj.get("variances", 1.0))


def parse_cores(text_or_obj) -> list[GeometricCore]:
    """Cores from JSON: ``[{"shape": "ball", "center": [...], "radius": r}, {"shape": "box", ...}]``."""
    items = json.loads(text_or_obj) if isinstance(text_or_obj, str) else text_or_obj
    out = []
    for it in items:
        if it["shape"] == "ball":
            out.append(GeometricCore.ball(it["center"], it["radius"]))
        elif it["shape"] == "box":
            out.append(GeometricCore.box(it["lo"], it["hi"]))
        else:
            raise ValueError(f"unknown core shape {it['shape']!r}")
    return out
