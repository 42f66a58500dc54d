"""End-to-end runs: configuration, orchestration and artifact export.

A run is fully described by a :class:`PipelineConfig`. Every artifact is
written to a temporary file next to its destination and renamed into place,
so an interrupted or failing run never leaves a truncated file behind.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .data import GeneratorSpec, PointCloud, generate, load_csv, normalize_coordinates
from .density import KERNELS, DensityEstimate, default_bandwidth, default_radius, estimate_density
from .evaluate import EvalReport, accuracy, mean_lower_membership
from .graph import NeighborhoodGraph, build_graph
from .membership import DEFAULT_TOL, METHODS, MembershipMatrix, membership_at, solve_membership
from .modeseek import ClusterCores, HardClustering, extract_cores, hard_cluster, single_point_cores
from .oracle import AnalyticDensity, GeometricCore, check_cores, sde_membership
from .walk import TransitionKernel, build_kernel, diagnostics, printed_step_time

__all__ = [
    "ConfigError",
    "PipelineConfig",
    "SdeSpec",
    "PipelineState",
    "prepare",
    "run_soft",
    "run_compare",
    "beta_sweep",
    "run_diagnose",
    "write_text_atomic",
    "write_csv",
    "write_json",
    "read_membership_csv",
    "load_cloud",
    "cores_document",
]

CORE_MODES = ("tomato", "single-point", "explicit")


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending flag."""


@dataclass(frozen=True)
class PipelineConfig:
    """Every parameter of a run.

    ``bandwidth``, ``radius`` and ``tol`` use 0 for "automatic".
    ``cores`` is only read in ``explicit`` core mode and lists vertex
    indices per core, e.g. ``((0,), (3,))``.
    """

    input: str = ""
    label_column: int | None = None
    normalize: bool = False
    generator: str = ""
    n: int = 1000
    gen_seed: int = 0
    gen_params: dict = field(default_factory=dict)
    bandwidth: float = 0.0
    kernel: str = "gaussian"
    radius: float = 0.0
    beta: float = 1.0
    kappa: float = 1.0
    core_mode: str = "tomato"
    cores: tuple = ()
    method: str = "direct"
    tol: float = 0.0
    max_iters: int = 1_000_000
    seed: int = 0
    output_dir: str = "out"

    def validate(self) -> "PipelineConfig":
        if bool(self.input) == bool(self.generator):
            raise ConfigError("exactly one of --input or --generator is required")
        if self.generator:
            try:
                GeneratorSpec(self.generator, self.n, self.gen_seed, dict(self.gen_params))
            except ValueError as exc:
                raise ConfigError(f"--generator: {exc}") from None
        _require(self.bandwidth >= 0 and math.isfinite(self.bandwidth), "--bandwidth must be >= 0 (0 = automatic)")
        _require(self.kernel in KERNELS, f"--kernel must be one of {KERNELS}")
        _require(self.radius >= 0 and math.isfinite(self.radius), "--radius must be >= 0 (0 = from bandwidth)")
        _require(self.beta > 0 and math.isfinite(self.beta), f"--beta must be > 0, got {self.beta}")
        _require(self.kappa > 0 and math.isfinite(self.kappa), f"--kappa must be > 0, got {self.kappa}")
        _require(self.core_mode in CORE_MODES, f"--core-mode must be one of {CORE_MODES}")
        if self.core_mode == "explicit":
            _require(len(self.cores) > 0 and all(len(c) for c in self.cores),
                     "--cores must list at least one non-empty core in explicit mode")
        _require(self.method in METHODS, f"--method must be one of {METHODS}")
        _require(self.tol >= 0, "--tol must be >= 0 (0 = default)")
        _require(self.max_iters >= 1, "--max-iters must be >= 1")
        _require(self.seed >= 0, "--seed must be >= 0")
        return self

    def to_text(self) -> str:
        """Key-value serialisation; :meth:`from_text` inverts it exactly."""
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name == "gen_params":
                for key in sorted(value):
                    lines.append(f"gen.{key} = {_fmt(float(value[key]))}")
                continue
            if f.name == "cores":
                value = " | ".join(" ".join(str(int(v)) for v in core) for core in value)
            elif value is None:
                value = ""
            else:
                value = _fmt(value)
            lines.append(f"{f.name} = {value}".rstrip())
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "PipelineConfig":
        values = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"config line {lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            values[key] = value
        return cls.from_mapping(values)

    @classmethod
    def from_mapping(cls, values: dict) -> "PipelineConfig":
        """Build from string values (as found in a config file)."""
        kinds = {f.name: f for f in fields(cls)}
        kwargs: dict = {}
        gen_params = {}
        for key, value in values.items():
            key = key.replace("-", "_")
            if key.startswith("gen."):
                gen_params[key[4:]] = _parse_number(value, key)
                continue
            if key not in kinds:
                raise ConfigError(f"unknown config key {key!r}")
            kwargs[key] = _convert(key, value)
        if gen_params:
            kwargs["gen_params"] = gen_params
        return cls(**kwargs)


def _require(ok, message):
    if not ok:
        raise ConfigError(message)


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_number(value: str, key: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {value!r}") from None


_INT_KEYS = {"n", "gen_seed", "max_iters", "seed"}
_FLOAT_KEYS = {"bandwidth", "radius", "beta", "kappa", "tol"}


def _convert(key: str, value: str):
    if key in _INT_KEYS:
        try:
            return int(value)
        except ValueError:
            raise ConfigError(f"{key}: expected an integer, got {value!r}") from None
    if key in _FLOAT_KEYS:
        return _parse_number(value, key)
    if key == "label_column":
        return int(value) if value else None
    if key == "normalize":
        if value.lower() not in ("true", "false", "1", "0", "yes", "no"):
            raise ConfigError(f"normalize: expected true/false, got {value!r}")
        return value.lower() in ("true", "1", "yes")
    if key == "cores":
        if not value:
            return ()
        try:
            return tuple(tuple(int(v) for v in part.split()) for part in value.split("|"))
        except ValueError:
            raise ConfigError(f"cores: expected vertex lists like '0 1 | 5', got {value!r}") from None
    return value


# ---------------------------------------------------------------- artifacts

def write_text_atomic(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def csv_text(header, rows) -> str:
    out = [",".join(header)]
    out.extend(",".join(_cell(v) for v in row) for row in rows)
    return "\n".join(out) + "\n"


def write_csv(path, header, rows) -> None:
    write_text_atomic(path, csv_text(header, rows))


def _json_safe(obj):
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _json_safe(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        # infinite prominence of a global maximum becomes null
        return float(obj) if math.isfinite(obj) else None
    return obj


def write_json(path, obj) -> None:
    write_text_atomic(path, json.dumps(_json_safe(obj), indent=2, sort_keys=True) + "\n")


def membership_rows(cloud: PointCloud, membership: MembershipMatrix):
    label = membership.argmax_label()
    for i in range(cloud.n):
        yield [i, *cloud.points[i].tolist(), *membership.mu[i].tolist(), int(label[i])]


def membership_header(dim: int, k: int) -> list[str]:
    return ["index", *[f"x{j}" for j in range(dim)], *[f"mu_{c}" for c in range(k + 1)], "argmax_label"]


def read_membership_csv(path) -> np.ndarray:
    """The mu_0..mu_k columns of a membership CSV as an (n, k + 1) array."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
    cols = [i for i, name in enumerate(header) if name.startswith("mu_")]
    if not cols:
        raise ValueError(f"{path}: no mu_ columns in header")
    data = np.loadtxt(path, delimiter=",", skiprows=1, usecols=cols, ndmin=2)
    return data


def cores_document(clustering: HardClustering | None, cores: ClusterCores, mode: str) -> dict:
    peaks = []
    if clustering is not None:
        for v, val, prom in zip(clustering.peak_vertices, clustering.peak_values, clustering.prominence):
            peaks.append({"vertex": int(v), "value": float(val), "prominence": float(prom)})
    return {
        "peaks": peaks,
        "kappa": cores.kappa,
        "clusters": cores.k,
        "core_mode": mode,
        "core_sizes": [len(c) for c in cores.cores],
    }


# ------------------------------------------------------------- orchestration

@dataclass(frozen=True, eq=False)
class PipelineState:
    """Everything computed up to (and including) the cluster cores."""

    config: PipelineConfig
    cloud: PointCloud
    density: DensityEstimate
    graph: NeighborhoodGraph
    clustering: HardClustering | None
    cores: ClusterCores


def load_cloud(config: PipelineConfig) -> PointCloud:
    if config.input:
        cloud = load_csv(config.input, config.label_column)
    else:
        cloud = generate(GeneratorSpec(config.generator, config.n, config.gen_seed, dict(config.gen_params)))
    return normalize_coordinates(cloud) if config.normalize else cloud


def resolve(config: PipelineConfig, cloud: PointCloud) -> PipelineConfig:
    """Fill automatic bandwidth, radius and tolerance with concrete values."""
    bw = config.bandwidth or default_bandwidth(cloud)
    radius = config.radius or default_radius(bw, config.kernel)
    tol = config.tol or DEFAULT_TOL[config.method]
    return replace(config, bandwidth=float(bw), radius=float(radius), tol=float(tol))


def _cores_for(config, graph, density, cloud):
    if config.core_mode == "explicit":
        for core in config.cores:
            if min(core) < 0 or max(core) >= cloud.n:
                raise ConfigError(f"--cores: vertex index out of range for n={cloud.n}")
        cores = ClusterCores(tuple(np.array(sorted(set(c)), dtype=np.int64) for c in config.cores), config.kappa)
        cores.labels(cloud.n)
        return None, cores
    clustering = hard_cluster(graph, density, config.kappa)
    if clustering.k == 0:
        raise ValueError("no density peak found; the graph has no edges at this radius")
    if config.core_mode == "single-point":
        return clustering, single_point_cores(clustering)
    return clustering, extract_cores(graph, density, clustering, config.kappa)


def prepare(config: PipelineConfig, cloud: PointCloud | None = None,
            with_cores: bool = True) -> PipelineState:
    """Load data and compute density, graph, hard clustering and cores.

    A ``cloud`` passed in replaces the configured input or generator.
    """
    if cloud is None:
        config.validate()
        cloud = load_cloud(config)
    else:
        replace(config, input="-", generator="").validate()
    config = resolve(config, cloud)
    density = estimate_density(cloud, config.bandwidth, config.kernel)
    graph = build_graph(cloud, config.radius)
    clustering, cores = None, ClusterCores((), config.kappa)
    if with_cores:
        clustering, cores = _cores_for(config, graph, density, cloud)
    return PipelineState(config, cloud, density, graph, clustering, cores)


def _solve(state: PipelineState, beta: float) -> tuple[TransitionKernel, MembershipMatrix]:
    cfg = state.config
    kernel = build_kernel(state.graph, state.density, beta)
    mem = solve_membership(kernel, state.graph, state.cores, cfg.method, cfg.tol, cfg.max_iters)
    return kernel, mem


@dataclass(frozen=True, eq=False)
class SoftResult:
    state: PipelineState
    kernel: TransitionKernel
    membership: MembershipMatrix
    report: EvalReport | None
    paths: dict


def run_soft(config: PipelineConfig, config_text: str | None = None) -> SoftResult:
    """Full soft-clustering run; writes membership.csv, cores.json, report.json, config.txt.

    ``config_text``, when given, is the original config file and is copied
    verbatim to ``config.input.txt``.
    """
    state = prepare(config)
    kernel, mem = _solve(state, state.config.beta)
    report = accuracy(mem, state.cloud.labels) if state.cloud.labels is not None else None
    doc = {
        "n": state.cloud.n,
        "dim": state.cloud.dim,
        "clusters": mem.k,
        "bandwidth": state.config.bandwidth,
        "radius": state.config.radius,
        "beta": kernel.beta,
        "step_time": kernel.step_time,
        "clamp_count": kernel.clamp_count,
        "solver": {"method": mem.method, "iterations": mem.iterations, "residual": mem.residual, **mem.meta},
        "mean_lower_membership": mean_lower_membership(mem.mu),
        "evaluation": report.to_dict() if report is not None else None,
    }
    out = Path(state.config.output_dir)
    paths = {
        "membership": out / "membership.csv",
        "cores": out / "cores.json",
        "report": out / "report.json",
        "config": out / "config.txt",
    }
    # everything is computed before the first file is touched
    membership_csv = csv_text(membership_header(state.cloud.dim, mem.k), membership_rows(state.cloud, mem))
    write_text_atomic(paths["membership"], membership_csv)
    write_json(paths["cores"], cores_document(state.clustering, state.cores, state.config.core_mode))
    write_json(paths["report"], doc)
    write_text_atomic(paths["config"], state.config.to_text())
    if config_text is not None:
        paths["config_input"] = out / "config.input.txt"
        write_text_atomic(paths["config_input"], config_text)
    return SoftResult(state, kernel, mem, report, paths)


# ------------------------------------------------------------------ compare

@dataclass(frozen=True, eq=False)
class SdeSpec:
    """Continuous side of a comparison.

    ``graph_cores`` is ``"geometric"`` (graph core i = sample points inside
    geometric core i) or ``"derived"`` (cores from the pipeline's core
    mode, matched to the geometric core containing each peak).
    """

    density: AnalyticDensity
    cores: list
    probes: np.ndarray
    dt: float = 1e-3
    t_max: float = 50.0
    runs: int = 20000
    seed: int = 0
    graph_cores: str = "geometric"


def _geometric_graph_cores(cloud: PointCloud, cores: list[GeometricCore], kappa: float) -> ClusterCores:
    sets = []
    for i, core in enumerate(cores):
        members = np.flatnonzero(core.contains(cloud.points))
        if len(members) == 0:
            raise ValueError(f"geometric core {i} contains no sample point")
        sets.append(members)
    return ClusterCores(tuple(sets), kappa)


def _match_derived(state: PipelineState, geo: list[GeometricCore]) -> ClusterCores:
    if state.cores.k != len(geo):
        raise ValueError(f"cluster count mismatch: {state.cores.k} graph cores vs {len(geo)} geometric cores")
    order = []
    for c, core in enumerate(state.cores.cores):
        inside = [g for g, gc in enumerate(geo) if np.any(gc.contains(state.cloud.points[core]))]
        if len(inside) != 1:
            raise ValueError(f"graph core {c} does not correspond to exactly one geometric core")
        order.append(inside[0])
    if sorted(order) != list(range(len(geo))):
        raise ValueError("graph cores and geometric cores do not pair up one-to-one")
    perm = np.argsort(order)
    return ClusterCores(tuple(state.cores.cores[i] for i in perm), state.cores.kappa)


def run_compare(config: PipelineConfig, spec: SdeSpec, cloud: PointCloud | None = None):
    """Graph membership vs diffusion membership at each probe; writes compare.csv.

    Returns ``(rows, path)`` where each row holds the probe index, its
    coordinates, both membership vectors and their largest absolute gap.
    """
    geo = check_cores(spec.cores, spec.density.dim)
    if config.core_mode == "explicit":
        raise ConfigError("--core-mode explicit is not supported by compare")
    if spec.graph_cores not in ("geometric", "derived"):
        raise ConfigError("--graph-cores must be 'geometric' or 'derived'")
    probes = np.asarray(spec.probes, dtype=float).reshape(-1, spec.density.dim)
    if cloud is None and not (config.input or config.generator):
        # no data configured: sample from the analytic density itself
        pts, comp = spec.density.sample(config.n, config.gen_seed)
        cloud = PointCloud(pts, comp)
    derived = spec.graph_cores == "derived"
    state = prepare(config, cloud, with_cores=derived)
    cloud = state.cloud
    if cloud.dim != spec.density.dim:
        raise ValueError(f"sample has dimension {cloud.dim}, density has {spec.density.dim}")
    if derived:
        gcores = _match_derived(state, geo)
    else:
        gcores = _geometric_graph_cores(cloud, geo, state.config.kappa)
    state = replace(state, cores=gcores)
    _, mem = _solve(state, state.config.beta)

    k = len(geo)
    rows = []
    for p, x in enumerate(probes):
        g = membership_at(x, cloud, mem)
        s = sde_membership(spec.density, state.config.beta, x, geo, spec.dt, spec.t_max, spec.runs,
                           seed=spec.seed + p)
        gap = float(np.abs(g - s).max())
        rows.append([p, *x.tolist(), *g.tolist(), *s.tolist(), gap])
    header = ["probe", *[f"x{j}" for j in range(probes.shape[1])],
              *[f"graph_mu_{c}" for c in range(k + 1)], *[f"sde_mu_{c}" for c in range(k + 1)], "gap"]
    path = Path(state.config.output_dir) / "compare.csv"
    write_csv(path, header, rows)
    return rows, path


# -------------------------------------------------------------------- sweep

def beta_sweep(config: PipelineConfig, betas, write: bool = True):
    """Accuracy and mean lower membership per beta on one graph, density and core set.

    Rows follow the order of ``betas``; the table goes to ``sweep.csv``.
    """
    betas = [float(b) for b in betas]
    if not betas:
        raise ConfigError("--betas needs at least one value")
    for b in betas:
        _require(b > 0 and math.isfinite(b), f"--betas: every beta must be > 0, got {b}")
    state = prepare(config)
    if state.cloud.labels is None:
        raise ValueError("beta sweep needs ground-truth labels (--label-column or a generator)")
    rows = []
    for b in betas:
        _, mem = _solve(state, b)
        rep = accuracy(mem, state.cloud.labels)
        rows.append([b, rep.accuracy, rep.mean_lower_membership])
    if write:
        write_csv(Path(state.config.output_dir) / "sweep.csv", ["beta", "accuracy", "mean_lower_membership"], rows)
        write_text_atomic(Path(state.config.output_dir) / "config.txt", state.config.to_text())
    return rows


# ---------------------------------------------------------------- diagnose

def run_diagnose(config: PipelineConfig, probes, gamma: float, density: AnalyticDensity | None = None,
                 write: bool = True, printed_constant: bool = False):
    """Local moments of the walk at probe vertices; writes diagnostics.csv.

    ``probes`` are vertex indices. The drift error column is empty unless
    an analytic density is supplied. ``printed_constant`` rescales by the
    alternative step time of :func:`printed_step_time`, for comparison.
    """
    _require(gamma > 0, f"--gamma must be > 0, got {gamma}")
    state = prepare(config, with_cores=False)
    kernel = build_kernel(state.graph, state.density, state.config.beta)
    if printed_constant:
        kernel = replace(kernel, step_time=printed_step_time(kernel.radius, state.cloud.dim, kernel.beta))
    probes = np.asarray(probes, dtype=np.int64).reshape(-1)
    if np.any((probes < 0) | (probes >= state.cloud.n)):
        raise ValueError("probe vertex out of range")
    diag = diagnostics(kernel, state.cloud, probes, gamma)
    eye = kernel.beta * np.eye(state.cloud.dim)
    a_err = np.abs(diag.a_hat - eye).max(axis=(1, 2))
    b_err = None
    if density is not None:
        exact = density.grad_log(state.cloud.points[probes])
        b_err = np.linalg.norm(diag.b_hat - exact, axis=1)
    rows = [[int(p), float(a_err[m]), "" if b_err is None else float(b_err[m]), float(diag.delta[m])]
            for m, p in enumerate(probes)]
    if write:
        write_csv(Path(state.config.output_dir) / "diagnostics.csv", ["probe", "a_err", "b_err", "delta"], rows)
    return diag, rows
