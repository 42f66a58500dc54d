"""Command-line front end: ``softmode <subcommand> [flags]``."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .data import GENERATOR_KINDS, GeneratorSpec, generate, load_csv, save_csv
from .density import KERNELS
from .evaluate import accuracy
from .graph import write_edge_list
from .membership import METHODS, ConvergenceError, monte_carlo_membership
from .oracle import DEFAULT_DT, DEFAULT_TMAX, SimulationError, parse_cores, parse_density_spec, sde_membership
from .pipeline import (
    ConfigError,
    PipelineConfig,
    SdeSpec,
    beta_sweep,
    cores_document,
    load_cloud,
    prepare,
    read_membership_csv,
    run_compare,
    run_diagnose,
    run_soft,
    write_csv,
    write_json,
)

SUBCOMMANDS = ("gen-data", "density", "cluster", "soft", "simulate-sde", "compare", "diagnose", "eval", "sweep")


def _json_arg(value: str):
    """Inline JSON, or ``@path`` / an existing file path holding JSON."""
    path = value[1:] if value.startswith("@") else value
    if value.startswith("@") or Path(path).is_file():
        return json.loads(Path(path).read_text(encoding="utf-8"))
    return json.loads(value)


def _param(value: str):
    if "=" not in value:
        raise argparse.ArgumentTypeError(f"expected name=value, got {value!r}")
    key, v = value.split("=", 1)
    try:
        return key.strip(), float(v)
    except ValueError:
        raise argparse.ArgumentTypeError(f"parameter {key!r} needs a number, got {v!r}") from None


def _add_data_flags(p):
    g = p.add_argument_group("data")
    g.add_argument("--config", help="key-value config file; explicit flags override it")
    g.add_argument("--input", help="CSV of points")
    g.add_argument("--label-column", type=int, help="column of --input holding integer labels")
    g.add_argument("--normalize", action="store_true", default=None, help="rescale every axis to [-1, 1]")
    g.add_argument("--generator", choices=GENERATOR_KINDS)
    g.add_argument("--n", type=int)
    g.add_argument("--gen-seed", type=int)
    g.add_argument("--param", type=_param, action="append", metavar="NAME=VALUE",
                   help="generator parameter override (repeatable)")
    g.add_argument("--out", dest="output_dir", help="output directory")


def _add_density_flags(p):
    p.add_argument("--bandwidth", type=float, help="0 or absent selects the automatic rule")
    p.add_argument("--kernel", choices=KERNELS)
    p.add_argument("--radius", type=float, help="graph radius; 0 or absent derives it from the bandwidth")


def _add_cluster_flags(p):
    p.add_argument("--kappa", type=float)
    p.add_argument("--single-point-cores", action="store_true", help="use the peak vertices alone as cores")
    p.add_argument("--core-mode", choices=("tomato", "single-point", "explicit"))
    p.add_argument("--cores-vertices", dest="cores",
                   help="explicit cores as vertex lists, e.g. '0 | 3'; implies --core-mode explicit")


def _add_walk_flags(p, solver=True):
    p.add_argument("--beta", type=float)
    p.add_argument("--seed", type=int)
    if solver:
        p.add_argument("--method", choices=METHODS)
        p.add_argument("--tol", type=float)
        p.add_argument("--max-iters", type=int)


def _add_sde_flags(p, with_beta=False):
    p.add_argument("--density-spec", type=_json_arg, required=True, help="mixture JSON (inline, @file or path)")
    p.add_argument("--cores", dest="geo_cores", type=_json_arg, required=True,
                   help="JSON list of balls/boxes (inline, @file or path)")
    p.add_argument("--dt", type=float, default=DEFAULT_DT)
    p.add_argument("--tmax", type=float, default=DEFAULT_TMAX)
    p.add_argument("--runs", type=int, default=20000)
    if with_beta:
        p.add_argument("--beta", type=float, required=True)
        p.add_argument("--seed", type=int, default=0)


_CONFIG_KEYS = ("input", "label_column", "normalize", "generator", "n", "gen_seed", "bandwidth", "kernel",
                "radius", "beta", "kappa", "core_mode", "cores", "method", "tol", "max_iters", "seed",
                "output_dir")


def config_from_args(args) -> tuple[PipelineConfig, str | None]:
    """Merge a config file (if any) with explicitly given flags."""
    text = None
    cfg = PipelineConfig()
    if getattr(args, "config", None):
        text = Path(args.config).read_text(encoding="utf-8")
        cfg = PipelineConfig.from_text(text)
    overrides = {}
    for key in _CONFIG_KEYS:
        value = getattr(args, key, None)
        if value is None:
            continue
        if key == "cores":
            value = PipelineConfig.from_mapping({"cores": value}).cores
            overrides["core_mode"] = "explicit"
        overrides[key] = value
    if getattr(args, "single_point_cores", False):
        overrides["core_mode"] = "single-point"
    if getattr(args, "param", None):
        overrides["gen_params"] = {**cfg.gen_params, **dict(args.param)}
    # an explicit source flag replaces the other source from the config file
    if "input" in overrides:
        overrides.setdefault("generator", "")
    if "generator" in overrides and overrides["generator"]:
        overrides.setdefault("input", "")
    return replace(cfg, **overrides), text


# ------------------------------------------------------------ subcommands

def cmd_gen_data(args):
    spec = GeneratorSpec(args.generator, args.n, args.gen_seed, dict(args.param or []))
    cloud = generate(spec)
    save_csv(cloud, args.output)
    print(f"wrote {cloud.n} points to {args.output}")


def cmd_density(args):
    cfg, _ = config_from_args(args)
    state = prepare(cfg, with_cores=False)
    out = Path(state.config.output_dir)
    write_csv(out / "density.csv", ["index", "value"], enumerate(state.density.values.tolist()))
    print(f"bandwidth {state.config.bandwidth!r}; wrote {out / 'density.csv'}")


def cmd_cluster(args):
    cfg, _ = config_from_args(args)
    if cfg.core_mode == "explicit":
        raise ConfigError("cluster computes peaks; --core-mode explicit does not apply")
    state = prepare(cfg)
    out = Path(state.config.output_dir)
    write_json(out / "cores.json", cores_document(state.clustering, state.cores, state.config.core_mode))
    write_csv(out / "assignment.csv", ["index", "cluster"], enumerate(state.clustering.assignment.tolist()))
    if args.export_graph:
        write_edge_list(state.graph, out / "edges.csv")
    print(f"{state.clustering.k} clusters; wrote {out}")


def cmd_soft(args):
    cfg, text = config_from_args(args)
    res = run_soft(cfg, text)
    if args.walks:
        _monte_carlo_check(res, args)
    line = f"{res.membership.k} clusters"
    if res.report is not None:
        line += f", accuracy {res.report.accuracy:.4f}"
    print(f"{line}; wrote {res.state.config.output_dir}")


def _monte_carlo_check(res, args):
    n = res.state.cloud.n
    if args.probe_vertices:
        probes = [int(v) for v in args.probe_vertices.replace(",", " ").split()]
    else:
        probes = np.linspace(0, n - 1, min(10, n)).astype(int).tolist()
    rows = []
    k = res.membership.k
    for v in probes:
        if not 0 <= v < n:
            raise ValueError(f"--probe-vertices: vertex {v} out of range")
        mc = monte_carlo_membership(res.kernel, res.state.cores, v, args.walks, args.max_steps,
                                    seed=res.state.config.seed)
        rows.append([v, *res.membership.mu[v].tolist(), *mc.tolist()])
    header = ["vertex", *[f"mu_{c}" for c in range(k + 1)], *[f"walk_mu_{c}" for c in range(k + 1)]]
    write_csv(Path(res.state.config.output_dir) / "montecarlo.csv", header, rows)


def cmd_simulate_sde(args):
    density = parse_density_spec(args.density_spec)
    cores = parse_cores(args.geo_cores)
    x0 = np.asarray(args.x0, dtype=float)
    mu = sde_membership(density, args.beta, x0, cores, args.dt, args.tmax, args.runs, args.seed)
    if args.output:
        write_csv(args.output, [f"mu_{c}" for c in range(len(mu))], [mu.tolist()])
    print(json.dumps({"x0": x0.tolist(), "mu": mu.tolist()}))


def cmd_compare(args):
    cfg, _ = config_from_args(args)
    probes = np.asarray(_json_arg(args.probes), dtype=float)
    spec = SdeSpec(parse_density_spec(args.density_spec), parse_cores(args.geo_cores), probes,
                   args.dt, args.tmax, args.runs, cfg.seed, args.graph_cores)
    rows, path = run_compare(cfg, spec)
    gaps = [r[-1] for r in rows]
    print(f"mean gap {np.mean(gaps):.4f}, max gap {np.max(gaps):.4f}; wrote {path}")


def cmd_diagnose(args):
    cfg, _ = config_from_args(args)
    density = parse_density_spec(args.density_spec) if args.density_spec is not None else None
    if args.probe_vertices:
        probes = [int(v) for v in args.probe_vertices.replace(",", " ").split()]
    else:
        n = load_cloud(cfg.validate()).n
        probes = np.linspace(0, n - 1, min(args.probe_count, n)).astype(int)
    _, rows = run_diagnose(cfg, probes, args.gamma, density, printed_constant=args.printed_step_constant)
    print(f"{len(rows)} probes; wrote {Path(cfg.output_dir) / 'diagnostics.csv'}")


def cmd_eval(args):
    mu = read_membership_csv(args.membership)
    if args.labels:
        labels = load_csv(args.labels, args.label_column if args.label_column is not None else -1).labels
    else:
        raise ConfigError("--labels is required")
    report = accuracy(mu, labels).to_dict()
    if args.output:
        write_json(args.output, report)
    print(json.dumps({"accuracy": report["accuracy"], "mean_lower_membership": report["mean_lower_membership"]}))


def cmd_sweep(args):
    cfg, _ = config_from_args(args)
    betas = [float(b) for b in args.betas.replace(",", " ").split()]
    rows = beta_sweep(cfg, betas)
    for b, acc, mlm in rows:
        print(f"beta {b:g}: accuracy {acc:.4f}, mean lower membership {mlm:.4f}")


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="softmode", description="Density-guided soft clustering toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write a synthetic labelled dataset")
    p.add_argument("--generator", choices=GENERATOR_KINDS, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--gen-seed", type=int, default=0)
    p.add_argument("--param", type=_param, action="append", metavar="NAME=VALUE")
    p.add_argument("--output", required=True, help="CSV path (label in the last column)")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("density", help="export the density estimate")
    _add_data_flags(p)
    _add_density_flags(p)
    p.set_defaults(func=cmd_density)

    p = sub.add_parser("cluster", help="hard clustering, peaks and cores")
    _add_data_flags(p)
    _add_density_flags(p)
    _add_cluster_flags(p)
    p.add_argument("--export-graph", action="store_true", help="also write edges.csv")
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("soft", help="full soft clustering run")
    _add_data_flags(p)
    _add_density_flags(p)
    _add_cluster_flags(p)
    _add_walk_flags(p)
    p.add_argument("--walks", type=int, default=0, help="Monte Carlo walks per probe vertex (0 = skip)")
    p.add_argument("--max-steps", type=int, default=100_000)
    p.add_argument("--probe-vertices", help="vertices checked by Monte Carlo")
    p.set_defaults(func=cmd_soft)

    p = sub.add_parser("simulate-sde", help="diffusion hitting distribution from one start point")
    _add_sde_flags(p, with_beta=True)
    p.add_argument("--x0", type=float, nargs="+", required=True)
    p.add_argument("--output", help="optional CSV path")
    p.set_defaults(func=cmd_simulate_sde)

    p = sub.add_parser("compare", help="graph vs diffusion memberships at probe points")
    _add_data_flags(p)
    _add_density_flags(p)
    _add_cluster_flags(p)
    _add_walk_flags(p)
    _add_sde_flags(p)
    p.add_argument("--probes", required=True, help="JSON list of probe points (inline, @file or path)")
    p.add_argument("--graph-cores", choices=("geometric", "derived"), default="geometric")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("diagnose", help="local moments of the walk at probe vertices")
    _add_data_flags(p)
    _add_density_flags(p)
    _add_walk_flags(p, solver=False)
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--density-spec", type=_json_arg, help="analytic density for the drift error column")
    p.add_argument("--probe-vertices")
    p.add_argument("--probe-count", type=int, default=100)
    p.add_argument("--printed-step-constant", action="store_true",
                   help="scale by the alternative (uncorrected) step-time constant, for comparison")
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("eval", help="score a membership CSV against labels")
    p.add_argument("--membership", required=True)
    p.add_argument("--labels", required=True, help="CSV holding the labels")
    p.add_argument("--label-column", type=int, help="label column in --labels (default: last)")
    p.add_argument("--output", help="JSON report path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="accuracy and mean lower membership over beta")
    _add_data_flags(p)
    _add_density_flags(p)
    _add_cluster_flags(p)
    _add_walk_flags(p)
    p.add_argument("--betas", required=True, help="comma or space separated values")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except (ValueError, ConvergenceError, SimulationError, OSError, KeyError, TypeError) as exc:
        msg = str(exc) if not isinstance(exc, KeyError) else f"missing key {exc}"
        print(f"softmode {args.command}: error: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
