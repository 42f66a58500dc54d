"""Acceptance criteria, one test each.

Every test prints a single ``PASS``/``FAIL`` line with the measured numbers
(visible without ``-s``) and then asserts the criterion at its stated
tolerance. Run ``pytest tests/test_acceptance.py`` to get the summary.
"""

import math
import os
import time
from dataclasses import replace

import numpy as np
import pytest

from softmode.data import GeneratorSpec, PointCloud, generate, load_csv, normalize_coordinates
from softmode.density import estimate_density
from softmode.evaluate import accuracy
from softmode.graph import build_graph, components
from softmode.membership import monte_carlo_membership, solve_membership
from softmode.modeseek import ClusterCores, extract_cores, hard_cluster, single_point_cores
from softmode.oracle import AnalyticDensity, GeometricCore, ball_moment_check
from softmode.pipeline import PipelineConfig, SdeSpec, prepare, run_compare
from softmode.walk import build_kernel, diagnostics

pytestmark = pytest.mark.slow


@pytest.fixture
def verdict(capsys):
    def report(name: str, ok: bool, detail: str):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} {name}: {detail}")
        assert ok, detail
    return report


def soft_pipeline(cloud, bandwidth, radius, kappa, beta, single_point=False):
    dens = estimate_density(cloud, bandwidth)
    graph = build_graph(cloud, radius)
    hard = hard_cluster(graph, dens, kappa)
    cores = single_point_cores(hard) if single_point else extract_cores(graph, dens, hard, kappa)
    kernel = build_kernel(graph, dens, beta)
    return hard, solve_membership(kernel, graph, cores)


def test_c1_kernel_stochasticity(verdict):
    rng = np.random.default_rng(0)
    t0 = time.perf_counter()
    worst_sum, worst_neg = 0.0, 0.0
    for _ in range(1000):
        n = int(rng.integers(2, 301))
        d = int(rng.integers(1, 4))
        cloud = PointCloud(rng.standard_normal((n, d)) * rng.uniform(0.2, 3.0))
        dens = estimate_density(cloud, float(rng.uniform(0.05, 1.5)), str(rng.choice(["gaussian", "ball"])))
        graph = build_graph(cloud, float(rng.uniform(0.05, 2.0)))
        beta = float(10 ** rng.uniform(-3, 3))
        k = build_kernel(graph, dens, beta).rows
        worst_sum = max(worst_sum, float(np.abs(np.asarray(k.sum(axis=1)).ravel() - 1).max()))
        worst_neg = min(worst_neg, float(k.data.min()))
    elapsed = time.perf_counter() - t0
    ok = worst_sum <= 1e-12 and worst_neg >= 0 and elapsed < 10
    verdict("C1 kernel stochasticity", ok,
            f"max |row sum - 1| = {worst_sum:.2e}, min entry = {worst_neg}, {elapsed:.1f}s")


def test_c2_gamblers_ruin(verdict):
    t0 = time.perf_counter()
    errs = {"direct": 0.0, "iterative": 0.0}
    for length in (4, 10, 50):
        cloud = PointCloud(np.arange(length + 1, dtype=float)[:, None])
        dens = estimate_density(cloud, 1.0)
        dens = replace(dens, values=np.ones(length + 1))  # uniform density
        graph = build_graph(cloud, 1.0)
        kernel = build_kernel(graph, dens, 1.0)
        cores = ClusterCores(((0,), (length,)), 1.0, np.array([0, length]))
        exact = np.arange(length + 1) / length
        for method in errs:
            mu = solve_membership(kernel, graph, cores, method=method).mu
            err = max(np.abs(mu[:, 2] - exact).max(), np.abs(mu[:, 1] - (1 - exact)).max(), np.abs(mu[:, 0]).max())
            errs[method] = max(errs[method], float(err))
    elapsed = time.perf_counter() - t0
    ok = errs["direct"] <= 1e-8 and errs["iterative"] <= 1e-6 and elapsed < 1
    verdict("C2 gambler's ruin", ok,
            f"direct err {errs['direct']:.1e}, iterative err {errs['iterative']:.1e}, {elapsed:.2f}s")


def test_c3_solver_vs_monte_carlo(verdict):
    rng = np.random.default_rng(3)
    t0 = time.perf_counter()
    passed = 0
    walks = 20_000
    for inst in range(20):
        while True:
            n = int(rng.integers(30, 201))
            cloud = PointCloud(rng.uniform(0, 1, size=(n, 2)))
            graph = build_graph(cloud, 0.25)
            if components(graph).max() == 0:
                break
        dens = estimate_density(cloud, 0.15)
        kernel = build_kernel(graph, dens, float(rng.uniform(0.5, 5)))
        k = int(rng.integers(2, 4))
        picks = rng.permutation(n)
        cores = ClusterCores(tuple((int(v),) for v in picks[:k]), 1.0, picks[:k])
        mu = solve_membership(kernel, graph, cores).mu
        start = int(picks[k])
        freq = monte_carlo_membership(kernel, cores, start, walks, max_steps=200_000, seed=inst)
        p = mu[start]
        sigma = np.sqrt(p * (1 - p) / walks)
        passed += bool(np.all(np.abs(freq - p) <= 3 * sigma + 1e-12))
    elapsed = time.perf_counter() - t0
    ok = passed >= 19 and elapsed < 60
    verdict("C3 solver vs Monte Carlo", ok, f"{passed}/20 instances inside 3-sigma bands, {elapsed:.1f}s")


def test_c4_ball_moment(verdict):
    t0 = time.perf_counter()
    worst = 0.0
    printed_gap = []
    for d in (1, 2, 3):
        for radius in (0.5, 1.0, 2.0):
            res = ball_moment_check(d, radius, 1_000_000, seed=10 * d + int(4 * radius))
            worst = max(worst, abs(res.monte_carlo / res.corrected_formula - 1))
            printed_gap.append(abs(res.printed_formula / res.corrected_formula - 1))
    elapsed = time.perf_counter() - t0
    d1 = ball_moment_check(1, 1.0, 1000, seed=0)
    ok = worst <= 0.01 and elapsed < 30
    verdict("C4 ball moment", ok,
            f"max rel err {worst:.4f} vs corrected constant; printed constant off by "
            f"{min(printed_gap):.3f}-{max(printed_gap):.3f} (d=1,R=1: corrected {d1.corrected_formula:.4f}, "
            f"printed {d1.printed_formula:.4f}), {elapsed:.1f}s")


def test_c5_generator_diagnostics(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    h = 0.25
    cloud = PointCloud(rng.standard_normal((20_000, 2)))
    dens = estimate_density(cloud, h)
    graph = build_graph(cloud, h)
    bulk = np.flatnonzero(np.linalg.norm(cloud.points, axis=1) <= 1.5)
    probes = rng.choice(bulk, size=100, replace=False)
    exact = -cloud.points[probes]
    parts = []
    ok = True
    for beta in (0.5, 1.0, 5.0):
        diag = diagnostics(build_kernel(graph, dens, beta), cloud, probes, gamma=h)
        a_ok = np.abs(diag.a_hat - beta * np.eye(2)).max(axis=(1, 2)) <= 0.15 * beta
        b_ok = np.linalg.norm(diag.b_hat - exact, axis=1) <= 0.3
        frac = np.mean(a_ok & b_ok)
        ok &= frac >= 0.9
        parts.append(f"beta={beta}: a {a_ok.mean():.2f}, b {b_ok.mean():.2f}, both {frac:.2f}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 120
    verdict("C5 generator diagnostics", bool(ok), "; ".join(parts) + f" (need >= 0.90), {elapsed:.1f}s")


def test_c6_graph_vs_sde(verdict, tmp_path):
    t0 = time.perf_counter()
    dens = AnalyticDensity([0.5, 0.5], [[-2.0], [2.0]], [[1.0], [1.0]])
    cores = [GeometricCore.box([-2.3], [-1.7]), GeometricCore.box([1.7], [2.3])]
    probes = np.linspace(-1.6, 1.6, 20)[:, None]
    cfg = PipelineConfig(n=5000, bandwidth=0.2, radius=0.3, beta=0.5, output_dir=str(tmp_path))
    rows, _ = run_compare(cfg, SdeSpec(dens, cores, probes, dt=1e-3, runs=20_000))
    gaps = [r[-1] for r in rows]
    elapsed = time.perf_counter() - t0
    ok = np.mean(gaps) <= 0.05 and elapsed < 300
    verdict("C6 graph vs SDE", bool(ok),
            f"mean gap {np.mean(gaps):.4f}, max gap {np.max(gaps):.4f} over 20 probes, {elapsed:.1f}s")


def test_c7_mode_seeking_limit(verdict):
    t0 = time.perf_counter()
    cloud = generate(GeneratorSpec("gaussian-mixture", 4000, seed=0))
    hard, mem = soft_pipeline(cloud, 0.3, 0.6, 1.0, 0.01)
    agree = float(np.mean(mem.argmax_label() - 1 == hard.assignment))
    elapsed = time.perf_counter() - t0
    ok = agree >= 0.99 and elapsed < 60
    verdict("C7 mode-seeking limit", ok, f"agreement {agree:.4f} with k={hard.k}, {elapsed:.1f}s")


def test_c8_symmetry(verdict):
    t0 = time.perf_counter()
    cloud = generate(GeneratorSpec("overlap-pair", 4000, seed=0, params={"mirrored": 1}))
    hard, mem = soft_pipeline(cloud, 0.1, 0.3, 0.2, 1.0)
    ok = hard.k == 2
    gap = math.nan
    if ok:
        up = 1 + int(np.argmax(cloud.points[hard.peak_vertices, 1]))
        down = 3 - up
        m = cloud.n // 2
        gap = float(np.mean(np.abs(mem.mu[:m, up] - mem.mu[m:, down])))
        ok = gap <= 0.05
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 60
    verdict("C8 symmetry", ok, f"k={hard.k}, mean mirrored gap {gap:.4f}, {elapsed:.1f}s")


def test_c9_spirals(verdict):
    t0 = time.perf_counter()
    cloud = generate(GeneratorSpec("spirals", 4000, seed=0, params={"noise": 0.12}))
    dens = estimate_density(cloud, 0.1)
    graph = build_graph(cloud, 0.3)
    hard = hard_cluster(graph, dens, 1.0)
    cores = extract_cores(graph, dens, hard, 1.0)
    acc = {b: accuracy(solve_membership(build_kernel(graph, dens, b), graph, cores), cloud.labels).accuracy
           for b in (0.3, 1.0)}
    elapsed = time.perf_counter() - t0
    ok = acc[0.3] >= 0.9 and acc[0.3] - acc[1.0] >= 0.1 and elapsed < 120
    verdict("C9 spirals", ok,
            f"acc(0.3)={acc[0.3]:.4f}, acc(1.0)={acc[1.0]:.4f}, k={hard.k}, {elapsed:.1f}s")


def test_c10_single_point_cores(verdict):
    t0 = time.perf_counter()
    cloud = generate(GeneratorSpec("unbalanced-mixture", 5000, seed=0))
    _, region = soft_pipeline(cloud, 0.25, 0.35, 0.25, 5.0)
    _, single = soft_pipeline(cloud, 0.25, 0.35, 0.25, 5.0, single_point=True)
    a_region = accuracy(region, cloud.labels).accuracy
    a_single = accuracy(single, cloud.labels).accuracy
    elapsed = time.perf_counter() - t0
    ok = a_region - a_single >= 0.1 and elapsed < 120
    verdict("C10 single-point cores", ok,
            f"region cores {a_region:.4f}, single-point cores {a_single:.4f}, "
            f"margin {a_region - a_single:.4f} (need >= 0.1), {elapsed:.1f}s")


PENDIGITS = os.environ.get("SOFTMODE_PENDIGITS", "")


@pytest.mark.skipif(not os.path.isfile(PENDIGITS), reason="set SOFTMODE_PENDIGITS to a labelled pendigits CSV")
def test_c11_pendigits(verdict):
    cloud = normalize_coordinates(load_csv(PENDIGITS, label_column=-1))
    state = prepare(PipelineConfig(input=PENDIGITS, label_column=-1, normalize=True), cloud=cloud)
    accs = []
    for kappa in (0.5, 0.6, 0.7, 0.8, 0.9, 1.0):
        hard = hard_cluster(state.graph, state.density, kappa)
        cores = extract_cores(state.graph, state.density, hard, kappa)
        mem = solve_membership(build_kernel(state.graph, state.density, 1.0), state.graph, cores)
        accs.append(accuracy(mem, cloud.labels).accuracy)
    ok = all(abs(a - 0.857) <= 0.05 for a in accs) and max(accs) - min(accs) <= 0.005
    verdict("C11 pendigits", ok, "accuracies " + ", ".join(f"{a:.4f}" for a in accs))
