import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from softmode.data import PointCloud
from softmode.density import DensityEstimate, estimate_density
from softmode.graph import build_graph
from softmode.modeseek import ClusterCores, extract_cores, hard_cluster, single_point_cores


def path_graph(n):
    return build_graph(PointCloud(np.arange(n, dtype=float)[:, None]), 1.0)


def dens(g):
    return DensityEstimate(np.exp(np.asarray(g, dtype=float)), 1.0)


def reference_tomato(adj, g, kappa):
    """Independent re-implementation: dict union-find with explicit root heights."""
    n = len(g)
    order = sorted(range(n), key=lambda i: (-g[i], i))
    pos = {v: r for r, v in enumerate(order)}
    root = {}

    def find(x):
        while root[x] != x:
            x = root[x]
        return x

    for v in order:
        nbrs = [u for u in np.flatnonzero(adj[v]) if u != v and u in root]
        if not np.any(adj[v] & (np.arange(n) != v)):
            continue
        if not nbrs:
            root[v] = v
            continue
        top = min(nbrs, key=pos.get)
        root[v] = find(top)
        for u in nbrs:
            a, b = find(u), find(v)
            if a == b:
                continue
            low, high = (a, b) if pos[a] > pos[b] else (b, a)
            if g[low] - g[v] < kappa:
                root[low] = high
    return {v: find(v) for v in root}


def persistence(adj, g):
    """Brute force: sweep levels, grow superlevel components, read off each peak's death."""
    n = len(g)
    order = sorted(range(n), key=lambda i: (-g[i], i))
    out = {}
    for t in range(n):
        alive = np.zeros(n, dtype=bool)
        alive[order[:t + 1]] = True
        sub = adj & alive[:, None] & alive[None, :]
        # components by label propagation
        lab = np.where(alive, np.arange(n), -1)
        for _ in range(n):
            new = lab.copy()
            for i in np.flatnonzero(alive):
                new[i] = lab[sub[i]].min()
            if np.array_equal(new, lab):
                break
            lab = new
        for p in order[:t + 1]:
            if p in out:
                continue
            comp = np.flatnonzero(lab == lab[p])
            if any((-g[q], q) < (-g[p], p) for q in comp):
                out[p] = g[p] - g[order[t]]
    return out


def test_path_example():
    g = [5, 1, 4, 2, 3]
    graph = path_graph(5)
    hc = hard_cluster(graph, dens(g), 1.5)
    assert hc.peak_vertices.tolist() == [0, 2]
    assert hc.prominence[0] == math.inf
    assert hc.prominence[1] == pytest.approx(3.0)
    assert hc.assignment.tolist() == [0, 0, 1, 1, 1]
    cores = extract_cores(graph, dens(g), hc, 1.5)
    assert [c.tolist() for c in cores.cores] == [[0], [2]]
    sp = single_point_cores(hc)
    assert [c.tolist() for c in sp.cores] == [[0], [2]]


def test_monotone_path_single_cluster():
    hc = hard_cluster(path_graph(6), dens([6, 5, 4, 3, 2, 1]), 0.1)
    assert hc.k == 1 and hc.peak_vertices.tolist() == [0]
    assert np.all(hc.assignment == 0)


def test_components_never_merge():
    pts = np.array([[0.0], [1.0], [10.0], [11.0]])
    graph = build_graph(PointCloud(pts), 1.0)
    hc = hard_cluster(graph, dens([1, 2, 3, 2.5]), 100.0)
    assert hc.k == 2
    assert hc.assignment.tolist() == [1, 1, 0, 0]
    assert np.all(np.isinf(hc.prominence))


def test_isolated_vertices_unassigned():
    graph = build_graph(PointCloud(np.array([[0.0], [1.0], [50.0]])), 1.0)
    hc = hard_cluster(graph, dens([1, 2, 9]), 1.0)
    assert hc.peak_vertices.tolist() == [1]
    assert hc.assignment.tolist() == [0, 0, -1]


def test_ties_broken_by_index():
    hc = hard_cluster(path_graph(3), dens([1, 1, 1]), 0.5)
    assert hc.peak_vertices.tolist() == [0]


def test_kappa_to_zero_core_is_peak_and_plateau():
    g = [1, 3, 3, 2, 0]
    graph = path_graph(5)
    hc = hard_cluster(graph, dens(g), 1e-12)
    cores = extract_cores(graph, dens(g), hc, 1e-12)
    assert hc.peak_vertices.tolist() == [1]
    assert cores.cores[0].tolist() == [1, 2]


def test_single_blob_large_kappa_covers_component():
    rng = np.random.default_rng(0)
    cloud = PointCloud(rng.normal(size=(300, 2)))
    graph = build_graph(cloud, 0.6)
    est = estimate_density(cloud, 0.3)
    hc = hard_cluster(graph, est, 1e6)
    cores = extract_cores(graph, est, hc, 1e6)
    comp = graph.component_id == graph.component_id[hc.peak_vertices[0]]
    assert set(cores.cores[0].tolist()) == set(np.flatnonzero(comp).tolist())


def test_kappa_mismatch_and_validation():
    graph = path_graph(3)
    hc = hard_cluster(graph, dens([1, 2, 1]), 1.0)
    with pytest.raises(ValueError):
        extract_cores(graph, dens([1, 2, 1]), hc, 2.0)
    with pytest.raises(ValueError):
        hard_cluster(graph, dens([1, 2, 1]), 0.0)
    with pytest.raises(ValueError):
        hard_cluster(graph, dens([1, 2]), 1.0)


def test_core_overlap_detected():
    cores = ClusterCores((np.array([0, 1]), np.array([1, 2])), 1.0)
    with pytest.raises(ValueError):
        cores.labels(3)


def random_instance(seed, n):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(size=(n, 2))
    graph = build_graph(PointCloud(pts), 0.15)
    g = rng.normal(size=n)
    return graph, g


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000), st.integers(5, 120), st.floats(0.05, 3.0))
def test_matches_reference_and_persistence(seed, n, kappa):
    graph, g = random_instance(seed, n)
    hc = hard_cluster(graph, dens(g), kappa)
    adj = graph.adjacency.toarray()
    ref = reference_tomato(adj, g, kappa)
    peaks = sorted(set(ref.values()), key=lambda v: (-g[v], v))
    assert hc.peak_vertices.tolist() == peaks
    for v, r in ref.items():
        assert hc.assignment[v] == peaks.index(r)
    pers = persistence(adj, g)
    for p, prom in zip(hc.peak_vertices.tolist(), hc.prominence):
        expected = pers.get(p, math.inf)
        assert prom == pytest.approx(expected)
        assert prom >= kappa
    # every peak with persistence >= kappa is retained
    local_max = [p for p in range(n) if adj[p].sum() > 1 and all((-g[p], p) < (-g[q], q) for q in np.flatnonzero(adj[p]) if q != p)]
    strong = {p for p in local_max if pers.get(p, math.inf) >= kappa}
    assert strong == set(peaks)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000), st.integers(5, 150), st.floats(0.05, 3.0))
def test_core_properties(seed, n, kappa):
    graph, g = random_instance(seed, n)
    hc = hard_cluster(graph, dens(g), kappa)
    cores = extract_cores(graph, dens(g), hc, kappa)
    label = cores.labels(n)  # raises on overlap
    for c, core in enumerate(cores.cores):
        assert hc.peak_vertices[c] in core
        assert np.all(hc.assignment[core] == c)
        assert np.all(g[core] > g[hc.peak_vertices[c]] - kappa)
    assert np.count_nonzero(label >= 0) == sum(len(c) for c in cores.cores)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 100_000), st.floats(-50, 50))
def test_shift_invariance_and_monotonicity(seed, shift):
    graph, g = random_instance(seed, 100)
    a = hard_cluster(graph, dens(g), 0.5)
    b = hard_cluster(graph, dens(g + shift), 0.5)
    assert a.peak_vertices.tolist() == b.peak_vertices.tolist()
    np.testing.assert_allclose(a.prominence, b.prominence, atol=1e-9)
    counts = [hard_cluster(graph, dens(g), k).k for k in (0.1, 0.3, 0.6, 1.0, 2.0, 5.0)]
    assert all(x >= y for x, y in zip(counts, counts[1:]))
