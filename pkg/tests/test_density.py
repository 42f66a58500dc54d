import math

import numpy as np
import pytest
from scipy.stats import norm

from softmode.data import PointCloud
from softmode.density import default_bandwidth, default_radius, estimate_density, evaluate_at, unit_ball_volume


def brute_gaussian(points, queries, sigma):
    d = points.shape[1]
    sq = ((queries[:, None, :] - points[None, :, :]) ** 2).sum(-1)
    return np.exp(-sq / (2 * sigma ** 2)).sum(1) / (len(points) * (2 * math.pi) ** (d / 2) * sigma ** d)


def test_single_point_gaussian():
    est = estimate_density(PointCloud(np.array([[0.0]])), 1.0)
    assert est.values[0] == pytest.approx(0.398942, abs=1e-6)


def test_single_point_ball_2d():
    est = estimate_density(PointCloud(np.array([[0.3, -0.2]])), 1.0, "ball")
    assert est.values[0] == pytest.approx(1 / math.pi, rel=1e-12)


@pytest.mark.parametrize("sigma", [0.3, 1.0, 4.0])
def test_symmetric_pair(sigma):
    est = estimate_density(PointCloud(np.array([[-1.0], [1.0]])), sigma)
    assert est.values[0] == est.values[1]


def test_two_point_midpoint():
    cloud = PointCloud(np.array([[-1.0], [1.0]]))
    assert evaluate_at(cloud, 1.0, "gaussian", [0.0]) == pytest.approx(0.241971, abs=1e-6)


def test_query_at_sample_matches_estimate():
    rng = np.random.default_rng(0)
    cloud = PointCloud(rng.normal(size=(50, 2)))
    for kind in ("gaussian", "ball"):
        est = estimate_density(cloud, 0.5, kind)
        assert evaluate_at(cloud, 0.5, kind, cloud.points[0]) == est.values[0]


def test_far_query_decays_monotonically():
    cloud = PointCloud(np.array([[0.0], [1.0]]))
    vals = [evaluate_at(cloud, 0.5, "gaussian", [x]) for x in (2, 3, 5, 8)]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    assert vals[-1] < 1e-30


def test_matches_brute_force():
    rng = np.random.default_rng(1)
    pts = rng.normal(size=(300, 3))
    est = estimate_density(PointCloud(pts), 0.7)
    np.testing.assert_allclose(est.values, brute_gaussian(pts, pts, 0.7), rtol=1e-12)


def test_ball_count_matches_brute_force():
    rng = np.random.default_rng(2)
    pts = rng.uniform(size=(400, 2))
    est = estimate_density(PointCloud(pts), 0.1, "ball")
    dist = np.sqrt(((pts[:, None] - pts[None]) ** 2).sum(-1))
    counts = (dist <= 0.1).sum(1)
    np.testing.assert_allclose(est.values, counts / (400 * math.pi * 0.01), rtol=1e-12)


def test_integrates_to_one():
    rng = np.random.default_rng(3)
    cloud = PointCloud(rng.normal(size=(200, 2)))
    q = np.random.default_rng(4).uniform(-6, 6, size=(200_000, 2))
    total = brute_gaussian(cloud.points, q, 0.4).mean() * 144
    assert total == pytest.approx(1.0, rel=0.02)


def test_sup_norm_consistency():
    n = 10_000
    rng = np.random.default_rng(5)
    cloud = PointCloud(rng.standard_normal((n, 1)))
    sigma = n ** (-1 / 5)
    grid = np.linspace(-2, 2, 81)
    est = np.array([evaluate_at(cloud, sigma, "gaussian", [x]) for x in grid])
    assert np.max(np.abs(est - norm.pdf(grid))) <= 0.05


def test_permutation_invariance():
    rng = np.random.default_rng(6)
    pts = rng.normal(size=(100, 2))
    perm = rng.permutation(100)
    a = estimate_density(PointCloud(pts), 0.5).values
    b = estimate_density(PointCloud(pts[perm]), 0.5).values
    np.testing.assert_allclose(b, a[perm], rtol=1e-12)


def test_values_positive_and_bandwidth_recorded():
    rng = np.random.default_rng(7)
    cloud = PointCloud(rng.normal(size=(64, 2)))
    est = estimate_density(cloud)
    assert est.bandwidth == pytest.approx(default_bandwidth(cloud))
    assert np.all(est.values > 0)
    assert est.kernel_kind == "gaussian"
    assert estimate_density(cloud, 0).bandwidth == est.bandwidth


def test_default_bandwidth_rule():
    pts = np.column_stack([np.arange(16.0), 2 * np.arange(16.0)])
    cloud = PointCloud(pts)
    expected = 16 ** (-1 / 6) * np.mean(pts.std(axis=0))
    assert default_bandwidth(cloud) == pytest.approx(expected)
    assert default_radius(0.2) == pytest.approx(0.6)
    assert default_radius(0.2, "ball") == 0.2


def test_unit_ball_volume():
    assert unit_ball_volume(1) == pytest.approx(2)
    assert unit_ball_volume(2) == pytest.approx(math.pi)
    assert unit_ball_volume(3) == pytest.approx(4 * math.pi / 3)


def test_errors():
    cloud = PointCloud(np.zeros((3, 2)))
    with pytest.raises(ValueError):
        estimate_density(cloud, -1.0)
    with pytest.raises(ValueError):
        estimate_density(cloud, 1.0, "epanechnikov")
    with pytest.raises(ValueError):
        evaluate_at(cloud, 1.0, "gaussian", [0.0])
    # the normaliser overflows, so every value underflows to zero
    with pytest.raises(FloatingPointError):
        estimate_density(cloud, 1e200)
