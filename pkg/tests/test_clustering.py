"""K-Means against brute-force optima plus Lloyd/assignment contracts."""

import itertools

import numpy as np
import pytest

from tesscast import clustering
from tesscast.projection import Projection


def brute_force_kmeans(xy: np.ndarray, k: int):
    """Exhaust all assignments of points to k nonempty groups; return best (J, centers)."""
    n = xy.shape[0]
    best = None
    for labels in itertools.product(range(k), repeat=n):
        if len(set(labels)) != k:
            continue
        labels = np.array(labels)
        centers = np.vstack([xy[labels == j].mean(axis=0) for j in range(k)])
        j_val = float(np.sum((xy - centers[labels]) ** 2))
        if best is None or j_val < best[0]:
            best = (j_val, centers)
    return best


def test_projection_roundtrip():
    proj = Projection(12.9716, 77.5946)
    rng = np.random.default_rng(0)
    lats = rng.uniform(12.7, 13.2, 100)
    lons = rng.uniform(77.3, 77.9, 100)
    x, y = proj.to_km(lats, lons)
    lat2, lon2 = proj.to_latlon(x, y)
    assert np.allclose(lat2, lats, atol=1e-12)
    assert np.allclose(lon2, lons, atol=1e-12)


def test_four_point_two_cluster_matches_brute_force():
    xy = np.array([[0.0, 0.0], [0.0, 1.0], [10.0, 0.0], [10.0, 1.0]])
    centers, assign, objective, history, _ = clustering.lloyd(xy, 2, seed=0)
    best_j, best_centers = brute_force_kmeans(xy, 2)
    assert abs(objective - best_j) < 1e-12
    assert abs(objective - 1.0) < 1e-12
    got = sorted(map(tuple, np.round(centers, 9).tolist()))
    want = sorted(map(tuple, np.round(best_centers, 9).tolist()))
    assert got == want
    assert got == [(0.0, 0.5), (10.0, 0.5)]


def test_k_equals_n_zero_objective():
    rng = np.random.default_rng(1)
    pts = np.column_stack([rng.uniform(12.9, 13.0, 6), rng.uniform(77.5, 77.6, 6)])
    model = clustering.fit(pts, k=6, seed=3)
    assert model.objective == 0.0
    assert sorted(model.assignments.tolist()) == list(range(6))


def test_k_one_is_coordinate_mean():
    rng = np.random.default_rng(2)
    pts = np.column_stack([rng.uniform(12.9, 13.0, 50), rng.uniform(77.5, 77.6, 50)])
    model = clustering.fit(pts, k=1, seed=0)
    x, y = model.projection.to_km(pts[:, 0], pts[:, 1])
    assert np.allclose(model.centroids_km[0], [x.mean(), y.mean()], atol=1e-9)


def test_objective_recomputable():
    rng = np.random.default_rng(3)
    pts = np.column_stack([rng.uniform(12.8, 13.1, 400), rng.uniform(77.4, 77.8, 400)])
    model = clustering.fit(pts, k=7, seed=11)
    x, y = model.projection.to_km(pts[:, 0], pts[:, 1])
    xy = np.column_stack([x, y])
    recomputed = float(np.sum((xy - model.centroids_km[model.assignments]) ** 2))
    assert abs(recomputed - model.objective) <= 1e-9 * max(model.objective, 1.0)


def test_lloyd_monotone_objective_many_seeds():
    rng = np.random.default_rng(4)
    for seed in range(20):
        pts = np.column_stack([rng.uniform(0.0, 10.0, 200), rng.uniform(0.0, 10.0, 200)])
        _, _, _, history, _ = clustering.lloyd(pts, 8, seed=seed)
        diffs = np.diff(history)
        assert np.all(diffs <= 1e-9 * np.maximum(np.abs(history[:-1]), 1.0))


def test_assignments_are_nearest_with_low_index_ties():
    rng = np.random.default_rng(5)
    pts = np.column_stack([rng.uniform(12.8, 13.1, 300), rng.uniform(77.4, 77.8, 300)])
    model = clustering.fit(pts, k=9, seed=2)
    x, y = model.projection.to_km(pts[:, 0], pts[:, 1])
    xy = np.column_stack([x, y])
    d2 = ((xy[:, None, :] - model.centroids_km[None, :, :]) ** 2).sum(axis=2)
    assert np.array_equal(model.assignments, np.argmin(d2, axis=1))


def test_densities_sum_to_n():
    rng = np.random.default_rng(6)
    pts = np.column_stack([rng.uniform(12.8, 13.1, 123), rng.uniform(77.4, 77.8, 123)])
    model = clustering.fit(pts, k=5, seed=0)
    assert int(model.density.sum()) == 123


def test_permutation_invariance_given_init():
    rng = np.random.default_rng(7)
    pts = np.column_stack([rng.uniform(12.8, 13.1, 150), rng.uniform(77.4, 77.8, 150)])
    init = np.column_stack([rng.uniform(12.85, 13.05, 4), rng.uniform(77.45, 77.75, 4)])
    model_a = clustering.fit(pts, k=4, init_latlon=init)
    perm = rng.permutation(150)
    model_b = clustering.fit(pts[perm], k=4, init_latlon=init)
    assert abs(model_a.objective - model_b.objective) <= 1e-6 * max(model_a.objective, 1e-12)
    set_a = sorted(map(tuple, np.round(model_a.centroids_km, 6).tolist()))
    set_b = sorted(map(tuple, np.round(model_b.centroids_km, 6).tolist()))
    assert set_a == set_b


def test_deterministic_given_seed():
    rng = np.random.default_rng(8)
    pts = np.column_stack([rng.uniform(12.8, 13.1, 200), rng.uniform(77.4, 77.8, 200)])
    a = clustering.fit(pts, k=6, seed=123)
    b = clustering.fit(pts, k=6, seed=123)
    assert np.array_equal(a.assignments, b.assignments)
    assert np.array_equal(a.centroids_km, b.centroids_km)


def test_sort_by_density_tie_rule():
    model = clustering.ClusterModel(
        centroids_km=np.zeros((3, 2)), assignments=np.zeros(23, dtype=int),
        objective=0.0, density=np.array([5, 9, 9]),
        projection=Projection(0.0, 0.0))
    assert clustering.sort_by_density(model) == [1, 2, 0]


def test_sort_by_density_uniform_and_single():
    proj = Projection(0.0, 0.0)
    uniform = clustering.ClusterModel(np.zeros((4, 2)), np.zeros(4, dtype=int), 0.0,
                                      np.array([3, 3, 3, 3]), proj)
    assert clustering.sort_by_density(uniform) == [0, 1, 2, 3]
    single = clustering.ClusterModel(np.zeros((1, 2)), np.zeros(9, dtype=int), 0.0,
                                     np.array([9]), proj)
    assert clustering.sort_by_density(single) == [0]


def test_nearest_centroid_exact_and_tie():
    proj = Projection(13.0, 77.5)
    centroids = np.array([[1.0, 0.0], [2.0, 0.0], [4.0, 0.0], [6.0, 0.0], [-2.0, 0.0]])
    lat, lon = proj.to_latlon(centroids[:, 0], centroids[:, 1])
    pts_latlon = np.column_stack([lat, lon])
    model = clustering.fit(pts_latlon, k=5, init_latlon=pts_latlon, max_iter=1)
    # p equal to centroid 3
    assert clustering.nearest_centroid(model, pts_latlon[3, 0], pts_latlon[3, 1]) == 3
    # p exactly between centroids 1 (x=2) and 4 (x=-2): x = 0 -> tie -> lowest index 1
    lat0, lon0 = model.projection.to_latlon(0.0, 0.0)
    assert clustering.nearest_centroid(model, float(lat0), float(lon0)) == 1


def test_nearest_centroid_matches_linear_scan():
    rng = np.random.default_rng(9)
    pts = np.column_stack([rng.uniform(12.8, 13.1, 200), rng.uniform(77.4, 77.8, 200)])
    model = clustering.fit(pts, k=12, seed=1)
    for _ in range(200):
        lat = float(rng.uniform(12.8, 13.1))
        lon = float(rng.uniform(77.4, 77.8))
        x, y = model.projection.to_km(lat, lon)
        d2 = [(cx - x) ** 2 + (cy - y) ** 2 for cx, cy in model.centroids_km]
        want = min(range(len(d2)), key=lambda i: d2[i])
        assert clustering.nearest_centroid(model, lat, lon) == want


def test_empty_cluster_repair_keeps_k():
    # many duplicate points force empty clusters during iteration
    pts = np.array([[13.0, 77.5]] * 30 + [[13.05, 77.55]] * 3)
    model = clustering.fit(pts, k=3, seed=0)
    assert model.centroids_km.shape == (3, 2)
    assert model.density.sum() == 33


def test_errors():
    pts = np.array([[13.0, 77.5], [13.01, 77.51]])
    with pytest.raises(ValueError):
        clustering.fit(pts, k=3)
    with pytest.raises(ValueError):
        clustering.fit(pts, k=0)
    with pytest.raises(ValueError):
        clustering.fit(np.empty((0, 2)), k=1)
