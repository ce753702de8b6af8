"""K-Means clustering of demand points; cluster centroids seed the Voronoi tessellation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .projection import Projection


@dataclass
class ClusterModel:
    """
    A fitted K-Means model over projected (km-plane) demand points.

    centroids_km holds the planar centers; centroids the same points in
    lat/lon. density[j] counts the points assigned to centroid j, the
    quantity used to rank demand hot spots.
    """

    centroids_km: np.ndarray          # (k, 2)
    assignments: np.ndarray           # (n,) int
    objective: float                  # sum of squared km distances
    density: np.ndarray               # (k,) int
    projection: Projection
    objective_history: list[float] = field(default_factory=list)
    n_iter: int = 0

    @property
    def k(self) -> int:
        return self.centroids_km.shape[0]

    @property
    def centroids(self) -> np.ndarray:
        lat, lon = self.projection.to_latlon(self.centroids_km[:, 0], self.centroids_km[:, 1])
        return np.column_stack([lat, lon])


def _squared_distances(xy: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """(n, k) squared Euclidean distances via the matmul expansion."""
    d2 = (np.sum(xy * xy, axis=1)[:, None]
          - 2.0 * (xy @ centers.T)
          + np.sum(centers * centers, axis=1)[None, :])
    return np.maximum(d2, 0.0)


def _kmeans_pp_init(xy: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding: spread initial centers proportionally to squared distance."""
    n = xy.shape[0]
    centers = np.empty((k, 2))
    first = int(rng.integers(n))
    centers[0] = xy[first]
    d2 = np.sum((xy - centers[0]) ** 2, axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centers[j] = xy[idx]
        d2 = np.minimum(d2, np.sum((xy - centers[j]) ** 2, axis=1))
    return centers


def lloyd(xy: np.ndarray, k: int, seed: int = 0, max_iter: int = 300,
          tol: float = 1e-6, init: np.ndarray | None = None):
    """
    Lloyd iterations on planar points.

    Stops when no point is reassigned, when the relative objective
    improvement falls below tol, or at max_iter. Ties in the assignment
    step go to the lowest centroid index. Empty clusters are re-seeded at
    the point farthest from its assigned centroid, which never increases
    the objective measured after each assignment step.

    Returns (centers, assignments, objective, history, n_iter).
    """
    xy = np.asarray(xy, dtype=float)
    n = xy.shape[0]
    if n < 1:
        raise ValueError("need at least one point")
    if not (1 <= k <= n):
        raise ValueError(f"k must satisfy 1 <= k <= n (k={k}, n={n})")
    if init is not None:
        centers = np.array(init, dtype=float, copy=True)
        if centers.shape != (k, 2):
            raise ValueError("init must have shape (k, 2)")
    else:
        rng = np.random.default_rng(seed)
        centers = _kmeans_pp_init(xy, k, rng)

    xx = np.sum(xy * xy, axis=1)
    buf = np.empty((n, k))
    rows = np.arange(n)

    def distances() -> np.ndarray:
        np.matmul(xy, centers.T, out=buf)
        np.multiply(buf, -2.0, out=buf)
        np.add(buf, xx[:, None], out=buf)
        np.add(buf, np.sum(centers * centers, axis=1)[None, :], out=buf)
        np.maximum(buf, 0.0, out=buf)
        return buf

    assignments = None
    history: list[float] = []
    prev_obj = np.inf
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        d2 = distances()
        new_assign = np.argmin(d2, axis=1)
        obj = float(d2[rows, new_assign].sum())
        history.append(obj)
        if assignments is not None and np.array_equal(new_assign, assignments):
            assignments = new_assign
            break
        assignments = new_assign
        if prev_obj < np.inf and prev_obj > 0.0 and (prev_obj - obj) / prev_obj < tol:
            break
        prev_obj = obj
        counts = np.bincount(assignments, minlength=k)
        sums_x = np.bincount(assignments, weights=xy[:, 0], minlength=k)
        sums_y = np.bincount(assignments, weights=xy[:, 1], minlength=k)
        nonempty = counts > 0
        centers[nonempty, 0] = sums_x[nonempty] / counts[nonempty]
        centers[nonempty, 1] = sums_y[nonempty] / counts[nonempty]
        if not nonempty.all():
            # re-seed each empty cluster at the currently worst-served point
            assigned_d2 = distances()[rows, assignments].copy()
            for j in np.flatnonzero(~nonempty):
                worst = int(np.argmax(assigned_d2))
                centers[j] = xy[worst]
                assigned_d2[worst] = 0.0

    d2 = distances()
    assignments = np.argmin(d2, axis=1)
    # direct form: the matmul expansion leaves ~1e-15 cancellation noise,
    # which would break the exact J = 0 contract at k = n
    objective = float(np.sum((xy - centers[assignments]) ** 2))
    return centers, assignments, objective, history, n_iter


def fit(points: np.ndarray, k: int, seed: int = 0, max_iter: int = 300,
        tol: float = 1e-6, init_latlon: np.ndarray | None = None) -> ClusterModel:
    """
    Cluster (lat, lon) demand points into k centroids.

    Points are projected to a km plane about their mean coordinate before
    clustering, so the minimized objective is a true squared-km error.
    Deterministic for a given seed.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[1] != 2:
        raise ValueError("points must have shape (n, 2) as (lat, lon)")
    proj = Projection.for_points(points[:, 0], points[:, 1])
    x, y = proj.to_km(points[:, 0], points[:, 1])
    xy = np.column_stack([x, y])
    init = None
    if init_latlon is not None:
        init_latlon = np.asarray(init_latlon, dtype=float)
        ix, iy = proj.to_km(init_latlon[:, 0], init_latlon[:, 1])
        init = np.column_stack([ix, iy])
    centers, assignments, objective, history, n_iter = lloyd(
        xy, k, seed=seed, max_iter=max_iter, tol=tol, init=init)
    density = np.bincount(assignments, minlength=k)
    return ClusterModel(centers, assignments, objective, density, proj, history, n_iter)


def sort_by_density(model: ClusterModel) -> list[int]:
    """Centroid indices by descending density; ties by ascending index."""
    order = np.lexsort((np.arange(model.k), -model.density))
    return [int(i) for i in order]


def nearest_centroid(model: ClusterModel, lat: float, lon: float) -> int:
    """Index of the nearest centroid (lowest index on exact ties)."""
    x, y = model.projection.to_km(lat, lon)
    d2 = (model.centroids_km[:, 0] - x) ** 2 + (model.centroids_km[:, 1] - y) ** 2
    return int(np.argmin(d2))
