"""Lloyd's k-means with k-means++ seeding, silhouette model selection, and the
centroid distribution set Kernel SHAP uses by default."""

from __future__ import annotations

import numpy as np

from ..data import Dataset
from .base import WHOLE, DistributionSet, Generator, as_rng


def _sq_dists(Z: np.ndarray, C: np.ndarray) -> np.ndarray:
    d = (Z * Z).sum(1)[:, None] - 2 * Z @ C.T + (C * C).sum(1)[None, :]
    return np.maximum(d, 0.0)


def kmeans_pp_init(Z: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(Z)
    centers = [Z[rng.integers(n)]]
    closest = _sq_dists(Z, centers[0][None, :])[:, 0]
    for _ in range(1, k):
        total = closest.sum()
        if total <= 0:
            # all remaining points coincide with a center; take any unused one
            idx = rng.integers(n)
        else:
            idx = rng.choice(n, p=closest / total)
        centers.append(Z[idx])
        closest = np.minimum(closest, _sq_dists(Z, Z[idx][None, :])[:, 0])
    return np.array(centers)


def kmeans(Z: np.ndarray, k: int, seed=None, max_iter: int = 300):
    """Return ``(centers, labels, inertia_history)``.

    ``inertia_history`` holds the within-cluster sum of squares after every
    Lloyd update.  A cluster that empties is re-seeded at the point farthest
    from its assigned center.
    """
    Z = np.asarray(Z, dtype=float)
    if not 1 <= k <= len(Z):
        raise ValueError(f"k must lie in [1, {len(Z)}]")
    rng = as_rng(seed)
    centers = kmeans_pp_init(Z, k, rng)
    labels = None
    history = []
    for _ in range(max_iter):
        d = _sq_dists(Z, centers)
        new = np.argmin(d, axis=1)
        cost = d[np.arange(len(Z)), new]
        counts = np.bincount(new, minlength=k)
        for c in np.flatnonzero(counts == 0):
            far = int(np.argmax(cost))
            new[far] = c
            cost[far] = 0.0
            counts = np.bincount(new, minlength=k)
        for c in range(k):
            centers[c] = Z[new == c].mean(axis=0)
        history.append(float(((Z - centers[new]) ** 2).sum()))
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
    return centers, new, history


def silhouette_score(Z: np.ndarray, labels: np.ndarray) -> float:
    """Mean silhouette coefficient with Euclidean distance.

    Points in singleton clusters score 0.
    """
    Z = np.asarray(Z, dtype=float)
    labels = np.asarray(labels)
    _, lab = np.unique(labels, return_inverse=True)
    k = lab.max() + 1
    if k < 2:
        raise ValueError("silhouette needs at least two clusters")
    onehot = np.zeros((len(Z), k))
    onehot[np.arange(len(Z)), lab] = 1.0
    sizes = onehot.sum(0)
    sums = np.zeros((len(Z), k))
    for s in range(0, len(Z), 1024):
        D = np.sqrt(_sq_dists(Z[s:s + 1024], Z))
        sums[s:s + 1024] = D @ onehot
    own = sizes[lab]
    a = sums[np.arange(len(Z)), lab] / np.maximum(own - 1, 1)
    other = sums / sizes
    other[np.arange(len(Z)), lab] = np.inf
    b = other.min(axis=1)
    s = np.where(own > 1, (b - a) / np.maximum(np.maximum(a, b), 1e-300), 0.0)
    return float(s.mean())


def silhouette_select_k(ds: Dataset, k_range, seed=None) -> int:
    """k in ``k_range`` with the highest silhouette; ties go to the smallest k."""
    ks = sorted(int(k) for k in k_range)
    if len(ks) == 1:
        return ks[0]
    Z = ds.normalization.normalize(ds.X)
    rng = as_rng(seed)
    best_k, best = ks[0], -np.inf
    for k in ks:
        if not 2 <= k <= len(ds) - 1:
            raise ValueError(f"k={k} outside [2, {len(ds) - 1}]")
        _, labels, _ = kmeans(Z, k, rng)
        score = silhouette_score(Z, labels)
        if score > best:
            best_k, best = k, score
    return best_k


def kmeans_distribution_set(ds: Dataset, k: int, seed=None) -> DistributionSet:
    if k > len(ds):
        raise ValueError("k cannot exceed the number of rows")
    norm = ds.normalization if len(ds) > 1 else None
    Z = norm.normalize(ds.X) if norm else ds.schema.encode(ds.X)
    centers, labels, _ = kmeans(Z, k, seed)
    rows = norm.denormalize(centers) if norm else ds.schema.decode(centers)
    sizes = np.bincount(labels, minlength=k)
    return DistributionSet(rows, {"kmeans": k, "cluster_sizes": sizes.tolist()})


class KMeansGenerator(Generator):
    """Cluster centroids as a (tiny) generator; ``k=None`` selects k by silhouette."""

    name = "kmeans"
    capabilities = frozenset({WHOLE})

    def __init__(self, k: int | None = None, k_max: int = 20, seed: int = 0):
        super().__init__(WHOLE)
        self.k = k
        self.k_max = k_max
        self.seed = seed

    def _fit(self, ds):
        k = self.k
        if k is None:
            k = silhouette_select_k(ds, range(2, min(self.k_max, len(ds) - 1) + 1), self.seed)
        self.k = k
        self.centroids = kmeans_distribution_set(ds, k, self.seed).instances

    def generate(self, count, seed=None):
        self._check(WHOLE)
        rng = as_rng(seed)
        return self.centroids[rng.integers(0, len(self.centroids), size=max(count, 0))]

    def distribution_set(self, k=None, seed=None, x=None):
        self._check(WHOLE)
        return DistributionSet(self.centroids.copy(), {"generator": self.name, "k": self.k})

    def to_json(self):
        return {"name": self.name, "mode": self.mode, "k": self.k, "centroids": self.centroids.tolist()}
