"""Generator built on the Gaussian units of an RBF network."""

from __future__ import annotations

import numpy as np

from ..data import Dataset
from .base import WHOLE, Generator, as_rng
from .kmeans import kmeans

COVARIANCE_FLOOR = 1e-6


class RBFGenerator(Generator):
    """Gaussian kernels placed by k-means in normalized encoded space.

    Each kernel keeps the diagonal covariance of its members, its share of
    the training rows and its class frequencies.  New rows pick a kernel
    proportionally to its share and are drawn from its normal distribution;
    categorical blocks snap to their largest coordinate.
    """

    name = "rbf"
    capabilities = frozenset({WHOLE})

    def __init__(self, kernel_count: int | None = None, seed: int = 0):
        super().__init__(WHOLE)
        if kernel_count is not None and kernel_count < 1:
            raise ValueError("kernel_count must be >= 1")
        self.kernel_count = kernel_count
        self.seed = seed

    def _fit(self, ds: Dataset):
        self.norm = ds.normalization
        Z = self.norm.normalize(ds.X)
        k = self.kernel_count or max(2, min(50, len(ds) // 20))
        k = min(k, len(ds))
        self.kernel_count = k
        centers, labels, _ = kmeans(Z, k, self.seed)
        var = np.full_like(centers, COVARIANCE_FLOOR)
        class_freq = np.zeros((k, 2))
        counts = np.bincount(labels, minlength=k)
        self.singular = []
        for c in range(k):
            members = Z[labels == c]
            if len(members) >= 2:
                var[c] = np.maximum(members.var(axis=0), COVARIANCE_FLOOR)
            else:
                self.singular.append(c)
            class_freq[c] = np.bincount(ds.y[labels == c], minlength=2) / max(counts[c], 1)
        self.centers = centers
        self.variances = var
        self.weights = counts / counts.sum()
        self.class_freq = class_freq

    def generate(self, count, seed=None, return_labels=False):
        self._check(WHOLE)
        rng = as_rng(seed)
        count = max(int(count), 0)
        if count == 0:
            return (self._empty(0), np.empty(0, dtype=int)) if return_labels else self._empty(0)
        kern = rng.choice(len(self.centers), size=count, p=self.weights)
        Z = self.centers[kern] + rng.standard_normal((count, self.centers.shape[1])) * np.sqrt(self.variances[kern])
        rows = self.norm.denormalize(Z)
        if return_labels:
            labels = (rng.random(count) < self.class_freq[kern, 1]).astype(int)
            return rows, labels
        return rows

    def to_json(self):
        return {
            "name": self.name,
            "mode": self.mode,
            "kernel_count": self.kernel_count,
            "centers": self.centers.tolist(),
            "variances": self.variances.tolist(),
            "weights": self.weights.tolist(),
            "class_freq": self.class_freq.tolist(),
        }
