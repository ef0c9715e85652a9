"""The samplers the explanation methods originally ship with."""

from __future__ import annotations

import numpy as np

from ..data import Dataset
from .base import AROUND, FILL_IN, WHOLE, Generator, as_rng


def gaussian_perturb(ds: Dataset, x: np.ndarray, count: int, seed=None) -> np.ndarray:
    """Tabular LIME sampling around ``x``.

    Numeric coordinates get standard normal noise in z-score space.
    Categorical values are drawn from the training level frequencies; the
    explainer later turns them into equality indicators against ``x``.
    """
    rng = as_rng(seed)
    schema = ds.schema
    x = np.asarray(x, dtype=float)
    if count <= 0:
        return np.empty((0, len(schema.inputs)))
    norm = ds.normalization
    out = np.empty((count, len(schema.inputs)))
    xz = norm.zscore(x)
    for j, f in enumerate(schema.inputs):
        if f.categorical:
            out[:, j] = rng.choice(f.width, size=count, p=ds.level_frequencies(j))
        else:
            out[:, j] = xz[j] + rng.standard_normal(count)
    return norm.unzscore(out)


class GaussianSampler(Generator):
    name = "gaussian"
    capabilities = frozenset({AROUND})

    def __init__(self, mode: str = AROUND):
        super().__init__(mode)

    def _fit(self, ds):
        self.ds = ds

    def generate_around(self, x, count, seed=None):
        self._check(AROUND)
        return gaussian_perturb(self.ds, x, count, seed)

    def to_json(self):
        return {"name": self.name, "mode": self.mode}


class PerturbationSampler(Generator):
    """Draws whole training rows; fill-in copies hidden values from one row.

    This is IME's original sampling: the hidden features of ``x`` are replaced
    with those of a uniformly drawn training instance.  Used as a whole-data
    generator it is a bootstrap resampler of the real rows.
    """

    name = "perturbation"
    capabilities = frozenset({WHOLE, AROUND, FILL_IN})

    def _fit(self, ds):
        self.data = np.array(ds.X)

    def generate(self, count, seed=None):
        self._check(WHOLE)
        rng = as_rng(seed)
        return self.data[rng.integers(0, len(self.data), size=max(count, 0))]

    def generate_around(self, x, count, seed=None):
        return self.generate(count, seed)

    def fill_in_batch(self, x, hidden_masks, seed=None):
        self._check(FILL_IN)
        masks = np.asarray(hidden_masks, dtype=bool)
        donors = self.generate(len(masks), seed)
        return np.where(masks, donors, np.asarray(x, dtype=float)[None, :])

    def to_json(self):
        return {"name": self.name, "mode": self.mode, "data": self.data.tolist()}
