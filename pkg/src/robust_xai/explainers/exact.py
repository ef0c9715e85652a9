"""Exact Shapley values by subset enumeration, used as a test oracle."""

from __future__ import annotations

from math import factorial

import numpy as np

from .base import Explanation, TooManyFeatures, ValueFunction
from .shap import all_coalitions, coalition_values

MAX_FEATURES = 10


def shapley_from_values(v: np.ndarray, masks: np.ndarray) -> np.ndarray:
    """Shapley values of a game given v on every coalition in ``masks`` (all 2^n rows)."""
    n = masks.shape[1]
    index = {m.tobytes(): k for k, m in enumerate(masks)}
    sizes = masks.sum(axis=1)
    weight = np.array([factorial(s) * factorial(n - s - 1) / factorial(n) if s < n else 0.0 for s in sizes])
    phi = np.zeros(n)
    for i in range(n):
        for k in np.flatnonzero(~masks[:, i]):
            plus = masks[k].copy()
            plus[i] = True
            phi[i] += weight[k] * (v[index[plus.tobytes()]] - v[k])
    return phi


def exact_shapley(f: ValueFunction, x: np.ndarray, rows: np.ndarray, names: list[str]) -> Explanation:
    """Shapley values where hidden features take values from each row of ``rows``.

    Equivalent to averaging over all n! permutations and all rows, but
    computed from the 2^n coalition values.
    """
    x = np.asarray(x, dtype=float)
    rows = np.asarray(rows, dtype=float)
    n = len(x)
    if n > MAX_FEATURES:
        raise TooManyFeatures(f"exact Shapley values need n <= {MAX_FEATURES}, got {n}")
    if len(rows) == 0:
        raise ValueError("no reference rows")
    masks = all_coalitions(n)
    v = coalition_values(f, x, rows, masks)
    phi = shapley_from_values(v, masks)
    return Explanation(
        contributions=dict(zip(names, map(float, phi))),
        intercept=float(v[0]),
        method="exact",
        sampler="perturbation",
        samples_used={k: len(masks) * len(rows) for k in names},
    )
