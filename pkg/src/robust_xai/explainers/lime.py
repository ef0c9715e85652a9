"""Local linear surrogate explanations with an injectable sampler."""

from __future__ import annotations

import numpy as np

from ..data import Dataset
from ..generators import GaussianSampler, Generator, as_rng, derive_seed
from .base import Explanation, ExplainerConfig, ValueFunction, weighted_ridge


def _resolve(sampler, train: Dataset) -> Generator:
    if sampler is None or sampler == "gaussian":
        return GaussianSampler().fit(train)
    if isinstance(sampler, str):
        raise ValueError(f"LIME needs a fitted generator or 'gaussian', got {sampler!r}")
    return sampler


def interpretable(train: Dataset, x: np.ndarray, Z: np.ndarray, columns: str = "feature"):
    """Map sampled codes to the surrogate's input space.

    Numeric features become z-scores.  In ``"feature"`` mode a categorical
    becomes an indicator of equality with ``x``; in ``"onehot"`` mode it
    expands to its one-hot block.  Returns the design matrix, the distance
    space (always feature mode) and the column-to-feature map.
    """
    schema = train.schema
    norm = train.normalization
    zs = norm.zscore(Z)
    dist = zs.copy()
    cat = schema.categorical_mask
    dist[:, cat] = (Z[:, cat] == x[cat]).astype(float)
    if columns == "feature":
        return dist, dist, np.arange(Z.shape[1])
    cols, owner = [], []
    for j, f in enumerate(schema.inputs):
        if f.categorical:
            block = np.zeros((len(Z), f.width))
            block[np.arange(len(Z)), Z[:, j].astype(int)] = 1.0
            cols.append(block)
            owner.extend([j] * f.width)
        else:
            cols.append(zs[:, j:j + 1])
            owner.append(j)
    return np.hstack(cols), dist, np.asarray(owner)


def aggregate(coef: np.ndarray, owner: np.ndarray, n: int) -> np.ndarray:
    """Sum of absolute block coefficients, signed by the dominant one."""
    out = np.zeros(n)
    for j in range(n):
        block = coef[owner == j]
        if len(block) == 1:
            out[j] = block[0]
        elif len(block):
            dom = block[np.argmax(np.abs(block))]
            out[j] = np.sign(dom) * np.abs(block).sum()
    return out


def explain_lime(f: ValueFunction, x: np.ndarray, train: Dataset, sampler=None,
                 cfg: ExplainerConfig | None = None, seed=None) -> Explanation:
    """Explain ``f`` at ``x`` (codes) with a kernel-weighted ridge surrogate.

    Around-mode samplers draw neighbours of ``x``; whole-distribution
    samplers draw from the learned data distribution and leave locality to
    the kernel.  The first sample is ``x`` itself.
    """
    cfg = (cfg or ExplainerConfig()).validate()
    gen = _resolve(sampler, train)
    rng = as_rng(seed)
    x = np.asarray(x, dtype=float)
    n = len(x)
    Z = np.vstack([x[None, :], gen.sample_for(x, cfg.sample_count - 1, derive_seed(rng))])
    y = np.asarray(f(Z), dtype=float)
    X, D, owner = interpretable(train, x, Z, cfg.lime_columns)
    sigma = cfg.kernel_width or 0.75 * np.sqrt(train.schema.encoded_width)
    d2 = ((D - D[0]) ** 2).sum(axis=1)
    w = np.exp(-d2 / sigma ** 2)
    coef, intercept, lam = weighted_ridge(X, y, w, cfg.ridge)
    phi = aggregate(coef, owner, n)
    names = [f_.name for f_ in train.schema.inputs]
    return Explanation(
        contributions=dict(zip(names, map(float, phi))),
        intercept=float(intercept),
        method="lime",
        sampler=gen.name,
        seed=seed if isinstance(seed, (int, type(None))) else None,
        samples_used={k: len(Z) for k in names},
        flags={"ridge": lam} if lam != cfg.ridge else {},
    )
