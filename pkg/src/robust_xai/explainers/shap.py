"""Kernel SHAP over a distribution set, with an equality-constrained solve."""

from __future__ import annotations

import itertools
from math import comb

import numpy as np

from ..generators import DistributionSet, as_rng
from .base import Explanation, ExplainerConfig, SingularRegression, ValueFunction

_CHUNK = 200_000  # rows per model call


def coalition_values(f: ValueFunction, x: np.ndarray, D: np.ndarray, masks: np.ndarray) -> np.ndarray:
    """v(z) = mean over d in D of f(x on z, d elsewhere), for each row z of ``masks``."""
    masks = np.asarray(masks, dtype=bool)
    k = len(D)
    per = max(1, _CHUNK // k)
    out = np.empty(len(masks))
    for s in range(0, len(masks), per):
        m = masks[s:s + per]
        rows = np.where(m[:, None, :], x[None, None, :], D[None, :, :]).reshape(-1, len(x))
        out[s:s + per] = np.asarray(f(rows), dtype=float).reshape(len(m), k).mean(axis=1)
    return out


def all_coalitions(n: int) -> np.ndarray:
    return np.array(list(itertools.product([False, True], repeat=n)), dtype=bool).reshape(-1, n)


def kernel_weight(n: int, s: np.ndarray) -> np.ndarray:
    s = np.asarray(s)
    return n / (np.array([comb(n, int(v)) for v in s], dtype=float) * s * (n - s))


def _sample_coalitions(n: int, count: int, rng: np.random.Generator):
    sizes = np.arange(1, n)
    p = (n - 1) / (sizes * (n - sizes))
    p /= p.sum()
    drawn = rng.choice(sizes, size=count, p=p)
    keys = rng.random((count, n))
    ranks = keys.argsort(axis=1).argsort(axis=1)
    masks = ranks < drawn[:, None]
    uniq, counts = np.unique(masks, axis=0, return_counts=True)
    return uniq, counts.astype(float)


def constrained_wls(Z: np.ndarray, v: np.ndarray, w: np.ndarray, v0: float, v1: float) -> np.ndarray:
    """Weighted least squares for φ with Σφ = v1 − v0 and intercept v0.

    The constraint is enforced by eliminating the last coordinate.
    """
    n = Z.shape[1]
    delta = v1 - v0
    if n == 1:
        return np.array([delta])
    Zf = Z.astype(float)
    X = Zf[:, :-1] - Zf[:, -1:]
    y = v - v0 - Zf[:, -1] * delta
    A = X.T @ (X * w[:, None])
    if np.linalg.matrix_rank(A) < n - 1:
        raise SingularRegression("coalitions do not identify every contribution")
    head = np.linalg.solve(A, X.T @ (w * y))
    return np.append(head, delta - head.sum())


def explain_shap(f: ValueFunction, x: np.ndarray, dist: DistributionSet | np.ndarray, names: list[str],
                 cfg: ExplainerConfig | None = None, seed=None, exhaustive: bool | None = None) -> Explanation:
    """Kernel SHAP for ``f`` at ``x`` (codes); ``names`` are the input feature names.

    Exhaustive mode enumerates all coalitions with exact kernel weights.  It is
    used automatically when the coalition budget covers them all; otherwise
    coalitions are sampled by size from the kernel mass and deduplicated,
    with their counts as weights.  The empty and full coalitions enter
    through the constraint.
    """
    cfg = (cfg or ExplainerConfig()).validate()
    D = dist.instances if isinstance(dist, DistributionSet) else np.asarray(dist, dtype=float)
    if len(D) == 0:
        raise ValueError("distribution set is empty")
    x = np.asarray(x, dtype=float)
    n = len(x)
    v0 = float(np.mean(f(D)))
    v1 = float(np.asarray(f(x[None, :]), dtype=float)[0])
    if exhaustive is None:
        exhaustive = cfg.coalition_count >= 2 ** n - 2
    if n == 1:
        Z, w = np.zeros((0, 1), dtype=bool), np.zeros(0)
    elif exhaustive:
        Z = all_coalitions(n)[1:-1]
        w = kernel_weight(n, Z.sum(axis=1))
    else:
        if cfg.coalition_count < n + 2:
            raise ValueError("coalition_count must be at least n + 2")
        Z, w = _sample_coalitions(n, cfg.coalition_count - 2, as_rng(seed))
    v = coalition_values(f, x, D, Z) if len(Z) else np.zeros(0)
    phi = constrained_wls(Z, v, w, v0, v1)
    used = len(Z) + 2
    return Explanation(
        contributions=dict(zip(names, map(float, phi))),
        intercept=v0,
        method="shap",
        sampler=(dist.provenance.get("generator", "custom") if isinstance(dist, DistributionSet) else "custom"),
        seed=seed if isinstance(seed, (int, type(None))) else None,
        samples_used={k: used for k in names},
        flags={"exhaustive": True} if exhaustive else {},
    )
