"""Permutation-sampling Shapley estimates with adaptive sample allocation."""

from __future__ import annotations

import itertools
import math

import numpy as np

from ..data import Dataset
from ..generators import FILL_IN, Generator, PerturbationSampler, as_rng, derive_seed
from .base import Explanation, ExplainerConfig, ExplainerError, ValueFunction


def _prefix_masks(rng: np.random.Generator, m: int, n: int, i: int) -> np.ndarray:
    """Rows of Pre^i(π) for ``m`` random permutations π."""
    ranks = rng.random((m, n)).argsort(axis=1).argsort(axis=1)
    return ranks < ranks[:, i:i + 1]


def _draw(f, x, i, m, sampler: Generator, rng):
    pre = _prefix_masks(rng, m, len(x), i)
    b1 = sampler.fill_in_batch(x, ~pre, derive_seed(rng))  # x on Pre, generated elsewhere
    b2 = b1.copy()
    b2[:, i] = x[i]
    y = np.asarray(f(np.vstack([b2, b1])), dtype=float)
    return y[:m] - y[m:]


def _resolve(sampler, train: Dataset) -> Generator:
    if sampler is None or sampler == "perturbation":
        return PerturbationSampler().fit(train)
    if isinstance(sampler, str):
        raise ValueError(f"IME needs a fitted fill-in generator or 'perturbation', got {sampler!r}")
    if FILL_IN not in sampler.capabilities:
        raise ExplainerError(f"{sampler.name} cannot fill in hidden features")
    return sampler


def explain_ime(f: ValueFunction, x: np.ndarray, train: Dataset, sampler=None,
                cfg: ExplainerConfig | None = None, seed=None) -> Explanation:
    """Estimate Shapley values of ``f`` at ``x`` (codes) by permutation sampling.

    Every feature first gets ``ime_min_samples`` draws.  While some standard
    error exceeds the tolerance and budget remains, features are given the
    extra draws their sample variance calls for (at most doubling per round,
    scaled down to the remaining budget).
    """
    cfg = (cfg or ExplainerConfig()).validate()
    gen = _resolve(sampler, train)
    rng = as_rng(seed)
    x = np.asarray(x, dtype=float)
    n = len(x)
    m_min, tol = cfg.ime_min_samples, cfg.ime_tolerance
    budget = cfg.ime_budget or 50 * n * m_min
    draws = [_draw(f, x, i, m_min, gen, rng) for i in range(n)]
    total = n * m_min
    while True:
        m = np.array([len(d) for d in draws])
        var = np.array([d.var(ddof=1) if len(d) > 1 else 0.0 for d in draws])
        se = np.sqrt(var / m)
        need = np.where(se > tol, np.ceil(var / tol ** 2) - m, 0).clip(min=0)
        need = np.minimum(need, m)
        left = budget - total
        if need.sum() == 0 or left <= 0:
            break
        if need.sum() > left:
            need = np.floor(need * left / need.sum())
            if need.sum() == 0:
                need[np.argmax(var / m)] = left
        for i in np.flatnonzero(need):
            draws[i] = np.concatenate([draws[i], _draw(f, x, i, int(need[i]), gen, rng)])
        total += int(need.sum())
    phi = np.array([d.mean() for d in draws])
    m = np.array([len(d) for d in draws])
    se = np.sqrt(np.array([d.var(ddof=1) if len(d) > 1 else 0.0 for d in draws]) / m)
    names = [f_.name for f_ in train.schema.inputs]
    fx = float(np.asarray(f(x[None, :]))[0])
    flags = {"budget_exhausted": True} if np.any(se > tol) else {}
    return Explanation(
        contributions=dict(zip(names, map(float, phi))),
        intercept=fx - float(phi.sum()),
        method="ime",
        sampler=gen.name,
        seed=seed if isinstance(seed, (int, type(None))) else None,
        samples_used=dict(zip(names, map(int, m))),
        std_errors=dict(zip(names, map(float, se))),
        flags=flags,
    )


def explain_ime_exhaustive(f: ValueFunction, x: np.ndarray, rows: np.ndarray, names: list[str]) -> Explanation:
    """Average V over every permutation and every reference row."""
    x = np.asarray(x, dtype=float)
    rows = np.asarray(rows, dtype=float)
    n = len(x)
    perms = np.array(list(itertools.permutations(range(n))), dtype=int)
    ranks = np.empty_like(perms)
    ranks[np.arange(len(perms))[:, None], perms] = np.arange(n)[None, :]
    phi = np.zeros(n)
    for i in range(n):
        pre = ranks < ranks[:, i:i + 1]
        with_i = pre.copy()
        with_i[:, i] = True
        b2 = np.where(with_i[:, None, :], x, rows[None, :, :]).reshape(-1, n)
        b1 = np.where(pre[:, None, :], x, rows[None, :, :]).reshape(-1, n)
        phi[i] = np.mean(np.asarray(f(b2), dtype=float) - np.asarray(f(b1), dtype=float))
    count = math.factorial(n) * len(rows)
    return Explanation(
        contributions=dict(zip(names, map(float, phi))),
        intercept=float(np.mean(f(rows))),
        method="ime",
        sampler="perturbation",
        samples_used={k: count for k in names},
        flags={"exhaustive": True},
    )
