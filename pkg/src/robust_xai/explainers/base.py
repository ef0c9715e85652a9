from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from ..data import Schema

ValueFunction = Callable[[np.ndarray], np.ndarray]


class ExplainerError(RuntimeError):
    pass


class SingularRegression(ExplainerError):
    pass


class TooManyFeatures(ExplainerError):
    pass


@dataclass
class ExplainerConfig:
    sample_count: int = 5000
    kernel_width: float | None = None  # None: 0.75 * sqrt(encoded width)
    ridge: float = 1e-3
    coalition_count: int = 2048
    distribution_set_size: int = 50
    ime_min_samples: int = 30
    ime_budget: int | None = None  # None: 50 * n * ime_min_samples
    ime_tolerance: float = 1e-2
    lime_columns: str = "feature"  # or "onehot"

    def validate(self) -> "ExplainerConfig":
        problems = []
        for name in ("sample_count", "coalition_count", "distribution_set_size", "ime_min_samples"):
            if getattr(self, name) < 1:
                problems.append(f"{name} must be >= 1")
        if self.kernel_width is not None and not self.kernel_width > 0:
            problems.append("kernel_width must be > 0")
        if self.ridge < 0:
            problems.append("ridge must be >= 0")
        if self.ime_budget is not None and self.ime_budget < 1:
            problems.append("ime_budget must be >= 1")
        if not self.ime_tolerance > 0:
            problems.append("ime_tolerance must be > 0")
        if self.lime_columns not in ("feature", "onehot"):
            problems.append("lime_columns must be 'feature' or 'onehot'")
        if problems:
            raise ValueError("; ".join(problems))
        return self

    def to_json(self) -> dict:
        return asdict(self)


@dataclass
class Explanation:
    contributions: dict[str, float]
    intercept: float
    method: str
    sampler: str
    seed: int | None = None
    samples_used: dict[str, int] = field(default_factory=dict)
    std_errors: dict[str, float] | None = None
    flags: dict = field(default_factory=dict)

    @property
    def names(self) -> list[str]:
        return list(self.contributions)

    @property
    def values(self) -> np.ndarray:
        return np.array(list(self.contributions.values()), dtype=float)

    def to_json(self) -> dict:
        out = {
            "method": self.method,
            "sampler": self.sampler,
            "seed": self.seed,
            "intercept": self.intercept,
            "contributions": dict(self.contributions),
            "samples_used": dict(self.samples_used),
        }
        if self.std_errors is not None:
            out["std_errors"] = dict(self.std_errors)
        if self.flags:
            out["flags"] = dict(self.flags)
        return out

    @classmethod
    def from_json(cls, doc: dict) -> "Explanation":
        return cls(
            contributions=dict(doc["contributions"]),
            intercept=doc["intercept"],
            method=doc["method"],
            sampler=doc["sampler"],
            seed=doc.get("seed"),
            samples_used=dict(doc.get("samples_used", {})),
            std_errors=doc.get("std_errors"),
            flags=dict(doc.get("flags", {})),
        )


def value_function(model, schema: Schema, target: int = 1) -> ValueFunction:
    """Wrap a model so it maps a code matrix to the probability of ``target``."""

    def f(codes: np.ndarray) -> np.ndarray:
        return model.predict_proba(schema.encode(np.atleast_2d(codes)))[:, target]

    return f


def most_important_feature(e: Explanation, with_flag: bool = False):
    """Feature with the largest absolute contribution; ties go to schema order.

    With ``with_flag`` also report whether every contribution is zero.
    """
    if not e.contributions:
        raise ExplainerError("empty explanation")
    vals = np.abs(e.values)
    name = e.names[int(np.argmax(vals))]
    if with_flag:
        return name, bool(np.all(vals == 0))
    return name


def weighted_ridge(X: np.ndarray, y: np.ndarray, w: np.ndarray, lam: float, intercept: bool = True,
                   retries: int = 3, max_cond: float = 1e12):
    """Weighted ridge with an unpenalized intercept.

    A rank-deficient or badly conditioned system raises the penalty tenfold
    (from at least 1e-6) up to ``retries`` times before giving up.
    """
    w = np.asarray(w, dtype=float)
    sw = w.sum()
    if intercept:
        xm = (w @ X) / sw
        ym = float(w @ y) / sw
        Xc, yc = X - xm, y - ym
    else:
        xm, ym, Xc, yc = np.zeros(X.shape[1]), 0.0, X, y
    G = Xc.T @ (Xc * w[:, None])
    b = Xc.T @ (w * yc)
    for attempt in range(retries + 1):
        A = G + lam * np.eye(G.shape[0])
        if A.size == 0:
            return np.zeros(0), ym, lam
        if np.linalg.cond(A) < max_cond:
            coef = np.linalg.solve(A, b)
            return coef, ym - float(xm @ coef), lam
        if attempt < retries:
            lam = max(lam, 1e-6) * 10
    raise SingularRegression(f"design matrix is singular even with ridge penalty {lam:g}")
