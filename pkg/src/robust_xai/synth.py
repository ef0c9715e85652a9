"""Synthetic stand-ins for the audited datasets.

The presets mirror the shape of the COMPAS, German credit and Communities &
Crime tables (feature counts, kinds, sensitive attribute, class balance) and
plant realistic dependencies: integer-valued counts, correlated features and
fraction groups that sum to one.  They are not samples of the real data.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .data import Dataset, Feature, Schema


@dataclass
class SynthSpec:
    """Generic latent-factor table description.

    Numeric columns are noisy linear functions of a few latent factors and are
    rounded to integers when ``integer_numeric`` is set; categorical columns
    bin such functions into their levels.  ``fraction_groups`` adds groups of
    non-negative columns that sum to one per row.
    """

    n_numeric: int = 3
    categorical_levels: list[int] = field(default_factory=lambda: [2, 2, 3])
    fraction_groups: list[int] = field(default_factory=list)
    sensitive: str | None = "c0"
    integer_numeric: bool = True
    n_latent: int = 2
    target_rate: float = 0.5


def synth_dataset(spec: str | SynthSpec, rows: int, seed: int) -> Dataset:
    if rows < 1:
        raise ValueError("rows must be >= 1")
    rng = np.random.default_rng(seed)
    if isinstance(spec, str):
        key = spec.lower().replace("-like", "").replace("_like", "")
        try:
            builder = _PRESETS[key]
        except KeyError:
            raise ValueError(f"unknown synth preset {spec!r}; choose from {sorted(_PRESETS)}") from None
        return builder(rows, rng)
    return _generic(spec, rows, rng)


def _compas(rows: int, rng: np.random.Generator) -> Dataset:
    race = (rng.random(rows) < 0.514).astype(float)  # 1 = African-American
    sex = (rng.random(rows) < 0.19).astype(float)  # 1 = Female
    age = np.clip(np.round(18 + rng.gamma(2.0, 7.5, rows) - 2 * race), 18, 80)
    prior_rate = np.exp(0.6 + 0.025 * (age - 18) - 0.4 * sex + 0.3 * race - 0.0006 * (age - 18) ** 2)
    priors = rng.poisson(prior_rate).astype(float)
    felony = (rng.random(rows) < expit(0.4 + 0.08 * priors)).astype(float)
    stay = np.floor(rng.lognormal(0.4 + 1.1 * felony + 0.05 * priors, 1.0, rows))
    recid = (rng.random(rows) < expit(-0.2 + 0.18 * priors - 0.04 * (age - 30) + 0.2 * race)).astype(float)
    logit = -0.1 + 0.45 * priors - 0.07 * (age - 30) + 0.9 * recid + 0.7 * race + 0.1 * np.log1p(stay)
    score = (rng.random(rows) < expit(logit)).astype(int)  # 1 = high risk
    schema = Schema([
        Feature("age", "numeric"),
        Feature("two_year_recid", "categorical", levels=("0", "1")),
        Feature("priors_count", "numeric"),
        Feature("length_of_stay", "numeric"),
        Feature("c_charge_degree", "categorical", levels=("M", "F")),
        Feature("sex", "categorical", levels=("Male", "Female")),
        Feature("race", "categorical", "sensitive", levels=("Other", "African-American")),
        Feature("score", "categorical", "target", levels=("low", "high")),
    ])
    X = np.column_stack([age, recid, priors, stay, felony, sex, race])
    return Dataset(schema, X, score, meta={"preset": "compas"})


def _cc(rows: int, rng: np.random.Generator) -> Dataset:
    # race fractions: white dominant with heavy variation across communities
    alpha = np.array([6.0, 1.2, 0.4, 0.9])
    fr = rng.dirichlet(alpha, rows)
    white = fr[:, 0]
    urban = rng.beta(2, 2, rows)
    income = 20 + 40 * white + 15 * urban + rng.normal(0, 6, rows)
    poverty = np.clip(35 - 25 * white - 0.2 * (income - 40) + rng.normal(0, 4, rows), 0, 100)
    unemployed = np.clip(3 + 0.2 * poverty + rng.normal(0, 1.5, rows), 0, 100)
    divorced = np.clip(8 + 6 * urban + 0.1 * poverty + rng.normal(0, 2, rows), 0, 100)
    ages = rng.dirichlet([3.0, 4.0, 2.0], rows)  # young / mid / old shares
    house = 2.2 + 0.8 * ages[:, 0] + rng.normal(0, 0.2, rows)
    cols = [white, fr[:, 1], fr[:, 2], fr[:, 3], income, poverty, unemployed, divorced,
            urban, ages[:, 0], ages[:, 1], ages[:, 2], house]
    names = ["racePctWhite", "racePctBlack", "racePctAsian", "racePctHisp", "medIncome",
             "pctPoverty", "pctUnemployed", "pctDivorce", "pctUrban", "agePctYoung",
             "agePctMid", "agePctOld", "householdSize"]
    latent = 2.5 * poverty / 20 + 1.5 * unemployed / 8 + 1.0 * divorced / 10 - 2.0 * white + rng.normal(0, 0.5, rows)
    crime = (latent > np.median(latent)).astype(int) if rows > 1 else np.zeros(rows, dtype=int)
    feats = [Feature(n, "numeric", "sensitive" if n == "racePctWhite" else "predictor") for n in names]
    feats.append(Feature("violentCrime", "categorical", "target", levels=("low", "high")))
    return Dataset(Schema(feats), np.column_stack(cols), crime, meta={"preset": "cc", "fraction_groups": [names[:4], names[9:12]]})


def _german(rows: int, rng: np.random.Generator) -> Dataset:
    spec = SynthSpec(
        n_numeric=10,
        categorical_levels=[2] + [2, 3, 4, 3, 2, 5, 3, 4, 2, 3, 2, 4, 3, 2],
        sensitive="gender",
        target_rate=0.7,
    )
    ds = _generic(spec, rows, rng, names={"c0": "gender"}, levels={"gender": ("Female", "Male")},
                  sensitive_rate=0.69)
    rename = {"n0": "loanRateAsPercentOfIncome"}
    feats = [Feature(rename.get(f.name, f.name), f.kind, f.role, f.levels) for f in ds.schema.features]
    return Dataset(Schema(feats), ds.X, ds.y, meta={"preset": "german"})


def _generic(
    spec: SynthSpec,
    rows: int,
    rng: np.random.Generator,
    names: dict | None = None,
    levels: dict | None = None,
    sensitive_rate: float = 0.5,
) -> Dataset:
    names = names or {}
    levels = levels or {}
    latent = rng.normal(size=(rows, spec.n_latent))
    feats, cols = [], []
    sens_bit = (rng.random(rows) < sensitive_rate).astype(float)

    for j in range(spec.n_numeric):
        w = rng.normal(size=spec.n_latent)
        v = 10 + 4 * latent @ w + rng.normal(0, 2, rows)
        cols.append(np.round(v) if spec.integer_numeric else v)
        feats.append(Feature(names.get(f"n{j}", f"n{j}"), "numeric"))

    for j, k in enumerate(spec.categorical_levels):
        name = names.get(f"c{j}", f"c{j}")
        role = "sensitive" if spec.sensitive in (f"c{j}", name) else "predictor"
        if role == "sensitive":
            code = sens_bit * (k - 1)
        else:
            w = rng.normal(size=spec.n_latent)
            s = latent @ w + rng.normal(0, 0.7, rows)
            edges = np.quantile(s, np.linspace(0, 1, k + 1)[1:-1]) if rows > 1 else np.zeros(k - 1)
            code = np.searchsorted(edges, s).astype(float)
        cols.append(code)
        lv = levels.get(name, tuple(f"L{i}" for i in range(k)))
        feats.append(Feature(name, "categorical", role, lv))

    for g, size in enumerate(spec.fraction_groups):
        fr = rng.dirichlet(np.full(size, 2.0), rows)
        fr[:, -1] = 1.0 - fr[:, :-1].sum(axis=1)
        for j in range(size):
            cols.append(fr[:, j])
            feats.append(Feature(f"g{g}_{j}", "numeric"))

    score = latent[:, 0] + (0.8 * sens_bit if spec.sensitive else 0.0) + rng.normal(0, 0.5, rows)
    cut = np.quantile(score, 1 - spec.target_rate) if rows > 1 else np.inf
    y = (score > cut).astype(int)
    feats.append(Feature("target", "categorical", "target", ("0", "1")))
    X = np.column_stack(cols) if cols else np.empty((rows, 0))
    return Dataset(Schema(feats), X, y, meta={"preset": "generic"})


_PRESETS = {"compas": _compas, "cc": _cc, "german": _german}
