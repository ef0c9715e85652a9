"""Bias-hiding adversarial models.

A decision model ``d`` learns to tell real rows (label 1) from the rows an
explanation method would feed the model (label 0).  The adversarial model
routes real-looking inputs to a biased rule and suspected probes to an
unbiased one.  The three training recipes mirror how LIME, Kernel SHAP and
IME build their probes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import SCHEMA_VERSION
from .data import Dataset, Schema
from .generators import (
    AROUND, FILL_IN, WHOLE, GaussianSampler, Generator, PerturbationSampler, as_rng, derive_seed,
)
from .models import BiasedModel, Classifier, RuleModel, UnbiasedModel, fit_classifier_arrays, model_from_json

DEFAULT_DMODEL = "random_forest"


@dataclass
class DecisionModel:
    """Classifier giving the probability that a row comes from the real data."""

    schema: Schema
    classifier: Classifier
    recipe: dict = field(default_factory=dict)

    def prob_encoded(self, encoded: np.ndarray) -> np.ndarray:
        return self.classifier.predict_proba(np.atleast_2d(encoded))[:, 1]

    def prob(self, codes: np.ndarray) -> np.ndarray:
        return self.prob_encoded(self.schema.encode(np.atleast_2d(codes)))

    def to_json(self) -> dict:
        return {"recipe": dict(self.recipe), "classifier": self.classifier.to_json()}

    @classmethod
    def from_json(cls, doc: dict, schema: Schema) -> "DecisionModel":
        return cls(schema, model_from_json(doc["classifier"]), dict(doc.get("recipe", {})))


class AdversarialModel:
    """Biased output where ``d_prob >= t``, unbiased output elsewhere.

    Takes encoded rows like every other predictive model.
    """

    def __init__(self, biased: RuleModel, unbiased: RuleModel, decision: DecisionModel, threshold: float = 0.5):
        if not 0 < threshold < 1:
            raise ValueError("threshold must lie in (0, 1)")
        self.biased = biased
        self.unbiased = unbiased
        self.decision = decision
        self.threshold = float(threshold)

    def with_threshold(self, t: float) -> "AdversarialModel":
        return AdversarialModel(self.biased, self.unbiased, self.decision, t)

    def branch(self, encoded: np.ndarray) -> np.ndarray:
        """True where the biased model answers."""
        return self.decision.prob_encoded(encoded) >= self.threshold

    def predict_proba(self, encoded: np.ndarray) -> np.ndarray:
        E = np.atleast_2d(encoded)
        use_biased = self.branch(E)
        return np.where(use_biased[:, None], self.biased.predict_proba(E), self.unbiased.predict_proba(E))

    def predict(self, encoded: np.ndarray) -> np.ndarray:
        return np.argmax(self.predict_proba(encoded), axis=1)

    def to_json(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "threshold": self.threshold,
            "biased": self.biased.to_json(),
            "unbiased": self.unbiased.to_json(),
            "decision": self.decision.to_json(),
        }

    @classmethod
    def from_json(cls, doc: dict, schema: Schema) -> "AdversarialModel":
        return cls(
            RuleModel.from_json(schema, doc["biased"]),
            RuleModel.from_json(schema, doc["unbiased"]),
            DecisionModel.from_json(doc["decision"], schema),
            doc["threshold"],
        )


def adversarial_predict(e: AdversarialModel, codes: np.ndarray):
    """Target level indices and the branch taken (True = biased) for code rows."""
    E = e.decision.schema.encode(np.atleast_2d(codes))
    return e.predict(E), e.branch(E)


# ------------------------------------------------------------------- training

def _resolve(gen, S: Dataset, default: str) -> Generator:
    if gen is None:
        gen = default
    if gen == "gaussian":
        return GaussianSampler().fit(S)
    if gen == "perturbation":
        return PerturbationSampler().fit(S)
    if isinstance(gen, str):
        raise ValueError(f"pass a fitted generator instead of {gen!r}")
    return gen


def _fit_decision(S: Dataset, fake: np.ndarray, dmodel: str, hyper, seed, recipe) -> DecisionModel:
    pool = np.vstack([S.X, fake])
    labels = np.concatenate([np.ones(len(S)), np.zeros(len(fake))])
    counts = np.array([len(fake), len(S)], dtype=float)
    weights = (len(pool) / (2 * counts))[labels.astype(int)]  # inverse class frequency
    hyper = dict(hyper or {})
    if dmodel == "random_forest":
        # leaves of ~1% of the pool keep d from memorizing the rows of S
        hyper.setdefault("min_leaf", max(2, len(pool) // 100))
    clf = fit_classifier_arrays(dmodel, S.schema.encode(pool), labels, hyper, seed, weights)
    recipe = dict(recipe, pool_real=len(S), pool_generated=len(fake))
    return DecisionModel(S.schema, clf, recipe)


def _around(gen: Generator) -> bool:
    return AROUND in gen.capabilities and (gen.mode == AROUND or WHOLE not in gen.capabilities)


def lime_pool(S: Dataset, gen, n_samples: int = 5, seed=None) -> np.ndarray:
    """Negative rows of the LIME recipe: ``n_samples`` neighbours per real row."""
    gen = _resolve(gen, S, "gaussian")
    rng = as_rng(seed)
    if not _around(gen):
        return gen.generate(n_samples * len(S), derive_seed(rng))
    return np.vstack([gen.generate_around(x, n_samples, derive_seed(rng)) for x in S.X])


def _proper_masks(rng, count, n):
    """Uniform over nonempty proper subsets of n features."""
    codes = rng.integers(1, 2 ** n - 1, size=count)
    return ((codes[:, None] >> np.arange(n)[None, :]) & 1).astype(bool)


def shap_pool(S: Dataset, gen, n_samples: int | None = None, k: int | None = None, seed=None) -> np.ndarray:
    """Negative rows of the SHAP recipe: real rows with a random subset replaced."""
    gen = _resolve(gen, S, "kmeans")
    rng = as_rng(seed)
    m = len(S) if n_samples is None else n_samples
    n = S.X.shape[1]
    base = S.X[rng.integers(0, len(S), size=m)]
    masks = _proper_masks(rng, m, n)
    if _around(gen):
        donors = np.vstack([gen.generate_around(x, 1, derive_seed(rng)) for x in base])
    else:
        D = gen.distribution_set(k or 50, derive_seed(rng)).instances
        donors = D[rng.integers(0, len(D), size=m)]
    return np.where(masks, donors, base)


def ime_pool(S: Dataset, gen, n_samples: int = 2, seed=None) -> np.ndarray:
    """Negative rows of the IME recipe: two rows per (real row, repetition).

    ``b1`` keeps the row's values on the permutation prefix before ``idx`` and
    ``b2`` additionally on ``idx``; the rest comes from ``w``.  With a fill-in
    generator ``w`` is the row filled in conditional on the prefix.
    """
    gen = _resolve(gen, S, "perturbation")
    rng = as_rng(seed)
    n = S.X.shape[1]
    X = np.repeat(S.X, n_samples, axis=0)
    m = len(X)
    ranks = rng.random((m, n)).argsort(axis=1).argsort(axis=1)
    idx = rng.integers(0, n, size=m)
    pre = ranks < ranks[np.arange(m), idx][:, None]
    if isinstance(gen, PerturbationSampler) or FILL_IN not in gen.capabilities:
        if _around(gen) and not isinstance(gen, PerturbationSampler):
            W = np.vstack([gen.generate_around(x, 1, derive_seed(rng)) for x in X])
        else:
            W = gen.generate(m, derive_seed(rng))
    else:
        W = np.vstack([gen.fill_in(x, ~p, derive_seed(rng)) for x, p in zip(X, pre)])
    b1 = np.where(pre, X, W)
    b2 = b1.copy()
    b2[np.arange(m), idx] = X[np.arange(m), idx]
    return np.vstack([b1, b2])


def _name(gen, default):
    return gen if isinstance(gen, str) else (default if gen is None else gen.name)


def train_decision_lime(S: Dataset, gen=None, n_samples: int = 5, dmodel: str = DEFAULT_DMODEL,
                        seed: int = 0, hyper: dict | None = None) -> DecisionModel:
    rng = as_rng(seed)
    fake = lime_pool(S, gen, n_samples, derive_seed(rng))
    recipe = {"explainer": "lime", "generator": _name(gen, "gaussian"), "n_samples": n_samples}
    return _fit_decision(S, fake, dmodel, hyper, derive_seed(rng), recipe)


def train_decision_shap(S: Dataset, gen=None, n_samples: int | None = None, k: int | None = None,
                        dmodel: str = DEFAULT_DMODEL, seed: int = 0, hyper: dict | None = None) -> DecisionModel:
    rng = as_rng(seed)
    fake = shap_pool(S, gen, n_samples, k, derive_seed(rng))
    recipe = {"explainer": "shap", "generator": _name(gen, "kmeans"), "n_samples": len(fake)}
    return _fit_decision(S, fake, dmodel, hyper, derive_seed(rng), recipe)


def train_decision_ime(S: Dataset, gen=None, n_samples: int = 2, dmodel: str = DEFAULT_DMODEL,
                       seed: int = 0, hyper: dict | None = None) -> DecisionModel:
    rng = as_rng(seed)
    fake = ime_pool(S, gen, n_samples, derive_seed(rng))
    recipe = {"explainer": "ime", "generator": _name(gen, "perturbation"), "n_samples": n_samples}
    return _fit_decision(S, fake, dmodel, hyper, derive_seed(rng), recipe)


TRAINERS = {"lime": train_decision_lime, "shap": train_decision_shap, "ime": train_decision_ime}


def discrimination_accuracy(d: DecisionModel, real: np.ndarray, generated: np.ndarray, t: float = 0.5) -> float:
    """Balanced accuracy of ``d`` at threshold ``t`` on held-out rows."""
    hit_real = np.mean(d.prob(real) >= t)
    hit_fake = np.mean(d.prob(generated) < t)
    return float((hit_real + hit_fake) / 2)
