"""Predictive models: trainable classifiers and rule-based biased/unbiased models.

Every model maps an *encoded* matrix (see :meth:`robust_xai.data.Schema.encode`)
to a ``(n, 2)`` array of class probabilities.
"""

from __future__ import annotations

import math
import warnings
from typing import Any, Protocol, Sequence

import numpy as np
from scipy.special import expit

from . import _kernels
from .data import Dataset, Schema

VARIANTS = ("gaussian_naive_bayes", "linear", "random_forest", "feedforward_net")


class ModelError(RuntimeError):
    pass


class DegenerateClass(ModelError):
    pass


class RoleMismatch(ValueError):
    pass


class NonConvergence(UserWarning):
    pass


class PredictiveModel(Protocol):
    def predict_proba(self, encoded: np.ndarray) -> np.ndarray: ...

    def predict(self, encoded: np.ndarray) -> np.ndarray: ...


def _argmax_predict(proba: np.ndarray) -> np.ndarray:
    # np.argmax returns the lowest index on ties
    return np.argmax(proba, axis=1)


def _as_list(a: np.ndarray) -> list:
    return np.asarray(a).tolist()


class Classifier:
    """Base for trained classifiers; subclasses fill ``params``."""

    variant: str = ""
    defaults: dict = {}

    def __init__(self, hyper: dict | None = None, seed: int = 0):
        self.hyper = {**self.defaults, **(hyper or {})}
        self.seed = int(seed)
        self.params: dict[str, np.ndarray] = {}
        self.converged = True
        self.training_accuracy = float("nan")

    def fit(self, X: np.ndarray, y: np.ndarray, sample_weight: np.ndarray | None = None):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=int)
        if sample_weight is None:
            sample_weight = np.ones(len(y))
        present = np.unique(y)
        if len(present) < 2:
            raise DegenerateClass(f"training data contains only class(es) {present.tolist()}")
        self._fit(X, y, np.asarray(sample_weight, dtype=float))
        self.training_accuracy = float(np.mean(self.predict(X) == y))
        return self

    def _fit(self, X, y, w):
        raise NotImplementedError

    def predict_proba(self, encoded: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def predict(self, encoded: np.ndarray) -> np.ndarray:
        return _argmax_predict(self.predict_proba(np.atleast_2d(encoded)))

    def to_json(self) -> dict:
        return {
            "variant": self.variant,
            "hyper": self.hyper,
            "seed": self.seed,
            "converged": self.converged,
            "training_accuracy": self.training_accuracy,
            "params": {k: _as_list(v) for k, v in self.params.items()},
        }

    @classmethod
    def _from_json(cls, doc: dict) -> "Classifier":
        model = cls(doc["hyper"], doc["seed"])
        model.params = {k: np.asarray(v, dtype=_PARAM_DTYPES.get(k, float)) for k, v in doc["params"].items()}
        model.converged = doc.get("converged", True)
        model.training_accuracy = doc.get("training_accuracy", float("nan"))
        model._after_load()
        return model

    def _after_load(self):
        pass


_PARAM_DTYPES = {"feature": np.int64, "left": np.int64, "right": np.int64, "roots": np.int64}


class GaussianNaiveBayes(Classifier):
    variant = "gaussian_naive_bayes"
    defaults = {"var_smoothing": 1e-9}

    def _fit(self, X, y, w):
        counts = np.bincount(y, minlength=2)
        if np.any(counts < 2):
            raise DegenerateClass("naive Bayes needs >= 2 rows per class")
        means, variances, priors = [], [], []
        for c in (0, 1):
            wc = w[y == c]
            Xc = X[y == c]
            mu = np.average(Xc, axis=0, weights=wc)
            means.append(mu)
            variances.append(np.average((Xc - mu) ** 2, axis=0, weights=wc))
            priors.append(wc.sum())
        eps = self.hyper["var_smoothing"] * max(float(np.var(X, axis=0).max()), 1e-12)
        self.params = {
            "means": np.array(means),
            "variances": np.array(variances) + eps,
            "log_prior": np.log(np.array(priors) / np.sum(priors)),
        }

    def predict_proba(self, encoded):
        X = np.atleast_2d(np.asarray(encoded, dtype=float))
        mu, var = self.params["means"], self.params["variances"]
        jll = np.stack([
            self.params["log_prior"][c]
            - 0.5 * np.sum(np.log(2 * np.pi * var[c]))
            - 0.5 * np.sum((X - mu[c]) ** 2 / var[c], axis=1)
            for c in (0, 1)
        ], axis=1)
        jll -= jll.max(axis=1, keepdims=True)
        p = np.exp(jll)
        return p / p.sum(axis=1, keepdims=True)


class _Standardized(Classifier):
    """Mixin storing input centering/scaling learned at fit time."""

    def _standardize_fit(self, X):
        center = X.mean(axis=0)
        scale = X.std(axis=0)
        scale[scale == 0] = 1.0
        self.params["center"] = center
        self.params["scale"] = scale
        return (X - center) / scale

    def _standardize(self, X):
        return (np.atleast_2d(np.asarray(X, dtype=float)) - self.params["center"]) / self.params["scale"]


class LinearClassifier(_Standardized):
    """Linear decision surface trained by full-batch gradient descent.

    ``loss="logistic"`` (default) gives calibrated probabilities; ``"hinge"``
    trains a soft-margin SVM and squashes the margin with a sigmoid.
    """

    variant = "linear"
    defaults = {"loss": "logistic", "learning_rate": 0.5, "epochs": 500, "l2": 1e-4}

    def _fit(self, X, y, w):
        Z = self._standardize_fit(X)
        w = w / w.sum()
        coef = np.zeros(Z.shape[1])
        bias = 0.0
        lr, l2 = self.hyper["learning_rate"], self.hyper["l2"]
        sign = 2.0 * y - 1.0
        for _ in range(int(self.hyper["epochs"])):
            margin = Z @ coef + bias
            if self.hyper["loss"] == "hinge":
                active = (sign * margin < 1).astype(float)
                g = -(w * active * sign)
            else:
                g = w * (expit(margin) - y)
            coef -= lr * (Z.T @ g + l2 * coef)
            bias -= lr * g.sum()
        self.params["coef"] = coef
        self.params["bias"] = np.array([bias])

    def decision_function(self, encoded):
        return self._standardize(encoded) @ self.params["coef"] + self.params["bias"][0]

    def predict_proba(self, encoded):
        m = self.decision_function(encoded)
        if self.hyper["loss"] == "hinge":
            m = 2.0 * m
        p1 = expit(m)
        return np.column_stack([1.0 - p1, p1])


class FeedforwardNet(_Standardized):
    """One hidden ReLU layer and a sigmoid output unit (two-class softmax)."""

    variant = "feedforward_net"
    defaults = {"hidden": 32, "epochs": 100, "learning_rate": 0.01, "batch_size": 64, "l2": 1e-4, "tol": 2e-2}

    @staticmethod
    def unpack(theta: np.ndarray, n_in: int, hidden: int):
        i = 0
        W1 = theta[i:i + n_in * hidden].reshape(n_in, hidden); i += n_in * hidden
        b1 = theta[i:i + hidden]; i += hidden
        w2 = theta[i:i + hidden]; i += hidden
        b2 = theta[i:i + 1]
        return W1, b1, w2, b2

    @staticmethod
    def loss_and_grad(theta, Z, y, w, n_in, hidden, l2=0.0):
        """Weighted mean cross-entropy plus L2 penalty, and its gradient."""
        W1, b1, w2, b2 = FeedforwardNet.unpack(theta, n_in, hidden)
        pre = Z @ W1 + b1
        h = np.maximum(pre, 0.0)
        logit = h @ w2 + b2[0]
        p = expit(logit)
        wn = w / w.sum()
        # log(1 + e^{-|z|}) formulation keeps the loss finite for saturated logits
        ce = np.maximum(logit, 0) - logit * y + np.log1p(np.exp(-np.abs(logit)))
        loss = float(wn @ ce + 0.5 * l2 * (W1.ravel() @ W1.ravel() + w2 @ w2))
        d_logit = wn * (p - y)
        g_w2 = h.T @ d_logit + l2 * w2
        g_b2 = np.array([d_logit.sum()])
        d_h = np.outer(d_logit, w2) * (pre > 0)
        g_W1 = Z.T @ d_h + l2 * W1
        g_b1 = d_h.sum(axis=0)
        return loss, np.concatenate([g_W1.ravel(), g_b1, g_w2, g_b2])

    def _fit(self, X, y, w):
        Z = self._standardize_fit(X)
        rng = np.random.default_rng(self.seed)
        n_in, hidden = Z.shape[1], int(self.hyper["hidden"])
        theta = np.concatenate([
            rng.normal(0, math.sqrt(2.0 / n_in), n_in * hidden),
            np.zeros(hidden),
            rng.normal(0, math.sqrt(1.0 / hidden), hidden),
            np.zeros(1),
        ])
        lr, bs, l2 = self.hyper["learning_rate"], int(self.hyper["batch_size"]), self.hyper["l2"]
        m = np.zeros_like(theta)
        v = np.zeros_like(theta)
        b1, b2, step = 0.9, 0.999, 0
        best, best_loss, history = theta.copy(), np.inf, []
        for _ in range(int(self.hyper["epochs"])):
            order = rng.permutation(len(y))
            for s in range(0, len(y), bs):
                idx = order[s:s + bs]
                _, g = self.loss_and_grad(theta, Z[idx], y[idx], w[idx], n_in, hidden, l2)
                step += 1
                m = b1 * m + (1 - b1) * g
                v = b2 * v + (1 - b2) * g * g
                theta -= lr * (m / (1 - b1 ** step)) / (np.sqrt(v / (1 - b2 ** step)) + 1e-8)
            loss, _ = self.loss_and_grad(theta, Z, y, w, n_in, hidden, l2)
            history.append(loss)
            if loss < best_loss:
                best, best_loss = theta.copy(), loss
        # converged once the final tenth of the epochs no longer improves the best loss
        k = max(1, len(history) // 10)
        before = min(history[:-k]) if len(history) > k else np.inf
        self.converged = before - best_loss <= self.hyper["tol"] * abs(before)
        if not self.converged:
            warnings.warn("feedforward net did not converge; returning best-so-far parameters", NonConvergence)
        W1, bb1, w2, bb2 = self.unpack(best, n_in, hidden)
        self.params.update({"W1": W1.copy(), "b1": bb1.copy(), "w2": w2.copy(), "b2": bb2.copy()})

    def predict_proba(self, encoded):
        Z = self._standardize(encoded)
        h = np.maximum(Z @ self.params["W1"] + self.params["b1"], 0.0)
        p1 = expit(h @ self.params["w2"] + self.params["b2"][0])
        return np.column_stack([1.0 - p1, p1])


class RandomForest(Classifier):
    """Bagged CART forest.

    Trees are grown with scikit-learn and copied into flat arrays, which the
    compiled traversal in :mod:`robust_xai._kernels` uses for prediction; the
    same arrays are what gets serialized.
    """

    variant = "random_forest"
    defaults = {"n_trees": 100, "min_leaf": 2, "max_depth": None, "max_features": "ceil_sqrt"}

    def _fit(self, X, y, w):
        from sklearn.ensemble import RandomForestClassifier

        mf = self.hyper["max_features"]
        if mf == "ceil_sqrt":
            mf = max(1, math.ceil(math.sqrt(X.shape[1])))
        rf = RandomForestClassifier(
            n_estimators=int(self.hyper["n_trees"]),
            criterion="gini",
            max_features=mf,
            min_samples_leaf=int(self.hyper["min_leaf"]),
            max_depth=self.hyper["max_depth"],
            bootstrap=True,
            random_state=self.seed,
            n_jobs=1,
        )
        rf.fit(X.astype(np.float32), y, sample_weight=w)
        feats, thrs, lefts, rights, values, roots = [], [], [], [], [], []
        offset = 0
        for est in rf.estimators_:
            t = est.tree_
            roots.append(offset)
            leaf = t.children_left == -1
            feats.append(np.where(leaf, 0, t.feature))
            thrs.append(t.threshold)
            lefts.append(np.where(leaf, -1, t.children_left + offset))
            rights.append(np.where(leaf, -1, t.children_right + offset))
            val = t.value[:, 0, :].astype(float)
            values.append(val / val.sum(axis=1, keepdims=True))
            offset += t.node_count
        self.params = {
            "feature": np.concatenate(feats).astype(np.int64),
            "threshold": np.concatenate(thrs).astype(float),
            "left": np.concatenate(lefts).astype(np.int64),
            "right": np.concatenate(rights).astype(np.int64),
            "value": np.concatenate(values),
            "roots": np.array(roots, dtype=np.int64),
        }

    def _after_load(self):
        self.params["value"] = self.params["value"].reshape(-1, 2)

    def predict_proba(self, encoded):
        X = np.ascontiguousarray(np.atleast_2d(np.asarray(encoded, dtype=np.float32)), dtype=float)
        out = np.empty((X.shape[0], 2))
        p = self.params
        _kernels.forest_proba(X, p["feature"], p["threshold"], p["left"], p["right"], p["value"], p["roots"], out)
        return out


_CLASSES = {c.variant: c for c in (GaussianNaiveBayes, LinearClassifier, FeedforwardNet, RandomForest)}


def fit_classifier_arrays(
    variant: str,
    X: np.ndarray,
    y: np.ndarray,
    hyper: dict | None = None,
    seed: int = 0,
    sample_weight: np.ndarray | None = None,
) -> Classifier:
    try:
        cls = _CLASSES[variant]
    except KeyError:
        raise ValueError(f"unknown classifier variant {variant!r}; choose from {VARIANTS}") from None
    return cls(hyper, seed).fit(X, y, sample_weight)


def fit_classifier(variant: str, ds: Dataset, hyper: dict | None = None, seed: int = 0) -> Classifier:
    return fit_classifier_arrays(variant, ds.encoded, ds.y, hyper, seed)


def accuracy(model: PredictiveModel, ds: Dataset) -> float:
    return float(np.mean(model.predict(ds.encoded) == ds.y))


# ---------------------------------------------------------------- rule models


class FeatureRule:
    """Map one input feature to a bit: a level lookup or ``value > threshold``."""

    def __init__(self, schema: Schema, feature: str, levels: dict[str, int] | None = None,
                 threshold: float | None = None):
        self.feature = feature
        self.j = schema.index(feature)
        f = schema.inputs[self.j]
        self.block = schema.blocks[self.j]
        if f.categorical:
            if levels is None:
                raise ValueError(f"categorical rule on {feature!r} needs a level mapping")
            unknown = set(levels) - set(f.levels)
            if unknown:
                raise ValueError(f"unknown levels for {feature!r}: {sorted(unknown)}")
            self.levels = {str(k): int(v) for k, v in levels.items()}
            self.lookup = np.array([self.levels.get(lv, 0) for lv in f.levels])
            self.threshold = None
        else:
            if threshold is None:
                raise ValueError(f"numeric rule on {feature!r} needs a threshold")
            self.threshold = float(threshold)
            self.levels = None

    def bits(self, encoded: np.ndarray) -> np.ndarray:
        E = np.atleast_2d(encoded)
        if self.levels is not None:
            return self.lookup[np.argmax(E[:, self.block], axis=1)]
        return (E[:, self.block.start] > self.threshold).astype(int)

    def to_json(self) -> dict:
        return {"feature": self.feature, "levels": self.levels, "threshold": self.threshold}


class RuleModel:
    """Outputs class ``classes[xor of rule bits]`` with probability one."""

    kind = "rule"

    def __init__(self, schema: Schema, rules: Sequence[FeatureRule], classes: Sequence[int] = (0, 1)):
        self.schema = schema
        self.rules = list(rules)
        self.classes = np.array(classes, dtype=int)

    @property
    def features(self) -> list[str]:
        return [r.feature for r in self.rules]

    def predict(self, encoded):
        bit = np.zeros(np.atleast_2d(encoded).shape[0], dtype=int)
        for r in self.rules:
            bit ^= r.bits(encoded)
        return self.classes[bit]

    def predict_proba(self, encoded):
        pred = self.predict(encoded)
        out = np.zeros((len(pred), 2))
        out[np.arange(len(pred)), pred] = 1.0
        return out

    def to_json(self) -> dict:
        return {"kind": self.kind, "rules": [r.to_json() for r in self.rules], "classes": self.classes.tolist()}

    @classmethod
    def from_json(cls, schema: Schema, doc: dict) -> "RuleModel":
        rules = [FeatureRule(schema, r["feature"], r.get("levels"), r.get("threshold")) for r in doc["rules"]]
        return _RULE_KINDS[doc["kind"]](schema, rules, doc["classes"])


class BiasedModel(RuleModel):
    kind = "biased"


class UnbiasedModel(RuleModel):
    kind = "unbiased"


_RULE_KINDS = {"rule": RuleModel, "biased": BiasedModel, "unbiased": UnbiasedModel}


def _rule_from_mapping(schema: Schema, name: str, mapping: dict) -> tuple[FeatureRule, tuple[int, int]]:
    """Translate a user mapping to a rule emitting the target index directly.

    Categorical: ``{level: target_level}``.  Numeric:
    ``{"threshold": t, "above": target_level, "below": target_level}``.
    """
    target = schema.target.levels
    f = schema.feature(name)
    if f.categorical:
        levels = {lv: target.index(str(cls)) for lv, cls in mapping.items()}
        return FeatureRule(schema, name, levels=levels), (0, 1)
    above = target.index(str(mapping["above"]))
    below = target.index(str(mapping["below"]))
    return FeatureRule(schema, name, threshold=mapping["threshold"]), (below, above)


def make_biased(schema: Schema, sensitive: str, mapping: dict) -> BiasedModel:
    if schema.feature(sensitive).role != "sensitive":
        raise RoleMismatch(f"{sensitive!r} does not have role 'sensitive'")
    rule, classes = _rule_from_mapping(schema, sensitive, mapping)
    return BiasedModel(schema, [rule], classes)


def make_unbiased(schema: Schema, unrelated: Sequence[str], mapping: dict | None = None) -> UnbiasedModel:
    """Rule model over the unrelated features.

    With a single feature ``mapping`` has the same form as in
    :func:`make_biased`.  With several, each feature contributes a bit (level
    lookup or ``value > threshold``, default threshold 0.5) and the class is
    their exclusive-or.
    """
    for name in unrelated:
        if schema.feature(name).role != "unrelated":
            raise RoleMismatch(f"{name!r} does not have role 'unrelated'")
    if len(unrelated) == 1 and mapping is not None:
        rule, classes = _rule_from_mapping(schema, unrelated[0], mapping)
        return UnbiasedModel(schema, [rule], classes)
    rules = []
    for name in unrelated:
        spec = (mapping or {}).get(name, {})
        f = schema.feature(name)
        if f.categorical:
            rules.append(FeatureRule(schema, name, levels=spec or {lv: int(i > 0) for i, lv in enumerate(f.levels)}))
        else:
            rules.append(FeatureRule(schema, name, threshold=spec.get("threshold", 0.5)))
    return UnbiasedModel(schema, rules)


def biased_threshold_from_mean(ds: Dataset, sensitive: str, above: str, below: str) -> dict:
    """Numeric sensitive rule thresholded at the feature's mean in ``ds``."""
    j = ds.schema.index(sensitive)
    return {"threshold": float(ds.X[:, j].mean()), "above": above, "below": below}


def model_to_json(model: Any) -> dict:
    return model.to_json()


def model_from_json(doc: dict, schema: Schema | None = None):
    if "variant" in doc:
        return _CLASSES[doc["variant"]]._from_json(doc)
    if schema is None:
        raise ValueError("rule models need the schema to load")
    return RuleModel.from_json(schema, doc)
