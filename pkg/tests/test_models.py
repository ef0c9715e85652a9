import json

import numpy as np
import pytest
from scipy.optimize import check_grad

from robust_xai.data import split_train_eval
from robust_xai.models import (
    VARIANTS, DegenerateClass, FeedforwardNet, RoleMismatch, accuracy, biased_threshold_from_mean,
    fit_classifier, fit_classifier_arrays, make_biased, make_unbiased, model_from_json,
)
from robust_xai.data import add_unrelated_features


@pytest.fixture(scope="module")
def split(compas):
    return split_train_eval(compas, 0.8, 0)


@pytest.mark.parametrize("variant", VARIANTS)
def test_classifiers_learn_and_roundtrip(split, variant):
    tr, ev = split
    m = fit_classifier(variant, tr, seed=1)
    assert accuracy(m, ev) > 0.6
    p = m.predict_proba(ev.encoded)
    np.testing.assert_allclose(p.sum(axis=1), 1.0)
    back = model_from_json(json.loads(json.dumps(m.to_json())))
    np.testing.assert_array_equal(back.predict_proba(ev.encoded), p)


@pytest.mark.parametrize("variant", VARIANTS)
def test_classifiers_are_seeded(split, variant):
    tr, ev = split
    a = fit_classifier(variant, tr, seed=3).predict_proba(ev.encoded)
    b = fit_classifier(variant, tr, seed=3).predict_proba(ev.encoded)
    np.testing.assert_array_equal(a, b)


def test_single_class_rejected():
    X = np.random.default_rng(0).normal(size=(20, 2))
    with pytest.raises(DegenerateClass):
        fit_classifier_arrays("gaussian_naive_bayes", X, np.zeros(20))


def test_mlp_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    Z = rng.normal(size=(7, 2))
    y = (rng.random(7) < 0.5).astype(float)
    w = rng.random(7) + 0.5
    theta = rng.normal(size=5)  # n_in=2, hidden=1

    def loss(t):
        return FeedforwardNet.loss_and_grad(t, Z, y, w, 2, 1, 1e-2)[0]

    def grad(t):
        return FeedforwardNet.loss_and_grad(t, Z, y, w, 2, 1, 1e-2)[1]

    assert check_grad(loss, grad, theta, epsilon=1e-7) < 1e-5


def test_rule_models(compas):
    ds = add_unrelated_features(compas, 2, 0)
    s = ds.schema
    b = make_biased(s, "race", {"African-American": "high", "Other": "low"})
    pred = b.predict(ds.encoded)
    np.testing.assert_array_equal(pred, ds.X[:, s.index("race")].astype(int))
    u = make_unbiased(s, ["random1", "random2"])
    xor = (ds.X[:, s.index("random1")] > 0.5).astype(int) ^ (ds.X[:, s.index("random2")] > 0.5).astype(int)
    np.testing.assert_array_equal(u.predict(ds.encoded), xor)
    back = model_from_json(json.loads(json.dumps(u.to_json())), s)
    np.testing.assert_array_equal(back.predict(ds.encoded), xor)
    with pytest.raises(RoleMismatch):
        make_biased(s, "age", {"threshold": 30, "above": "high", "below": "low"})
    with pytest.raises(RoleMismatch):
        make_unbiased(s, ["race"])


def test_numeric_biased_rule_at_mean(compas):
    from robust_xai.synth import synth_dataset

    cc = synth_dataset("cc", 300, 0)
    m = biased_threshold_from_mean(cc, "racePctWhite", "low", "high")
    b = make_biased(cc.schema, "racePctWhite", m)
    white = cc.X[:, 0]
    np.testing.assert_array_equal(b.predict(cc.encoded), (white <= white.mean()).astype(int))
