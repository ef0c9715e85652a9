import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from robust_xai.explainers import (
    ExplainerConfig, Explanation, TooManyFeatures, all_coalitions, coalition_values, exact_shapley,
    explain_ime, explain_ime_exhaustive, explain_lime, explain_shap, most_important_feature,
    shapley_from_values, weighted_ridge,
)
from robust_xai.explainers.base import SingularRegression
from robust_xai.generators import fit_generator
from tests.conftest import numeric_dataset

X3 = np.array([1.0, 2.0, 3.0])
D3 = np.array([[0, 0, 0], [1, 0, 2], [0, 1, 1], [2, 2, 0]], dtype=float)
NAMES3 = ["a", "b", "c"]


def f3(Z):
    return Z[:, 0] * Z[:, 1] + 2 * Z[:, 2]


def brute_force(f, x, rows):
    """Direct permutation double sum, independent of the package code."""
    n = len(x)
    phi = np.zeros(n)
    perms = list(itertools.permutations(range(n)))
    for i in range(n):
        for p in perms:
            pre = [j for j in range(n) if p.index(j) < p.index(i)]
            for w in rows:
                b1 = w.copy()
                b1[pre] = x[pre]
                b2 = b1.copy()
                b2[i] = x[i]
                phi[i] += (f(b2[None])[0] - f(b1[None])[0])
    return phi / (len(perms) * len(rows))


def test_exact_shapley_frozen_values():
    # values computed with exact fractions: (1/8, 7/8, 9/2)
    e = exact_shapley(f3, X3, D3, NAMES3)
    np.testing.assert_allclose(e.values, [0.125, 0.875, 4.5], atol=1e-12)


def test_ime_exhaustive_equals_double_sum():
    e = explain_ime_exhaustive(f3, X3, D3, NAMES3)
    np.testing.assert_allclose(e.values, brute_force(f3, X3, D3), atol=1e-12)
    np.testing.assert_allclose(e.values, exact_shapley(f3, X3, D3, NAMES3).values, atol=1e-12)
    assert e.samples_used["a"] == 6 * 4


def test_exact_single_feature_closed_form():
    rows = np.array([[0.0], [2.0], [5.0]])
    f = lambda Z: Z[:, 0] ** 2
    e = exact_shapley(f, np.array([3.0]), rows, ["a"])
    assert e.values[0] == pytest.approx(np.mean(9 - rows[:, 0] ** 2))


def test_exact_shapley_guards_feature_count():
    with pytest.raises(TooManyFeatures):
        exact_shapley(lambda Z: Z.sum(1), np.zeros(11), np.zeros((2, 11)), [str(i) for i in range(11)])


def _toy(seed, n, rows):
    rng = np.random.default_rng(seed)
    W = rng.normal(size=(n, n))
    b = rng.normal(size=n)

    def f(Z):
        return np.tanh(Z @ W + b).sum(axis=1) + Z[:, 0] * Z[:, -1]

    return f, rng.normal(size=n), rng.normal(size=(rows, n))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 6), st.integers(1, 8))
def test_oracle_equivalence(seed, n, rows):
    f, x, ds = _toy(seed, n, rows)
    names = [f"f{i}" for i in range(n)]
    ref = exact_shapley(f, x, ds, names)
    ime = explain_ime_exhaustive(f, x, ds, names)
    np.testing.assert_allclose(ime.values, ref.values, atol=1e-9)
    shap = explain_shap(f, x, ds, names, exhaustive=True)
    np.testing.assert_allclose(shap.values, ref.values, atol=1e-6)


def test_shap_matches_shapley_of_its_value_function():
    f, x, ds = _toy(1, 3, 5)
    masks = all_coalitions(3)
    v = coalition_values(f, x, ds, masks)
    e = explain_shap(f, x, ds, NAMES3, exhaustive=True)
    np.testing.assert_allclose(e.values, shapley_from_values(v, masks), atol=1e-6)


def test_shap_sampled_efficiency_and_dummy():
    rng = np.random.default_rng(0)
    ds = rng.normal(size=(20, 12))
    x = rng.normal(size=12)
    f = lambda Z: np.sin(Z[:, 0]) + Z[:, 1] * Z[:, 2]  # features 3..11 are dummies
    names = [f"f{i}" for i in range(12)]
    e = explain_shap(f, x, ds, names, ExplainerConfig(coalition_count=2048), seed=0)
    assert "exhaustive" not in e.flags
    assert e.intercept + e.values.sum() == pytest.approx(f(x[None])[0], abs=1e-6)
    # sampled regression leaks a little noise onto dummies; exhaustive mode is exact
    assert np.abs(e.values[3:]).max() < 0.05 * np.abs(e.values[:3]).max()


def test_shap_dummy_exhaustive():
    f = lambda Z: Z[:, 0] ** 2 + Z[:, 1]
    rng = np.random.default_rng(4)
    e = explain_shap(f, rng.normal(size=4), rng.normal(size=(6, 4)), list("abcd"), exhaustive=True)
    assert np.abs(e.values[2:]).max() < 1e-6


def test_ime_dummy_exhaustive():
    f = lambda Z: Z[:, 0] ** 2 + Z[:, 1]
    rng = np.random.default_rng(4)
    e = explain_ime_exhaustive(f, rng.normal(size=4), rng.normal(size=(6, 4)), list("abcd"))
    assert np.abs(e.values[2:]).max() < 1e-12


def test_ime_additive_closed_form_and_efficiency():
    rng = np.random.default_rng(0)
    ds = numeric_dataset(rng.normal(size=(500, 2)))
    f = lambda Z: Z[:, 0] + Z[:, 1]
    x = np.array([1.0, 1.0])
    e = explain_ime(f, x, ds, None, ExplainerConfig(ime_tolerance=5e-3, ime_budget=100_000), seed=0)
    se = np.array(list(e.std_errors.values()))
    # additive model: phi_i = x_i - mean of column i
    np.testing.assert_array_less(np.abs(e.values - (x - ds.X.mean(axis=0))), 4 * se)
    target = f(x[None])[0] - f(ds.X).mean()
    assert abs(e.values.sum() - target) < 3 * np.sqrt((se ** 2).sum())


def test_ime_allocation_floor_and_budget():
    rng = np.random.default_rng(0)
    ds = numeric_dataset(rng.normal(size=(200, 3)))
    f = lambda Z: Z[:, 0] * 5
    loose = explain_ime(f, ds.X[0], ds, None, ExplainerConfig(ime_tolerance=1e9), seed=0)
    assert set(loose.samples_used.values()) == {30}
    tight = explain_ime(f, ds.X[0], ds, None, ExplainerConfig(ime_tolerance=1e-6, ime_budget=500), seed=0)
    assert sum(tight.samples_used.values()) <= 500
    assert tight.flags.get("budget_exhausted")
    # the high-variance feature gets the extra samples
    assert tight.samples_used["x0"] > tight.samples_used["x1"]


def test_ime_standard_error_shrinks_as_inverse_sqrt():
    rng = np.random.default_rng(0)
    ds = numeric_dataset(rng.normal(size=(300, 3)))
    f = lambda Z: np.tanh(Z[:, 0] + Z[:, 1] * Z[:, 2])
    ms = [100, 400, 1600, 6400]
    ses = []
    for m in ms:
        cfg = ExplainerConfig(ime_min_samples=m, ime_tolerance=1e9)
        e = explain_ime(f, ds.X[0], ds, None, cfg, seed=1)
        ses.append(e.std_errors["x0"])
    slope = np.polyfit(np.log(ms), np.log(ses), 1)[0]
    assert abs(slope + 0.5) <= 0.15


def test_ime_with_fill_in_generator(compas):
    g = fit_generator("treeEnsFillIn", compas, {"tree_count": 10}, 0)
    f = lambda Z: Z[:, 2] * 0.1
    e = explain_ime(f, compas.X[0], compas, g, ExplainerConfig(ime_budget=2000), seed=0)
    assert most_important_feature(e) == "priors_count"
    assert e.sampler == "treeEnsFillIn"


def test_lime_linear_recovery():
    rng = np.random.default_rng(0)
    ds = numeric_dataset(rng.normal([1.0, 2.0], [2.0, 0.5], size=(500, 2)))
    f = lambda Z: 2 * Z[:, 0] - Z[:, 1]
    e = explain_lime(f, ds.X[0], ds, "gaussian", ExplainerConfig(sample_count=5000), seed=1)
    truth = np.array([2, -1]) * ds.normalization.stds
    np.testing.assert_allclose(e.values, truth, rtol=0.05)


def test_lime_constant_model(compas):
    e = explain_lime(lambda Z: np.full(len(Z), 0.3), compas.X[0], compas, "gaussian", seed=0)
    assert np.abs(e.values).max() < 1e-6


def test_lime_onehot_aggregation(compas):
    f = lambda Z: (Z[:, 6] == 1).astype(float)  # race only
    for cols in ("feature", "onehot"):
        e = explain_lime(f, compas.X[0], compas, "gaussian", ExplainerConfig(lime_columns=cols), seed=0)
        assert set(e.contributions) == {f.name for f in compas.schema.inputs}
        assert most_important_feature(e) == "race"


def test_lime_whole_distribution_sampler(compas):
    g = fit_generator("treeEns", compas, {"tree_count": 10}, 0)
    f = lambda Z: (Z[:, 6] == 1).astype(float)
    e = explain_lime(f, compas.X[0], compas, g, seed=0)
    assert e.sampler == "treeEns" and most_important_feature(e) == "race"


def test_weighted_ridge_escalates_then_fails():
    X = np.ones((10, 2))
    coef, _, lam = weighted_ridge(X, np.arange(10.0), np.ones(10), 0.0, intercept=False)
    assert lam > 0
    with pytest.raises(SingularRegression):
        weighted_ridge(np.zeros((5, 2)), np.ones(5), np.ones(5), 0.0, retries=0)


@pytest.mark.parametrize("method", ["lime", "shap", "ime"])
def test_seeded_determinism(compas, method):
    f = lambda Z: np.tanh(0.1 * Z[:, 0] - 0.3 * Z[:, 2]) + 0.2 * Z[:, 6]
    names = [f.name for f in compas.schema.inputs]
    cfg = ExplainerConfig(sample_count=500, coalition_count=40, ime_budget=1000)

    def run(seed):
        if method == "lime":
            return explain_lime(f, compas.X[3], compas, "gaussian", cfg, seed)
        if method == "shap":
            return explain_shap(f, compas.X[3], compas.X[:30], names, cfg, seed)
        return explain_ime(f, compas.X[3], compas, None, cfg, seed)

    assert run(5).to_json() == run(5).to_json()


def test_most_important_feature_rules():
    e = Explanation({"race": -0.8, "age": 0.3}, 0.0, "lime", "gaussian")
    assert most_important_feature(e) == "race"
    assert most_important_feature(Explanation({"a": 0.5, "b": -0.5}, 0.0, "lime", "x")) == "a"
    assert most_important_feature(Explanation({"a": 0.0, "b": 0.0}, 0.0, "lime", "x"), with_flag=True) == ("a", True)


def test_explanation_json_roundtrip():
    e = Explanation({"a": 1.5}, 0.25, "ime", "perturbation", 3, {"a": 30}, {"a": 0.1}, {"budget_exhausted": True})
    doc = json.loads(json.dumps(e.to_json()))
    assert set(doc) >= {"method", "sampler", "seed", "intercept", "contributions", "samples_used"}
    assert Explanation.from_json(doc) == e


def test_config_validation():
    with pytest.raises(ValueError, match="kernel_width"):
        ExplainerConfig(kernel_width=0).validate()
    with pytest.raises(ValueError, match="sample_count"):
        ExplainerConfig(sample_count=0, ridge=-1).validate()
