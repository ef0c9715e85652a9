import json

import numpy as np
import pytest
from sklearn.metrics import silhouette_score as sk_silhouette

from robust_xai.data import split_train_eval
from robust_xai.generators import (
    GeneratorError, KMeansGenerator, NotFitted, PerturbationSampler, TreeEnsembleGenerator, fit_generator,
    generator_from_json, kmeans, make_generator, silhouette_score,
)
from robust_xai.generators.vae import McdVaeParams
from tests.conftest import numeric_dataset


def test_unfitted_generator_raises():
    with pytest.raises(NotFitted):
        TreeEnsembleGenerator().generate(3)


@pytest.mark.parametrize("name", ["perturbation", "rbf", "treeEns", "kmeans"])
def test_whole_generation_conforms(compas, name):
    g = fit_generator(name, compas, None, 0)
    g.mode = "whole"
    rows = g.generate(200, seed=1)
    assert rows.shape == (200, len(compas.schema.inputs))
    assert compas.schema.conforms(rows)
    np.testing.assert_array_equal(rows, g.generate(200, seed=1))


def test_gaussian_sampler_is_around_only(compas):
    g = fit_generator("gaussian", compas)
    assert compas.schema.conforms(g.generate_around(compas.X[0], 50, 0))
    with pytest.raises(GeneratorError):
        g.generate(5)


def test_fill_in_keeps_fixed_coordinates(compas):
    g = fit_generator("treeEnsFillIn", compas, {"tree_count": 10}, 0)
    rng = np.random.default_rng(0)
    masks = rng.random((300, len(compas.schema.inputs))) < 0.5
    x = compas.X[5]
    out = g.fill_in_batch(x, masks, 2)
    np.testing.assert_array_equal(np.where(masks, 0, out), np.where(masks, 0, x))
    assert compas.schema.conforms(out)


def test_perturbation_fill_in_takes_one_donor_row(compas):
    g = PerturbationSampler().fit(compas)
    mask = np.array([True, False, True, False, True, False, True])
    out = g.fill_in(compas.X[0], mask, 3)
    donors = [r for r in compas.X if np.array_equal(r[mask], out[mask])]
    assert donors and np.array_equal(out[~mask], compas.X[0][~mask])


def test_tree_ensemble_reproduces_dependence():
    # two strongly coupled columns: generated rows keep the coupling
    rng = np.random.default_rng(0)
    a = rng.normal(size=2000)
    ds = numeric_dataset(np.column_stack([a, a + 0.1 * rng.normal(size=2000)]))
    g = TreeEnsembleGenerator(seed=0).fit(ds)
    out = g.generate(5000, seed=1)
    assert np.corrcoef(out.T)[0, 1] > 0.9


def test_tree_ensemble_conditional_fill_in():
    rng = np.random.default_rng(0)
    a = rng.normal(size=2000)
    ds = numeric_dataset(np.column_stack([a, a + 0.1 * rng.normal(size=2000)]))
    g = TreeEnsembleGenerator(seed=0).fit(ds)
    out = g.fill_in_batch(np.array([1.5, 0.0]), np.tile([False, True], (500, 1)), 0)
    assert abs(out[:, 1].mean() - 1.5) < 0.3


def test_tree_ensemble_json_roundtrip(compas):
    g = fit_generator("treeEns", compas, {"tree_count": 5}, 0)
    back = generator_from_json(json.loads(json.dumps(g.to_json())), compas)
    np.testing.assert_array_equal(back.generate(100, seed=4), g.generate(100, seed=4))


def test_silhouette_matches_sklearn():
    rng = np.random.default_rng(1)
    Z = np.vstack([rng.normal(c, 0.5, size=(40, 3)) for c in (0, 3, 6)])
    _, labels, _ = kmeans(Z, 3, 0)
    assert abs(silhouette_score(Z, labels) - sk_silhouette(Z, labels)) < 1e-10


def test_kmeans_inertia_non_increasing():
    rng = np.random.default_rng(2)
    Z = rng.normal(size=(300, 4))
    _, _, hist = kmeans(Z, 6, 0)
    assert all(b <= a + 1e-9 for a, b in zip(hist, hist[1:]))


def test_silhouette_selects_true_cluster_count():
    rng = np.random.default_rng(3)
    X = np.vstack([rng.normal(c, 0.3, size=(60, 2)) for c in ((0, 0), (5, 5), (0, 8), (8, 0))])
    g = KMeansGenerator(k_max=8, seed=0).fit(numeric_dataset(X))
    assert g.k == 4
    assert len(g.distribution_set().instances) == 4


def test_rbf_generator_json_roundtrip(compas):
    g = fit_generator("rbf", compas, None, 0)
    back = generator_from_json(json.loads(json.dumps(g.to_json())), compas)
    np.testing.assert_array_equal(back.generate(50, seed=9), g.generate(50, seed=9))


def test_mcdvae_around_is_local_and_varied(compas):
    tr, _ = split_train_eval(compas, 0.9, 0)
    g = make_generator("mcdvae", {"epochs": 30}, 0).fit(tr)
    assert g.final_error < g.initial_error
    x = tr.X[0]
    near = g.generate_around(x, 100, 1)
    assert tr.schema.conforms(near)
    assert len(np.unique(near, axis=0)) > 1
    far = g.generate(100, 1)
    zn = tr.normalization.normalize
    d_near = np.linalg.norm(zn(near) - zn(x[None]), axis=1).mean()
    d_far = np.linalg.norm(zn(far) - zn(x[None]), axis=1).mean()
    assert d_near < d_far
    back = generator_from_json(json.loads(json.dumps(g.to_json())), tr)
    np.testing.assert_allclose(back.generate_around(x, 10, 5), g.generate_around(x, 10, 5))


def test_mcdvae_rejects_tiny_data(compas):
    with pytest.raises(GeneratorError):
        make_generator("mcdvae", {"epochs": 1}).fit(compas.subset(range(5)))


def test_mcdvae_params_validate():
    with pytest.raises(ValueError):
        McdVaeParams(dropout=1.5).validate()
