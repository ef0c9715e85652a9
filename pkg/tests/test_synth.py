import numpy as np

from robust_xai.synth import synth_dataset


def test_compas_like_shape_and_rates():
    ds = synth_dataset("compas-like", 4000, 0)
    assert [f.name for f in ds.schema.inputs][-1] == "race"
    assert ds.schema.with_role("sensitive") == ["race"]
    assert 0.7 < ds.y.mean() < 0.9
    assert 0.45 < ds.X[:, -1].mean() < 0.58


def test_presets_are_seeded():
    a = synth_dataset("german", 300, 5)
    b = synth_dataset("german", 300, 5)
    np.testing.assert_array_equal(a.X, b.X)
    assert a.schema.with_role("sensitive") == ["gender"]


def test_cc_fraction_groups_sum_to_one():
    ds = synth_dataset("cc", 200, 1)
    race = ds.X[:, :4]
    np.testing.assert_allclose(race.sum(axis=1), 1.0)
