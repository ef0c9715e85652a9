import numpy as np
import pytest

from robust_xai.data import Dataset, Feature, Schema
from robust_xai.synth import synth_dataset


def numeric_schema(n, target="y"):
    feats = [Feature(f"x{i}", "numeric") for i in range(n)]
    feats.append(Feature(target, "categorical", "target", levels=("0", "1")))
    return Schema(feats)


def numeric_dataset(X, y=None):
    X = np.asarray(X, dtype=float)
    if y is None:
        y = (np.arange(len(X)) % 2).astype(int)
    return Dataset(numeric_schema(X.shape[1]), X, y)


@pytest.fixture(scope="session")
def compas():
    return synth_dataset("compas", 600, 7)


@pytest.fixture(scope="session")
def mixed_schema():
    return Schema([
        Feature("age", "numeric"),
        Feature("color", "categorical", levels=("red", "green", "blue")),
        Feature("race", "categorical", "sensitive", levels=("a", "b")),
        Feature("label", "categorical", "target", levels=("no", "yes")),
    ])
