"""Samplers used by the explanation methods and by the attacker.

Names accepted by :func:`make_generator`:

``gaussian``       LIME's Gaussian perturbation around an instance
``perturbation``   whole training rows (IME's original sampling)
``kmeans``         k-means centroids (Kernel SHAP's default distribution set)
``rbf``            RBF-network generator, whole distribution
``treeEns``        random-tree ensemble, whole distribution
``treeEnsFillIn``  random-tree ensemble, conditional fill-in around an instance
``mcdvae``         VAE with Monte Carlo dropout, around an instance
"""

from __future__ import annotations

from ..data import Dataset
from .base import AROUND, FILL_IN, WHOLE, DistributionSet, Generator, GeneratorError, NotFitted, as_rng, derive_seed
from .kmeans import KMeansGenerator, kmeans, kmeans_distribution_set, silhouette_score, silhouette_select_k
from .perturbation import GaussianSampler, PerturbationSampler, gaussian_perturb
from .rbf import RBFGenerator
from .tree_ensemble import TreeEnsembleGenerator, random_masks

GENERATOR_NAMES = ("gaussian", "perturbation", "kmeans", "rbf", "treeEns", "treeEnsFillIn", "mcdvae")

__all__ = [
    "AROUND", "FILL_IN", "WHOLE", "DistributionSet", "Generator", "GeneratorError", "NotFitted",
    "GENERATOR_NAMES", "GaussianSampler", "PerturbationSampler", "KMeansGenerator", "RBFGenerator",
    "TreeEnsembleGenerator", "as_rng", "derive_seed", "fit_generator", "gaussian_perturb", "generator_from_json",
    "kmeans", "kmeans_distribution_set", "make_generator", "random_masks", "silhouette_score",
    "silhouette_select_k",
]


def make_generator(name: str, params: dict | None = None, seed: int = 0) -> Generator:
    params = dict(params or {})
    if name == "gaussian":
        return GaussianSampler()
    if name == "perturbation":
        return PerturbationSampler(mode=params.get("mode", AROUND))
    if name == "kmeans":
        return KMeansGenerator(seed=seed, **params)
    if name == "rbf":
        return RBFGenerator(seed=seed, **params)
    if name in ("treeEns", "treeEnsFillIn"):
        mode = AROUND if name == "treeEnsFillIn" else WHOLE
        return TreeEnsembleGenerator(seed=seed, mode=mode, **params)
    if name == "mcdvae":
        from .vae import McdVaeGenerator, McdVaeParams

        return McdVaeGenerator(McdVaeParams(**params), seed=seed)
    raise GeneratorError(f"unknown generator {name!r}; choose from {GENERATOR_NAMES}")


def fit_generator(name: str, ds: Dataset, params: dict | None = None, seed: int = 0) -> Generator:
    return make_generator(name, params, seed).fit(ds)


def generator_from_json(doc: dict, train: Dataset) -> Generator:
    """Rebuild a fitted generator; ``train`` supplies the schema and statistics."""
    import numpy as np

    name = doc["name"]
    if name in ("gaussian", "perturbation"):
        g = make_generator(name, {"mode": doc["mode"]} if name == "perturbation" else None)
        g.fit(train)
        if name == "perturbation":
            g.data = np.asarray(doc["data"], dtype=float)
        return g
    if name == "kmeans":
        g = KMeansGenerator(k=doc["k"])
        g.schema = train.schema
        g.centroids = np.asarray(doc["centroids"], dtype=float)
        return g
    if name == "rbf":
        g = RBFGenerator(doc["kernel_count"])
        g.schema = train.schema
        g.norm = train.normalization
        for key in ("centers", "variances", "weights", "class_freq"):
            setattr(g, key, np.asarray(doc[key], dtype=float))
        return g
    if name in ("treeEns", "treeEnsFillIn"):
        g = TreeEnsembleGenerator(doc["tree_count"], doc["min_leaf"], doc["hops"], doc["seed"], doc["mode"])
        g.schema = train.schema
        g.load_trees(doc["data"], doc["trees"])
        return g
    if name == "mcdvae":
        from .vae import McdVaeGenerator, McdVaeParams

        g = McdVaeGenerator(McdVaeParams(**doc["params"]), seed=doc["seed"], mode=doc["mode"])
        g.schema = train.schema
        g.norm = train.normalization
        g.load_state(train.schema.encoded_width, doc["state"])
        return g
    raise GeneratorError(f"unknown generator {name!r}")
