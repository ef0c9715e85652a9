from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..data import Dataset, Schema

WHOLE, AROUND, FILL_IN = "whole", "around", "fill_in"


class GeneratorError(RuntimeError):
    pass


class NotFitted(GeneratorError):
    pass


def as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def derive_seed(rng: np.random.Generator) -> int:
    return int(rng.integers(0, 2**31 - 1))


@dataclass(frozen=True)
class DistributionSet:
    """Reference rows (codes) used to marginalize hidden features."""

    instances: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.instances) == 0:
            raise GeneratorError("distribution set must be nonempty")

    def __len__(self):
        return len(self.instances)


class Generator:
    """Fitted sampler over the code space of a schema.

    ``mode`` selects how explainers draw from it: ``"whole"`` samples the
    learned distribution, ``"around"`` samples near the explained instance.
    """

    name = "generator"
    capabilities: frozenset = frozenset()

    def __init__(self, mode: str = WHOLE):
        self.mode = mode
        self.schema: Schema | None = None

    def fit(self, ds: Dataset) -> "Generator":
        self.schema = ds.schema
        self._fit(ds)
        return self

    def _fit(self, ds: Dataset):
        raise NotImplementedError

    def _check(self, capability: str):
        if self.schema is None:
            raise NotFitted(f"{self.name} has not been fitted")
        if capability not in self.capabilities:
            raise GeneratorError(f"{self.name} does not support {capability!r} generation")

    def generate(self, count: int, seed=None) -> np.ndarray:
        raise GeneratorError(f"{self.name} does not support whole-distribution generation")

    def generate_around(self, x: np.ndarray, count: int, seed=None) -> np.ndarray:
        raise GeneratorError(f"{self.name} does not support generation around an instance")

    def fill_in(self, x: np.ndarray, hidden_mask: np.ndarray, seed=None) -> np.ndarray:
        masks = np.asarray(hidden_mask, dtype=bool)[None, :]
        return self.fill_in_batch(x, masks, seed)[0]

    def fill_in_batch(self, x: np.ndarray, hidden_masks: np.ndarray, seed=None) -> np.ndarray:
        raise GeneratorError(f"{self.name} does not support fill-in")

    def sample_for(self, x: np.ndarray, count: int, seed=None) -> np.ndarray:
        if self.mode == AROUND:
            return self.generate_around(x, count, seed)
        return self.generate(count, seed)

    def distribution_set(self, k: int, seed=None, x: np.ndarray | None = None) -> DistributionSet:
        if self.mode == AROUND:
            if x is None:
                raise GeneratorError("around-mode distribution sets need the explained instance")
            rows = self.generate_around(x, k, seed)
        else:
            rows = self.generate(k, seed)
        return DistributionSet(rows, {"generator": self.name, "mode": self.mode})

    def to_json(self) -> dict:
        raise NotImplementedError

    def _empty(self, count: int) -> np.ndarray:
        return np.empty((0, len(self.schema.inputs)))
