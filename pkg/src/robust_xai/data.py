"""Tabular data model: schemas, datasets, encoding and normalization.

Rows are held as a *code matrix*: one column per input feature, where a
categorical value is stored as the index of its level and a numeric value is
stored as is.  Models consume the one-hot *encoded* matrix produced by
:meth:`Schema.encode`; explainers and generators work on codes so that a
categorical feature is always substituted as a whole.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

KINDS = ("categorical", "numeric")
ROLES = ("predictor", "target", "sensitive", "unrelated")
MISSING_TOKENS = frozenset({"", "na", "nan", "?", "null", "none"})


class DataError(ValueError):
    pass


class SchemaError(DataError):
    pass


class UnknownLevel(DataError):
    def __init__(self, feature: str, value: Any):
        super().__init__(f"unknown level {value!r} for feature {feature!r}")
        self.feature = feature
        self.value = value


class MissingColumn(DataError):
    def __init__(self, name: str):
        super().__init__(f"column {name!r} missing from header")
        self.name = name


class EmptyDataset(DataError):
    pass


class DegenerateFeature(DataError):
    pass


@dataclass(frozen=True)
class Feature:
    name: str
    kind: str
    role: str = "predictor"
    levels: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaError(f"{self.name}: kind must be one of {KINDS}")
        if self.role not in ROLES:
            raise SchemaError(f"{self.name}: role must be one of {ROLES}")
        if self.kind == "categorical":
            if self.levels is None or len(self.levels) < 2:
                raise SchemaError(f"{self.name}: categorical features need >= 2 levels")
            levels = tuple(str(v) for v in self.levels)
            if len(set(levels)) != len(levels):
                raise SchemaError(f"{self.name}: duplicate levels")
            object.__setattr__(self, "levels", levels)
        elif self.levels is not None:
            raise SchemaError(f"{self.name}: numeric features carry no levels")

    @property
    def categorical(self) -> bool:
        return self.kind == "categorical"

    @property
    def width(self) -> int:
        return len(self.levels) if self.categorical else 1

    def to_json(self) -> dict:
        out = {"name": self.name, "kind": self.kind, "role": self.role}
        if self.categorical:
            out["levels"] = list(self.levels)
        return out

    @classmethod
    def from_json(cls, doc: dict) -> "Feature":
        levels = doc.get("levels")
        return cls(
            name=doc["name"],
            kind=doc["kind"],
            role=doc.get("role", "predictor"),
            levels=tuple(levels) if levels is not None else None,
        )


class Schema:
    """Ordered feature list with exactly one binary categorical target."""

    def __init__(self, features: Iterable[Feature]):
        self.features = tuple(features)
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise SchemaError("feature names must be unique")
        targets = [f for f in self.features if f.role == "target"]
        if len(targets) != 1:
            raise SchemaError(f"exactly one target feature required, got {len(targets)}")
        self.target = targets[0]
        if not self.target.categorical or len(self.target.levels) != 2:
            raise SchemaError("target must be categorical with exactly 2 levels")
        self.inputs = tuple(f for f in self.features if f.role != "target")
        if not self.inputs:
            raise SchemaError("schema has no input features")
        self._index = {f.name: i for i, f in enumerate(self.inputs)}

        blocks, start = [], 0
        for f in self.inputs:
            blocks.append(slice(start, start + f.width))
            start += f.width
        self.blocks = tuple(blocks)
        self.encoded_width = start
        self.categorical_mask = np.array([f.categorical for f in self.inputs])
        self.numeric_idx = np.flatnonzero(~self.categorical_mask)
        self.categorical_idx = np.flatnonzero(self.categorical_mask)
        self.n_levels = np.array([f.width if f.categorical else 0 for f in self.inputs])

    def __eq__(self, other):
        return isinstance(other, Schema) and self.features == other.features

    def __hash__(self):
        return hash(self.features)

    def __len__(self):
        return len(self.inputs)

    @property
    def names(self) -> list[str]:
        return [f.name for f in self.inputs]

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise SchemaError(f"no input feature named {name!r}") from None

    def feature(self, name: str) -> Feature:
        return self.inputs[self.index(name)]

    def with_role(self, role: str) -> list[str]:
        return [f.name for f in self.inputs if f.role == role]

    @property
    def encoded_names(self) -> list[str]:
        out = []
        for f in self.inputs:
            if f.categorical:
                out.extend(f"{f.name}={lv}" for lv in f.levels)
            else:
                out.append(f.name)
        return out

    def encode(self, codes: np.ndarray) -> np.ndarray:
        """One-hot expand categorical codes; numerics pass through."""
        codes = np.asarray(codes, dtype=float)
        single = codes.ndim == 1
        codes = np.atleast_2d(codes)
        out = np.zeros((codes.shape[0], self.encoded_width))
        rows = np.arange(codes.shape[0])
        for j, (f, blk) in enumerate(zip(self.inputs, self.blocks)):
            if f.categorical:
                out[rows, blk.start + codes[:, j].astype(int)] = 1.0
            else:
                out[:, blk.start] = codes[:, j]
        return out[0] if single else out

    def decode(self, encoded: np.ndarray) -> np.ndarray:
        """Inverse of :meth:`encode`; categorical blocks snap to their argmax."""
        encoded = np.asarray(encoded, dtype=float)
        single = encoded.ndim == 1
        encoded = np.atleast_2d(encoded)
        out = np.empty((encoded.shape[0], len(self.inputs)))
        for j, (f, blk) in enumerate(zip(self.inputs, self.blocks)):
            if f.categorical:
                out[:, j] = np.argmax(encoded[:, blk], axis=1)
            else:
                out[:, j] = encoded[:, blk.start]
        return out[0] if single else out

    def codes_from_raw(self, raw: Sequence[Any]) -> np.ndarray:
        if len(raw) != len(self.inputs):
            raise DataError(f"expected {len(self.inputs)} values, got {len(raw)}")
        out = np.empty(len(self.inputs))
        for j, (f, v) in enumerate(zip(self.inputs, raw)):
            out[j] = _parse_cell(f, v)
        return out

    def raw_from_codes(self, codes: np.ndarray) -> list:
        return [f.levels[int(c)] if f.categorical else float(c) for f, c in zip(self.inputs, codes)]

    def conforms(self, codes: np.ndarray) -> bool:
        codes = np.atleast_2d(codes)
        if codes.shape[1] != len(self.inputs) or not np.all(np.isfinite(codes)):
            return False
        cat = codes[:, self.categorical_idx]
        n_lv = self.n_levels[self.categorical_idx]
        return bool(np.all((cat == np.round(cat)) & (cat >= 0) & (cat < n_lv)))

    def add_features(self, extra: Iterable[Feature]) -> "Schema":
        return Schema(self.features + tuple(extra))

    def replace_role(self, name: str, role: str) -> "Schema":
        feats = [
            Feature(f.name, f.kind, role, f.levels) if f.name == name else f for f in self.features
        ]
        return Schema(feats)

    def to_json(self) -> list[dict]:
        return [f.to_json() for f in self.features]

    @classmethod
    def from_json(cls, doc: list[dict]) -> "Schema":
        return cls(Feature.from_json(d) for d in doc)


def load_schema(path: str | Path) -> Schema:
    with open(path, encoding="utf-8-sig") as fh:
        return Schema.from_json(json.load(fh))


def _parse_cell(f: Feature, value: Any) -> float:
    if f.categorical:
        try:
            return float(f.levels.index(str(value)))
        except ValueError:
            raise UnknownLevel(f.name, value) from None
    return float(value)


@dataclass(frozen=True)
class Normalization:
    """Per-numeric-column mean and standard deviation (population)."""

    schema: Schema
    means: np.ndarray
    stds: np.ndarray

    @classmethod
    def fit(cls, schema: Schema, codes: np.ndarray) -> "Normalization":
        num = codes[:, schema.numeric_idx]
        means = num.mean(axis=0) if len(codes) else np.zeros(num.shape[1])
        stds = num.std(axis=0) if len(codes) else np.ones(num.shape[1])
        bad = [schema.inputs[j].name for j, s in zip(schema.numeric_idx, stds) if not s > 0]
        if bad:
            raise DegenerateFeature(f"zero variance numeric features: {bad}")
        return cls(schema, means, stds)

    def zscore(self, codes: np.ndarray) -> np.ndarray:
        """Codes with numeric columns standardized and categorical codes untouched."""
        out = np.array(codes, dtype=float, copy=True)
        out[..., self.schema.numeric_idx] = (out[..., self.schema.numeric_idx] - self.means) / self.stds
        return out

    def unzscore(self, values: np.ndarray) -> np.ndarray:
        out = np.array(values, dtype=float, copy=True)
        out[..., self.schema.numeric_idx] = out[..., self.schema.numeric_idx] * self.stds + self.means
        return out

    def normalize(self, codes: np.ndarray) -> np.ndarray:
        """Encoded space with z-scored numerics and one-hot categoricals."""
        return self.schema.encode(self.zscore(codes))

    def denormalize(self, values: np.ndarray) -> np.ndarray:
        return self.unzscore(self.schema.decode(values))


@dataclass(frozen=True)
class Instance:
    raw: list
    codes: np.ndarray
    encoded: np.ndarray


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable table of schema-conforming rows.

    ``X`` holds input codes (targets excluded), ``y`` the target level index.
    """

    schema: Schema
    X: np.ndarray
    y: np.ndarray
    dropped: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        X = np.array(self.X, dtype=float, copy=True).reshape(-1, len(self.schema.inputs))
        y = np.array(self.y, dtype=int, copy=True).reshape(-1)
        if X.shape[0] != y.shape[0]:
            raise DataError("X and y row counts differ")
        if len(X) and not self.schema.conforms(X):
            raise DataError("rows do not conform to schema")
        if np.any((y < 0) | (y > 1)):
            raise DataError("target codes must be 0 or 1")
        X.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    def __len__(self) -> int:
        return self.X.shape[0]

    @cached_property
    def normalization(self) -> Normalization:
        return Normalization.fit(self.schema, self.X)

    @cached_property
    def encoded(self) -> np.ndarray:
        enc = self.schema.encode(self.X)
        enc.flags.writeable = False
        return enc

    def subset(self, idx: Sequence[int] | np.ndarray) -> "Dataset":
        idx = np.asarray(idx, dtype=int)
        return Dataset(self.schema, self.X[idx], self.y[idx], meta=dict(self.meta))

    def instance(self, i: int) -> Instance:
        codes = self.X[i].copy()
        return Instance(self.schema.raw_from_codes(codes), codes, self.schema.encode(codes))

    def level_frequencies(self, j: int) -> np.ndarray:
        f = self.schema.inputs[j]
        counts = np.bincount(self.X[:, j].astype(int), minlength=f.width).astype(float)
        return counts / counts.sum()


def encode(ds: Dataset, raw: Sequence[Any]) -> Instance:
    codes = ds.schema.codes_from_raw(raw)
    return Instance(list(raw), codes, ds.schema.encode(codes))


def load_csv(path: str | Path, schema: Schema) -> Dataset:
    """Read a headed CSV; rows with missing cells are dropped and counted."""
    with open(path, newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip().lstrip("﻿") for h in next(reader)]
        except StopIteration:
            raise EmptyDataset(f"{path}: no header") from None
        cols = {}
        for f in schema.features:
            if f.name not in header:
                raise MissingColumn(f.name)
            cols[f.name] = header.index(f.name)

        X, y, dropped = [], [], 0
        for line in reader:
            if not line:
                continue
            cells = {f.name: (line[cols[f.name]].strip() if cols[f.name] < len(line) else "")
                     for f in schema.features}
            if any(c.lower() in MISSING_TOKENS for c in cells.values()):
                dropped += 1
                continue
            X.append([_parse_cell(f, cells[f.name]) for f in schema.inputs])
            y.append(_parse_cell(schema.target, cells[schema.target.name]))
    if not X:
        raise EmptyDataset(f"{path}: no complete rows")
    ds = Dataset(schema, np.array(X), np.array(y, dtype=int), dropped=dropped)
    if len(ds) > 1:
        ds.normalization  # rejects degenerate numeric columns
    return ds


def write_csv(ds: Dataset, path: str | Path) -> None:
    schema = ds.schema
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f.name for f in schema.inputs] + [schema.target.name])
        for codes, t in zip(ds.X, ds.y):
            raw = [repr(v) if isinstance(v, float) else v for v in schema.raw_from_codes(codes)]
            w.writerow(raw + [schema.target.levels[int(t)]])


def split_train_eval(ds: Dataset, ratio: float, seed: int) -> tuple[Dataset, Dataset]:
    if not 0 < ratio < 1:
        raise ValueError("ratio must lie in (0, 1)")
    if len(ds) == 0:
        raise EmptyDataset("cannot split an empty dataset")
    perm = np.random.default_rng(seed).permutation(len(ds))
    n_train = int(round(ratio * len(ds)))
    n_train = min(max(n_train, 1), len(ds) - 1) if len(ds) > 1 else 1
    return ds.subset(np.sort(perm[:n_train])), ds.subset(np.sort(perm[n_train:]))


def add_unrelated_features(
    ds: Dataset,
    count: int,
    seed: int,
    use_existing: Sequence[str] = (),
) -> Dataset:
    """Append ``random1``/``random2`` columns drawn uniformly from {0, 1}.

    Names in ``use_existing`` are relabelled as unrelated instead of being
    injected, which covers setups where an existing column plays that part.
    """
    if count not in (1, 2):
        raise ValueError("count must be 1 or 2")
    if len(use_existing) > count:
        raise ValueError("more existing unrelated columns than count")
    schema = ds.schema
    for name in use_existing:
        schema = schema.replace_role(name, "unrelated")
    n_new = count - len(use_existing)
    names = [f"random{k + 1}" for k in range(n_new)]
    taken = {f.name for f in schema.features}
    clash = [n for n in names if n in taken]
    if clash:
        raise SchemaError(f"name collision: {clash}")
    rng = np.random.default_rng(seed)
    cols = rng.integers(0, 2, size=(len(ds), n_new)).astype(float)
    schema = schema.add_features(Feature(n, "numeric", "unrelated") for n in names)
    return Dataset(schema, np.hstack([ds.X, cols]), ds.y, dropped=ds.dropped, meta=dict(ds.meta))
