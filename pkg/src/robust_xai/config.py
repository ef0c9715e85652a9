"""Run configuration: one JSON document per run, validated by a published schema."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import jsonschema

from . import SCHEMA_VERSION
from .generators import GENERATOR_NAMES
from .models import VARIANTS

SAMPLER_NAMES = list(GENERATOR_NAMES)
_unit_open = {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}
_pair = {"type": "array", "items": {"type": "string"}, "minItems": 2, "maxItems": 2}
_triple = {"type": "array", "items": {"type": "string"}, "minItems": 3, "maxItems": 3}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "robust-xai run config",
    "type": "object",
    "required": ["seed", "dataset"],
    "additionalProperties": False,
    "properties": {
        "schema_version": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0},
        "dataset": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "synth": {"type": "string", "enum": ["compas", "compas-like", "cc", "german"]},
                "rows": {"type": "integer", "minimum": 10},
                "csv": {"type": "string"},
                "schema": {"type": "string"},
                "tag": {"type": "string"},
            },
            "oneOf": [{"required": ["synth"]}, {"required": ["csv", "schema"]}],
        },
        "train_ratio": _unit_open,
        "unrelated": {"type": "integer", "enum": [0, 1, 2]},
        "sensitive": {"type": "string"},
        "classifiers": {"type": "array", "items": {"enum": list(VARIANTS)}, "uniqueItems": True},
        "generators": {
            "type": "object",
            "propertyNames": {"enum": SAMPLER_NAMES},
            "additionalProperties": {"type": "object"},
        },
        "attack": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "biased": {"type": "object"},
                "unbiased": {"type": "object"},
                "dmodel": {"enum": list(VARIANTS)},
                "dmodel_params": {"type": "object"},
                "t": _unit_open,
                "adversaries": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["name", "recipe", "generator"],
                        "additionalProperties": False,
                        "properties": {
                            "name": {"type": "string", "pattern": "^[A-Za-z0-9_.-]+$"},
                            "recipe": {"enum": ["lime", "shap", "ime"]},
                            "generator": {"enum": SAMPLER_NAMES},
                            "n_samples": {"type": "integer", "minimum": 1},
                            "k": {"type": "integer", "minimum": 1},
                        },
                    },
                },
            },
        },
        "explainer": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "sample_count": {"type": "integer", "minimum": 1},
                "kernel_width": {"type": ["number", "null"], "exclusiveMinimum": 0},
                "ridge": {"type": "number", "minimum": 0},
                "coalition_count": {"type": "integer", "minimum": 1},
                "distribution_set_size": {"type": "integer", "minimum": 1},
                "ime_min_samples": {"type": "integer", "minimum": 1},
                "ime_budget": {"type": ["integer", "null"], "minimum": 1},
                "ime_tolerance": {"type": "number", "exclusiveMinimum": 0},
                "lime_columns": {"enum": ["feature", "onehot"]},
            },
        },
        "explain": {
            "type": "object",
            "additionalProperties": False,
            "required": ["method", "generator", "model"],
            "properties": {
                "method": {"enum": ["lime", "shap", "ime", "exact"]},
                "generator": {"enum": SAMPLER_NAMES},
                "model": {"type": "string"},
                "start": {"type": "integer", "minimum": 0},
                "stop": {"type": "integer", "minimum": 0},
            },
        },
        "experiments": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "robustness": {
                    "type": "object",
                    "required": ["cells"],
                    "properties": {"cells": {"type": "array", "items": _triple},
                                   "instances": {"type": "integer", "minimum": 1}},
                },
                "mad": {
                    "type": "object",
                    "required": ["pairs"],
                    "properties": {"pairs": {"type": "array", "items": _triple},
                                   "instances": {"type": "integer", "minimum": 1}},
                },
                "threshold": {
                    "type": "object",
                    "required": ["ts", "explainers"],
                    "properties": {"ts": {"type": "array", "items": _unit_open, "minItems": 1},
                                   "explainers": {"type": "array", "items": _pair},
                                   "adversaries": {"type": "array", "items": {"type": "string"}},
                                   "instances": {"type": "integer", "minimum": 1}},
                },
                "convergence": {
                    "type": "object",
                    "properties": {"tolerance": {"type": "number", "exclusiveMinimum": 0},
                                   "instances": {"type": "integer", "minimum": 1},
                                   "gold": {"enum": ["exact", "ime"]},
                                   "fill_in": {"enum": ["treeEnsFillIn"]}},
                },
                "dist_check": {
                    "type": "object",
                    "properties": {"generators": {"type": "array", "items": {"enum": SAMPLER_NAMES}}},
                },
            },
        },
    },
}


class ConfigInvalid(ValueError):
    """Every problem found in a config, one per line."""

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("invalid config:\n" + "\n".join(f"  - {p}" for p in self.problems))


DEFAULTS = {
    "train_ratio": 0.9,
    "unrelated": 1,
    "classifiers": ["gaussian_naive_bayes", "linear", "random_forest", "feedforward_net"],
    "generators": {},
    "attack": {},
    "explainer": {},
    "experiments": {},
}


@dataclass
class RunConfig:
    doc: dict
    base_dir: Path

    @property
    def seed(self) -> int:
        return int(self.doc["seed"])

    def get(self, key, default=None):
        return self.doc.get(key, DEFAULTS.get(key, default))

    def path(self, key: str) -> Path:
        p = Path(self.doc["dataset"][key])
        return p if p.is_absolute() else self.base_dir / p

    @property
    def run_id(self) -> str:
        canon = json.dumps(self.doc, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:12]


def validate(doc: dict, base_dir: Path | str = ".") -> RunConfig:
    base = Path(base_dir)
    problems = []
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    for err in sorted(validator.iter_errors(doc), key=lambda e: list(map(str, e.absolute_path))):
        where = "/".join(map(str, err.absolute_path)) or "<root>"
        problems.append(f"{where}: {err.message}")
    ds = doc.get("dataset") if isinstance(doc, dict) else None
    if isinstance(ds, dict):
        for key in ("csv", "schema"):
            if isinstance(ds.get(key), str):
                p = Path(ds[key])
                if not (p if p.is_absolute() else base / p).exists():
                    problems.append(f"dataset/{key}: file {ds[key]!r} does not exist")
    ex = doc.get("explain") if isinstance(doc, dict) else None
    if isinstance(ex, dict) and isinstance(ex.get("start"), int) and isinstance(ex.get("stop"), int):
        if ex["stop"] <= ex["start"]:
            problems.append("explain: stop must be greater than start")
    if problems:
        raise ConfigInvalid(problems)
    return RunConfig(copy.deepcopy(doc), base)


def load_config(path: str | Path, seed: int | None = None) -> RunConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigInvalid([f"config file {str(path)!r} does not exist"]) from None
    except json.JSONDecodeError as exc:
        raise ConfigInvalid([f"config is not valid JSON: {exc}"]) from None
    if seed is not None and isinstance(doc, dict):
        doc["seed"] = seed
    return validate(doc, path.parent)


def schema_document() -> dict:
    return {"schema_version": SCHEMA_VERSION, **CONFIG_SCHEMA}
