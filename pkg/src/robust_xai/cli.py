"""Command-line pipeline: prepare -> train -> explain / experiments.

All artifacts of a run live under ``{out}/{run-id}/`` where the run id hashes
the (seed-resolved) config, so identical config and seed reproduce identical
files.  ``manifest.json`` lists every artifact with its sha256.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import SCHEMA_VERSION
from .attack import TRAINERS, AdversarialModel
from .config import ConfigInvalid, RunConfig, load_config
from .data import (
    Dataset, DataError, Schema, add_unrelated_features, load_csv, load_schema, split_train_eval, write_csv,
)
from .experiments import (
    cell_seed, explain, report_rows, run_convergence, run_distribution_check, run_mad, run_robustness,
    run_threshold_sweep, write_csv as write_report_csv, write_json, write_projection,
)
from .explainers import ExplainerConfig, value_function
from .generators import AROUND, fit_generator, generator_from_json
from .models import accuracy, biased_threshold_from_mean, fit_classifier, make_biased, make_unbiased, model_from_json
from .synth import synth_dataset

ENV_OUT = "ROBUST_XAI_OUT"
EXIT_ERROR, EXIT_CONFIG, EXIT_MISSING = 1, 2, 3


class MissingArtifact(RuntimeError):
    def __init__(self, path: Path, command: str):
        self.path = path
        self.command = command
        super().__init__(f"missing artifact {path.name}; run `{command}` first")


class Run:
    """Artifact directory of one run; tracks files written by the current command."""

    def __init__(self, cfg: RunConfig, out_root: Path):
        self.cfg = cfg
        self.root = out_root / cfg.run_id
        self.written: list[Path] = []

    def path(self, rel: str) -> Path:
        return self.root / rel

    def require(self, rel: str, command: str) -> Path:
        p = self.path(rel)
        if not p.exists():
            raise MissingArtifact(p, command)
        return p

    def _claim(self, rel: str) -> Path:
        p = self.path(rel)
        p.parent.mkdir(parents=True, exist_ok=True)
        self.written.append(p)
        return p

    def write_json(self, rel: str, obj) -> None:
        doc = {"schema_version": SCHEMA_VERSION, **obj} if isinstance(obj, dict) else obj
        self._claim(rel).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")

    def write_with(self, rel: str, writer, *args) -> None:
        writer(*args, self._claim(rel))

    def read_json(self, rel: str, command: str) -> dict:
        return json.loads(self.require(rel, command).read_text())

    def rollback(self) -> None:
        for p in self.written:
            if p.exists():
                p.unlink()
        self.written.clear()

    def commit(self) -> None:
        mpath = self.path("manifest.json")
        manifest = json.loads(mpath.read_text()) if mpath.exists() else {"schema_version": SCHEMA_VERSION,
                                                                          "artifacts": {}}
        for p in self.written:
            manifest["artifacts"][str(p.relative_to(self.root))] = hashlib.sha256(p.read_bytes()).hexdigest()
        manifest["run_id"] = self.cfg.run_id
        mpath.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
        self.written.clear()


# ----------------------------------------------------------------- loading

def _load_split(run: Run) -> tuple[Dataset, Dataset]:
    schema = Schema.from_json(run.read_json("data/schema.json", "prepare")["features"])
    train = load_csv(run.require("data/train.csv", "prepare"), schema)
    evaluation = load_csv(run.require("data/eval.csv", "prepare"), schema)
    return train, evaluation


def _sensitive(cfg: RunConfig, schema: Schema) -> str:
    if cfg.get("sensitive"):
        return cfg.get("sensitive")
    names = schema.with_role("sensitive")
    if not names:
        raise DataError("no sensitive feature in the schema; set 'sensitive' in the config")
    return names[0]


def _explainer_cfg(cfg: RunConfig) -> ExplainerConfig:
    return ExplainerConfig(**cfg.get("explainer")).validate()


def _load_generators(run: Run, train: Dataset) -> dict:
    index = run.read_json("generators/index.json", "train")
    samplers = {"gaussian": "gaussian", "perturbation": "perturbation"}
    for name in index["names"]:
        samplers[name] = generator_from_json(run.read_json(f"generators/{name}.json", "train"), train)
    return samplers


def _load_models(run: Run, schema: Schema) -> dict:
    index = run.read_json("models/index.json", "train")
    return {name: model_from_json(run.read_json(f"models/{name}.json", "train")) for name in index["names"]}


def _load_adversaries(run: Run, schema: Schema) -> dict:
    index = run.read_json("adversaries/index.json", "train")
    return {n: AdversarialModel.from_json(run.read_json(f"adversaries/{n}.json", "train"), schema)
            for n in index["names"]}


def _needed_generators(cfg: RunConfig) -> list[str]:
    names = set(cfg.get("generators"))
    for a in cfg.get("attack").get("adversaries", []):
        names.add(a["generator"])
    ex = cfg.get("experiments")
    for m, o, g in ex.get("robustness", {}).get("cells", []):
        names.add(o)
    for m, o, g in ex.get("mad", {}).get("pairs", []):
        names.update((o, g))
    for m, g in ex.get("threshold", {}).get("explainers", []):
        names.add(g)
    if "convergence" in ex:
        names.add(ex["convergence"].get("fill_in", "treeEnsFillIn"))
    names.update(ex.get("dist_check", {}).get("generators", []))
    if "explain" in cfg.doc:
        names.add(cfg.doc["explain"]["generator"])
    return sorted(names - {"gaussian", "perturbation"})


def _instances(ds: Dataset, count: int | None) -> Dataset:
    return ds if count is None else ds.subset(np.arange(min(count, len(ds))))


# ---------------------------------------------------------------- commands

def cmd_prepare(run: Run) -> None:
    cfg = run.cfg
    spec = cfg.get("dataset")
    if "synth" in spec:
        ds = synth_dataset(spec["synth"], spec.get("rows", 2000), cell_seed(cfg.seed, "synth"))
    else:
        ds = load_csv(cfg.path("csv"), load_schema(cfg.path("schema")))
    if cfg.get("unrelated"):
        ds = add_unrelated_features(ds, cfg.get("unrelated"), cell_seed(cfg.seed, "unrelated"))
    train, evaluation = split_train_eval(ds, cfg.get("train_ratio"), cell_seed(cfg.seed, "split"))
    run.write_json("data/schema.json", {"features": ds.schema.to_json()})
    run.write_with("data/train.csv", write_csv, train)
    run.write_with("data/eval.csv", write_csv, evaluation)
    run.write_json("data/summary.json", {"rows": len(ds), "train": len(train), "eval": len(evaluation),
                                         "dropped": ds.dropped, "tag": spec.get("tag", spec.get("synth", "csv"))})


def _rules(cfg: RunConfig, train: Dataset):
    schema = train.schema
    sensitive = _sensitive(cfg, schema)
    attack = cfg.get("attack")
    levels = schema.target.levels
    mapping = attack.get("biased")
    if mapping is None:
        f = schema.feature(sensitive)
        if f.categorical:
            mapping = {lv: levels[min(i, 1)] for i, lv in enumerate(f.levels)}
        else:
            mapping = biased_threshold_from_mean(train, sensitive, levels[0], levels[1])
    unrelated = schema.with_role("unrelated")
    if not unrelated:
        raise DataError("attacks need unrelated features; set 'unrelated' to 1 or 2")
    return make_biased(schema, sensitive, mapping), make_unbiased(schema, unrelated, attack.get("unbiased"))


def cmd_train(run: Run) -> None:
    cfg = run.cfg
    train, evaluation = _load_split(run)
    models = {}
    for variant in cfg.get("classifiers"):
        m = fit_classifier(variant, train, seed=cell_seed(cfg.seed, "classifier", variant))
        models[variant] = m
        run.write_json(f"models/{variant}.json", m.to_json())
    run.write_json("models/index.json", {"names": list(models),
                                         "accuracy": {k: accuracy(m, evaluation) for k, m in models.items()}})
    params = cfg.get("generators")
    gens = {}
    for name in _needed_generators(cfg):
        g = fit_generator(name, train, params.get(name), cell_seed(cfg.seed, "generator", name))
        gens[name] = g
        run.write_json(f"generators/{name}.json", g.to_json())
    run.write_json("generators/index.json", {"names": list(gens)})
    attack = cfg.get("attack")
    advs = attack.get("adversaries", [])
    if advs:
        biased, unbiased = _rules(cfg, train)
        samplers = {"gaussian": "gaussian", "perturbation": "perturbation", **gens}
        for a in advs:
            trainer = TRAINERS[a["recipe"]]
            kw = {"dmodel": attack.get("dmodel", "random_forest"), "hyper": attack.get("dmodel_params"),
                  "seed": cell_seed(cfg.seed, "adversary", a["name"])}
            if "n_samples" in a:
                kw["n_samples"] = a["n_samples"]
            if a["recipe"] == "shap" and "k" in a:
                kw["k"] = a["k"]
            d = trainer(train, samplers[a["generator"]], **kw)
            e = AdversarialModel(biased, unbiased, d, attack.get("t", 0.5))
            run.write_json(f"adversaries/{a['name']}.json", e.to_json())
    run.write_json("adversaries/index.json", {"names": [a["name"] for a in advs]})


def _model(run: Run, name: str, schema: Schema):
    advs = _load_adversaries(run, schema)
    if name in advs:
        return advs[name]
    models = _load_models(run, schema)
    if name in models:
        return models[name]
    raise MissingArtifact(run.path(f"models/{name}.json"), "train")


def cmd_explain(run: Run, span: tuple[int, int] | None = None) -> None:
    cfg = run.cfg
    spec = cfg.doc.get("explain")
    if spec is None:
        raise ConfigInvalid(["explain: section required for the explain command"])
    train, evaluation = _load_split(run)
    model = _model(run, spec["model"], train.schema)
    samplers = _load_generators(run, train)
    ecfg = _explainer_cfg(cfg)
    start, stop = span or (spec.get("start", 0), spec.get("stop", len(evaluation)))
    if not 0 <= start < stop <= len(evaluation):
        raise ConfigInvalid([f"explain: instance range {start}..{stop} outside 0..{len(evaluation)}"])
    f = value_function(model, train.schema)
    sampler = samplers.get(spec["generator"], spec["generator"])
    for i in range(start, stop):
        e = explain(spec["method"], f, evaluation.X[i], train, sampler, ecfg, cell_seed(cfg.seed, "explain", i))
        run.write_json(f"explanations/{spec['method']}_{spec['generator']}_{i:05d}.json",
                       {"instance": i, "model": spec["model"], **e.to_json()})


def _experiment(cfg: RunConfig, key: str) -> dict:
    ex = cfg.get("experiments")
    if key not in ex:
        raise ConfigInvalid([f"experiments/{key}: section required for this command"])
    return ex[key]


def _write_reports(run: Run, name: str, reports) -> None:
    rows = report_rows(reports)
    run.write_with(f"reports/{name}.json", write_json, rows)
    run.write_with(f"reports/{name}.csv", write_report_csv, rows)


def cmd_attack_eval(run: Run, jobs: int) -> None:
    cfg = run.cfg
    spec = _experiment(cfg, "robustness")
    train, evaluation = _load_split(run)
    advs = _load_adversaries(run, train.schema)
    samplers = _load_generators(run, train)
    tag = cfg.get("dataset").get("tag", cfg.get("dataset").get("synth", "csv"))
    cells = [tuple(c) for c in spec["cells"]]
    for m, g, a in cells:
        if a not in advs:
            raise ConfigInvalid([f"experiments/robustness: unknown adversary {a!r}"])
    reports = run_robustness(cells, advs, samplers, train, _instances(evaluation, spec.get("instances")),
                             _sensitive(cfg, train.schema), _explainer_cfg(cfg), cfg.seed, tag,
                             cfg.get("unrelated"), jobs)
    _write_reports(run, "robustness", reports)


def cmd_mad(run: Run, jobs: int) -> None:
    cfg = run.cfg
    spec = _experiment(cfg, "mad")
    train, evaluation = _load_split(run)
    models = _load_models(run, train.schema)
    samplers = _load_generators(run, train)
    reports = run_mad(models, [tuple(p) for p in spec["pairs"]], samplers, train,
                      _instances(evaluation, spec.get("instances")), _explainer_cfg(cfg), cfg.seed, jobs)
    _write_reports(run, "mad", reports)


def cmd_threshold(run: Run, jobs: int) -> None:
    cfg = run.cfg
    spec = _experiment(cfg, "threshold")
    train, evaluation = _load_split(run)
    advs = _load_adversaries(run, train.schema)
    if spec.get("adversaries"):
        advs = {k: advs[k] for k in spec["adversaries"]}
    samplers = _load_generators(run, train)
    reports = run_threshold_sweep(advs, spec["ts"], [tuple(p) for p in spec["explainers"]], samplers, train,
                                  _instances(evaluation, spec.get("instances")), _sensitive(cfg, train.schema),
                                  _explainer_cfg(cfg), cfg.seed, jobs)
    _write_reports(run, "threshold", reports)


def cmd_convergence(run: Run, jobs: int) -> None:
    cfg = run.cfg
    spec = _experiment(cfg, "convergence")
    train, evaluation = _load_split(run)
    # the protocol explains the classifiers on the original features only
    keep = [j for j, f in enumerate(train.schema.inputs) if f.role != "unrelated"]
    if len(keep) < len(train.schema.inputs):
        raise ConfigInvalid(["experiments/convergence: run with 'unrelated': 0"])
    models = _load_models(run, train.schema)
    acc = run.read_json("models/index.json", "train")["accuracy"]
    samplers = _load_generators(run, train)
    fill = samplers[spec.get("fill_in", "treeEnsFillIn")]
    reports = run_convergence({k: (m, acc[k]) for k, m in models.items()}, train,
                              _instances(evaluation, spec.get("instances", 20)), fill,
                              spec.get("tolerance", 1e-2), _explainer_cfg(cfg), spec.get("gold", "exact"),
                              cfg.seed, jobs)
    _write_reports(run, "convergence", reports)


def cmd_dist_check(run: Run) -> None:
    cfg = run.cfg
    spec = _experiment(cfg, "dist_check")
    train, evaluation = _load_split(run)
    samplers = _load_generators(run, train)
    gens = {}
    for name in spec.get("generators", ["gaussian", "treeEns"]):
        s = samplers.get(name)
        if isinstance(s, str):
            s = fit_generator(name, train, None, cell_seed(cfg.seed, "generator", name))
            if name == "perturbation":
                s.mode = "whole"
        gens[name] = s
    reports = run_distribution_check(train, evaluation, gens, cfg.seed)
    _write_reports(run, "dist_check", reports)
    for r in reports:
        run.write_with(f"projections/{r.generator}.csv", write_projection, r)


# --------------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="robust-xai", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (
        ("prepare", "load or synthesize the dataset and split it"),
        ("train", "fit classifiers, generators and adversarial models"),
        ("explain", "explain a range of evaluation instances"),
        ("attack-eval", "sensitive-feature-top fractions over the robustness grid"),
        ("mad", "mean absolute difference between original and generator-backed explanations"),
        ("threshold", "sweep the decision threshold of the adversarial models"),
        ("convergence", "IME sample counts with perturbation vs fill-in sampling"),
        ("dist-check", "real-vs-generated discriminator accuracy and PCA projection"),
    ):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", required=True, help="run config (JSON)")
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--out", help=f"output root (default ${ENV_OUT} or ./out)")
        sp.add_argument("--jobs", type=int, default=1, help="worker processes for experiment grids")
        if name == "explain":
            sp.add_argument("--range", help="instance range START:STOP (overrides the config)")
    return p


def _span(text: str | None):
    if text is None:
        return None
    try:
        a, b = (int(v) for v in text.split(":"))
    except ValueError:
        raise ConfigInvalid([f"--range: expected START:STOP, got {text!r}"]) from None
    return a, b


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    run = None
    try:
        cfg = load_config(args.config, args.seed)
        out = Path(args.out or os.environ.get(ENV_OUT) or "out")
        run = Run(cfg, out)
        run.root.mkdir(parents=True, exist_ok=True)
        cmd = args.command
        if cmd == "prepare":
            cmd_prepare(run)
        elif cmd == "train":
            cmd_train(run)
        elif cmd == "explain":
            cmd_explain(run, _span(args.range))
        elif cmd == "attack-eval":
            cmd_attack_eval(run, args.jobs)
        elif cmd == "mad":
            cmd_mad(run, args.jobs)
        elif cmd == "threshold":
            cmd_threshold(run, args.jobs)
        elif cmd == "convergence":
            cmd_convergence(run, args.jobs)
        elif cmd == "dist-check":
            cmd_dist_check(run)
        run.commit()
    except ConfigInvalid as exc:
        if run:
            run.rollback()
        print(json.dumps({"error": "ConfigInvalid", "problems": exc.problems}), file=sys.stderr)
        return EXIT_CONFIG
    except MissingArtifact as exc:
        if run:
            run.rollback()
        print(json.dumps({"error": "MissingArtifact", "artifact": exc.path.name, "run_first": exc.command}),
              file=sys.stderr)
        return EXIT_MISSING
    except Exception as exc:  # noqa: BLE001 - every failure must map to a nonzero exit
        if run:
            run.rollback()
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return EXIT_ERROR
    print(str(run.root))
    return 0


if __name__ == "__main__":
    sys.exit(main())
