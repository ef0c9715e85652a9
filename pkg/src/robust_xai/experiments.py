"""Evaluation protocols producing machine-readable reports.

Every grid cell gets its own seed derived by hashing the global seed with
the cell coordinates, so results do not depend on execution order or on the
number of worker processes.
"""

from __future__ import annotations

import csv
import hashlib
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from . import SCHEMA_VERSION
from .attack import AdversarialModel
from .data import Dataset
from .explainers import (
    ExplainerConfig, ExplainerError, Explanation, exact_shapley, explain_ime, explain_lime,
    explain_shap, most_important_feature, value_function,
)
from .generators import AROUND, WHOLE, Generator, as_rng
from .models import fit_classifier_arrays

METHODS = ("lime", "shap", "ime", "exact")


def cell_seed(seed: int, *coords) -> int:
    """Stable 31-bit seed from the global seed and cell coordinates."""
    key = json.dumps([int(seed), *[str(c) for c in coords]]).encode()
    return int.from_bytes(hashlib.sha256(key).digest()[:4], "big") & 0x7FFFFFFF


def _map(fn: Callable, tasks: Sequence, jobs: int = 1) -> list:
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, tasks))


def _fraction(num: int, den: int) -> float | None:
    return num / den if den else None


def explain(method: str, f, x: np.ndarray, train: Dataset, sampler: Generator | str | None,
            cfg: ExplainerConfig, seed: int) -> Explanation:
    """Dispatch one explanation; ``sampler`` is a fitted generator or a sampler name."""
    names = [f_.name for f_ in train.schema.inputs]
    if method == "lime":
        return explain_lime(f, x, train, sampler, cfg, seed)
    if method == "shap":
        if sampler is None or isinstance(sampler, str):
            raise ValueError("SHAP needs a fitted generator for its distribution set")
        dist = sampler.distribution_set(cfg.distribution_set_size, seed, x=x)
        return explain_shap(f, x, dist, names, cfg, seed)
    if method == "ime":
        return explain_ime(f, x, train, sampler, cfg, seed)
    if method == "exact":
        return exact_shapley(f, x, train.X, names)
    raise ValueError(f"unknown explanation method {method!r}; choose from {METHODS}")


# ----------------------------------------------------------------- robustness

@dataclass
class RobustnessCell:
    method: str
    generator: str
    adversary: str
    dataset: str
    unrelated: int
    numerator: int
    denominator: int
    failures: int
    fraction_top: float | None


@dataclass
class _Job:
    coords: tuple
    model: Any
    method: str
    sampler: Any
    train: Dataset
    instances: np.ndarray
    sensitive: str
    cfg: ExplainerConfig
    seed: int


def _top_counts(job: _Job) -> tuple[int, int, int, list[bool]]:
    f = value_function(job.model, job.train.schema)
    hits, failures = [], 0
    for i, x in enumerate(job.instances):
        try:
            e = explain(job.method, f, x, job.train, job.sampler, job.cfg, cell_seed(job.seed, i))
        except ExplainerError:
            failures += 1
            hits.append(None)
            continue
        hits.append(most_important_feature(e) == job.sensitive)
    ok = [h for h in hits if h is not None]
    return sum(ok), len(ok), failures, hits


def run_robustness(cells: Sequence[tuple[str, str, str]], adversaries: dict[str, Any],
                   samplers: dict[str, Any], train: Dataset, evaluation: Dataset, sensitive: str,
                   cfg: ExplainerConfig | None = None, seed: int = 0, dataset: str = "",
                   unrelated: int = 1, jobs: int = 1) -> list[RobustnessCell]:
    """Fraction of evaluation instances whose top feature is ``sensitive``.

    ``cells`` holds (method, explainer sampler name, adversary name) triples;
    ``adversaries`` maps names to models and ``samplers`` maps names to
    fitted generators (or the strings ``"gaussian"``/``"perturbation"``).
    """
    cfg = cfg or ExplainerConfig()
    jobs_ = [
        _Job((m, g, a), adversaries[a], m, samplers.get(g, g), train, evaluation.X, sensitive, cfg,
             cell_seed(seed, "robustness", dataset, unrelated, m, g, a))
        for m, g, a in cells
    ]
    out = []
    for job, (num, den, fail, _) in zip(jobs_, _map(_top_counts, jobs_, jobs)):
        m, g, a = job.coords
        out.append(RobustnessCell(m, g, a, dataset, unrelated, num, den, fail, _fraction(num, den)))
    return out


# ------------------------------------------------------------------------ MAD

@dataclass
class MadReport:
    classifier: str
    method: str
    original: str
    generator: str
    values: list[float]
    mean: float
    variance: float


def mad(a: Explanation, b: Explanation) -> float:
    """Mean absolute difference of contributions over the original features."""
    return float(np.mean([abs(a.contributions[k] - b.contributions[k]) for k in a.contributions]))


def _mad_job(args) -> MadReport:
    name, model, method, orig, gen, s_orig, s_gen, train, instances, cfg, seed = args
    f = value_function(model, train.schema)
    vals = []
    for i, x in enumerate(instances):
        s = cell_seed(seed, i)  # identical stream for both explanations
        vals.append(mad(explain(method, f, x, train, s_orig, cfg, s), explain(method, f, x, train, s_gen, cfg, s)))
    arr = np.asarray(vals)
    return MadReport(name, method, orig, gen, vals, float(arr.mean()), float(arr.var()))


def run_mad(models: dict[str, Any], pairs: Sequence[tuple[str, str, str]], samplers: dict[str, Any],
            train: Dataset, evaluation: Dataset, cfg: ExplainerConfig | None = None, seed: int = 0,
            jobs: int = 1) -> list[MadReport]:
    """MAD between original and generator-backed explanations.

    ``pairs`` holds (method, original sampler name, generator name).
    """
    cfg = cfg or ExplainerConfig()
    tasks = [
        (name, model, m, o, g, samplers.get(o, o), samplers.get(g, g), train, evaluation.X, cfg,
         cell_seed(seed, "mad", name, m))
        for name, model in models.items() for m, o, g in pairs
    ]
    return _map(_mad_job, tasks, jobs)


# ------------------------------------------------------------------ threshold

@dataclass
class ThresholdReport:
    adversary: str
    method: str
    generator: str
    t: float
    deployed: int
    total: int
    deployment_fraction: float
    top_on_biased: int
    fraction_top_on_biased: float | None  # None when the biased branch never fired
    top_overall: int
    evaluated: int
    fraction_top_overall: float | None


def run_threshold_sweep(bundles: dict[str, AdversarialModel], ts: Sequence[float],
                        explainers: Sequence[tuple[str, str]], samplers: dict[str, Any], train: Dataset,
                        evaluation: Dataset, sensitive: str, cfg: ExplainerConfig | None = None,
                        seed: int = 0, jobs: int = 1) -> list[ThresholdReport]:
    for t in ts:
        if not 0 < t < 1:
            raise ValueError(f"threshold {t} outside (0, 1)")
    cfg = cfg or ExplainerConfig()
    E = train.schema.encode(evaluation.X)
    jobs_, meta = [], []
    for name, bundle in bundles.items():
        for t in ts:
            model = bundle.with_threshold(t)
            for m, g in explainers:
                jobs_.append(_Job((name, m, g, t), model, m, samplers.get(g, g), train, evaluation.X, sensitive,
                                  cfg, cell_seed(seed, "threshold", name, m, g, t)))
                meta.append(model.branch(E))
    out = []
    for job, branch, (num, den, _, hits) in zip(jobs_, meta, _map(_top_counts, jobs_, jobs)):
        name, m, g, t = job.coords
        on_biased = [h for h, b in zip(hits, branch) if b and h is not None]
        out.append(ThresholdReport(
            name, m, g, float(t), int(branch.sum()), len(branch), float(branch.mean()),
            int(sum(on_biased)), _fraction(int(sum(on_biased)), len(on_biased)), num, den, _fraction(num, den),
        ))
    return out


# ---------------------------------------------------------------- convergence

@dataclass
class ConvergenceReport:
    classifier: str
    sampler: str
    mean_error: float
    mean_samples: float
    reduction: float  # 1 - samples(fill-in) / samples(perturbation)
    accuracy: float
    budget_exhausted: int
    instances: int


def _convergence_job(args):
    name, model, acc, train, instances, fill_in, cfg, gold, seed = args
    f = value_function(model, train.schema)
    names = [f_.name for f_ in train.schema.inputs]
    refs = []
    for i, x in enumerate(instances):
        if gold == "exact":
            refs.append(exact_shapley(f, x, train.X, names).values)
        else:
            strict = ExplainerConfig(**{**cfg.to_json(), "ime_tolerance": cfg.ime_tolerance / 10,
                                        "ime_budget": 10 * (cfg.ime_budget or 50 * len(x) * cfg.ime_min_samples)})
            refs.append(explain_ime(f, x, train, None, strict, cell_seed(seed, "gold", i)).values)
    rows = {}
    for label, sampler in (("perturbation", None), (fill_in.name, fill_in)):
        errs, used, exhausted = [], [], 0
        for i, (x, ref) in enumerate(zip(instances, refs)):
            e = explain_ime(f, x, train, sampler, cfg, cell_seed(seed, label, i))
            errs.append(float(np.mean(np.abs(e.values - ref))))
            used.append(sum(e.samples_used.values()))
            exhausted += bool(e.flags.get("budget_exhausted"))
        rows[label] = (float(np.mean(errs)), float(np.mean(used)), exhausted)
    s_p = rows["perturbation"][1]
    s_t = rows[fill_in.name][1]
    red = 1 - s_t / s_p if s_p else 0.0
    return [ConvergenceReport(name, lab, err, s, red, acc, ex, len(instances)) for lab, (err, s, ex) in rows.items()]


def run_convergence(models: dict[str, tuple[Any, float]], train: Dataset, evaluation: Dataset,
                    fill_in: Generator, tolerance: float = 1e-2, cfg: ExplainerConfig | None = None,
                    gold: str = "exact", seed: int = 0, jobs: int = 1) -> list[ConvergenceReport]:
    """IME with perturbation vs a fill-in generator at equal tolerance.

    ``models`` maps classifier names to (model, accuracy).  ``gold`` is
    ``"exact"`` (exact Shapley over the training rows, n <= 10) or ``"ime"``
    (perturbation IME at a tenth of the tolerance).
    """
    cfg = ExplainerConfig(**{**(cfg or ExplainerConfig()).to_json(), "ime_tolerance": tolerance})
    tasks = [(name, model, acc, train, evaluation.X, fill_in, cfg, gold, cell_seed(seed, "convergence", name))
             for name, (model, acc) in models.items()]
    return [r for rows in _map(_convergence_job, tasks, jobs) for r in rows]


# ---------------------------------------------------------- distribution check

@dataclass
class DistributionReport:
    generator: str
    accuracy: float
    correct: int
    tested: int
    explained_variance: list[float]
    projection: np.ndarray = field(repr=False)  # (x, y, is_generated)


def generated_like(gen: Generator, real: np.ndarray, seed) -> np.ndarray:
    """As many generated rows as ``real``: one per real row in around mode."""
    rng = as_rng(seed)
    if gen.mode == AROUND or WHOLE not in gen.capabilities:
        return np.vstack([gen.generate_around(x, 1, rng) for x in real])
    return gen.generate(len(real), rng)


def pca_basis(Z: np.ndarray, k: int = 2):
    mean = Z.mean(axis=0)
    _, s, vt = np.linalg.svd(Z - mean, full_matrices=False)
    var = s ** 2 / max(len(Z) - 1, 1)
    return mean, vt[:k], (var[:k] / var.sum()).tolist()


def _grouped_halves(pool: np.ndarray, rng: np.random.Generator):
    """Random half split that keeps identical rows on the same side.

    Otherwise a discriminator can memorize rows that a resampler repeats.
    """
    _, group = np.unique(pool, axis=0, return_inverse=True)
    group = group.ravel()
    order = rng.permutation(group.max() + 1)
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    idx = np.argsort(rank[group], kind="stable")
    half = len(pool) // 2
    return np.sort(idx[:half]), np.sort(idx[half:])


def run_distribution_check(train: Dataset, real: Dataset, generators: dict[str, Generator], seed: int = 0,
                           dmodel: str = "random_forest") -> list[DistributionReport]:
    """Held-out real-vs-generated discriminator accuracy and a 2-d projection.

    Generators are fitted on ``train``; the real side is ``real`` (disjoint
    from ``train``), so a resampler of training rows is indistinguishable.
    """
    schema = train.schema
    norm = train.normalization
    Zr = norm.normalize(real.X)
    mean, basis, ev = pca_basis(Zr)
    out = []
    for name, gen in generators.items():
        rng = as_rng(cell_seed(seed, "dist", name))
        fake = generated_like(gen, real.X, rng)
        pool = np.vstack([real.X, fake])
        labels = np.concatenate([np.zeros(len(real)), np.ones(len(fake))])
        tr, te = _grouped_halves(pool, rng)
        clf = fit_classifier_arrays(dmodel, schema.encode(pool[tr]), labels[tr], None, int(rng.integers(2**31 - 1)))
        correct = int(np.sum(clf.predict(schema.encode(pool[te])) == labels[te]))
        proj = (norm.normalize(pool) - mean) @ basis.T
        out.append(DistributionReport(name, correct / len(te), correct, len(te), ev,
                                      np.column_stack([proj, labels])))
    return out


# -------------------------------------------------------------------- writers

def _clean(v):
    if isinstance(v, dict):
        return {k: _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, np.ndarray):
        return _clean(v.tolist())
    if isinstance(v, np.generic):
        return v.item()
    return v


def report_rows(reports: Sequence) -> list[dict]:
    rows = []
    for r in reports:
        d = asdict(r)
        d.pop("projection", None)
        rows.append(_clean(d))
    return rows


def write_json(obj: Any, path: str | Path) -> None:
    doc = {"schema_version": SCHEMA_VERSION, "data": _clean(obj)}
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def write_csv(rows: Sequence[dict], path: str | Path) -> None:
    """Flat CSV; list-valued fields are joined with ``;``."""
    rows = list(rows)
    cols = ["schema_version"] + (list(rows[0]) if rows else [])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            vals = [SCHEMA_VERSION]
            for c in cols[1:]:
                v = r[c]
                if isinstance(v, list):
                    v = ";".join(repr(float(x)) for x in v)
                elif isinstance(v, float):
                    v = repr(v)
                elif v is None:
                    v = ""
                vals.append(v)
            w.writerow(vals)


def write_projection(report: DistributionReport, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["schema_version", "x", "y", "label"])
        for x, y, g in report.projection:
            w.writerow([SCHEMA_VERSION, repr(float(x)), repr(float(y)), "generated" if g else "real"])
