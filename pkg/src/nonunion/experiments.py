"""End-to-end studies: full pipeline, resampled comparison, learning curve.

Pipeline flow: outer 80/20 split; the training side is split again 80/20
into a fit set and an intermediate holdout.  Preprocessing and all three
models are fitted on the fit set only, decision thresholds are chosen on
the intermediate holdout, and final metrics come from the untouched test
set.  Every artifact (data, transformer, models, plot data, report) is
persisted under one output directory, and everything is reproducible from
the resolved config.
"""

from __future__ import annotations

import csv
import datetime
import hashlib
import json
import math
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import calibration as cal
from .cohort import (
    Dataset,
    SyntheticConfig,
    generate_synthetic_cohort,
    load_dataset,
    load_schema,
    save_schema,
    split_dataset,
    write_dataset,
)
from .compare import (
    CLASS_WEIGHTED_BY_KIND,
    MODEL_KINDS,
    ResamplePlan,
    bonferroni,
    ecdf,
    fit_model_kind,
    make_resamples,
    mix_seed,
    paired_scores,
    predict_model_kind,
    wilcoxon_signed_rank,
)
from .errors import InvalidConfigError, NonunionError, SingleClassError
from .gbt import GbtConfig, gbt_model_from_json, gbt_model_to_json, train_gbt
from .logistic import LogisticConfig, linear_model_from_json, linear_model_to_json
from .metrics import (
    companion_metrics,
    confusion,
    min_threshold_for_sensitivity,
    min_threshold_for_specificity,
    sweep_thresholds,
    upm,
)
from .preprocess import (
    fit_transformer,
    transform,
    transformer_from_json,
    transformer_to_json,
    with_class_weights,
)
from .svm import SvmConfig, svm_model_from_json, svm_model_to_json

__version__ = "0.1.0"


# ---------------------------------------------------------------------------
# configuration

@dataclass(frozen=True)
class SourceConfig:
    """Where the cohort comes from: a synthetic draw or CSV files."""

    type: str = "synthetic"
    n: int = 797
    seed: int = 7
    target_incidence: float = 0.3877
    missing_rate: float = 0.166
    data_csv: Optional[str] = None
    schema_json: Optional[str] = None


@dataclass(frozen=True)
class ThresholdPolicy:
    mode: str = "fixed"  # fixed | sensitivity_floor | specificity_floor
    value: float = 0.5


@dataclass(frozen=True)
class AblationPlan:
    fractions: tuple = tuple(round(0.1 * k, 1) for k in range(1, 11))
    repeats: int = 25
    threshold: float = 0.26


@dataclass(frozen=True)
class ExperimentConfig:
    source: SourceConfig = SourceConfig()
    split_seed: int = 7
    test_fraction: float = 0.2
    intermediate_fraction: float = 0.2
    logistic: LogisticConfig = LogisticConfig()
    svm: SvmConfig = SvmConfig()
    gbt: GbtConfig = GbtConfig()
    threshold_policy: ThresholdPolicy = ThresholdPolicy()
    comparison_threshold: float = 0.5
    resample: ResamplePlan = ResamplePlan(master_seed=7)
    ablation: AblationPlan = AblationPlan()
    output_dir: str = "out"


def default_config(output_dir: str = "out", seed: int = 7) -> ExperimentConfig:
    return ExperimentConfig(
        source=SourceConfig(seed=seed),
        split_seed=seed,
        resample=ResamplePlan(master_seed=seed),
        output_dir=output_dir,
    )


def config_to_json(config: ExperimentConfig) -> dict:
    doc = {
        "source": asdict(config.source),
        "split_seed": config.split_seed,
        "test_fraction": config.test_fraction,
        "intermediate_fraction": config.intermediate_fraction,
        "models": {
            "logistic": asdict(config.logistic),
            "svm": asdict(config.svm),
            "gbt": asdict(config.gbt),
        },
        "threshold_policy": asdict(config.threshold_policy),
        "comparison_threshold": config.comparison_threshold,
        "resample": asdict(config.resample),
        "ablation": {
            "fractions": list(config.ablation.fractions),
            "repeats": config.ablation.repeats,
            "threshold": config.ablation.threshold,
        },
        "output_dir": config.output_dir,
    }
    return doc


def config_from_json(doc: dict) -> ExperimentConfig:
    try:
        models = doc.get("models", {})
        ablation = doc.get("ablation", {})
        return ExperimentConfig(
            source=SourceConfig(**doc.get("source", {})),
            split_seed=int(doc["split_seed"]) if "split_seed" in doc else 7,
            test_fraction=float(doc.get("test_fraction", 0.2)),
            intermediate_fraction=float(doc.get("intermediate_fraction", 0.2)),
            logistic=LogisticConfig(**models.get("logistic", {})),
            svm=SvmConfig(**models.get("svm", {})),
            gbt=GbtConfig(**models.get("gbt", {})),
            threshold_policy=ThresholdPolicy(**doc.get("threshold_policy", {})),
            comparison_threshold=float(doc.get("comparison_threshold", 0.5)),
            resample=ResamplePlan(**doc.get("resample", {})),
            ablation=AblationPlan(
                fractions=tuple(ablation.get("fractions", AblationPlan().fractions)),
                repeats=int(ablation.get("repeats", 25)),
                threshold=float(ablation.get("threshold", 0.26)),
            ),
            output_dir=doc.get("output_dir", "out"),
        )
    except TypeError as exc:
        raise InvalidConfigError(f"bad experiment config: {exc}") from None


def apply_overrides(doc: dict, overrides) -> dict:
    """Apply dotted-key overrides like resample.count=40 to a config document."""
    for item in overrides:
        if "=" not in item:
            raise InvalidConfigError(f"override {item!r} is not key=value")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = doc
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise InvalidConfigError(f"override {key!r} crosses a non-object")
        node[parts[-1]] = value
    return doc


def config_hash(config: ExperimentConfig) -> str:
    doc = config_to_json(config)
    doc.pop("output_dir")  # location is not part of the experiment identity
    canonical = json.dumps(doc, sort_keys=True)
    return hashlib.sha256(canonical.encode()).hexdigest()


# ---------------------------------------------------------------------------
# small I/O helpers

def jsonable(obj):
    if isinstance(obj, dict):
        return {k: jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        value = float(obj)
        return value if math.isfinite(value) else None
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def write_json(path, doc) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(jsonable(doc), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_csv(path, header, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _fmt(value) -> str:
    if value is None:
        return ""
    return repr(float(value))


# ---------------------------------------------------------------------------
# model artifacts (self-contained: transformer rides along)

_MODEL_CODECS = {
    "logistic": (linear_model_to_json, linear_model_from_json),
    "svm": (svm_model_to_json, svm_model_from_json),
    "gbt": (gbt_model_to_json, gbt_model_from_json),
}


def save_model_artifact(path, kind: str, model, transformer) -> None:
    encode, _ = _MODEL_CODECS[kind]
    write_json(path, {
        "format": "nonunion-model/1",
        "kind": kind,
        "model": encode(model),
        "transformer": transformer_to_json(transformer),
    })


def load_model_artifact(path):
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != "nonunion-model/1":
        raise InvalidConfigError(f"unsupported model artifact {doc.get('format')!r}")
    kind = doc["kind"]
    if kind not in _MODEL_CODECS:
        raise InvalidConfigError(f"unknown model kind {kind!r}")
    _, decode = _MODEL_CODECS[kind]
    return kind, decode(doc["model"]), transformer_from_json(doc["transformer"])


# ---------------------------------------------------------------------------
# pipeline stages

def load_source(config: ExperimentConfig) -> Dataset:
    src = config.source
    if src.type == "synthetic":
        synth = SyntheticConfig(target_incidence=src.target_incidence,
                                missing_rate=src.missing_rate)
        dataset, _ = generate_synthetic_cohort(src.n, src.seed, synth)
        return dataset
    if src.type == "csv":
        if not src.data_csv or not src.schema_json:
            raise InvalidConfigError("csv source needs data_csv and schema_json")
        return load_dataset(src.data_csv, load_schema(src.schema_json))
    raise InvalidConfigError(f"unknown source type {src.type!r}")


def choose_threshold(policy: ThresholdPolicy, y, p) -> float:
    if policy.mode == "fixed":
        return float(policy.value)
    if policy.mode == "sensitivity_floor":
        return min_threshold_for_sensitivity(y, p, policy.value)
    if policy.mode == "specificity_floor":
        return min_threshold_for_specificity(y, p, policy.value)
    raise InvalidConfigError(f"unknown threshold policy {policy.mode!r}")


def _majority_baseline_upm(train: Dataset, test: Dataset, threshold: float):
    majority = 1 if train.incidence > 0.5 else 0
    p = np.full(len(test), float(majority))
    return upm(confusion(test.outcomes, p, threshold))


def run_full_pipeline(config: ExperimentConfig, out: Optional[Path] = None) -> dict:
    """Split, fit, choose thresholds, report test metrics; persist artifacts."""
    out = Path(out if out is not None else config.output_dir)
    dataset = load_source(config)

    outer = split_dataset(dataset, config.test_fraction, config.split_seed)
    train = dataset.subset(outer.train)
    test = dataset.subset(outer.test)
    inner = split_dataset(train, config.intermediate_fraction, mix_seed(config.split_seed, 1))
    fit_set = train.subset(inner.train)
    intermediate = train.subset(inner.test)

    write_dataset(dataset, _ensure_dir(out / "data") / "cohort.csv")
    save_schema(dataset.schema, out / "data" / "schema.json")
    write_json(out / "data" / "split.json", {
        "outer": {"train": outer.train, "test": outer.test, "seed": outer.seed},
        "inner": {"fit": inner.train, "intermediate": inner.test, "seed": inner.seed},
    })

    transformer = fit_transformer(fit_set)
    write_json(out / "transformer.json", transformer_to_json(transformer))
    fit_matrix = transform(transformer, fit_set)
    intermediate_matrix = transform(transformer, intermediate)
    test_matrix = transform(transformer, test)

    model_configs = {"logistic": config.logistic, "svm": config.svm, "gbt": config.gbt}
    svm_seed = mix_seed(config.split_seed, 2)

    models = {}
    report_models = {}
    test_probabilities = {}
    for kind in MODEL_KINDS:
        matrix = with_class_weights(fit_matrix) if CLASS_WEIGHTED_BY_KIND[kind] else fit_matrix
        model = fit_model_kind(kind, matrix, model_configs[kind], seed=svm_seed)
        models[kind] = model
        save_model_artifact(out / "models" / f"{kind}.json", kind, model, transformer)

        p_int = predict_model_kind(kind, model, intermediate_matrix.values)
        threshold = choose_threshold(config.threshold_policy, intermediate.outcomes, p_int)
        p_test = predict_model_kind(kind, model, test_matrix.values)
        test_probabilities[kind] = p_test

        cm = confusion(test.outcomes, p_test, threshold)
        metrics = companion_metrics(cm)
        calibration = cal.calibration_report(test.outcomes, p_test)
        write_csv(
            out / "plots" / f"confusion_{kind}.csv",
            ("tp", "fp", "tn", "fn", "threshold"),
            [(cm.tp, cm.fp, cm.tn, cm.fn, _fmt(cm.threshold))],
        )
        write_csv(
            out / "plots" / f"upm_vs_threshold_{kind}.csv",
            ("threshold", "upm", "sensitivity", "specificity", "precision", "npv"),
            [
                (_fmt(t), _fmt(m.upm), _fmt(m.sensitivity), _fmt(m.specificity),
                 _fmt(m.precision), _fmt(m.npv))
                for t, m in sweep_thresholds(test.outcomes, p_test)
            ],
        )
        write_csv(
            out / "plots" / f"calibration_{kind}.csv",
            ("predicted", "outcome", "smoothed_raw", "smoothed_clamped"),
            [
                (_fmt(pp), _fmt(yy), _fmt(raw), _fmt(cl))
                for pp, yy, raw, cl in zip(
                    calibration.predicted, calibration.outcome,
                    calibration.smoothed_raw, calibration.smoothed_clamped,
                )
            ],
        )
        intermediate_metrics = companion_metrics(confusion(intermediate.outcomes, p_int, threshold))
        report_models[kind] = {
            "threshold": threshold,
            "test_metrics": metrics.to_dict(),
            "intermediate_metrics": intermediate_metrics.to_dict(),
            "calibration_odds_ratio": calibration.odds_ratio,
            "converged": bool(getattr(model, "converged", True)),
        }

    baseline = _majority_baseline_upm(train, test, config.threshold_policy.value
                                      if config.threshold_policy.mode == "fixed" else 0.5)
    return {
        "models": report_models,
        "baseline_majority_upm": baseline,
        "threshold_policy": asdict(config.threshold_policy),
        "split": {
            "n": len(dataset),
            "n_train": len(train),
            "n_test": len(test),
            "n_fit": len(fit_set),
            "n_intermediate": len(intermediate),
            "incidence": dataset.incidence,
        },
        "_objects": {
            "dataset": dataset,
            "train": train,
            "test": test,
            "models": models,
            "transformer": transformer,
            "test_probabilities": test_probabilities,
        },
    }


_COMPARISON_PAIRS = (("gbt", "logistic"), ("gbt", "svm"), ("svm", "logistic"))


def run_comparison(config: ExperimentConfig, train: Dataset, test: Dataset,
                   out: Optional[Path] = None) -> dict:
    """Resampled scores for all three kinds, pairwise tests, ECDF data."""
    out = Path(out if out is not None else config.output_dir)
    plan = config.resample
    resamples = make_resamples(train, plan)
    model_configs = {"logistic": config.logistic, "svm": config.svm, "gbt": config.gbt}
    scores = {}
    for kind in MODEL_KINDS:
        scores[kind] = paired_scores(
            resamples, train, test, kind,
            threshold=config.comparison_threshold,
            model_config=model_configs[kind],
            master_seed=plan.master_seed,
        )
        valid = scores[kind][np.isfinite(scores[kind])]
        if valid.size:
            write_csv(out / "plots" / f"ecdf_{kind}.csv",
                       ("upm", "cumulative_fraction"),
                       [(_fmt(v), _fmt(f)) for v, f in ecdf(valid)])

    tests = []
    for name_a, name_b in _COMPARISON_PAIRS:
        a, b = scores[name_a], scores[name_b]
        mask = np.isfinite(a) & np.isfinite(b)
        tests.append(wilcoxon_signed_rank(a[mask], b[mask], name_a, name_b))
    flags = bonferroni([t.p for t in tests])
    tests = [replace(t, significant=flag) for t, flag in zip(tests, flags)]

    return {
        "plan": asdict(plan),
        "threshold": config.comparison_threshold,
        "scores": {k: v for k, v in scores.items()},
        "tests": [t.to_dict() for t in tests],
        "bonferroni_k": len(tests),
    }


def run_ablation(config: ExperimentConfig, train: Dataset, test: Dataset,
                 out: Optional[Path] = None) -> dict:
    """Learning curve: bootstrap draws per training fraction, boosted model only."""
    out = Path(out if out is not None else config.output_dir)
    plan = config.ablation
    seed_root = mix_seed(config.split_seed, 3)
    n = len(train)
    rows = []
    skipped = []
    y_test = test.outcomes
    for fi, fraction in enumerate(plan.fractions):
        if not 0.0 < fraction <= 1.0:
            raise InvalidConfigError(f"ablation fraction {fraction} outside (0, 1]")
        size = math.ceil(fraction * n)
        if size < 10:
            skipped.append({"fraction": fraction, "reason": f"draw size {size} < 10"})
            continue
        for r in range(plan.repeats):
            rng = np.random.default_rng(mix_seed(seed_root, fi * plan.repeats + r))
            idx = rng.integers(0, n, size=size)
            sub = train.subset(idx)
            try:
                if sub.outcomes.min() == sub.outcomes.max():
                    raise SingleClassError("bootstrap draw lost a class")
                tf = fit_transformer(sub)
                model = train_gbt(with_class_weights(transform(tf, sub)), config.gbt)
                p = predict_model_kind("gbt", model, transform(tf, test).values)
                m = companion_metrics(confusion(y_test, p, plan.threshold))
                rows.append({
                    "fraction": fraction, "repeat": r,
                    "upm": m.upm, "sensitivity": m.sensitivity, "specificity": m.specificity,
                })
            except NonunionError as exc:
                skipped.append({"fraction": fraction, "repeat": r, "reason": str(exc)})

    write_csv(
        out / "plots" / "learning_curve.csv",
        ("fraction", "repeat", "upm", "sensitivity", "specificity"),
        [
            (_fmt(row["fraction"]), row["repeat"], _fmt(row["upm"]),
             _fmt(row["sensitivity"]), _fmt(row["specificity"]))
            for row in rows
        ],
    )

    means = {}
    for fraction in plan.fractions:
        got = [row for row in rows if row["fraction"] == fraction]
        if not got:
            continue
        means[str(fraction)] = {
            key: float(np.mean([row[key] for row in got if row[key] is not None]))
            for key in ("upm", "sensitivity", "specificity")
        }
    return {
        "threshold": plan.threshold,
        "repeats": plan.repeats,
        "rows": rows,
        "means": means,
        "skipped": skipped,
    }


def _ensure_dir(path: Path) -> Path:
    path.mkdir(parents=True, exist_ok=True)
    return path


def run_all(config: ExperimentConfig, out: Optional[Path] = None) -> dict:
    """Full study: pipeline + 300-resample comparison + learning curve."""
    out = Path(out if out is not None else config.output_dir)
    _ensure_dir(out)
    write_json(out / "config.json", config_to_json(config))

    pipeline = run_full_pipeline(config, out)
    objects = pipeline.pop("_objects")
    comparison = run_comparison(config, objects["train"], objects["test"], out)
    ablation = run_ablation(config, objects["train"], objects["test"], out)

    report = {
        "provenance": {
            "version": __version__,
            "config_hash": config_hash(config),
            "seeds": {
                "source": config.source.seed,
                "split": config.split_seed,
                "resample_master": config.resample.master_seed,
            },
            "generated_at": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        },
        "pipeline": pipeline,
        "comparison": comparison,
        "ablation": ablation,
    }
    write_json(out / "reports" / "report.json", report)
    return report


# ---------------------------------------------------------------------------
# scoring entry points used by the CLI

def evaluate_model_file(model_path, data_csv, threshold: float) -> dict:
    kind, model, transformer = load_model_artifact(model_path)
    dataset = load_dataset(data_csv, transformer.schema)
    matrix = transform(transformer, dataset)
    p = predict_model_kind(kind, model, matrix.values)
    cm = confusion(dataset.outcomes, p, threshold)
    report = companion_metrics(cm)
    return {
        "kind": kind,
        "threshold": threshold,
        "n": len(dataset),
        "confusion": {"tp": cm.tp, "fp": cm.fp, "tn": cm.tn, "fn": cm.fn},
        "metrics": report.to_dict(),
    }


def sweep_model_file(model_path, data_csv) -> list:
    kind, model, transformer = load_model_artifact(model_path)
    dataset = load_dataset(data_csv, transformer.schema)
    matrix = transform(transformer, dataset)
    p = predict_model_kind(kind, model, matrix.values)
    return [
        {"threshold": t, **m.to_dict()}
        for t, m in sweep_thresholds(dataset.outcomes, p)
    ]


def calibrate_model_file(model_path, data_csv) -> tuple:
    kind, model, transformer = load_model_artifact(model_path)
    dataset = load_dataset(data_csv, transformer.schema)
    matrix = transform(transformer, dataset)
    p = predict_model_kind(kind, model, matrix.values)
    report = cal.calibration_report(dataset.outcomes, p)
    return kind, report
