"""Fit-on-train encoding, imputation, and scaling into a numeric matrix.

Encoding rules:
  boolean            -> one 0/1 column, missing imputed with the mode
  categorical        -> one-hot block over the fit-time vocabulary
  multi_categorical  -> one 0/1 column per category, several 1s allowed
  ordinal            -> level index 0..k-1, then standard-scaled
  interval/continuous-> standard-scaled
  date               -> signed day-count from the record's fracture date
                        (imputed with the mean day-count, not scaled)

All statistics (means, population standard deviations, modes) come from
observed training values only; imputation happens on the raw scale before
scaling, so mean-imputed values land exactly at z = 0.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .cohort import Dataset, FeatureSchema, FeatureSpec, schema_from_json, schema_to_json
from .errors import (
    AllMissingColumnError,
    SchemaMismatchError,
    SingleClassError,
    TypeMismatchError,
)

_SCALED_KINDS = ("ordinal", "interval", "continuous")


@dataclass(frozen=True)
class ColumnPlan:
    """Fitted encoding plan for one raw feature."""

    feature: str
    kind: str
    columns: tuple
    mean: Optional[float] = None   # scaling mu, or imputation mean for dates
    sd: Optional[float] = None     # population sigma; 0.0 flags a constant column
    impute: object = None          # raw-domain value used for missing cells


@dataclass(frozen=True)
class FittedTransformer:
    schema: FeatureSchema
    plans: tuple
    column_names: tuple
    version: str = "nonunion-transformer/1"

    @property
    def constant_columns(self):
        return tuple(p.feature for p in self.plans if p.sd == 0.0)


@dataclass
class DesignMatrix:
    values: np.ndarray
    labels: np.ndarray
    column_names: tuple
    sample_weights: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.sample_weights = np.asarray(self.sample_weights, dtype=np.float64)


def _day_count(record, spec_name, fracture_name):
    """Signed days from the record's fracture date; None when either is missing."""
    value = record[spec_name]
    anchor = record[fracture_name]
    if value is None or anchor is None:
        return None
    return float((value - anchor).days)


def _mode(values, order):
    """Most frequent value; ties broken by position in `order`."""
    counts = {}
    for v in values:
        counts[v] = counts.get(v, 0) + 1
    best = max(counts.values())
    for candidate in order:
        if counts.get(candidate, 0) == best:
            return candidate
    raise AssertionError("mode candidates exhausted")


def _mode_set(values, vocabulary):
    """Most frequent frozenset; ties prefer earlier-vocabulary membership."""
    counts = {}
    for v in values:
        counts[v] = counts.get(v, 0) + 1
    best = max(counts.values())
    tied = [s for s, c in counts.items() if c == best]
    return max(tied, key=lambda s: tuple(1 if c in s else 0 for c in vocabulary))


def fit_transformer(train: Dataset) -> FittedTransformer:
    """Learn the encoding plan from training data only."""
    if len(train) == 0:
        raise SchemaMismatchError("cannot fit on an empty dataset")
    schema = train.schema
    plans = []
    column_names = []
    for spec in schema.features:
        if spec.name in (schema.outcome_name, schema.fracture_date_name):
            continue
        plan = _fit_feature(spec, train)
        plans.append(plan)
        column_names.extend(plan.columns)
    return FittedTransformer(schema, tuple(plans), tuple(column_names))


def _fit_feature(spec: FeatureSpec, train: Dataset) -> ColumnPlan:
    schema = train.schema
    if spec.kind == "date":
        observed = [d for r in train.records
                    if (d := _day_count(r, spec.name, schema.fracture_date_name)) is not None]
    else:
        observed = [r[spec.name] for r in train.records if r[spec.name] is not None]
    if not observed:
        raise AllMissingColumnError(spec.name)

    if spec.kind == "boolean":
        return ColumnPlan(spec.name, spec.kind, (spec.name,), impute=_mode(observed, (False, True)))
    if spec.kind == "categorical":
        columns = tuple(f"{spec.name}={c}" for c in spec.categories)
        return ColumnPlan(spec.name, spec.kind, columns, impute=_mode(observed, spec.categories))
    if spec.kind == "multi_categorical":
        columns = tuple(f"{spec.name}={c}" for c in spec.categories)
        return ColumnPlan(spec.name, spec.kind, columns, impute=_mode_set(observed, spec.categories))
    if spec.kind == "ordinal":
        values = np.array([spec.levels.index(v) for v in observed], dtype=np.float64)
    elif spec.kind == "date":
        values = np.array(observed, dtype=np.float64)
    else:
        values = np.array(observed, dtype=np.float64)
    mean = float(values.mean())
    if spec.kind == "date":
        return ColumnPlan(spec.name, spec.kind, (spec.name,), mean=mean, impute=mean)
    sd = float(values.std())  # population sigma, divisor n
    return ColumnPlan(spec.name, spec.kind, (spec.name,), mean=mean, sd=sd, impute=mean)


def transform(transformer: FittedTransformer, data: Dataset) -> DesignMatrix:
    """Encode `data` into a fully numeric matrix using fit-time statistics only."""
    schema = transformer.schema
    if data.schema.names != schema.names:
        raise SchemaMismatchError("dataset schema does not match the fitted schema")
    n = len(data)
    width = len(transformer.column_names)
    values = np.zeros((n, width), dtype=np.float64)
    unseen = 0
    col = 0
    for plan in transformer.plans:
        block = len(plan.columns)
        if plan.kind == "boolean":
            for i, record in enumerate(data.records):
                v = record[plan.feature]
                if v is None:
                    v = plan.impute
                values[i, col] = 1.0 if v else 0.0
        elif plan.kind == "categorical":
            index = {c: j for j, c in enumerate(schema[plan.feature].categories)}
            for i, record in enumerate(data.records):
                v = record[plan.feature]
                if v is None:
                    v = plan.impute
                j = index.get(v)
                if j is None:
                    unseen += 1  # outside the frozen vocabulary: all-zero block
                else:
                    values[i, col + j] = 1.0
        elif plan.kind == "multi_categorical":
            index = {c: j for j, c in enumerate(schema[plan.feature].categories)}
            for i, record in enumerate(data.records):
                v = record[plan.feature]
                if v is None:
                    v = plan.impute
                for c in v:
                    j = index.get(c)
                    if j is None:
                        unseen += 1
                    else:
                        values[i, col + j] = 1.0
        elif plan.kind == "date":
            for i, record in enumerate(data.records):
                d = _day_count(record, plan.feature, schema.fracture_date_name)
                values[i, col] = plan.impute if d is None else d
        else:
            levels = schema[plan.feature].levels if plan.kind == "ordinal" else None
            raw = np.empty(n, dtype=np.float64)
            for i, record in enumerate(data.records):
                v = record[plan.feature]
                if v is None:
                    raw[i] = plan.impute
                elif levels is not None:
                    raw[i] = levels.index(v)
                else:
                    raw[i] = float(v)
            values[:, col] = 0.0 if plan.sd == 0.0 else (raw - plan.mean) / plan.sd
        col += block
    if unseen:
        warnings.warn(f"{unseen} cell(s) held categories outside the fitted vocabulary", stacklevel=2)
    if not np.isfinite(values).all():
        raise TypeMismatchError(-1, "<matrix>", "non-finite value after transform")
    return DesignMatrix(values, data.outcomes.copy(), transformer.column_names, np.ones(n))


def compute_class_weights(labels) -> np.ndarray:
    """Per-sample weights: negatives 1.0, positives #negatives/#positives."""
    labels = np.asarray(labels, dtype=np.int64)
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise SingleClassError("class weighting needs both classes present")
    weights = np.ones(labels.shape[0], dtype=np.float64)
    weights[labels == 1] = n_neg / n_pos
    return weights


def with_class_weights(matrix: DesignMatrix) -> DesignMatrix:
    return replace(matrix, sample_weights=compute_class_weights(matrix.labels))


# ---------------------------------------------------------------------------
# serialization

def _impute_to_json(plan: ColumnPlan):
    if plan.kind == "multi_categorical":
        return sorted(plan.impute)
    return plan.impute


def transformer_to_json(transformer: FittedTransformer) -> dict:
    return {
        "format": transformer.version,
        "schema": schema_to_json(transformer.schema),
        "plans": [
            {
                "feature": p.feature,
                "kind": p.kind,
                "columns": list(p.columns),
                "mean": p.mean,
                "sd": p.sd,
                "impute": _impute_to_json(p),
            }
            for p in transformer.plans
        ],
        "columns": list(transformer.column_names),
    }


def transformer_from_json(doc) -> FittedTransformer:
    if doc.get("format") != "nonunion-transformer/1":
        raise SchemaMismatchError(f"unsupported transformer format {doc.get('format')!r}")
    schema = schema_from_json(doc["schema"])
    plans = []
    for entry in doc["plans"]:
        impute = entry["impute"]
        if entry["kind"] == "multi_categorical":
            impute = frozenset(impute)
        plans.append(ColumnPlan(
            feature=entry["feature"],
            kind=entry["kind"],
            columns=tuple(entry["columns"]),
            mean=entry["mean"],
            sd=entry["sd"],
            impute=impute,
        ))
    return FittedTransformer(schema, tuple(plans), tuple(doc["columns"]))


def save_transformer(transformer: FittedTransformer, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(transformer_to_json(transformer), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_transformer(path) -> FittedTransformer:
    with open(path, encoding="utf-8") as fh:
        return transformer_from_json(json.load(fh))
