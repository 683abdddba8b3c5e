import datetime

import numpy as np
import pytest

from nonunion.cohort import Dataset, FeatureSchema, FeatureSpec


def tiny_schema() -> FeatureSchema:
    """Small hand-rolled schema covering every feature kind."""
    return FeatureSchema(
        features=(
            FeatureSpec("age", "continuous"),
            FeatureSpec("color", "categorical", categories=("red", "green", "blue")),
            FeatureSpec("tags", "multi_categorical",
                        categories=("diabetes", "lung_disease", "renal")),
            FeatureSpec("grade", "ordinal", levels=("low", "mid", "high")),
            FeatureSpec("count", "interval"),
            FeatureSpec("flag", "boolean"),
            FeatureSpec("fracture_date", "date"),
            FeatureSpec("revision_date", "date"),
            FeatureSpec("outcome", "boolean"),
        ),
        outcome_name="outcome",
        fracture_date_name="fracture_date",
    )


def tiny_record(**overrides):
    base = {
        "age": 1.0,
        "color": "red",
        "tags": frozenset({"diabetes"}),
        "grade": "low",
        "count": 0.0,
        "flag": False,
        "fracture_date": datetime.date(2009, 1, 1),
        "revision_date": datetime.date(2009, 3, 2),
        "outcome": False,
    }
    base.update(overrides)
    return base


def tiny_dataset(cells, outcomes=None) -> Dataset:
    """Build a dataset from a list of record-override dicts."""
    records = [tiny_record(**c) for c in cells]
    if outcomes is None:
        outcomes = [int(r["outcome"]) for r in records]
    else:
        for r, y in zip(records, outcomes):
            r["outcome"] = bool(y)
    return Dataset(tiny_schema(), records, np.asarray(outcomes, dtype=np.int64))


def label_dataset(labels) -> Dataset:
    """Dataset whose only meaningful content is the label vector."""
    labels = np.asarray(labels, dtype=np.int64)
    return tiny_dataset([{} for _ in labels], outcomes=labels)


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)
