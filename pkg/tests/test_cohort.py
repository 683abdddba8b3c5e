import datetime
import math

import numpy as np
import pytest

from nonunion.cohort import (
    SyntheticConfig,
    default_schema,
    generate_synthetic_cohort,
    load_dataset,
    load_schema,
    missing_fraction,
    save_schema,
    schema_from_json,
    schema_to_json,
    split_dataset,
    write_dataset,
)
from nonunion.errors import (
    DegenerateSplitError,
    InvalidConfigError,
    InvalidDateError,
    MissingColumnError,
    TypeMismatchError,
    UnknownCategoryError,
    UnknownColumnError,
)

from conftest import label_dataset, tiny_dataset, tiny_schema


def _write(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


HEADER = "age,color,tags,grade,count,flag,fracture_date,revision_date,outcome"


class TestLoadDataset:
    def test_identity_parse(self, tmp_path):
        csv = HEADER + "\n" + "\n".join([
            "1.5,red,diabetes,low,2,true,2009-01-01,2009-03-02,false",
            "2.0,green,diabetes;lung_disease,mid,0,false,2010-06-01,2011-01-01,true",
            "3.25,blue,renal,high,5,true,2012-02-29,2012-03-05,false",
        ])
        ds = load_dataset(_write(tmp_path, csv), tiny_schema())
        assert len(ds) == 3
        missing = sum(1 for r in ds.records for v in r.values() if v is None)
        assert missing == 0
        assert ds.records[0]["age"] == 1.5
        assert ds.records[1]["tags"] == frozenset({"diabetes", "lung_disease"})
        assert ds.records[2]["fracture_date"] == datetime.date(2012, 2, 29)
        assert ds.outcomes.tolist() == [0, 1, 0]

    def test_empty_cell_becomes_missing(self, tmp_path):
        csv = HEADER + "\n,red,diabetes,low,2,true,2009-01-01,2009-03-02,false"
        ds = load_dataset(_write(tmp_path, csv), tiny_schema())
        assert ds.records[0]["age"] is None

    def test_multi_select_cell(self, tmp_path):
        csv = HEADER + "\n1,red,diabetes;lung_disease,low,2,true,2009-01-01,2009-03-02,false"
        ds = load_dataset(_write(tmp_path, csv), tiny_schema())
        assert ds.records[0]["tags"] == frozenset({"diabetes", "lung_disease"})

    def test_bad_boolean_is_type_mismatch(self, tmp_path):
        csv = HEADER + "\n1,red,diabetes,low,2,maybe,2009-01-01,2009-03-02,false"
        with pytest.raises(TypeMismatchError) as err:
            load_dataset(_write(tmp_path, csv), tiny_schema())
        assert err.value.row == 0
        assert err.value.column == "flag"

    def test_unknown_column(self, tmp_path):
        csv = HEADER + ",extra\n1,red,diabetes,low,2,true,2009-01-01,2009-03-02,false,x"
        with pytest.raises(UnknownColumnError):
            load_dataset(_write(tmp_path, csv), tiny_schema())

    def test_missing_column(self, tmp_path):
        csv = "age\n1"
        with pytest.raises(MissingColumnError):
            load_dataset(_write(tmp_path, csv), tiny_schema())

    def test_unknown_category(self, tmp_path):
        csv = HEADER + "\n1,purple,diabetes,low,2,true,2009-01-01,2009-03-02,false"
        with pytest.raises(UnknownCategoryError):
            load_dataset(_write(tmp_path, csv), tiny_schema())

    def test_invalid_date(self, tmp_path):
        csv = HEADER + "\n1,red,diabetes,low,2,true,01/02/2009,2009-03-02,false"
        with pytest.raises(InvalidDateError):
            load_dataset(_write(tmp_path, csv), tiny_schema())

    def test_missing_outcome_rejected(self, tmp_path):
        csv = HEADER + "\n1,red,diabetes,low,2,true,2009-01-01,2009-03-02,"
        with pytest.raises(TypeMismatchError):
            load_dataset(_write(tmp_path, csv), tiny_schema())

    def test_header_order_insensitive(self, tmp_path):
        csv = "outcome,age,color,tags,grade,count,flag,fracture_date,revision_date\n" \
              "true,1,red,diabetes,low,2,true,2009-01-01,2009-03-02"
        ds = load_dataset(_write(tmp_path, csv), tiny_schema())
        assert ds.outcomes.tolist() == [1]


class TestRoundTrip:
    def test_write_then_load_reproduces_cells(self, tmp_path):
        ds, _ = generate_synthetic_cohort(40, 3, SyntheticConfig(missing_rate=0.25))
        path = tmp_path / "cohort.csv"
        write_dataset(ds, path)
        again = load_dataset(path, ds.schema)
        assert len(again) == len(ds)
        assert again.outcomes.tolist() == ds.outcomes.tolist()
        for a, b in zip(ds.records, again.records):
            assert a == b

    def test_second_round_trip_is_byte_identical(self, tmp_path):
        ds, _ = generate_synthetic_cohort(30, 11)
        p1 = tmp_path / "one.csv"
        p2 = tmp_path / "two.csv"
        write_dataset(ds, p1)
        write_dataset(load_dataset(p1, ds.schema), p2)
        assert p1.read_bytes() == p2.read_bytes()


class TestSchemaJson:
    def test_round_trip(self, tmp_path):
        schema = default_schema()
        path = tmp_path / "schema.json"
        save_schema(schema, path)
        assert load_schema(path) == schema
        assert schema_from_json(schema_to_json(schema)) == schema


class TestSplit:
    def test_exact_sizes_small(self):
        split = split_dataset(label_dataset([0, 1] * 5), 0.2, seed=1)
        assert len(split.test) == 2
        assert len(split.train) == 8

    def test_cohort_scale_sizes(self):
        labels = (np.arange(797) % 5 == 0).astype(int)
        split = split_dataset(label_dataset(labels), 0.2, seed=1)
        assert len(split.test) == math.ceil(0.2 * 797) == 160
        assert len(split.train) == 637

    def test_deterministic(self):
        ds = label_dataset([0, 1] * 20)
        a = split_dataset(ds, 0.2, seed=99)
        b = split_dataset(ds, 0.2, seed=99)
        assert a.train.tolist() == b.train.tolist()
        assert a.test.tolist() == b.test.tolist()

    def test_partition_property_many_cases(self):
        rng = np.random.default_rng(7)
        for _ in range(1000):
            n = int(rng.integers(2, 120))
            seed = int(rng.integers(0, 2**63 - 1))
            frac = float(rng.uniform(0.05, 0.8))
            ds = label_dataset(rng.integers(0, 2, n))
            try:
                split = split_dataset(ds, frac, seed, stratified=False)
            except DegenerateSplitError:
                continue
            merged = np.sort(np.concatenate([split.train, split.test]))
            assert merged.tolist() == list(range(n))
            assert len(split.test) == math.ceil(frac * n)

    def test_stratified_balance(self):
        rng = np.random.default_rng(13)
        for _ in range(300):
            n = int(rng.integers(10, 300))
            labels = rng.integers(0, 2, n)
            if labels.sum() in (0, n):
                continue
            ds = label_dataset(labels)
            try:
                split = split_dataset(ds, 0.2, int(rng.integers(0, 2**32)))
            except DegenerateSplitError:
                continue
            full_prop = labels.mean()
            test_prop = labels[split.test].mean()
            assert abs(test_prop - full_prop) <= 1.0 / len(split.test) + 1e-12

    def test_degenerate_cases(self):
        with pytest.raises(DegenerateSplitError):
            split_dataset(label_dataset([0] * 10), 0.2, 1)  # one class, stratified
        with pytest.raises(InvalidConfigError):
            split_dataset(label_dataset([0, 1]), 0.0, 1)
        with pytest.raises(DegenerateSplitError):
            split_dataset(label_dataset([0, 1, 0, 1]), 0.9, 1)  # empty train side


class TestSyntheticCohort:
    def test_incidence_near_target(self):
        ds, _ = generate_synthetic_cohort(797, 7)
        assert abs(ds.incidence - 0.3877) < 0.05

    def test_missingness_near_target(self):
        ds, _ = generate_synthetic_cohort(797, 7)
        assert abs(missing_fraction(ds) - 0.166) < 0.02

    def test_outcome_and_anchor_never_missing(self):
        ds, _ = generate_synthetic_cohort(200, 5, SyntheticConfig(missing_rate=0.5))
        for record in ds.records:
            assert record["failed_healing"] is not None
            assert record["fracture_date"] is not None

    def test_zero_missing_rate(self):
        ds, _ = generate_synthetic_cohort(50, 1, SyntheticConfig(missing_rate=0.0))
        assert missing_fraction(ds) == 0.0

    def test_outcomes_are_bernoulli_of_risk(self):
        _, risk = generate_synthetic_cohort(5000, 2, SyntheticConfig(missing_rate=0.0))
        assert risk.min() > 0.0 and risk.max() < 1.0
        assert abs(risk.mean() - 0.3877) < 0.01  # intercept calibration

    def test_deterministic(self):
        a, risk_a = generate_synthetic_cohort(60, 42)
        b, risk_b = generate_synthetic_cohort(60, 42)
        assert np.array_equal(risk_a, risk_b)
        assert a.outcomes.tolist() == b.outcomes.tolist()
        assert a.records == b.records

    def test_invalid_configs(self):
        with pytest.raises(InvalidConfigError):
            generate_synthetic_cohort(10, 1)
        with pytest.raises(InvalidConfigError):
            generate_synthetic_cohort(50, 1, SyntheticConfig(target_incidence=1.5))
        with pytest.raises(InvalidConfigError):
            generate_synthetic_cohort(50, 1, SyntheticConfig(missing_rate=1.0))

    def test_records_match_schema_kinds(self):
        ds, _ = generate_synthetic_cohort(40, 9, SyntheticConfig(missing_rate=0.0))
        schema = ds.schema
        for record in ds.records:
            for spec in schema.features:
                value = record[spec.name]
                if spec.kind == "boolean":
                    assert isinstance(value, bool)
                elif spec.kind in ("categorical", "ordinal"):
                    vocab = spec.categories or spec.levels
                    assert value in vocab
                elif spec.kind == "multi_categorical":
                    assert value and value <= frozenset(spec.categories)
                elif spec.kind == "date":
                    assert isinstance(value, datetime.date)
                else:
                    assert isinstance(value, float)


def test_dataset_subset_keeps_alignment():
    ds = tiny_dataset([{"age": float(i)} for i in range(6)], outcomes=[0, 1, 0, 1, 0, 1])
    sub = ds.subset([1, 3, 4])
    assert [r["age"] for r in sub.records] == [1.0, 3.0, 4.0]
    assert sub.outcomes.tolist() == [1, 1, 0]
