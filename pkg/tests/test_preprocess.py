import copy
import datetime
import math

import numpy as np
import pytest

from nonunion.cohort import SyntheticConfig, generate_synthetic_cohort
from nonunion.errors import AllMissingColumnError, SchemaMismatchError, SingleClassError
from nonunion.preprocess import (
    compute_class_weights,
    fit_transformer,
    transform,
    transformer_from_json,
    transformer_to_json,
    with_class_weights,
)

from conftest import tiny_dataset


def _col(matrix, name):
    return matrix.values[:, matrix.column_names.index(name)]


def _jdn(y, m, d):
    """Julian day number; independent of datetime."""
    a = (14 - m) // 12
    yy = y + 4800 - a
    mm = m + 12 * a - 3
    return d + (153 * mm + 2) // 5 + 365 * yy + yy // 4 - yy // 100 + yy // 400 - 32045


class TestFitStatistics:
    def test_population_sigma(self):
        ds = tiny_dataset([{"age": 1.0}, {"age": 2.0}, {"age": 3.0}], outcomes=[0, 1, 0])
        tf = fit_transformer(ds)
        plan = next(p for p in tf.plans if p.feature == "age")
        assert plan.mean == 2.0
        # sqrt(((1-2)^2 + 0 + (3-2)^2) / 3), divisor n
        assert plan.sd == pytest.approx(0.816496580927726, abs=1e-15)

    def test_constant_column_flagged(self):
        ds = tiny_dataset([{"age": 5.0}] * 3, outcomes=[0, 1, 0])
        tf = fit_transformer(ds)
        plan = next(p for p in tf.plans if p.feature == "age")
        assert plan.mean == 5.0
        assert plan.sd == 0.0
        assert "age" in tf.constant_columns

    def test_boolean_mode_imputation(self):
        ds = tiny_dataset(
            [{"flag": True}, {"flag": True}, {"flag": None}], outcomes=[0, 1, 0]
        )
        tf = fit_transformer(ds)
        plan = next(p for p in tf.plans if p.feature == "flag")
        assert plan.impute is True

    def test_categorical_mode_tie_breaks_to_schema_order(self):
        ds = tiny_dataset(
            [{"color": "blue"}, {"color": "red"}, {"color": None}], outcomes=[0, 1, 0]
        )
        plan = next(p for p in fit_transformer(ds).plans if p.feature == "color")
        assert plan.impute == "red"  # red precedes blue in the vocabulary

    def test_all_missing_column_raises(self):
        ds = tiny_dataset([{"age": None}, {"age": None}], outcomes=[0, 1])
        with pytest.raises(AllMissingColumnError):
            fit_transformer(ds)


class TestTransform:
    def test_one_hot_single_choice(self):
        ds = tiny_dataset([{"color": "green"}], outcomes=[1])
        fit = tiny_dataset([{"color": c} for c in ("red", "green", "blue")], outcomes=[0, 1, 0])
        tf = fit_transformer(fit)
        dm = transform(tf, ds)
        block = [_col(dm, f"color={c}")[0] for c in ("red", "green", "blue")]
        assert block == [0.0, 1.0, 0.0]

    def test_multi_hot(self):
        fit = tiny_dataset(
            [{"tags": frozenset({"diabetes"})}, {"tags": frozenset({"renal"})}],
            outcomes=[0, 1],
        )
        ds = tiny_dataset([{"tags": frozenset({"diabetes", "lung_disease"})}], outcomes=[1])
        dm = transform(fit_transformer(fit), ds)
        block = [_col(dm, f"tags={c}")[0] for c in ("diabetes", "lung_disease", "renal")]
        assert block == [1.0, 1.0, 0.0]

    def test_scaling_oracle(self):
        fit = tiny_dataset([{"age": 1.0}, {"age": 2.0}, {"age": 3.0}], outcomes=[0, 1, 0])
        ds = tiny_dataset([{"age": 3.0}], outcomes=[0])
        dm = transform(fit_transformer(fit), ds)
        assert _col(dm, "age")[0] == pytest.approx((3.0 - 2.0) / 0.816496580927726, abs=1e-12)
        assert _col(dm, "age")[0] == pytest.approx(1.224744871391589, abs=1e-9)

    def test_day_count_matches_julian_oracle(self):
        ds = tiny_dataset(
            [{"fracture_date": datetime.date(2009, 1, 1),
              "revision_date": datetime.date(2009, 3, 2)}],
            outcomes=[0],
        )
        fit = tiny_dataset([{}, {}], outcomes=[0, 1])
        dm = transform(fit_transformer(fit), ds)
        expected = _jdn(2009, 3, 2) - _jdn(2009, 1, 1)
        assert expected == 60
        assert _col(dm, "revision_date")[0] == 60.0

    def test_constant_column_emits_zero(self):
        fit = tiny_dataset([{"age": 5.0}] * 3, outcomes=[0, 1, 0])
        ds = tiny_dataset([{"age": 7.5}], outcomes=[0])
        dm = transform(fit_transformer(fit), ds)
        assert _col(dm, "age")[0] == 0.0

    def test_mean_imputation_lands_at_zero(self):
        fit = tiny_dataset([{"age": 1.0}, {"age": 3.0}], outcomes=[0, 1])
        ds = tiny_dataset([{"age": None}], outcomes=[0])
        dm = transform(fit_transformer(fit), ds)
        assert _col(dm, "age")[0] == 0.0

    def test_categorical_imputation_resolves_to_mode_column(self):
        fit = tiny_dataset([{"color": "blue"}, {"color": "blue"}, {"color": "red"}],
                           outcomes=[0, 1, 0])
        ds = tiny_dataset([{"color": None}], outcomes=[0])
        dm = transform(fit_transformer(fit), ds)
        assert _col(dm, "color=blue")[0] == 1.0
        assert _col(dm, "color=red")[0] == 0.0

    def test_ordinal_levels_scaled_by_schema_order(self):
        fit = tiny_dataset([{"grade": "low"}, {"grade": "mid"}, {"grade": "high"}],
                           outcomes=[0, 1, 0])
        dm = transform(fit_transformer(fit), fit)
        col = _col(dm, "grade")
        # indices 0, 1, 2 -> standard scaled
        assert col[0] == pytest.approx(-math.sqrt(1.5), rel=1e-12)
        assert col[1] == 0.0
        assert col[2] == pytest.approx(math.sqrt(1.5), rel=1e-12)

    def test_schema_mismatch_rejected(self):
        ds, _ = generate_synthetic_cohort(30, 1)
        tf = fit_transformer(ds)
        with pytest.raises(SchemaMismatchError):
            transform(tf, tiny_dataset([{}], outcomes=[0]))


class TestInvariants:
    def test_train_columns_standardized(self):
        ds, _ = generate_synthetic_cohort(400, 3)
        tf = fit_transformer(ds)
        dm = transform(tf, ds)
        scaled = [p for p in tf.plans if p.sd not in (None, 0.0)]
        assert scaled
        for plan in scaled:
            col = _col(dm, plan.columns[0])
            # columns with missing cells get imputed at z=0, shifting moments;
            # restrict to the observed entries
            observed = np.array(
                [r[plan.feature] is not None for r in ds.records], dtype=bool
            )
            values = col[observed]
            assert abs(values.mean()) < 1e-9
            assert abs(values.std() - 1.0) < 1e-9

    def test_transform_is_row_independent(self):
        ds, _ = generate_synthetic_cohort(50, 4)
        tf = fit_transformer(ds)
        base = transform(tf, ds).values
        perm = np.random.default_rng(0).permutation(len(ds))
        permuted = transform(tf, ds.subset(perm)).values
        assert np.array_equal(base[perm], permuted)

    def test_no_leakage_into_transformer(self):
        train, _ = generate_synthetic_cohort(60, 5)
        test, _ = generate_synthetic_cohort(40, 6)
        tf = fit_transformer(train)
        before = transformer_to_json(tf)
        test.records[0]["age"] = 999.0
        transform(tf, test)
        assert transformer_to_json(tf) == before

    def test_high_missingness_still_finite(self):
        ds, _ = generate_synthetic_cohort(300, 8, SyntheticConfig(missing_rate=0.9))
        dm = transform(fit_transformer(ds), ds)
        assert np.isfinite(dm.values).all()

    def test_fit_invariant_under_permutation(self):
        # summation order may move the last bit of a mean; everything else
        # (modes, vocabularies, column layout) must be identical
        ds, _ = generate_synthetic_cohort(80, 12)
        perm = np.random.default_rng(1).permutation(len(ds))
        a = fit_transformer(ds)
        b = fit_transformer(ds.subset(perm))
        assert a.column_names == b.column_names
        for pa, pb in zip(a.plans, b.plans):
            if pa.kind in ("boolean", "categorical", "multi_categorical"):
                assert pa == pb
            else:
                assert pa.mean == pytest.approx(pb.mean, rel=1e-12)
                if pa.sd is not None:
                    assert pa.sd == pytest.approx(pb.sd, rel=1e-12)


class TestClassWeights:
    def test_ratio(self):
        labels = np.array([0] * 60 + [1] * 40)
        w = compute_class_weights(labels)
        assert w[labels == 1][0] == pytest.approx(1.5)
        assert np.all(w[labels == 0] == 1.0)

    def test_balanced_is_unit(self):
        w = compute_class_weights([0, 1, 0, 1])
        assert np.all(w == 1.0)

    def test_cohort_like_ratio(self):
        labels = np.array([0] * 98 + [1] * 62)
        w = compute_class_weights(labels)
        assert w[labels == 1][0] == pytest.approx(98 / 62, abs=1e-12)
        assert w[labels == 1][0] == pytest.approx(1.5806, abs=1e-4)

    def test_single_class_rejected(self):
        with pytest.raises(SingleClassError):
            compute_class_weights([1, 1, 1])

    def test_with_class_weights_keeps_matrix(self):
        ds, _ = generate_synthetic_cohort(40, 2)
        dm = transform(fit_transformer(ds), ds)
        weighted = with_class_weights(dm)
        assert np.array_equal(weighted.values, dm.values)
        assert not np.array_equal(weighted.sample_weights, dm.sample_weights)


def test_serialization_round_trip():
    ds, _ = generate_synthetic_cohort(50, 9)
    tf = fit_transformer(ds)
    doc = transformer_to_json(tf)
    tf2 = transformer_from_json(copy.deepcopy(doc))
    assert transformer_to_json(tf2) == doc
    a = transform(tf, ds).values
    b = transform(tf2, ds).values
    assert np.array_equal(a, b)
