"""Cohort schema, CSV I/O, train/test splitting, and synthetic cohorts.

A cohort is a table of per-patient clinical features plus a binary outcome
(1 = failed healing after the first revision surgery).  Cells are plain
Python values: ``None`` marks a missing cell, booleans/floats/str categories/
``frozenset`` multi-selects/``datetime.date`` cover the feature kinds.
"""

from __future__ import annotations

import csv
import datetime
import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Union

import numpy as np

from .errors import (
    DegenerateSplitError,
    InvalidConfigError,
    InvalidDateError,
    MissingColumnError,
    SchemaMismatchError,
    TypeMismatchError,
    UnknownCategoryError,
    UnknownColumnError,
)

KINDS = ("boolean", "categorical", "multi_categorical", "ordinal", "interval", "continuous", "date")

MULTI_SEPARATOR = ";"

Cell = Union[None, bool, float, str, frozenset, datetime.date]
PatientRecord = dict  # feature name -> Cell


@dataclass(frozen=True)
class FeatureSpec:
    """One raw feature: its kind plus the vocabulary/levels it may take."""

    name: str
    kind: str
    categories: tuple = ()
    levels: tuple = ()


@dataclass(frozen=True)
class FeatureSchema:
    features: tuple
    outcome_name: str
    fracture_date_name: str

    def __post_init__(self):
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise SchemaMismatchError("feature names must be unique")
        by_name = {f.name: f for f in self.features}
        if self.outcome_name not in by_name:
            raise SchemaMismatchError(f"outcome {self.outcome_name!r} not in schema")
        if self.fracture_date_name not in by_name:
            raise SchemaMismatchError(f"fracture date {self.fracture_date_name!r} not in schema")
        if by_name[self.outcome_name].kind != "boolean":
            raise SchemaMismatchError("outcome feature must be boolean")
        if by_name[self.fracture_date_name].kind != "date":
            raise SchemaMismatchError("fracture date feature must be a date")
        for spec in self.features:
            if spec.kind not in KINDS:
                raise SchemaMismatchError(f"{spec.name}: unknown kind {spec.kind!r}")
            if spec.kind in ("categorical", "multi_categorical") and not spec.categories:
                raise SchemaMismatchError(f"{spec.name}: categorical features need categories")
            if spec.kind == "ordinal" and not spec.levels:
                raise SchemaMismatchError(f"{spec.name}: ordinal features need ordered levels")

    def __getitem__(self, name: str) -> FeatureSpec:
        for spec in self.features:
            if spec.name == name:
                return spec
        raise KeyError(name)

    @property
    def names(self):
        return tuple(f.name for f in self.features)


@dataclass
class Dataset:
    schema: FeatureSchema
    records: list
    outcomes: np.ndarray

    def __post_init__(self):
        self.outcomes = np.asarray(self.outcomes, dtype=np.int64)
        if len(self.records) != self.outcomes.shape[0]:
            raise SchemaMismatchError("records and outcomes must have equal length")

    def __len__(self):
        return len(self.records)

    @property
    def incidence(self) -> float:
        return float(self.outcomes.mean())

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.schema, [self.records[i] for i in idx], self.outcomes[idx])

    def with_outcomes(self, outcomes) -> "Dataset":
        """Same features, replaced label vector (outcome cells updated to match)."""
        outcomes = np.asarray(outcomes, dtype=np.int64)
        records = [dict(r) for r in self.records]
        for rec, y in zip(records, outcomes):
            rec[self.schema.outcome_name] = bool(y)
        return Dataset(self.schema, records, outcomes)


# ---------------------------------------------------------------------------
# schema JSON

def schema_to_json(schema: FeatureSchema) -> dict:
    features = []
    for f in schema.features:
        entry = {"name": f.name, "kind": f.kind}
        if f.categories:
            entry["categories"] = list(f.categories)
        if f.levels:
            entry["levels"] = list(f.levels)
        features.append(entry)
    return {
        "format": "nonunion-schema/1",
        "features": features,
        "outcome": schema.outcome_name,
        "fracture_date": schema.fracture_date_name,
    }


def schema_from_json(doc: Mapping) -> FeatureSchema:
    if doc.get("format") != "nonunion-schema/1":
        raise SchemaMismatchError(f"unsupported schema format {doc.get('format')!r}")
    features = tuple(
        FeatureSpec(
            name=entry["name"],
            kind=entry["kind"],
            categories=tuple(entry.get("categories", ())),
            levels=tuple(entry.get("levels", ())),
        )
        for entry in doc["features"]
    )
    return FeatureSchema(features, doc["outcome"], doc["fracture_date"])


def save_schema(schema: FeatureSchema, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(schema_to_json(schema), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_schema(path) -> FeatureSchema:
    with open(path, encoding="utf-8") as fh:
        return schema_from_json(json.load(fh))


# ---------------------------------------------------------------------------
# CSV I/O

def _parse_cell(raw: str, spec: FeatureSpec, row: int) -> Cell:
    if raw == "":
        return None
    if spec.kind == "boolean":
        low = raw.strip().lower()
        if low == "true":
            return True
        if low == "false":
            return False
        raise TypeMismatchError(row, spec.name, f"expected true/false, got {raw!r}")
    if spec.kind == "categorical":
        if raw not in spec.categories:
            raise UnknownCategoryError(row, spec.name, f"unknown category {raw!r}")
        return raw
    if spec.kind == "multi_categorical":
        parts = raw.split(MULTI_SEPARATOR)
        for part in parts:
            if part not in spec.categories:
                raise UnknownCategoryError(row, spec.name, f"unknown category {part!r}")
        return frozenset(parts)
    if spec.kind == "ordinal":
        if raw not in spec.levels:
            raise UnknownCategoryError(row, spec.name, f"unknown level {raw!r}")
        return raw
    if spec.kind in ("interval", "continuous"):
        try:
            value = float(raw)
        except ValueError:
            raise TypeMismatchError(row, spec.name, f"expected a number, got {raw!r}") from None
        if not math.isfinite(value):
            raise TypeMismatchError(row, spec.name, f"non-finite number {raw!r}")
        return value
    if spec.kind == "date":
        try:
            return datetime.date.fromisoformat(raw)
        except ValueError:
            raise InvalidDateError(row, spec.name, f"expected YYYY-MM-DD, got {raw!r}") from None
    raise SchemaMismatchError(f"unhandled kind {spec.kind!r}")


def _format_cell(value: Cell, spec: FeatureSpec) -> str:
    if value is None:
        return ""
    if spec.kind == "boolean":
        return "true" if value else "false"
    if spec.kind == "multi_categorical":
        # canonical vocabulary order keeps writes deterministic
        return MULTI_SEPARATOR.join(c for c in spec.categories if c in value)
    if spec.kind in ("interval", "continuous"):
        text = repr(float(value))
        return text[:-2] if text.endswith(".0") else text
    if spec.kind == "date":
        return value.isoformat()
    return str(value)


def load_dataset(csv_path, schema: FeatureSchema) -> Dataset:
    """Parse a cohort CSV against `schema`.

    Header must contain exactly the schema's feature names (any order);
    empty cells become missing; multi-select cells are semicolon-joined.
    """
    with open(csv_path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise MissingColumnError("empty file: no header row") from None
        known = set(schema.names)
        seen = set(header)
        extra = [h for h in header if h not in known]
        if extra:
            raise UnknownColumnError(f"unknown column(s): {extra}")
        missing = [n for n in schema.names if n not in seen]
        if missing:
            raise MissingColumnError(f"missing column(s): {missing}")
        specs = [schema[name] for name in header]

        records = []
        outcomes = []
        for row_no, row in enumerate(reader):
            if len(row) != len(header):
                raise TypeMismatchError(row_no, "<row>", f"expected {len(header)} fields, got {len(row)}")
            record = {}
            for raw, spec in zip(row, specs):
                record[spec.name] = _parse_cell(raw, spec, row_no)
            outcome = record[schema.outcome_name]
            if outcome is None:
                raise TypeMismatchError(row_no, schema.outcome_name, "outcome may not be missing")
            records.append(record)
            outcomes.append(int(outcome))
    return Dataset(schema, records, np.asarray(outcomes, dtype=np.int64))


def write_dataset(dataset: Dataset, csv_path) -> None:
    schema = dataset.schema
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(schema.names)
        for record in dataset.records:
            writer.writerow([_format_cell(record[f.name], f) for f in schema.features])


# ---------------------------------------------------------------------------
# train/test split

@dataclass(frozen=True)
class SplitIndices:
    train: np.ndarray
    test: np.ndarray
    seed: int
    stratified: bool


def split_dataset(dataset: Dataset, test_fraction: float = 0.2, seed: int = 0,
                  stratified: bool = True) -> SplitIndices:
    """Partition rows into train/test with |test| = ceil(test_fraction * n).

    Stratified splits balance per-class test counts to within one record of
    the exact proportion.  Deterministic for a fixed seed.
    """
    n = len(dataset)
    if not 0.0 < test_fraction < 1.0:
        raise InvalidConfigError(f"test_fraction must be in (0, 1), got {test_fraction}")
    if n == 0:
        raise DegenerateSplitError("empty dataset")
    n_test = math.ceil(test_fraction * n)
    n_train = n - n_test
    if n_train == 0 or n_test == 0:
        raise DegenerateSplitError(f"split sizes train={n_train}, test={n_test}")
    rng = np.random.default_rng(seed)
    if not stratified:
        order = rng.permutation(n)
        test = np.sort(order[:n_test])
        train = np.sort(order[n_test:])
        return SplitIndices(train, test, seed, False)

    y = dataset.outcomes
    counts = {c: int((y == c).sum()) for c in (0, 1)}
    if counts[0] == 0 or counts[1] == 0:
        raise DegenerateSplitError("stratified split needs both classes present")
    exact = {c: n_test * counts[c] / n for c in (0, 1)}
    take = {c: math.floor(exact[c]) for c in (0, 1)}
    leftover = n_test - take[0] - take[1]
    if leftover:
        frac0, frac1 = exact[0] - take[0], exact[1] - take[1]
        take[0 if frac0 >= frac1 else 1] += leftover
    test_parts = []
    for c in (0, 1):
        if take[c] == 0 or counts[c] - take[c] == 0:
            raise DegenerateSplitError(f"class {c} would be absent from one side")
        members = np.flatnonzero(y == c)
        order = rng.permutation(counts[c])
        test_parts.append(members[order[: take[c]]])
    test = np.sort(np.concatenate(test_parts))
    mask = np.ones(n, dtype=bool)
    mask[test] = False
    train = np.flatnonzero(mask)
    return SplitIndices(train, test, seed, True)


# ---------------------------------------------------------------------------
# synthetic cohorts

def default_schema() -> FeatureSchema:
    """Representative clinical schema covering every feature kind."""
    return FeatureSchema(
        features=(
            FeatureSpec("age", "continuous"),
            FeatureSpec("sex", "categorical", categories=("female", "male")),
            FeatureSpec("bmi", "continuous"),
            FeatureSpec("smoker", "boolean"),
            FeatureSpec(
                "comorbidities",
                "multi_categorical",
                categories=("none", "diabetes", "lung_disease", "renal_disease", "vascular_disease"),
            ),
            FeatureSpec("nonunion_type", "ordinal", levels=("hypertrophic", "oligotrophic", "atrophic")),
            FeatureSpec("prior_surgeries", "interval"),
            FeatureSpec("hemoglobin", "continuous"),
            FeatureSpec("crp", "continuous"),
            FeatureSpec("wbc", "continuous"),
            FeatureSpec("platelets", "continuous"),
            FeatureSpec("creatinine", "continuous"),
            FeatureSpec("vitamin_d", "continuous"),
            FeatureSpec(
                "fracture_location",
                "categorical",
                categories=("femur", "tibia", "humerus", "radius", "ulna", "fibula"),
            ),
            FeatureSpec("fixation_type", "categorical", categories=("plate", "nail", "external_fixator", "screw")),
            FeatureSpec("bone_graft", "boolean"),
            FeatureSpec("growth_factor", "boolean"),
            FeatureSpec("infection", "boolean"),
            FeatureSpec("soft_tissue_damage", "ordinal", levels=("none", "moderate", "severe")),
            FeatureSpec("fracture_date", "date"),
            FeatureSpec("revision_date", "date"),
            FeatureSpec("failed_healing", "boolean"),
        ),
        outcome_name="failed_healing",
        fracture_date_name="fracture_date",
    )


# Effect sizes form a spectrum (roughly 0.35 / 0.25 / 0.13 standard
# deviations of the linear predictor each): the strong terms are learnable
# from a few dozen rows, the medium ones need a couple hundred, the weak
# ones only emerge near the full cohort.  Together with the pure-noise lab
# columns this keeps the learning curve rising across every training
# fraction instead of saturating early.
DEFAULT_RISK_WEIGHTS = {
    # strong
    "infection": 0.9,
    "smoker": 0.7,
    "revision_days": 0.002,   # per day from fracture to revision, above 395
    # medium
    "age": 0.02,             # per year above 48
    "bmi": 0.055,            # per unit above 27
    "diabetes": 0.7,
    "prior_surgeries": 0.25,  # per surgery above 1
    "hemoglobin": -0.17,     # per g/dl above 13.5
    "nonunion_type": 0.33,   # per ordinal step towards atrophic
    "bone_graft": -0.55,
    # weak
    "sex_male": 0.25,
    "lung_disease": 0.45,
    "renal_disease": 0.5,
    "vascular_disease": 0.45,
    "growth_factor": 0.35,
    "soft_tissue_damage": 0.2,
}

DEFAULT_LOCATION_WEIGHTS = {
    "femur": 0.15,
    "tibia": 0.35,
    "humerus": 0.0,
    "radius": -0.1,
    "ulna": -0.1,
    "fibula": 0.0,
}

DEFAULT_FIXATION_WEIGHTS = {
    "plate": 0.0,
    "nail": -0.1,
    "external_fixator": 0.4,
    "screw": 0.1,
}

# Sampling parameters per raw feature (normal/lognormal: location + spread
# + clip bounds; flags: prevalence; choice kinds: category probabilities).
DEFAULT_FEATURE_PARAMS = {
    "age": (48.0, 15.0, 18.0, 90.0),
    "bmi": (27.0, 0.18, 16.0, 55.0),          # lognormal around 27
    "sex_female": 0.40,
    "smoker": 0.35,
    "comorbidities": (0.18, 0.12, 0.08, 0.10),  # diabetes, lung, renal, vascular
    "nonunion_type": (0.35, 0.40, 0.25),
    "prior_surgeries": 1.2,                     # poisson mean, clipped at 8
    "hemoglobin": (13.5, 1.8, 6.0, 19.0),
    "crp": (8.0, 0.9, 0.1, 250.0),             # lognormal around 8
    "wbc": (7.5, 2.0, 1.5, 30.0),
    "platelets": (260.0, 60.0, 30.0, 800.0),
    "creatinine": (0.95, 0.25, 0.3, 6.0),      # lognormal around 0.95
    "vitamin_d": (28.0, 10.0, 4.0, 90.0),
    "fracture_location": (0.28, 0.34, 0.16, 0.10, 0.07, 0.05),
    "fixation_type": (0.44, 0.34, 0.14, 0.08),
    "bone_graft": 0.45,
    "growth_factor": 0.18,
    "infection": 0.20,
    "soft_tissue_damage": (0.55, 0.30, 0.15),
    "fracture_date": ("2009-01-01", "2022-12-31"),
    "revision_gap_days": (90, 700),
}


@dataclass(frozen=True)
class SyntheticConfig:
    """Knobs of the synthetic cohort generator.

    The ground-truth risk is logistic in the raw features plus a pairwise
    interaction (smoker x diabetes) and two thresholded steps (high crp,
    low hemoglobin), so tree models have real non-linear structure to
    find.  The intercept is solved numerically so the mean risk hits
    `target_incidence`.
    """

    target_incidence: float = 0.3877
    missing_rate: float = 0.166
    feature_params: Mapping = field(default_factory=lambda: dict(DEFAULT_FEATURE_PARAMS))
    risk_weights: Mapping = field(default_factory=lambda: dict(DEFAULT_RISK_WEIGHTS))
    location_weights: Mapping = field(default_factory=lambda: dict(DEFAULT_LOCATION_WEIGHTS))
    fixation_weights: Mapping = field(default_factory=lambda: dict(DEFAULT_FIXATION_WEIGHTS))
    interaction_weight: float = 1.2
    crp_step_at: float = 20.0
    crp_step_weight: float = 0.9
    anemia_step_at: float = 11.8
    anemia_step_weight: float = 0.6
    noise_sd: float = 0.25


def _solve_intercept(lp: np.ndarray, target: float) -> float:
    lo, hi = -30.0, 30.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if float(np.mean(1.0 / (1.0 + np.exp(-(lp + mid))))) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def generate_synthetic_cohort(n: int, seed: int, config: SyntheticConfig | None = None):
    """Draw a schema-conforming cohort of `n` patients.

    Returns ``(dataset, true_risk)`` where the outcomes are Bernoulli draws
    from `true_risk`.  Deterministic for fixed ``(n, seed, config)``.
    Missingness is completely at random per cell; the outcome and the
    fracture date are never missing.
    """
    config = config or SyntheticConfig()
    if n < 20:
        raise InvalidConfigError(f"n must be >= 20, got {n}")
    if not 0.0 < config.target_incidence < 1.0:
        raise InvalidConfigError("target incidence must be in (0, 1)")
    if not 0.0 <= config.missing_rate < 1.0:
        raise InvalidConfigError("missing rate must be in [0, 1)")

    schema = default_schema()
    rng = np.random.default_rng(seed)
    fp = config.feature_params

    def normal(key, decimals=1):
        mean, sd, lo, hi = fp[key]
        return np.clip(rng.normal(mean, sd, n), lo, hi).round(decimals)

    def lognormal(key, decimals=1):
        center, sigma, lo, hi = fp[key]
        return np.clip(rng.lognormal(math.log(center), sigma, n), lo, hi).round(decimals)

    age = normal("age")
    sex = np.where(rng.random(n) < fp["sex_female"], "female", "male")
    bmi = lognormal("bmi")
    smoker = rng.random(n) < fp["smoker"]
    como_flags = rng.random((n, 4)) < np.asarray(fp["comorbidities"])
    nonunion_lvl = rng.choice(3, n, p=list(fp["nonunion_type"]))
    prior_surgeries = np.minimum(rng.poisson(fp["prior_surgeries"], n), 8).astype(float)
    hemoglobin = normal("hemoglobin")
    crp = lognormal("crp")
    # labs with no effect on the outcome; small trees happily overfit them
    wbc = normal("wbc")
    platelets = normal("platelets", decimals=0)
    creatinine = lognormal("creatinine", decimals=2)
    vitamin_d = normal("vitamin_d")
    location = rng.choice(
        np.array(schema["fracture_location"].categories), n, p=list(fp["fracture_location"])
    )
    fixation = rng.choice(
        np.array(schema["fixation_type"].categories), n, p=list(fp["fixation_type"])
    )
    bone_graft = rng.random(n) < fp["bone_graft"]
    growth_factor = rng.random(n) < fp["growth_factor"]
    infection = rng.random(n) < fp["infection"]
    soft_tissue = rng.choice(3, n, p=list(fp["soft_tissue_damage"]))

    frac_start = datetime.date.fromisoformat(fp["fracture_date"][0]).toordinal()
    frac_end = datetime.date.fromisoformat(fp["fracture_date"][1]).toordinal()
    fracture_ord = rng.integers(frac_start, frac_end + 1, n)
    gap_lo, gap_hi = fp["revision_gap_days"]
    revision_gap = rng.integers(gap_lo, gap_hi + 1, n)

    w = config.risk_weights
    loc_w = np.array([config.location_weights[c] for c in location])
    fix_w = np.array([config.fixation_weights[c] for c in fixation])
    lp = (
        w["age"] * (age - 48.0)
        + w["bmi"] * (bmi - 27.0)
        + w["sex_male"] * (sex == "male")
        + w["smoker"] * smoker
        + w["diabetes"] * como_flags[:, 0]
        + w["lung_disease"] * como_flags[:, 1]
        + w["renal_disease"] * como_flags[:, 2]
        + w["vascular_disease"] * como_flags[:, 3]
        + w["prior_surgeries"] * (prior_surgeries - 1.0)
        + w["hemoglobin"] * (hemoglobin - 13.5)
        + w["nonunion_type"] * nonunion_lvl
        + w["infection"] * infection
        + w["bone_graft"] * bone_graft
        + w["growth_factor"] * growth_factor
        + w["soft_tissue_damage"] * soft_tissue
        + w["revision_days"] * (revision_gap - 395.0)
        + loc_w
        + fix_w
        + config.interaction_weight * (smoker & como_flags[:, 0])
        + config.crp_step_weight * (crp > config.crp_step_at)
        + config.anemia_step_weight * (hemoglobin < config.anemia_step_at)
        + rng.normal(0.0, config.noise_sd, n)
    )
    intercept = _solve_intercept(lp, config.target_incidence)
    true_risk = 1.0 / (1.0 + np.exp(-(lp + intercept)))
    outcomes = (rng.random(n) < true_risk).astype(np.int64)

    como_names = ("diabetes", "lung_disease", "renal_disease", "vascular_disease")
    nonunion_levels = schema["nonunion_type"].levels
    soft_levels = schema["soft_tissue_damage"].levels

    records = []
    for i in range(n):
        chosen = frozenset(c for c, flag in zip(como_names, como_flags[i]) if flag) or frozenset({"none"})
        records.append({
            "age": float(age[i]),
            "sex": str(sex[i]),
            "bmi": float(bmi[i]),
            "smoker": bool(smoker[i]),
            "comorbidities": chosen,
            "nonunion_type": nonunion_levels[nonunion_lvl[i]],
            "prior_surgeries": float(prior_surgeries[i]),
            "hemoglobin": float(hemoglobin[i]),
            "crp": float(crp[i]),
            "wbc": float(wbc[i]),
            "platelets": float(platelets[i]),
            "creatinine": float(creatinine[i]),
            "vitamin_d": float(vitamin_d[i]),
            "fracture_location": str(location[i]),
            "fixation_type": str(fixation[i]),
            "bone_graft": bool(bone_graft[i]),
            "growth_factor": bool(growth_factor[i]),
            "infection": bool(infection[i]),
            "soft_tissue_damage": soft_levels[soft_tissue[i]],
            "fracture_date": datetime.date.fromordinal(int(fracture_ord[i])),
            "revision_date": datetime.date.fromordinal(int(fracture_ord[i] + revision_gap[i])),
            "failed_healing": bool(outcomes[i]),
        })

    if config.missing_rate > 0.0:
        protected = {schema.outcome_name, schema.fracture_date_name}
        eligible = [f.name for f in schema.features if f.name not in protected]
        mask = rng.random((n, len(eligible))) < config.missing_rate
        for i, record in enumerate(records):
            for j, name in enumerate(eligible):
                if mask[i, j]:
                    record[name] = None

    return Dataset(schema, records, outcomes), true_risk


def missing_fraction(dataset: Dataset) -> float:
    """Fraction of missing cells among cells eligible for missingness."""
    protected = {dataset.schema.outcome_name, dataset.schema.fracture_date_name}
    eligible = [f.name for f in dataset.schema.features if f.name not in protected]
    total = len(dataset) * len(eligible)
    if total == 0:
        return 0.0
    n_missing = sum(1 for r in dataset.records for name in eligible if r[name] is None)
    return n_missing / total
