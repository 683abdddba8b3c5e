"""Resampled model comparison: 300 subsampled trainings, pairwise Wilcoxon
signed-rank tests with Bonferroni correction, and ECDF curves.

Each resample draws floor(fraction*n) training rows without replacement,
refits the preprocessing, trains the model, and scores UPM on the held-out
test set.  Per-resample seeds derive from the master seed through a fixed
64-bit mix so results cannot depend on scheduling order.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .cohort import Dataset
from .errors import (
    AllZeroDifferencesError,
    EmptyInputError,
    InvalidPlanError,
    LengthMismatchError,
    NonunionError,
    TooFewPairsError,
)
from .gbt import GbtConfig, predict_proba_gbt, train_gbt
from .logistic import LogisticConfig, predict_proba_linear, train_logistic
from .metrics import confusion, upm
from .preprocess import fit_transformer, transform, with_class_weights
from .svm import SvmConfig, predict_proba_svm, train_svm

log = logging.getLogger(__name__)

MODEL_KINDS = ("logistic", "svm", "gbt")

_MASK64 = (1 << 64) - 1
_FOLD_SALT = 0x5D2F1A3B9C8E7D61
_SHUFFLE_SALT = 0xA3C59AC1D6E8F4B7


def mix_seed(master: int, index: int) -> int:
    """splitmix64 of master advanced by index; stable across platforms."""
    z = (master + (index + 1) * 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


@dataclass(frozen=True)
class ResamplePlan:
    count: int = 300
    fraction: float = 0.8
    master_seed: int = 0


def make_resamples(train: Dataset, plan: ResamplePlan):
    """`plan.count` sorted index sets, each floor(fraction*n) rows without replacement."""
    n = len(train)
    if plan.count < 1:
        raise InvalidPlanError(f"count must be >= 1, got {plan.count}")
    if not 0.0 < plan.fraction <= 1.0:
        raise InvalidPlanError(f"fraction must be in (0, 1], got {plan.fraction}")
    size = math.floor(plan.fraction * n)
    if size < 2:
        raise InvalidPlanError(f"resample size {size} too small (n={n})")
    resamples = []
    for i in range(plan.count):
        rng = np.random.default_rng(mix_seed(plan.master_seed, i))
        resamples.append(np.sort(rng.choice(n, size=size, replace=False)))
    return resamples


def _worker_count() -> int:
    raw = os.environ.get("NONUNION_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def fit_model_kind(kind: str, matrix, config=None, seed: int = 0):
    if kind == "logistic":
        return train_logistic(matrix, config or LogisticConfig())
    if kind == "svm":
        cfg = config or SvmConfig()
        return train_svm(matrix, replace(cfg, seed=seed))
    if kind == "gbt":
        return train_gbt(matrix, config or GbtConfig())
    raise InvalidPlanError(f"unknown model kind {kind!r}")


def predict_model_kind(kind: str, model, X) -> np.ndarray:
    if kind == "logistic":
        return predict_proba_linear(model, X)
    if kind == "svm":
        return predict_proba_svm(model, X)
    if kind == "gbt":
        return predict_proba_gbt(model, X)
    raise InvalidPlanError(f"unknown model kind {kind!r}")


# The boosted model carries the class-weight ratio (recomputed on each
# training set actually used); the other two train unweighted by default.
CLASS_WEIGHTED_BY_KIND = {"logistic": False, "svm": False, "gbt": True}


def paired_scores(
    resamples,
    train: Dataset,
    test: Dataset,
    model_kind: str,
    threshold: float = 0.5,
    model_config=None,
    shuffle_labels: bool = False,
    master_seed: int = 0,
    class_weighted: Optional[bool] = None,
) -> np.ndarray:
    """UPM on the test set per resample; failures are recorded as NaN."""
    if class_weighted is None:
        class_weighted = CLASS_WEIGHTED_BY_KIND.get(model_kind, False)
    y_test = test.outcomes

    def score_one(task):
        i, idx = task
        try:
            sub = train.subset(idx)
            tf = fit_transformer(sub)
            dm = transform(tf, sub)
            if shuffle_labels:
                rng = np.random.default_rng(mix_seed(master_seed ^ _SHUFFLE_SALT, i))
                dm.labels = rng.permutation(dm.labels)
            if class_weighted:
                dm = with_class_weights(dm)
            model = fit_model_kind(model_kind, dm, model_config,
                                   seed=mix_seed(master_seed ^ _FOLD_SALT, i))
            p = predict_model_kind(model_kind, model, transform(tf, test).values)
            value = upm(confusion(y_test, p, threshold))
            return np.nan if value is None else value
        except NonunionError as exc:
            log.warning("resample %d (%s) failed: %s", i, model_kind, exc)
            return np.nan

    tasks = list(enumerate(resamples))
    workers = _worker_count()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            scores = list(pool.map(score_one, tasks))
    else:
        scores = [score_one(t) for t in tasks]
    return np.asarray(scores, dtype=np.float64)


# ---------------------------------------------------------------------------
# Wilcoxon signed-rank test

@dataclass
class ComparisonResult:
    name_a: str
    name_b: str
    n_pairs: int           # original pair count, N in r = |Z|/sqrt(N)
    n_used: int            # pairs surviving zero-difference removal
    w_plus: float
    w_minus: float
    z: float
    p: float
    r: float
    method: str            # "exact" (<= 25 used pairs) or "normal"
    alpha: float = 0.05
    significant: Optional[bool] = None
    zero_handling: str = "discard"

    def to_dict(self) -> dict:
        return {
            "pair": [self.name_a, self.name_b],
            "n_pairs": self.n_pairs,
            "n_used": self.n_used,
            "w_plus": self.w_plus,
            "w_minus": self.w_minus,
            "z": self.z,
            "p": self.p,
            "r": self.r,
            "method": self.method,
            "alpha": self.alpha,
            "significant": self.significant,
            "zero_handling": self.zero_handling,
        }


def _rankdata(v: np.ndarray) -> np.ndarray:
    order = np.argsort(v, kind="stable")
    sv = v[order]
    ranks = np.empty(v.shape[0])
    i = 0
    n = v.shape[0]
    while i < n:
        j = i
        while j + 1 < n and sv[j + 1] == sv[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def _exact_two_sided_p(doubled_ranks: np.ndarray, w_plus: float) -> float:
    """Null distribution of W+ by DP over doubled ranks (== 2^n enumeration)."""
    total = int(doubled_ranks.sum())
    counts = np.zeros(total + 1)
    counts[0] = 1.0
    for dr in doubled_ranks:
        dr = int(dr)
        shifted = np.zeros_like(counts)
        shifted[dr:] = counts[: total + 1 - dr]
        counts = counts + shifted
    denom = 2.0 ** doubled_ranks.shape[0]
    w2 = int(round(2.0 * w_plus))
    p_le = counts[: w2 + 1].sum() / denom
    p_ge = counts[w2:].sum() / denom
    return min(1.0, 2.0 * min(p_le, p_ge))


def wilcoxon_signed_rank(a, b, name_a: str = "a", name_b: str = "b",
                         alpha: float = 0.05, exact_limit: int = 25) -> ComparisonResult:
    """Two-sided paired Wilcoxon test on a - b.

    Zero differences are discarded; |d| ranks use average ranks on ties.
    The exact null distribution is enumerated when at most `exact_limit`
    pairs remain; otherwise a tie-corrected normal approximation with
    continuity correction.  The effect size r = |Z|/sqrt(N) uses the
    original pair count.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise LengthMismatchError("paired samples must be 1-D with equal length")
    n_pairs = a.shape[0]
    d = a - b
    d = d[d != 0.0]
    n = d.shape[0]
    if n == 0:
        raise AllZeroDifferencesError("all paired differences are zero")
    if n < 5:
        raise TooFewPairsError(f"need >= 5 non-zero differences, got {n}")

    ranks = _rankdata(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    total = n * (n + 1) / 2.0
    w_minus = total - w_plus

    mean = n * (n + 1) / 4.0
    _, tie_counts = np.unique(np.abs(d), return_counts=True)
    tie_term = float(((tie_counts.astype(np.float64) ** 3) - tie_counts).sum()) / 48.0
    var = n * (n + 1) * (2 * n + 1) / 24.0 - tie_term
    centered = w_plus - mean
    z = (centered - 0.5 * np.sign(centered)) / math.sqrt(var)
    p_normal = math.erfc(abs(z) / math.sqrt(2.0))

    if n <= exact_limit:
        p = _exact_two_sided_p(np.round(2.0 * ranks).astype(np.int64), w_plus)
        method = "exact"
    else:
        p = p_normal
        method = "normal"

    return ComparisonResult(
        name_a=name_a,
        name_b=name_b,
        n_pairs=n_pairs,
        n_used=n,
        w_plus=w_plus,
        w_minus=w_minus,
        z=float(z),
        p=float(p),
        r=abs(float(z)) / math.sqrt(n_pairs),
        method=method,
        alpha=alpha,
    )


def bonferroni(p_values, alpha: float = 0.05):
    """Significance flags p_i < alpha / k for k comparisons."""
    k = len(p_values)
    return [p < alpha / k for p in p_values]


def ecdf(scores):
    """Right-continuous empirical CDF steps: (distinct value, cumulative fraction)."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size == 0:
        raise EmptyInputError("ecdf of an empty sample")
    values, counts = np.unique(scores, return_counts=True)
    fractions = np.cumsum(counts) / scores.size
    return [(float(v), float(f)) for v, f in zip(values, fractions)]
