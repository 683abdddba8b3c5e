"""Confusion-matrix metrics: UPM, companions, sweeps, threshold selection.

The positive class is failed healing.  A prediction is positive when the
probability is strictly above the threshold.  Degenerate ratios (0/0) are
reported as ``None``, never NaN.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import EmptyMatrixError, LengthMismatchError, UnachievableError


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    tn: int
    fn: int
    threshold: float = 0.5

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class MetricReport:
    upm: Optional[float]
    mcc: Optional[float]
    sensitivity: Optional[float]
    specificity: Optional[float]
    precision: Optional[float]
    npv: Optional[float]

    def to_dict(self) -> dict:
        return {
            "upm": self.upm,
            "mcc": self.mcc,
            "sensitivity": self.sensitivity,
            "specificity": self.specificity,
            "precision": self.precision,
            "npv": self.npv,
        }


def _check_pair(y, p):
    y = np.asarray(y, dtype=np.int64)
    p = np.asarray(p, dtype=np.float64)
    if y.shape != p.shape:
        raise LengthMismatchError(f"labels {y.shape} vs probabilities {p.shape}")
    if p.size and (p.min() < 0.0 or p.max() > 1.0):
        raise LengthMismatchError("probabilities must lie in [0, 1]")
    return y, p


def confusion(y, p, threshold: float = 0.5) -> ConfusionMatrix:
    y, p = _check_pair(y, p)
    pred = p > threshold  # strictly above
    tp = int(np.sum(pred & (y == 1)))
    fp = int(np.sum(pred & (y == 0)))
    tn = int(np.sum(~pred & (y == 0)))
    fn = int(np.sum(~pred & (y == 1)))
    return ConfusionMatrix(tp, fp, tn, fn, float(threshold))


def upm(cm: ConfusionMatrix) -> Optional[float]:
    """Unified performance measure, 4*TP*TN / (4*TP*TN + (TP+TN)*(FP+FN))."""
    if cm.total == 0:
        raise EmptyMatrixError("empty confusion matrix")
    num = 4.0 * cm.tp * cm.tn
    den = num + (cm.tp + cm.tn) * (cm.fp + cm.fn)
    if den == 0.0:
        return None
    return num / den


def _ratio(num: int, den: int) -> Optional[float]:
    return None if den == 0 else num / den


def companion_metrics(cm: ConfusionMatrix) -> MetricReport:
    if cm.total == 0:
        raise EmptyMatrixError("empty confusion matrix")
    mcc_den = (
        (cm.tp + cm.fp) * (cm.tp + cm.fn) * (cm.tn + cm.fp) * (cm.tn + cm.fn)
    )
    mcc = None
    if mcc_den > 0:
        mcc = (cm.tp * cm.tn - cm.fp * cm.fn) / math.sqrt(mcc_den)
    return MetricReport(
        upm=upm(cm),
        mcc=mcc,
        sensitivity=_ratio(cm.tp, cm.tp + cm.fn),
        specificity=_ratio(cm.tn, cm.tn + cm.fp),
        precision=_ratio(cm.tp, cm.tp + cm.fp),
        npv=_ratio(cm.tn, cm.tn + cm.fn),
    )


def default_threshold_grid() -> np.ndarray:
    return np.arange(101) / 100.0


def sweep_thresholds(y, p, grid=None):
    """One (threshold, MetricReport) per grid point; grid defaults to 0.00..1.00 step 0.01."""
    y, p = _check_pair(y, p)
    if grid is None:
        grid = default_threshold_grid()
    grid = np.asarray(grid, dtype=np.float64)
    if grid.size >= 2 and not np.all(np.diff(grid) > 0):
        raise LengthMismatchError("threshold grid must be strictly increasing")
    return [(float(t), companion_metrics(confusion(y, p, float(t)))) for t in grid]


def min_threshold_for_sensitivity(y, p, target: float = 0.70) -> float:
    """Largest candidate threshold whose sensitivity still meets `target`.

    Candidates are 0 plus the distinct observed scores; maximizing the
    threshold maximizes specificity subject to the sensitivity floor.
    """
    y, p = _check_pair(y, p)
    pos = np.sort(p[y == 1])
    if pos.size == 0:
        raise UnachievableError("no positive samples")
    candidates = np.unique(np.concatenate(([0.0], p)))
    for t in candidates[::-1]:
        # sensitivity at t: positives strictly above t
        sens = (pos.size - np.searchsorted(pos, t, side="right")) / pos.size
        if sens >= target:
            return float(t)
    raise UnachievableError(
        f"sensitivity {target} unreachable even at threshold 0 "
        "(positives scored exactly 0 are never predicted positive)"
    )


def min_threshold_for_specificity(y, p, target: float = 0.70) -> float:
    """Smallest candidate threshold whose specificity meets `target`."""
    y, p = _check_pair(y, p)
    neg = np.sort(p[y == 0])
    if neg.size == 0:
        raise UnachievableError("no negative samples")
    candidates = np.unique(np.concatenate(([0.0], p)))
    for t in candidates:
        spec = np.searchsorted(neg, t, side="right") / neg.size
        if spec >= target:
            return float(t)
    raise UnachievableError(f"specificity {target} unreachable on this data")
