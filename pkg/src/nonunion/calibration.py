"""Calibration analysis: LOWESS smoothing and the mean-bias odds ratio.

LOWESS: for each point, the k = ceil(frac*n) nearest neighbours by |x - xi|
(ties with the k-th distance are all included) get tricube distance weights
(1 - (d/dmax)^3)^3 and feed a weighted local linear fit evaluated at xi.
Each robustness iteration multiplies the distance weights by bisquare
weights (1 - (r/(6*median|r|))^2)^2 computed from the previous residuals;
an exact fit (median |r| = 0) short-circuits.

The per-point smoothing loop is the hot path; it ships as an ``@njit``
kernel plus a pure-numpy twin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._accel import njit, numba_enabled
from .errors import (
    DegenerateMeanError,
    InvalidFractionError,
    LengthMismatchError,
    TooFewPointsError,
)


@dataclass
class CalibrationReport:
    predicted: np.ndarray       # sorted ascending
    outcome: np.ndarray         # aligned with predicted
    smoothed_raw: np.ndarray
    smoothed_clamped: np.ndarray
    odds_ratio: float


@njit(cache=True, nogil=True)
def _lowess_pass_loop(xs, ys, k, delta, out):  # pragma: no cover - compiled
    # x and y are both centered on the query point, so constant data comes
    # back bit-exact and the normal equations stay well conditioned
    n = xs.shape[0]
    for i in range(n):
        lo = i
        hi = i
        for _ in range(k - 1):
            if lo == 0:
                hi += 1
            elif hi == n - 1:
                lo -= 1
            elif xs[i] - xs[lo - 1] <= xs[hi + 1] - xs[i]:
                lo -= 1
            else:
                hi += 1
        d_max = max(xs[i] - xs[lo], xs[hi] - xs[i])
        while lo > 0 and xs[i] - xs[lo - 1] <= d_max:
            lo -= 1
        while hi < n - 1 and xs[hi + 1] - xs[i] <= d_max:
            hi += 1

        if d_max <= 0.0:
            sw = 0.0
            swy = 0.0
            for j in range(lo, hi + 1):
                sw += delta[j]
                swy += delta[j] * (ys[j] - ys[i])
            if sw <= 0.0:
                sw = float(hi - lo + 1)
                swy = 0.0
                for j in range(lo, hi + 1):
                    swy += ys[j] - ys[i]
            out[i] = ys[i] + swy / sw
            continue

        sw = 0.0
        swu = 0.0
        swu2 = 0.0
        swy = 0.0
        swuy = 0.0
        for j in range(lo, hi + 1):
            u = xs[j] - xs[i]
            v = ys[j] - ys[i]
            t = abs(u) / d_max
            w = (1.0 - t * t * t) ** 3 * delta[j]
            sw += w
            swu += w * u
            swu2 += w * u * u
            swy += w * v
            swuy += w * u * v
        if sw <= 0.0:
            # robustness wiped the window: fall back to plain tricube weights
            swu = swu2 = swy = swuy = 0.0
            for j in range(lo, hi + 1):
                u = xs[j] - xs[i]
                v = ys[j] - ys[i]
                t = abs(u) / d_max
                w = (1.0 - t * t * t) ** 3
                sw += w
                swu += w * u
                swu2 += w * u * u
                swy += w * v
                swuy += w * u * v
        denom = sw * swu2 - swu * swu
        if denom > 0.0:
            out[i] = ys[i] + (swu2 * swy - swu * swuy) / denom
        else:
            out[i] = ys[i] + swy / sw


def _lowess_pass_numpy(xs, ys, k, delta, out):
    n = xs.shape[0]
    for i in range(n):
        lo = i
        hi = i
        for _ in range(k - 1):
            if lo == 0:
                hi += 1
            elif hi == n - 1:
                lo -= 1
            elif xs[i] - xs[lo - 1] <= xs[hi + 1] - xs[i]:
                lo -= 1
            else:
                hi += 1
        d_max = max(xs[i] - xs[lo], xs[hi] - xs[i])
        lo = int(np.searchsorted(xs, xs[i] - d_max, side="left"))
        hi = int(np.searchsorted(xs, xs[i] + d_max, side="right")) - 1

        u = xs[lo:hi + 1] - xs[i]
        yv = ys[lo:hi + 1] - ys[i]
        dw = delta[lo:hi + 1]
        if d_max <= 0.0:
            sw = dw.sum()
            out[i] = ys[i] + ((dw @ yv) / sw if sw > 0.0 else yv.mean())
            continue
        t = np.abs(u) / d_max
        w = (1.0 - t**3) ** 3 * dw
        sw = w.sum()
        if sw <= 0.0:
            w = (1.0 - t**3) ** 3
            sw = w.sum()
        swu = w @ u
        swu2 = w @ (u * u)
        swy = w @ yv
        swuy = (w * u) @ yv
        denom = sw * swu2 - swu * swu
        out[i] = ys[i] + ((swu2 * swy - swu * swuy) / denom if denom > 0.0 else swy / sw)


def lowess(x, y, frac: float = 2.0 / 3.0, robust_iters: int = 3) -> np.ndarray:
    """Robust locally weighted linear regression evaluated at each x.

    Returns raw (unclamped) smoothed values aligned with the input order.
    Output is invariant to permuting the (x, y) pairs.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise LengthMismatchError("x and y must be 1-D with equal length")
    n = x.shape[0]
    if n < 3:
        raise TooFewPointsError(f"need at least 3 points, got {n}")
    if not 0.0 < frac <= 1.0:
        raise InvalidFractionError(f"frac must be in (0, 1], got {frac}")
    if robust_iters < 0:
        raise InvalidFractionError("robust_iters must be non-negative")

    order = np.argsort(x, kind="stable")
    xs = np.ascontiguousarray(x[order])
    ys = np.ascontiguousarray(y[order])
    k = max(2, math.ceil(frac * n))
    delta = np.ones(n)
    yhat = np.empty(n)
    for iteration in range(robust_iters + 1):
        if numba_enabled():
            _lowess_pass_loop(xs, ys, k, delta, yhat)
        else:
            _lowess_pass_numpy(xs, ys, k, delta, yhat)
        if iteration == robust_iters:
            break
        resid = ys - yhat
        s = float(np.median(np.abs(resid)))
        if s <= 0.0:
            break
        delta = np.clip(1.0 - (resid / (6.0 * s)) ** 2, 0.0, None) ** 2

    out = np.empty(n)
    out[order] = yhat
    return out


def calibration_odds_ratio(y, p) -> float:
    """odds(mean predicted risk) / odds(mean observed incidence)."""
    y = np.asarray(y, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    if y.shape != p.shape:
        raise LengthMismatchError("labels and probabilities differ in length")
    my = float(y.mean())
    mp = float(p.mean())
    if not 0.0 < my < 1.0 or not 0.0 < mp < 1.0:
        raise DegenerateMeanError(f"means must lie strictly in (0, 1): mean(y)={my}, mean(p)={mp}")
    return (mp / (1.0 - mp)) / (my / (1.0 - my))


def calibration_report(y, p, frac: float = 2.0 / 3.0, robust_iters: int = 3) -> CalibrationReport:
    y = np.asarray(y, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    ratio = calibration_odds_ratio(y, p)
    order = np.argsort(p, kind="stable")
    predicted = p[order]
    outcome = y[order]
    smoothed = lowess(predicted, outcome, frac=frac, robust_iters=robust_iters)
    return CalibrationReport(
        predicted=predicted,
        outcome=outcome,
        smoothed_raw=smoothed,
        smoothed_clamped=np.clip(smoothed, 0.0, 1.0),
        odds_ratio=ratio,
    )
