"""Soft-margin support-vector classifier trained by SMO, with Platt scaling.

The dual problem (per-sample box constraints C*w_i) is solved by pairwise
coordinate ascent on the maximal-violating pair: the most violating index
from the "up" set against the most violating index from the "down" set,
ties broken by the lowest index, so training is deterministic.  Stopping is
on the KKT gap m - M <= tol.

Probabilities come from a logistic link over decision values,
p = 1 / (1 + exp(A*f + B)), fitted by Newton iterations with target
smoothing on out-of-fold decision values from a deterministic k-fold split
of the training data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from ._accel import njit, numba_enabled
from .errors import (
    DegenerateKernelError,
    DimensionMismatchError,
    InvalidConfigError,
    SingleClassError,
)
from .preprocess import DesignMatrix


@dataclass(frozen=True)
class SvmConfig:
    C: float = 1.0
    kernel: str = "rbf"
    gamma: Union[str, float] = "scale"
    tol: float = 1e-3
    max_passes: int = 200_000
    platt_folds: int = 3
    seed: int = 0


@dataclass
class SvmModel:
    support_vectors: np.ndarray
    dual_coef: np.ndarray     # alpha_i * y_i over retained vectors
    alpha: np.ndarray
    sv_labels: np.ndarray     # +-1
    sv_box: np.ndarray        # per-vector upper bound C * w_i
    bias: float
    kernel: str
    gamma: float              # 0.0 for the linear kernel
    C: float
    platt_a: float
    platt_b: float
    iterations: int = 0
    kkt_gap: float = float("nan")
    converged: bool = True
    column_names: tuple = ()

    def decision_function(self, X) -> np.ndarray:
        return decision_function(self, X)

    def predict_proba(self, X) -> np.ndarray:
        return predict_proba_svm(self, X)


# ---------------------------------------------------------------------------
# kernels

def kernel_matrix(kind: str, gamma: float, A, B) -> np.ndarray:
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if kind == "linear":
        return A @ B.T
    if kind == "rbf":
        sq = (
            (A * A).sum(axis=1)[:, None]
            + (B * B).sum(axis=1)[None, :]
            - 2.0 * (A @ B.T)
        )
        np.maximum(sq, 0.0, out=sq)
        return np.exp(-gamma * sq)
    raise InvalidConfigError(f"unknown kernel {kind!r}")


def resolve_gamma(gamma, X) -> float:
    if gamma == "scale":
        var = float(np.var(X))
        if var <= 0.0 or not math.isfinite(var):
            raise DegenerateKernelError("gamma='scale' undefined: zero-variance matrix")
        value = 1.0 / (X.shape[1] * var)
    else:
        value = float(gamma)
    if not math.isfinite(value) or value <= 0.0:
        raise DegenerateKernelError(f"gamma must be finite and positive, got {value}")
    return value


# ---------------------------------------------------------------------------
# SMO solver (numba kernel + numpy twin)

@njit(cache=True, nogil=True)
def _smo_loop(K, ys, box, tol, max_iter):  # pragma: no cover - compiled
    n = ys.shape[0]
    alpha = np.zeros(n)
    G = -np.ones(n)
    it = 0
    while it < max_iter:
        i = -1
        j = -1
        m = -1e300
        M = 1e300
        for t in range(n):
            v = -ys[t] * G[t]
            if (ys[t] > 0.0 and alpha[t] < box[t]) or (ys[t] < 0.0 and alpha[t] > 0.0):
                if v > m:
                    m = v
                    i = t
            if (ys[t] < 0.0 and alpha[t] < box[t]) or (ys[t] > 0.0 and alpha[t] > 0.0):
                if v < M:
                    M = v
                    j = t
        if i < 0 or j < 0 or m - M <= tol:
            break
        quad = K[i, i] + K[j, j] - 2.0 * K[i, j]
        if quad <= 0.0:
            quad = 1e-12
        old_ai = alpha[i]
        old_aj = alpha[j]
        if ys[i] != ys[j]:
            delta = (-G[i] - G[j]) / quad
            diff = old_ai - old_aj
            ai = old_ai + delta
            aj = old_aj + delta
            if diff > 0.0:
                if aj < 0.0:
                    aj = 0.0
                    ai = diff
            else:
                if ai < 0.0:
                    ai = 0.0
                    aj = -diff
            if diff > box[i] - box[j]:
                if ai > box[i]:
                    ai = box[i]
                    aj = box[i] - diff
            else:
                if aj > box[j]:
                    aj = box[j]
                    ai = box[j] + diff
        else:
            delta = (G[i] - G[j]) / quad
            s = old_ai + old_aj
            ai = old_ai - delta
            aj = old_aj + delta
            if s > box[i]:
                if ai > box[i]:
                    ai = box[i]
                    aj = s - box[i]
            else:
                if aj < 0.0:
                    aj = 0.0
                    ai = s
            if s > box[j]:
                if aj > box[j]:
                    aj = box[j]
                    ai = s - box[j]
            else:
                if ai < 0.0:
                    ai = 0.0
                    aj = s
        dai = ai - old_ai
        daj = aj - old_aj
        alpha[i] = ai
        alpha[j] = aj
        for t in range(n):
            G[t] += ys[t] * (ys[i] * K[t, i] * dai + ys[j] * K[t, j] * daj)
        it += 1
    return alpha, G, it


def _smo_numpy(K, ys, box, tol, max_iter):
    n = ys.shape[0]
    alpha = np.zeros(n)
    G = -np.ones(n)
    it = 0
    while it < max_iter:
        v = -ys * G
        up = ((ys > 0.0) & (alpha < box)) | ((ys < 0.0) & (alpha > 0.0))
        low = ((ys < 0.0) & (alpha < box)) | ((ys > 0.0) & (alpha > 0.0))
        if not up.any() or not low.any():
            break
        i = int(np.where(up, v, -np.inf).argmax())
        j = int(np.where(low, v, np.inf).argmin())
        if v[i] - v[j] <= tol:
            break
        quad = K[i, i] + K[j, j] - 2.0 * K[i, j]
        if quad <= 0.0:
            quad = 1e-12
        old_ai = alpha[i]
        old_aj = alpha[j]
        if ys[i] != ys[j]:
            delta = (-G[i] - G[j]) / quad
            diff = old_ai - old_aj
            ai = old_ai + delta
            aj = old_aj + delta
            if diff > 0.0:
                if aj < 0.0:
                    aj, ai = 0.0, diff
            else:
                if ai < 0.0:
                    ai, aj = 0.0, -diff
            if diff > box[i] - box[j]:
                if ai > box[i]:
                    ai, aj = box[i], box[i] - diff
            else:
                if aj > box[j]:
                    aj, ai = box[j], box[j] + diff
        else:
            delta = (G[i] - G[j]) / quad
            s = old_ai + old_aj
            ai = old_ai - delta
            aj = old_aj + delta
            if s > box[i]:
                if ai > box[i]:
                    ai, aj = box[i], s - box[i]
            else:
                if aj < 0.0:
                    aj, ai = 0.0, s
            if s > box[j]:
                if aj > box[j]:
                    aj, ai = box[j], s - box[j]
            else:
                if ai < 0.0:
                    ai, aj = 0.0, s
        dai = ai - old_ai
        daj = aj - old_aj
        alpha[i] = ai
        alpha[j] = aj
        G += ys * (ys[i] * K[:, i] * dai + ys[j] * K[:, j] * daj)
        it += 1
    return alpha, G, it


def _solve_dual(K, ys, box, tol, max_iter):
    if numba_enabled():
        alpha, G, it = _smo_loop(K, ys, box, tol, max_iter)
    else:
        alpha, G, it = _smo_numpy(K, ys, box, tol, max_iter)
    v = -ys * G
    up = ((ys > 0.0) & (alpha < box)) | ((ys < 0.0) & (alpha > 0.0))
    low = ((ys < 0.0) & (alpha < box)) | ((ys > 0.0) & (alpha > 0.0))
    m = float(v[up].max()) if up.any() else 0.0
    M = float(v[low].min()) if low.any() else 0.0
    gap = m - M
    free = (alpha > 1e-12) & (alpha < box - 1e-12)
    if free.any():
        bias = float(v[free].mean())
    else:
        bias = 0.5 * (m + M)
    return alpha, bias, gap, it


# ---------------------------------------------------------------------------
# Platt scaling

def fit_platt(decision_values, labels):
    """Fit p = 1/(1+exp(A*f+B)) by Newton descent with smoothed targets.

    Returns (A, B).  A comes out negative when higher decision values mean
    higher positive-class probability.
    """
    f = np.asarray(decision_values, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise SingleClassError("Platt scaling needs both classes present")

    hi = (n_pos + 1.0) / (n_pos + 2.0)
    lo = 1.0 / (n_neg + 2.0)
    t = np.where(y == 1, hi, lo)

    def objective(a, b):
        z = a * f + b
        # t*z + log(1+exp(-z)) computed stably on both tails
        return float(np.sum(np.where(z >= 0, t * z + np.logaddexp(0.0, -z),
                                     (t - 1.0) * z + np.logaddexp(0.0, z))))

    a = 0.0
    b = math.log((n_neg + 1.0) / (n_pos + 1.0))
    fval = objective(a, b)
    sigma = 1e-12
    for _ in range(100):
        z = a * f + b
        p = np.empty_like(z)
        q = np.empty_like(z)
        posm = z >= 0
        ez = np.exp(-z[posm])
        p[posm] = ez / (1.0 + ez)
        q[posm] = 1.0 / (1.0 + ez)
        ez = np.exp(z[~posm])
        p[~posm] = 1.0 / (1.0 + ez)
        q[~posm] = ez / (1.0 + ez)
        d2 = p * q
        h11 = sigma + float(np.sum(f * f * d2))
        h22 = sigma + float(np.sum(d2))
        h21 = float(np.sum(f * d2))
        d1 = t - p
        g1 = float(np.sum(f * d1))
        g2 = float(np.sum(d1))
        if abs(g1) < 1e-5 and abs(g2) < 1e-5:
            break
        det = h11 * h22 - h21 * h21
        da = -(h22 * g1 - h21 * g2) / det
        db = -(-h21 * g1 + h11 * g2) / det
        gd = g1 * da + g2 * db
        step = 1.0
        while step >= 1e-10:
            new_a = a + step * da
            new_b = b + step * db
            new_f = objective(new_a, new_b)
            if new_f < fval + 1e-4 * step * gd:
                a, b, fval = new_a, new_b, new_f
                break
            step *= 0.5
        else:
            break
    return float(a), float(b)


def _fold_assignment(y, n_folds, seed):
    """Deterministic stratified fold ids: seeded shuffle, round robin per class."""
    rng = np.random.default_rng(seed)
    folds = np.empty(y.shape[0], dtype=np.int64)
    for cls in (0, 1):
        members = np.flatnonzero(y == cls)
        members = members[rng.permutation(members.size)]
        folds[members] = np.arange(members.size) % n_folds
    return folds


# ---------------------------------------------------------------------------
# training / prediction

def train_svm(X: DesignMatrix, config: SvmConfig | None = None) -> SvmModel:
    config = config or SvmConfig()
    if config.C <= 0 or config.tol <= 0 or config.max_passes < 1:
        raise InvalidConfigError(f"bad SVM config {config}")
    A = np.ascontiguousarray(X.values, dtype=np.float64)
    y = X.labels
    if np.all(y == y[0]):
        raise SingleClassError("training labels contain a single class")
    ys = np.where(y == 1, 1.0, -1.0)
    box = config.C * X.sample_weights
    gamma = resolve_gamma(config.gamma, A) if config.kernel == "rbf" else 0.0

    K = kernel_matrix(config.kernel, gamma, A, A)
    alpha, bias, gap, iterations = _solve_dual(K, ys, box, config.tol, config.max_passes)
    converged = gap <= config.tol

    # Platt link on out-of-fold decision values; falls back to in-sample
    # values when the data cannot support two stratified folds.
    n_folds = min(config.platt_folds, int((y == 1).sum()), int((y == 0).sum()))
    if n_folds >= 2:
        folds = _fold_assignment(y, n_folds, config.seed)
        f_link = np.empty(y.shape[0])
        for k in range(n_folds):
            tr = np.flatnonzero(folds != k)
            te = np.flatnonzero(folds == k)
            K_tr = np.ascontiguousarray(K[np.ix_(tr, tr)])
            a_k, b_k, _, _ = _solve_dual(K_tr, ys[tr], box[tr], config.tol, config.max_passes)
            f_link[te] = K[np.ix_(te, tr)] @ (a_k * ys[tr]) + b_k
    else:
        f_link = K @ (alpha * ys) + bias
    platt_a, platt_b = fit_platt(f_link, y)

    keep = alpha > 1e-12
    return SvmModel(
        support_vectors=A[keep],
        dual_coef=(alpha * ys)[keep],
        alpha=alpha[keep],
        sv_labels=ys[keep],
        sv_box=box[keep],
        bias=bias,
        kernel=config.kernel,
        gamma=gamma,
        C=config.C,
        platt_a=platt_a,
        platt_b=platt_b,
        iterations=iterations,
        kkt_gap=gap,
        converged=converged,
        column_names=tuple(X.column_names),
    )


def decision_function(model: SvmModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise DimensionMismatchError("expected a 2-D matrix")
    d = model.support_vectors.shape[1] if model.support_vectors.size else X.shape[1]
    if X.shape[1] != d:
        raise DimensionMismatchError(f"matrix has {X.shape[1]} columns, model expects {d}")
    if model.support_vectors.shape[0] == 0:
        return np.full(X.shape[0], model.bias)
    K = kernel_matrix(model.kernel, model.gamma, X, model.support_vectors)
    return K @ model.dual_coef + model.bias


def predict_proba_svm(model: SvmModel, X) -> np.ndarray:
    f = decision_function(model, X)
    z = model.platt_a * f + model.platt_b
    out = np.empty_like(z)
    posm = z >= 0
    out[posm] = np.exp(-z[posm]) / (1.0 + np.exp(-z[posm]))
    out[~posm] = 1.0 / (1.0 + np.exp(z[~posm]))
    return out


# ---------------------------------------------------------------------------
# serialization

def svm_model_to_json(model: SvmModel) -> dict:
    return {
        "format": "nonunion-svm/1",
        "support_vectors": model.support_vectors.tolist(),
        "dual_coef": model.dual_coef.tolist(),
        "alpha": model.alpha.tolist(),
        "sv_labels": model.sv_labels.tolist(),
        "sv_box": model.sv_box.tolist(),
        "bias": model.bias,
        "kernel": model.kernel,
        "gamma": model.gamma,
        "C": model.C,
        "platt": {"A": model.platt_a, "B": model.platt_b},
        "iterations": model.iterations,
        "kkt_gap": model.kkt_gap,
        "converged": model.converged,
        "columns": list(model.column_names),
    }


def svm_model_from_json(doc) -> SvmModel:
    if doc.get("format") != "nonunion-svm/1":
        raise InvalidConfigError(f"unsupported SVM format {doc.get('format')!r}")
    sv = np.asarray(doc["support_vectors"], dtype=np.float64)
    if sv.size == 0:
        sv = sv.reshape(0, len(doc["columns"]))
    return SvmModel(
        support_vectors=sv,
        dual_coef=np.asarray(doc["dual_coef"], dtype=np.float64),
        alpha=np.asarray(doc["alpha"], dtype=np.float64),
        sv_labels=np.asarray(doc["sv_labels"], dtype=np.float64),
        sv_box=np.asarray(doc["sv_box"], dtype=np.float64),
        bias=float(doc["bias"]),
        kernel=doc["kernel"],
        gamma=float(doc["gamma"]),
        C=float(doc["C"]),
        platt_a=float(doc["platt"]["A"]),
        platt_b=float(doc["platt"]["B"]),
        iterations=int(doc["iterations"]),
        kkt_gap=float(doc["kkt_gap"]),
        converged=bool(doc["converged"]),
        column_names=tuple(doc["columns"]),
    )
