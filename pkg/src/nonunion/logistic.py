"""L2-regularized logistic regression trained by Newton/IRLS with step halving.

The objective is the weighted negative log-likelihood plus (lam/2)*||w||^2
with the intercept left unpenalized.  Training starts from zero and is fully
deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatchError,
    DivergedError,
    InvalidConfigError,
    SingleClassError,
)
from .preprocess import DesignMatrix


@dataclass(frozen=True)
class LogisticConfig:
    lam: float = 1.0
    tol: float = 1e-8
    max_iter: int = 200


@dataclass
class LinearModel:
    weights: np.ndarray
    intercept: float
    lam: float
    column_names: tuple = ()
    iterations: int = 0
    grad_norm: float = float("nan")
    converged: bool = True

    def predict_proba(self, X) -> np.ndarray:
        return predict_proba_linear(self, X)


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _loss(z, y, s, w, lam):
    # -log p(y|z) accumulated via logaddexp for stability
    nll = np.sum(s * (y * np.logaddexp(0.0, -z) + (1.0 - y) * np.logaddexp(0.0, z)))
    return float(nll + 0.5 * lam * np.dot(w, w))


def logistic_gradient(X, y, s, w, b, lam):
    """Gradient of the penalized weighted NLL; returns (grad_w, grad_b)."""
    z = X @ w + b
    r = s * (_sigmoid(z) - y)
    return X.T @ r + lam * w, float(r.sum())


def train_logistic(X: DesignMatrix, config: LogisticConfig | None = None) -> LinearModel:
    config = config or LogisticConfig()
    if config.lam < 0 or config.tol <= 0 or config.max_iter < 1:
        raise InvalidConfigError(f"bad logistic config {config}")
    A = X.values
    y = X.labels.astype(np.float64)
    s = X.sample_weights
    if A.shape[0] < 2:
        raise SingleClassError("need at least two rows")
    if np.all(y == y[0]):
        raise SingleClassError("training labels contain a single class")
    if np.any(s <= 0):
        raise InvalidConfigError("sample weights must be positive")

    n, d = A.shape
    w = np.zeros(d)
    b = 0.0
    loss = _loss(A @ w + b, y, s, w, config.lam)
    grad_norm = float("inf")
    converged = False
    iterations = 0

    for iterations in range(1, config.max_iter + 1):
        z = A @ w + b
        p = _sigmoid(z)
        r = s * (p - y)
        grad_w = A.T @ r + config.lam * w
        grad_b = float(r.sum())
        grad_norm = float(np.sqrt(np.dot(grad_w, grad_w) + grad_b * grad_b))
        if grad_norm <= config.tol:
            converged = True
            iterations -= 1
            break

        h = s * p * (1.0 - p)
        # bordered Hessian over (w, b); intercept unpenalized
        H = np.empty((d + 1, d + 1))
        H[:d, :d] = (A * h[:, None]).T @ A
        H[:d, :d] += config.lam * np.eye(d)
        cross = A.T @ h
        H[:d, d] = cross
        H[d, :d] = cross
        H[d, d] = float(h.sum())
        g = np.append(grad_w, grad_b)
        try:
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, g, rcond=None)[0]

        t = 1.0
        improved = False
        for _ in range(40):
            w_new = w - t * step[:d]
            b_new = b - t * step[d]
            loss_new = _loss(A @ w_new + b_new, y, s, w_new, config.lam)
            if not np.isfinite(loss_new):
                raise DivergedError("non-finite training loss")
            if loss_new <= loss:
                w, b, loss = w_new, b_new, loss_new
                improved = True
                break
            t *= 0.5
        if not improved:
            break  # step halving exhausted: stuck at numerical precision

    if not converged:
        z = A @ w + b
        r = s * (_sigmoid(z) - y)
        grad_w = A.T @ r + config.lam * w
        grad_norm = float(np.sqrt(np.dot(grad_w, grad_w) + float(r.sum()) ** 2))
        converged = grad_norm <= config.tol

    return LinearModel(
        weights=w,
        intercept=float(b),
        lam=config.lam,
        column_names=tuple(X.column_names),
        iterations=iterations,
        grad_norm=grad_norm,
        converged=converged,
    )


def predict_proba_linear(model: LinearModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.weights.shape[0]:
        raise DimensionMismatchError(
            f"matrix has {X.shape[1] if X.ndim == 2 else '?'} columns, model expects {model.weights.shape[0]}"
        )
    return _sigmoid(X @ model.weights + model.intercept)


def linear_model_to_json(model: LinearModel) -> dict:
    return {
        "format": "nonunion-logistic/1",
        "weights": model.weights.tolist(),
        "intercept": model.intercept,
        "lam": model.lam,
        "columns": list(model.column_names),
        "iterations": model.iterations,
        "grad_norm": model.grad_norm,
        "converged": model.converged,
    }


def linear_model_from_json(doc) -> LinearModel:
    if doc.get("format") != "nonunion-logistic/1":
        raise InvalidConfigError(f"unsupported logistic format {doc.get('format')!r}")
    return LinearModel(
        weights=np.asarray(doc["weights"], dtype=np.float64),
        intercept=float(doc["intercept"]),
        lam=float(doc["lam"]),
        column_names=tuple(doc["columns"]),
        iterations=int(doc["iterations"]),
        grad_norm=float(doc["grad_norm"]),
        converged=bool(doc["converged"]),
    )
