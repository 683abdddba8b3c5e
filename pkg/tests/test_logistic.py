import numpy as np
import pytest

from nonunion.errors import DimensionMismatchError, SingleClassError
from nonunion.logistic import (
    LinearModel,
    LogisticConfig,
    linear_model_from_json,
    linear_model_to_json,
    logistic_gradient,
    predict_proba_linear,
    train_logistic,
)
from nonunion.preprocess import DesignMatrix


def _matrix(X, y, w=None):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=np.int64)
    if w is None:
        w = np.ones(len(y))
    names = tuple(f"x{i}" for i in range(X.shape[1]))
    return DesignMatrix(X, y, names, np.asarray(w, dtype=np.float64))


def _loss(X, y, s, w, b, lam):
    z = X @ w + b
    p = 1.0 / (1.0 + np.exp(-z))
    nll = -np.sum(s * (y * np.log(p) + (1 - y) * np.log(1 - p)))
    return nll + 0.5 * lam * np.dot(w, w)


class TestPredict:
    def test_zero_weights_give_half(self):
        m = LinearModel(weights=np.zeros(3), intercept=0.0, lam=1.0)
        p = predict_proba_linear(m, np.random.default_rng(0).normal(size=(5, 3)))
        assert np.all(p == 0.5)

    def test_direct_evaluation(self):
        m = LinearModel(weights=np.array([2.0]), intercept=-1.0, lam=0.0)
        p = predict_proba_linear(m, [[1.0]])
        assert p[0] == pytest.approx(1.0 / (1.0 + np.exp(-1.0)), abs=1e-12)
        assert p[0] == pytest.approx(0.731058579, abs=1e-9)

    def test_monotone_in_x(self):
        m = LinearModel(weights=np.array([1.0]), intercept=0.0, lam=0.0)
        xs = np.linspace(-8, 8, 33)[:, None]
        p = predict_proba_linear(m, xs)
        assert p[16] == 0.5
        assert np.all(np.diff(p) > 0)
        assert np.all((p > 0) & (p < 1))

    def test_dimension_mismatch(self):
        m = LinearModel(weights=np.zeros(3), intercept=0.0, lam=1.0)
        with pytest.raises(DimensionMismatchError):
            predict_proba_linear(m, np.zeros((2, 4)))


class TestGradientOracle:
    def test_matches_central_finite_differences(self):
        rng = np.random.default_rng(42)
        X = rng.normal(size=(5, 4))
        y = np.array([1.0, 0.0, 1.0, 1.0, 0.0])
        s = rng.uniform(0.5, 2.0, size=5)
        w = rng.normal(size=4)
        b = 0.3
        lam = 0.7
        grad_w, grad_b = logistic_gradient(X, y, s, w, b, lam)
        h = 1e-5
        for k in range(4):
            e = np.zeros(4)
            e[k] = h
            fd = (_loss(X, y, s, w + e, b, lam) - _loss(X, y, s, w - e, b, lam)) / (2 * h)
            assert abs(grad_w[k] - fd) / max(1.0, abs(fd)) < 1e-4
        fd_b = (_loss(X, y, s, w, b + h, lam) - _loss(X, y, s, w, b - h, lam)) / (2 * h)
        assert abs(grad_b - fd_b) / max(1.0, abs(fd_b)) < 1e-4


class TestTraining:
    def test_separable_1d(self):
        m = train_logistic(_matrix([-1.0, 1.0], [0, 1]))
        assert np.isfinite(m.weights).all()
        assert m.weights[0] > 0
        p = predict_proba_linear(m, [[-1.0], [1.0]])
        assert p[0] < 0.5 < p[1]
        assert m.converged

    def test_single_class_rejected(self):
        with pytest.raises(SingleClassError):
            train_logistic(_matrix([1.0, 2.0], [1, 1]))

    def test_monotone_loss_over_accepted_steps(self):
        rng = np.random.default_rng(3)
        X = rng.normal(size=(60, 4))
        y = (X[:, 0] + 0.5 * rng.normal(size=60) > 0).astype(int)
        dm = _matrix(X, y)
        losses = []
        for iters in range(1, 8):
            m = train_logistic(dm, LogisticConfig(max_iter=iters, tol=1e-14))
            losses.append(_loss(X, y.astype(float), dm.sample_weights, m.weights, m.intercept, 1.0))
        assert all(b <= a + 1e-9 for a, b in zip(losses, losses[1:]))

    def test_huge_lambda_shrinks_to_weighted_base_rate(self):
        rng = np.random.default_rng(5)
        X = rng.normal(size=(200, 3))
        y = (rng.random(200) < 0.3).astype(int)
        m = train_logistic(_matrix(X, y), LogisticConfig(lam=1e6))
        assert np.all(np.abs(m.weights) < 1e-3)
        p = predict_proba_linear(m, X)
        assert np.allclose(p, y.mean(), atol=1e-3)

    def test_doubling_weights_keeps_minimizer(self):
        rng = np.random.default_rng(6)
        X = rng.normal(size=(80, 3))
        y = (X @ np.array([1.0, -0.5, 0.2]) + rng.normal(size=80) > 0).astype(int)
        w = rng.uniform(0.5, 1.5, 80)
        m1 = train_logistic(_matrix(X, y, w))
        # doubling weights doubles the NLL term; with lam scaled alike the
        # optimum is identical
        m2 = train_logistic(_matrix(X, y, 2 * w), LogisticConfig(lam=2.0))
        assert np.allclose(m1.weights, m2.weights, atol=1e-7)
        assert m1.intercept == pytest.approx(m2.intercept, abs=1e-7)

    def test_row_permutation_invariance(self):
        rng = np.random.default_rng(7)
        X = rng.normal(size=(50, 3))
        y = (X[:, 0] > 0).astype(int)
        perm = rng.permutation(50)
        m1 = train_logistic(_matrix(X, y))
        m2 = train_logistic(_matrix(X[perm], y[perm]))
        assert np.allclose(m1.weights, m2.weights, atol=1e-7)

    def test_gradient_norm_below_tolerance(self):
        rng = np.random.default_rng(8)
        X = rng.normal(size=(100, 4))
        y = (X[:, 0] - X[:, 1] > 0).astype(int)
        m = train_logistic(_matrix(X, y))
        assert m.converged
        assert m.grad_norm <= 1e-8

    def test_deterministic(self):
        rng = np.random.default_rng(9)
        X = rng.normal(size=(40, 3))
        y = (X[:, 0] > 0).astype(int)
        m1 = train_logistic(_matrix(X, y))
        m2 = train_logistic(_matrix(X, y))
        assert np.array_equal(m1.weights, m2.weights)
        assert m1.intercept == m2.intercept


def test_serialization_round_trip():
    rng = np.random.default_rng(10)
    X = rng.normal(size=(30, 3))
    y = (X[:, 0] > 0).astype(int)
    m = train_logistic(_matrix(X, y))
    doc = linear_model_to_json(m)
    m2 = linear_model_from_json(doc)
    assert np.array_equal(m.weights, m2.weights)
    assert linear_model_to_json(m2) == doc
