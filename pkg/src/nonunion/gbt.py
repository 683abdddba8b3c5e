"""Gradient-boosted regression trees with logistic loss.

Second-order boosting: per round, gradients g_i = w_i (p_i - y_i) and
hessians h_i = w_i p_i (1 - p_i) drive an exact greedy split search
maximizing

    gain = 0.5 * [ GL^2/(HL+lam) + GR^2/(HR+lam) - (GL+GR)^2/(HL+HR+lam) ]

with leaf values -G/(H+lam).  Splits with non-positive gain or a child
hessian sum below ``min_child_weight`` are rejected; ties break to the
lowest column index, then the lowest threshold, so training is fully
deterministic.  The learning rate is applied in the additive sum, not baked
into the stored leaf values.

The split search and tree traversal are the hot loops; both ship as an
``@njit`` kernel plus a vectorized numpy twin (see ``_accel``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._accel import njit, numba_enabled
from .errors import DimensionMismatchError, InvalidConfigError, SingleClassError
from .preprocess import DesignMatrix


@dataclass(frozen=True)
class GbtConfig:
    n_rounds: int = 100
    learning_rate: float = 0.3
    max_depth: int = 5
    lam: float = 1.0
    min_child_weight: float = 1.0


@dataclass
class RegressionTree:
    """Flat node arrays; feature == -1 marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    missing_left: np.ndarray  # inputs are pre-imputed; kept for serialization

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]

    def depth(self) -> int:
        def walk(node, d):
            if self.feature[node] < 0:
                return d
            return max(walk(self.left[node], d + 1), walk(self.right[node], d + 1))

        return walk(0, 0)


@dataclass
class GbtModel:
    trees: list
    learning_rate: float
    base_score: float
    lam: float
    min_child_weight: float
    max_depth: int
    column_names: tuple = ()

    @property
    def n_rounds(self) -> int:
        return len(self.trees)

    def predict_proba(self, X) -> np.ndarray:
        return predict_proba_gbt(self, X)


# ---------------------------------------------------------------------------
# split search kernels

@njit(cache=True, nogil=True)
def _best_split_loop(X, order, in_node, g, h, lam, mcw):  # pragma: no cover - compiled
    n, d = X.shape
    gt = 0.0
    ht = 0.0
    for i in range(n):
        if in_node[i]:
            gt += g[i]
            ht += h[i]
    parent = gt * gt / (ht + lam)
    best_gain = 0.0
    best_col = -1
    best_thr = 0.0
    for c in range(d):
        gl = 0.0
        hl = 0.0
        count = 0
        last_val = 0.0
        for k in range(n):
            row = order[c, k]
            if not in_node[row]:
                continue
            v = X[row, c]
            if count > 0 and v != last_val:
                gr = gt - gl
                hr = ht - hl
                if hl >= mcw and hr >= mcw:
                    gain = 0.5 * (gl * gl / (hl + lam) + gr * gr / (hr + lam) - parent)
                    if gain > best_gain:
                        thr = 0.5 * (last_val + v)
                        if not thr > last_val:
                            thr = v
                        best_gain = gain
                        best_col = c
                        best_thr = thr
            gl += g[row]
            hl += h[row]
            last_val = v
            count += 1
    return best_col, best_thr, best_gain


def _best_split_numpy(X, order, in_node, g, h, lam, mcw):
    rows_any = np.flatnonzero(in_node)
    gt = float(np.cumsum(g[rows_any])[-1]) if rows_any.size else 0.0
    ht = float(np.cumsum(h[rows_any])[-1]) if rows_any.size else 0.0
    parent = gt * gt / (ht + lam)
    best_gain = 0.0
    best_col = -1
    best_thr = 0.0
    for c in range(X.shape[1]):
        srt = order[c]
        rows = srt[in_node[srt]]
        if rows.size < 2:
            continue
        vals = X[rows, c]
        gl = np.cumsum(g[rows])
        hl = np.cumsum(h[rows])
        boundary = np.flatnonzero(vals[:-1] != vals[1:])
        if boundary.size == 0:
            continue
        gl_b = gl[boundary]
        hl_b = hl[boundary]
        gr_b = gt - gl_b
        hr_b = ht - hl_b
        ok = (hl_b >= mcw) & (hr_b >= mcw)
        if not ok.any():
            continue
        gain = np.where(
            ok,
            0.5 * (gl_b**2 / (hl_b + lam) + gr_b**2 / (hr_b + lam) - parent),
            -np.inf,
        )
        k = int(np.argmax(gain))  # first max = lowest threshold
        if gain[k] > best_gain:
            lo = vals[boundary[k]]
            hi = vals[boundary[k] + 1]
            thr = 0.5 * (lo + hi)
            if not thr > lo:
                thr = hi
            best_gain = float(gain[k])
            best_col = c
            best_thr = float(thr)
    return best_col, best_thr, best_gain


def _best_split(X, order, in_node, g, h, lam, mcw):
    if numba_enabled():
        return _best_split_loop(X, order, in_node, g, h, lam, mcw)
    return _best_split_numpy(X, order, in_node, g, h, lam, mcw)


# ---------------------------------------------------------------------------
# traversal kernels

@njit(cache=True, nogil=True)
def _tree_apply_loop(feature, threshold, left, right, value, X, out):  # pragma: no cover
    n = X.shape[0]
    for i in range(n):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] < threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = value[node]


def _tree_apply_numpy(feature, threshold, left, right, value, X, out):
    n = X.shape[0]
    stack = [(0, np.arange(n))]
    while stack:
        node, rows = stack.pop()
        if feature[node] < 0:
            out[rows] = value[node]
            continue
        goes_left = X[rows, feature[node]] < threshold[node]
        stack.append((left[node], rows[goes_left]))
        stack.append((right[node], rows[~goes_left]))


def tree_apply(tree: RegressionTree, X) -> np.ndarray:
    out = np.empty(X.shape[0], dtype=np.float64)
    if numba_enabled():
        _tree_apply_loop(tree.feature, tree.threshold, tree.left, tree.right, tree.value, X, out)
    else:
        _tree_apply_numpy(tree.feature, tree.threshold, tree.left, tree.right, tree.value, X, out)
    return out


# ---------------------------------------------------------------------------
# training

def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _grow_tree(X, order, g, h, config: GbtConfig) -> RegressionTree:
    feature = []
    threshold = []
    left = []
    right = []
    value = []

    def build(mask, depth):
        idx = len(feature)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        col = -1
        if depth < config.max_depth:
            col, thr, _gain = _best_split(
                X, order, mask, g, h, config.lam, config.min_child_weight
            )
        if col < 0:
            gs = float(g[mask].sum())
            hs = float(h[mask].sum())
            value[idx] = -gs / (hs + config.lam)
            return idx
        feature[idx] = col
        threshold[idx] = thr
        goes_left = mask & (X[:, col] < thr)
        left[idx] = build(goes_left, depth + 1)
        right[idx] = build(mask & ~goes_left, depth + 1)
        return idx

    build(np.ones(X.shape[0], dtype=bool), 0)
    n_nodes = len(feature)
    return RegressionTree(
        feature=np.asarray(feature, dtype=np.int64),
        threshold=np.asarray(threshold, dtype=np.float64),
        left=np.asarray(left, dtype=np.int64),
        right=np.asarray(right, dtype=np.int64),
        value=np.asarray(value, dtype=np.float64),
        missing_left=np.ones(n_nodes, dtype=np.bool_),
    )


def train_gbt(X: DesignMatrix, config: GbtConfig | None = None) -> GbtModel:
    config = config or GbtConfig()
    if config.n_rounds < 0 or config.max_depth < 0:
        raise InvalidConfigError(f"bad boosting config {config}")
    if config.learning_rate <= 0 or config.lam < 0 or config.min_child_weight < 0:
        raise InvalidConfigError(f"bad boosting config {config}")
    A = np.ascontiguousarray(X.values, dtype=np.float64)
    y = X.labels.astype(np.float64)
    w = X.sample_weights
    if np.all(X.labels == X.labels[0]):
        raise SingleClassError("training labels contain a single class")

    base_rate = float(np.dot(w, y) / w.sum())
    base_score = float(np.log(base_rate / (1.0 - base_rate)))
    order = np.ascontiguousarray(np.argsort(A, axis=0, kind="stable").T)

    margins = np.full(A.shape[0], base_score)
    trees = []
    for _ in range(config.n_rounds):
        p = _sigmoid(margins)
        g = w * (p - y)
        h = w * p * (1.0 - p)
        tree = _grow_tree(A, order, g, h, config)
        trees.append(tree)
        margins = margins + config.learning_rate * tree_apply(tree, A)

    return GbtModel(
        trees=trees,
        learning_rate=config.learning_rate,
        base_score=base_score,
        lam=config.lam,
        min_child_weight=config.min_child_weight,
        max_depth=config.max_depth,
        column_names=tuple(X.column_names),
    )


def predict_margin_gbt(model: GbtModel, X) -> np.ndarray:
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise DimensionMismatchError("expected a 2-D matrix")
    if model.column_names and X.shape[1] != len(model.column_names):
        raise DimensionMismatchError(
            f"matrix has {X.shape[1]} columns, model expects {len(model.column_names)}"
        )
    margins = np.full(X.shape[0], model.base_score)
    for tree in model.trees:
        margins += model.learning_rate * tree_apply(tree, X)
    return margins


def predict_proba_gbt(model: GbtModel, X) -> np.ndarray:
    return _sigmoid(predict_margin_gbt(model, X))


# ---------------------------------------------------------------------------
# serialization

def _node_to_json(tree: RegressionTree, idx: int) -> dict:
    if tree.feature[idx] < 0:
        return {"leaf": float(tree.value[idx])}
    return {
        "split": {
            "column": int(tree.feature[idx]),
            "threshold": float(tree.threshold[idx]),
            "missing_goes_left": bool(tree.missing_left[idx]),
        },
        "left": _node_to_json(tree, int(tree.left[idx])),
        "right": _node_to_json(tree, int(tree.right[idx])),
    }


def _node_from_json(doc, arrays):
    idx = len(arrays["feature"])
    for key in ("feature", "threshold", "left", "right", "value", "missing_left"):
        arrays[key].append(None)
    if "leaf" in doc:
        arrays["feature"][idx] = -1
        arrays["threshold"][idx] = 0.0
        arrays["left"][idx] = -1
        arrays["right"][idx] = -1
        arrays["value"][idx] = float(doc["leaf"])
        arrays["missing_left"][idx] = True
        return idx
    split = doc["split"]
    arrays["feature"][idx] = int(split["column"])
    arrays["threshold"][idx] = float(split["threshold"])
    arrays["value"][idx] = 0.0
    arrays["missing_left"][idx] = bool(split["missing_goes_left"])
    arrays["left"][idx] = _node_from_json(doc["left"], arrays)
    arrays["right"][idx] = _node_from_json(doc["right"], arrays)
    return idx


def gbt_model_to_json(model: GbtModel) -> dict:
    return {
        "format": "nonunion-gbt/1",
        "trees": [_node_to_json(t, 0) for t in model.trees],
        "learning_rate": model.learning_rate,
        "base_score": model.base_score,
        "lam": model.lam,
        "min_child_weight": model.min_child_weight,
        "max_depth": model.max_depth,
        "columns": list(model.column_names),
    }


def gbt_model_from_json(doc) -> GbtModel:
    if doc.get("format") != "nonunion-gbt/1":
        raise InvalidConfigError(f"unsupported boosted-tree format {doc.get('format')!r}")
    trees = []
    for tree_doc in doc["trees"]:
        arrays = {k: [] for k in ("feature", "threshold", "left", "right", "value", "missing_left")}
        _node_from_json(tree_doc, arrays)
        trees.append(RegressionTree(
            feature=np.asarray(arrays["feature"], dtype=np.int64),
            threshold=np.asarray(arrays["threshold"], dtype=np.float64),
            left=np.asarray(arrays["left"], dtype=np.int64),
            right=np.asarray(arrays["right"], dtype=np.int64),
            value=np.asarray(arrays["value"], dtype=np.float64),
            missing_left=np.asarray(arrays["missing_left"], dtype=np.bool_),
        ))
    return GbtModel(
        trees=trees,
        learning_rate=float(doc["learning_rate"]),
        base_score=float(doc["base_score"]),
        lam=float(doc["lam"]),
        min_child_weight=float(doc["min_child_weight"]),
        max_depth=int(doc["max_depth"]),
        column_names=tuple(doc["columns"]),
    )
