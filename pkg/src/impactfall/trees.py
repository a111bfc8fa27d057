"""CART trees, random forest and logistic gradient boosting.

Splits send ``x[feature] <= threshold`` left. Thresholds are midpoints of
consecutive distinct sorted values; equal-gain candidates resolve to the
lowest feature index, then the lowest threshold.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .base import Classifier, check_xy, floats, ints, register
from .errors import DataError

# gains closer than this are treated as ties
TIE_EPS = 1e-12


def gini(counts) -> float:
    counts = np.asarray(counts, dtype=float)
    total = counts.sum()
    if total <= 0:
        raise DataError("gini of an empty distribution")
    p = counts / total
    return float(1.0 - np.sum(p * p))


def _midpoint(lo: float, hi: float) -> float:
    mid = (lo + hi) / 2.0
    # adjacent floats: the midpoint rounds up to hi and would misroute it
    return lo if mid >= hi else mid


def _scan_gini(xs: np.ndarray, ys: np.ndarray, parent: float):
    n = len(ys)
    pos_l = np.cumsum(ys)[:-1].astype(float)
    n_l = np.arange(1, n, dtype=float)
    n_r = n - n_l
    pos_r = ys.sum() - pos_l
    weighted = (2.0 * pos_l * (n_l - pos_l) / n_l + 2.0 * pos_r * (n_r - pos_r) / n_r) / n
    gain = parent - weighted
    gain[xs[1:] <= xs[:-1]] = -np.inf
    return gain


def _scan_variance(xs: np.ndarray, ys: np.ndarray, parent: float):
    n = len(ys)
    s_l = np.cumsum(ys)[:-1]
    n_l = np.arange(1, n, dtype=float)
    s_r = ys.sum() - s_l
    # reduction of mean squared error around the node mean
    gain = (s_l * s_l / n_l + s_r * s_r / (n - n_l) - ys.sum() ** 2 / n) / n
    gain[xs[1:] <= xs[:-1]] = -np.inf
    return gain


_SCANS = {"gini": _scan_gini, "variance": _scan_variance}


def node_impurity(y: np.ndarray, criterion: str) -> float:
    if criterion == "gini":
        p = y.mean()
        return float(2.0 * p * (1.0 - p))
    return float(np.mean((y - y.mean()) ** 2))


def _best_split(X, y, candidates, criterion, parent):
    best = None
    for f in candidates:
        order = np.argsort(X[:, f], kind="stable")
        xs, ys = X[order, f], y[order]
        gain = _SCANS[criterion](xs, ys, parent)
        top = gain.max()
        if not top > TIE_EPS:
            continue
        if best is not None and not top > best[2] + TIE_EPS:
            continue
        k = int(np.flatnonzero(gain >= top - TIE_EPS)[0])
        best = (int(f), _midpoint(xs[k], xs[k + 1]), float(gain[k]))
    return best


def best_split(features, labels, candidate_features=None):
    """Best Gini split as ``(feature, threshold, impurity_decrease)`` or None."""
    X = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=float)
    if len(y) < 2:
        return None
    if candidate_features is None:
        candidate_features = range(X.shape[1])
    return _best_split(X, y, sorted(candidate_features), "gini", node_impurity(y, "gini"))


@dataclass
class TreeArrays:
    """Flat node storage; ``feature == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_samples: np.ndarray
    impurity: np.ndarray

    def apply(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=np.int64)
        active = np.flatnonzero(self.feature[node] >= 0)
        while len(active):
            cur = node[active]
            go_left = X[active, self.feature[cur]] <= self.threshold[cur]
            node[active] = np.where(go_left, self.left[cur], self.right[cur])
            active = active[self.feature[node[active]] >= 0]
        return node

    def predict_value(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def depth(self) -> int:
        depths = {0: 0}
        for i in range(len(self.feature)):
            if self.feature[i] >= 0:
                depths[int(self.left[i])] = depths[i] + 1
                depths[int(self.right[i])] = depths[i] + 1
        return max(depths.values())

    def importances(self, n_features: int) -> np.ndarray:
        """Impurity decrease per feature, weighted by the node's share of samples."""
        out = np.zeros(n_features)
        total = self.n_samples[0]
        for i in np.flatnonzero(self.feature >= 0):
            l, r = self.left[i], self.right[i]
            dec = (self.n_samples[i] * self.impurity[i]
                   - self.n_samples[l] * self.impurity[l]
                   - self.n_samples[r] * self.impurity[r])
            out[self.feature[i]] += dec / total
        return out

    def to_dict(self) -> dict:
        return {
            "feature": ints(self.feature),
            "threshold": floats(self.threshold),
            "left": ints(self.left),
            "right": ints(self.right),
            "value": floats(self.value),
            "n_samples": ints(self.n_samples),
            "impurity": floats(self.impurity),
        }

    @classmethod
    def from_dict(cls, d: dict) -> TreeArrays:
        return cls(
            np.asarray(d["feature"], dtype=np.int64),
            np.asarray(d["threshold"], dtype=float),
            np.asarray(d["left"], dtype=np.int64),
            np.asarray(d["right"], dtype=np.int64),
            np.asarray(d["value"], dtype=float),
            np.asarray(d["n_samples"], dtype=np.int64),
            np.asarray(d["impurity"], dtype=float),
        )


def grow_tree(X, y, *, criterion="gini", max_depth=None, min_samples_split=2,
              max_features=None, rng=None, leaf_value=None) -> TreeArrays:
    """Depth-first greedy growth.

    ``max_features`` draws that many distinct candidate features per node
    from ``rng``; nodes are expanded left subtree first so the draw sequence
    is fixed. ``leaf_value(rows)`` overrides the default leaf value (the mean
    target, i.e. the positive fraction for 0/1 labels).
    """
    n, d = X.shape
    if max_features is not None and not 1 <= max_features <= d:
        raise DataError(f"max_features must be in [1, {d}], got {max_features}")
    feature, threshold, left, right, value, n_samples, impurity = [], [], [], [], [], [], []

    def new_node(rows):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(float(leaf_value(rows)) if leaf_value else float(y[rows].mean()))
        n_samples.append(len(rows))
        impurity.append(node_impurity(y[rows], criterion))
        return len(feature) - 1

    stack = [(new_node(np.arange(n)), np.arange(n), 0)]
    while stack:
        node, rows, depth = stack.pop()
        if len(rows) < min_samples_split or (max_depth is not None and depth >= max_depth):
            continue
        if impurity[node] <= 0.0:
            continue
        if max_features is None:
            candidates = range(d)
        else:
            candidates = np.sort(rng.choice(d, size=max_features, replace=False))
        split = _best_split(X[rows], y[rows], candidates, criterion, impurity[node])
        if split is None:
            continue
        f, thr, _ = split
        mask = X[rows, f] <= thr
        lnode = new_node(rows[mask])
        rnode = new_node(rows[~mask])
        feature[node], threshold[node], left[node], right[node] = f, thr, lnode, rnode
        if leaf_value is not None:
            value[node] = 0.0
        stack.append((rnode, rows[~mask], depth + 1))
        stack.append((lnode, rows[mask], depth + 1))

    return TreeArrays(
        np.asarray(feature, dtype=np.int64),
        np.asarray(threshold, dtype=float),
        np.asarray(left, dtype=np.int64),
        np.asarray(right, dtype=np.int64),
        np.asarray(value, dtype=float),
        np.asarray(n_samples, dtype=np.int64),
        np.asarray(impurity, dtype=float),
    )


@register
class DecisionTree(Classifier):
    kind = "dt"

    def __init__(self, criterion="gini", max_depth=None, min_samples_split=2, max_features=None, seed=0):
        super().__init__()
        if criterion != "gini":
            raise DataError(f"only the gini criterion is supported, got {criterion!r}")
        self.criterion = criterion
        self.max_depth = max_depth
        self.min_samples_split = min_samples_split
        self.max_features = max_features
        self.seed = seed
        self.tree_: TreeArrays | None = None

    def fit(self, X, y):
        X, y = check_xy(X, y)
        rng = np.random.default_rng(self.seed) if self.max_features is not None else None
        self.tree_ = grow_tree(X, y.astype(float), max_depth=self.max_depth,
                               min_samples_split=self.min_samples_split,
                               max_features=self.max_features, rng=rng)
        self.n_features_ = X.shape[1]
        return self

    def _decision(self, X):
        return self.tree_.predict_value(X)

    def get_params(self):
        return {"criterion": self.criterion, "max_depth": self.max_depth,
                "min_samples_split": self.min_samples_split,
                "max_features": self.max_features, "seed": self.seed}

    def _get_state(self):
        return {"tree": self.tree_.to_dict()}

    def _set_state(self, state):
        self.tree_ = TreeArrays.from_dict(state["tree"])


def _pack_mask(mask: np.ndarray) -> str:
    return np.packbits(mask.astype(np.uint8)).tobytes().hex()


def _unpack_mask(text: str, n: int) -> np.ndarray:
    return np.unpackbits(np.frombuffer(bytes.fromhex(text), dtype=np.uint8))[:n].astype(bool)


@register
class RandomForest(Classifier):
    """Bagged Gini trees with ceil(sqrt(d)) candidate features per split.

    Tree ``t`` draws its bootstrap and feature subsets from a generator
    seeded with ``seed + t``, so the fitted forest does not depend on the
    order in which trees are built. The score is the fraction of trees
    voting for class 1.
    """

    kind = "rf"

    def __init__(self, n_estimators=100, criterion="gini", max_depth=None, min_samples_split=2,
                 max_features="sqrt", bootstrap=True, seed=0):
        super().__init__()
        if n_estimators < 1:
            raise DataError("n_estimators must be >= 1")
        if criterion != "gini":
            raise DataError(f"only the gini criterion is supported, got {criterion!r}")
        self.n_estimators = n_estimators
        self.criterion = criterion
        self.max_depth = max_depth
        self.min_samples_split = min_samples_split
        self.max_features = max_features
        self.bootstrap = bootstrap
        self.seed = seed
        self.trees_: list[TreeArrays] = []
        self.in_bag_: list[np.ndarray] = []
        self.n_train_: int | None = None

    def _n_candidates(self, d: int) -> int:
        if self.max_features == "sqrt":
            return max(1, math.ceil(math.sqrt(d)))
        if self.max_features is None:
            return d
        return int(self.max_features)

    def _fit_one(self, X, y, t):
        rng = np.random.default_rng(self.seed + t)
        n = len(X)
        rows = rng.integers(0, n, size=n) if self.bootstrap else np.arange(n)
        in_bag = np.zeros(n, dtype=bool)
        in_bag[rows] = True
        tree = grow_tree(X[rows], y[rows], max_depth=self.max_depth,
                         min_samples_split=self.min_samples_split,
                         max_features=self._n_candidates(X.shape[1]), rng=rng)
        return tree, in_bag

    def fit(self, X, y):
        X, y = check_xy(X, y)
        y = y.astype(float)
        fitted = [self._fit_one(X, y, t) for t in range(self.n_estimators)]
        self.trees_ = [tree for tree, _ in fitted]
        self.in_bag_ = [mask for _, mask in fitted]
        self.n_features_ = X.shape[1]
        self.n_train_ = len(X)
        return self

    def tree_votes(self, X) -> np.ndarray:
        """(n_trees, n_rows) matrix of 0/1 tree predictions."""
        X = self._check_fitted(X)
        return np.array([(tree.predict_value(X) > 0.5) for tree in self.trees_], dtype=np.int8)

    def _decision(self, X):
        return self.tree_votes(X).mean(axis=0)

    def feature_importances(self) -> np.ndarray:
        if self.n_features_ is None:
            raise DataError("forest is not fitted")
        raw = np.mean([tree.importances(self.n_features_) for tree in self.trees_], axis=0)
        total = raw.sum()
        if total <= 0:
            return np.full(self.n_features_, 1.0 / self.n_features_)
        return raw / total

    def oob_error(self, X, y) -> float:
        """Misclassification rate of majority votes from trees that did not see each row."""
        X, y = check_xy(X, y)
        if len(X) != self.n_train_:
            raise DataError(f"OOB needs the {self.n_train_} training rows, got {len(X)}")
        votes = self.tree_votes(X)
        oob = ~np.array(self.in_bag_)
        n_oob = oob.sum(axis=0)
        pos = (votes * oob).sum(axis=0)
        seen = n_oob > 0
        if not seen.any():
            raise DataError("no sample was ever out-of-bag")
        pred = (2 * pos > n_oob).astype(np.int64)
        return float(np.mean(pred[seen] != y[seen]))

    def get_params(self):
        return {"n_estimators": self.n_estimators, "criterion": self.criterion,
                "max_depth": self.max_depth, "min_samples_split": self.min_samples_split,
                "max_features": self.max_features, "bootstrap": self.bootstrap, "seed": self.seed}

    def _get_state(self):
        return {"n_train": self.n_train_,
                "trees": [t.to_dict() for t in self.trees_],
                "in_bag": [_pack_mask(m) for m in self.in_bag_]}

    def _set_state(self, state):
        self.n_train_ = int(state["n_train"])
        self.trees_ = [TreeArrays.from_dict(t) for t in state["trees"]]
        self.in_bag_ = [_unpack_mask(m, self.n_train_) for m in state["in_bag"]]


def sigmoid(z):
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@register
class GradientBoosting(Classifier):
    """Binary log-loss boosting with depth-limited regression trees.

    Each stage fits a variance-criterion tree to the residuals y - p and sets
    every leaf to the Newton step sum(residual) / sum(p (1 - p)).
    """

    kind = "gboost"

    def __init__(self, n_estimators=100, learning_rate=0.1, max_depth=3, min_samples_split=2):
        super().__init__()
        if n_estimators < 0:
            raise DataError("n_estimators must be >= 0")
        self.n_estimators = n_estimators
        self.learning_rate = learning_rate
        self.max_depth = max_depth
        self.min_samples_split = min_samples_split
        self.init_score_: float | None = None
        self.stages_: list[TreeArrays] = []

    def fit(self, X, y):
        X, y = check_xy(X, y, both_classes=True)
        y = y.astype(float)
        rate = y.mean()
        self.init_score_ = float(math.log(rate / (1.0 - rate)))
        raw = np.full(len(y), self.init_score_)
        self.stages_ = []
        for _ in range(self.n_estimators):
            p = sigmoid(raw)
            residual = y - p
            hess = p * (1.0 - p)

            def newton(rows, residual=residual, hess=hess):
                den = hess[rows].sum()
                return residual[rows].sum() / den if den > 1e-12 else 0.0

            tree = grow_tree(X, residual, criterion="variance", max_depth=self.max_depth,
                             min_samples_split=self.min_samples_split, leaf_value=newton)
            self.stages_.append(tree)
            raw = raw + self.learning_rate * tree.predict_value(X)
        self.n_features_ = X.shape[1]
        return self

    def raw_score(self, X) -> np.ndarray:
        X = self._check_fitted(X)
        raw = np.full(len(X), self.init_score_)
        for tree in self.stages_:
            raw = raw + self.learning_rate * tree.predict_value(X)
        return raw

    def _decision(self, X):
        return sigmoid(self.raw_score(X))

    def get_params(self):
        return {"n_estimators": self.n_estimators, "learning_rate": self.learning_rate,
                "max_depth": self.max_depth, "min_samples_split": self.min_samples_split}

    def _get_state(self):
        return {"init_score": self.init_score_, "stages": [t.to_dict() for t in self.stages_]}

    def _set_state(self, state):
        self.init_score_ = float(state["init_score"])
        self.stages_ = [TreeArrays.from_dict(t) for t in state["stages"]]
