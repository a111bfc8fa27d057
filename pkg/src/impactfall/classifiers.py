"""SVM, logistic regression, SGD, k-NN and Gaussian naive Bayes classifiers.

Margin models (SVM, logistic regression, SGD) score with a signed value
thresholded at 0; the others return a class-1 probability thresholded at
0.5. Labels are 0/1 at the interface and mapped to -1/+1 internally where
the optimizer needs it.
"""
from __future__ import annotations

import math

import numpy as np

from .base import MODEL_REGISTRY, Classifier, check_xy, floats, ints, register
from .errors import DataError
from .trees import DecisionTree, GradientBoosting, RandomForest, sigmoid


def rbf_gamma_scale(X: np.ndarray) -> float:
    """``1 / (d * Var(X))`` with the variance over every cell of X."""
    var = float(np.var(X))
    if var <= 0.0:
        raise DataError("zero overall feature variance, RBF gamma is undefined")
    return 1.0 / (X.shape[1] * var)


@register
class SVMClassifier(Classifier):
    """C-SVM with an RBF kernel trained by SMO.

    Working pairs are the maximal violating pair (first index on ties), and
    training stops once the KKT gap drops below ``tol``.
    """

    kind = "svm"
    score_threshold = 0.0

    def __init__(self, C=1.0, kernel="rbf", gamma="scale", tol=1e-3, max_iter=None):
        super().__init__()
        if kernel != "rbf":
            raise DataError(f"only the rbf kernel is supported, got {kernel!r}")
        if not C > 0:
            raise DataError("C must be positive")
        self.C = C
        self.kernel = kernel
        self.gamma = gamma
        self.tol = tol
        self.max_iter = max_iter

    def _kernel(self, A: np.ndarray, B: np.ndarray) -> np.ndarray:
        sq = (A * A).sum(axis=1)[:, None] + (B * B).sum(axis=1)[None, :] - 2.0 * A @ B.T
        return np.exp(-self.gamma_ * np.maximum(sq, 0.0))

    def fit(self, X, y):
        X, y01 = check_xy(X, y, both_classes=True)
        n = len(X)
        y = np.where(y01 == 1, 1.0, -1.0)
        self.gamma_ = rbf_gamma_scale(X) if self.gamma == "scale" else float(self.gamma)
        C = self.C
        cache: dict[int, np.ndarray] = {}

        def column(i):
            col = cache.get(i)
            if col is None:
                diff = X - X[i]
                col = np.exp(-self.gamma_ * np.einsum("ij,ij->i", diff, diff))
                cache[i] = col
            return col

        alpha = np.zeros(n)
        grad = -np.ones(n)
        max_iter = self.max_iter or max(10_000_000, 100 * n)
        self.n_iter_ = 0
        for it in range(max_iter):
            up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
            low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
            v = -y * grad
            vi = np.where(up, v, -np.inf)
            vj = np.where(low, v, np.inf)
            i = int(np.argmax(vi))
            j = int(np.argmin(vj))
            if vi[i] - vj[j] < self.tol:
                break
            Ki, Kj = column(i), column(j)
            old_i, old_j = alpha[i], alpha[j]
            if y[i] != y[j]:
                quad = max(Ki[i] + Kj[j] - 2.0 * Ki[j], 1e-12)
                delta = (-grad[i] - grad[j]) / quad
                diff = alpha[i] - alpha[j]
                alpha[i] += delta
                alpha[j] += delta
                if diff > 0:
                    if alpha[j] < 0:
                        alpha[j], alpha[i] = 0.0, diff
                elif alpha[i] < 0:
                    alpha[i], alpha[j] = 0.0, -diff
                if diff > 0:
                    if alpha[i] > C:
                        alpha[i], alpha[j] = C, C - diff
                elif alpha[j] > C:
                    alpha[j], alpha[i] = C, C + diff
            else:
                quad = max(Ki[i] + Kj[j] - 2.0 * Ki[j], 1e-12)
                delta = (grad[i] - grad[j]) / quad
                total = alpha[i] + alpha[j]
                alpha[i] -= delta
                alpha[j] += delta
                if total > C:
                    if alpha[i] > C:
                        alpha[i], alpha[j] = C, total - C
                elif alpha[j] < 0:
                    alpha[j], alpha[i] = 0.0, total
                if total > C:
                    if alpha[j] > C:
                        alpha[j], alpha[i] = C, total - C
                elif alpha[i] < 0:
                    alpha[i], alpha[j] = 0.0, total
            # Q[:, k] = y * y[k] * K[:, k]
            grad += y * (y[i] * (alpha[i] - old_i) * Ki + y[j] * (alpha[j] - old_j) * Kj)
        self.n_iter_ = it + 1

        yg = y * grad
        upper = alpha >= C
        lower = alpha <= 0
        free = ~upper & ~lower
        if free.any():
            rho = float(yg[free].mean())
        else:
            ub_set = (upper & (y < 0)) | (lower & (y > 0))
            lb_set = (upper & (y > 0)) | (lower & (y < 0))
            ub = yg[ub_set].min() if ub_set.any() else np.inf
            lb = yg[lb_set].max() if lb_set.any() else -np.inf
            rho = float((ub + lb) / 2.0)
        self.intercept_ = -rho
        self.alpha_full_ = alpha
        sv = np.flatnonzero(alpha > 1e-8)
        self.support_ = sv
        self.support_vectors_ = X[sv].copy()
        self.dual_coef_ = alpha[sv] * y[sv]
        self.n_features_ = X.shape[1]
        return self

    def _decision(self, X):
        out = np.empty(len(X))
        for start in range(0, len(X), 512):
            block = X[start:start + 512]
            out[start:start + 512] = self._kernel(block, self.support_vectors_) @ self.dual_coef_
        return out + self.intercept_

    def get_params(self):
        return {"C": self.C, "kernel": self.kernel, "gamma": self.gamma, "tol": self.tol, "max_iter": self.max_iter}

    def _get_state(self):
        return {"gamma": self.gamma_, "intercept": self.intercept_, "support": ints(self.support_),
                "support_vectors": [floats(r) for r in self.support_vectors_],
                "dual_coef": floats(self.dual_coef_)}

    def _set_state(self, state):
        self.gamma_ = float(state["gamma"])
        self.intercept_ = float(state["intercept"])
        self.support_ = np.asarray(state["support"], dtype=np.int64)
        self.support_vectors_ = np.asarray(state["support_vectors"], dtype=float).reshape(-1, self.n_features_)
        self.dual_coef_ = np.asarray(state["dual_coef"], dtype=float)


def logreg_objective(w, b, X, y, C) -> float:
    """Sum of log-losses plus ``||w||^2 / (2C)``; the intercept is not penalized."""
    z = X @ w + b
    return float(np.sum(np.logaddexp(0.0, z) - y * z) + 0.5 * np.dot(w, w) / C)


def logreg_gradient(w, b, X, y, C):
    r = sigmoid(X @ w + b) - y
    return X.T @ r + w / C, float(r.sum())


@register
class LogisticRegression(Classifier):
    """L2-regularized logistic regression fit by gradient descent.

    Step sizes start from the Barzilai-Borwein estimate and are halved until
    the Armijo condition holds.
    """

    kind = "lr"
    score_threshold = 0.0

    def __init__(self, C=1.0, tol=1e-6, max_iter=10_000):
        super().__init__()
        if not C > 0:
            raise DataError("C must be positive")
        self.C = C
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y):
        X, y = check_xy(X, y, both_classes=True)
        y = y.astype(float)
        n, d = X.shape
        C = self.C
        theta = np.zeros(d + 1)

        def f(th):
            return logreg_objective(th[:d], th[d], X, y, C)

        def g(th):
            gw, gb = logreg_gradient(th[:d], th[d], X, y, C)
            return np.append(gw, gb)

        fx, gx = f(theta), g(theta)
        # 1/L for the sum-of-losses Hessian bound
        step = 1.0 / (0.25 * (np.sum(X * X) + n) + 1.0 / C)
        self.n_iter_ = 0
        while self.n_iter_ < self.max_iter and np.max(np.abs(gx)) >= self.tol:
            self.n_iter_ += 1
            gg = float(gx @ gx)
            t = step
            for _ in range(60):
                cand = theta - t * gx
                fc = f(cand)
                if fc <= fx - 1e-4 * t * gg:
                    break
                t *= 0.5
            else:
                break
            gc = g(cand)
            s, dy = cand - theta, gc - gx
            sy = float(s @ dy)
            step = float(s @ s) / sy if sy > 0 else 2.0 * t
            theta, fx, gx = cand, fc, gc
        self.coef_ = theta[:d].copy()
        self.intercept_ = float(theta[d])
        self.grad_norm_ = float(np.max(np.abs(gx)))
        self.n_features_ = d
        return self

    def _decision(self, X):
        return X @ self.coef_ + self.intercept_

    def predict_proba(self, X):
        return sigmoid(self.decision_score(X))

    def get_params(self):
        return {"C": self.C, "tol": self.tol, "max_iter": self.max_iter}

    def _get_state(self):
        return {"coef": floats(self.coef_), "intercept": self.intercept_}

    def _set_state(self, state):
        self.coef_ = np.asarray(state["coef"], dtype=float)
        self.intercept_ = float(state["intercept"])


@register
class SGDClassifier(Classifier):
    """Linear hinge-loss classifier with L2 penalty trained by plain SGD.

    The step size at update t is ``1 / (alpha * (t0 + t))`` with
    ``t0 = 1 / alpha``. Rows are reshuffled every epoch from one seeded
    generator; training stops after ``max_iter`` epochs or after an epoch in
    which no coefficient moved by more than ``tol``.
    """

    kind = "sgd"
    score_threshold = 0.0

    def __init__(self, alpha=0.0001, max_iter=1000, tol=1e-4, seed=0):
        super().__init__()
        if not alpha > 0:
            raise DataError("alpha must be positive")
        if max_iter < 1:
            raise DataError("max_iter must be >= 1")
        self.alpha = alpha
        self.max_iter = max_iter
        self.tol = tol
        self.seed = seed

    def fit(self, X, y):
        X, y01 = check_xy(X, y, both_classes=True)
        n, d = X.shape
        rows = X.tolist()
        ys = [1.0 if v == 1 else -1.0 for v in y01]
        rng = np.random.default_rng(self.seed)
        alpha = self.alpha
        t0 = 1.0 / alpha
        # w = scale * v keeps the per-step L2 shrink O(1)
        v = [0.0] * d
        scale, b, t = 1.0, 0.0, 0
        self.n_iter_ = 0
        for _ in range(self.max_iter):
            self.n_iter_ += 1
            w_prev = [scale * vk for vk in v]
            b_prev = b
            for i in rng.permutation(n).tolist():
                xi = rows[i]
                yi = ys[i]
                eta = 1.0 / (alpha * (t0 + t))
                t += 1
                s = 0.0
                for vk, xk in zip(v, xi):
                    s += vk * xk
                margin = yi * (scale * s + b)
                scale *= 1.0 - eta * alpha
                if margin < 1.0:
                    c = eta * yi / scale
                    for k in range(d):
                        v[k] += c * xi[k]
                    b += eta * yi
                if scale < 1e-9:
                    v = [scale * vk for vk in v]
                    scale = 1.0
            w_now = [scale * vk for vk in v]
            change = max(max(abs(a - p) for a, p in zip(w_now, w_prev)), abs(b - b_prev))
            if change <= self.tol:
                break
        self.coef_ = np.array([scale * vk for vk in v])
        self.intercept_ = float(b)
        self.n_features_ = d
        return self

    def _decision(self, X):
        return X @ self.coef_ + self.intercept_

    def get_params(self):
        return {"alpha": self.alpha, "max_iter": self.max_iter, "tol": self.tol, "seed": self.seed}

    def _get_state(self):
        return {"coef": floats(self.coef_), "intercept": self.intercept_}

    def _set_state(self, state):
        self.coef_ = np.asarray(state["coef"], dtype=float)
        self.intercept_ = float(state["intercept"])


@register
class KNNClassifier(Classifier):
    """Uniform-vote k nearest neighbours; equal distances prefer the lower row index."""

    kind = "knn"

    def __init__(self, n_neighbors=5, weights="uniform"):
        super().__init__()
        if n_neighbors < 1 or n_neighbors % 2 == 0:
            raise DataError(f"n_neighbors must be odd and >= 1, got {n_neighbors}")
        if weights != "uniform":
            raise DataError(f"only uniform weights are supported, got {weights!r}")
        self.n_neighbors = n_neighbors
        self.weights = weights

    def fit(self, X, y):
        X, y = check_xy(X, y)
        if self.n_neighbors > len(X):
            raise DataError(f"k={self.n_neighbors} exceeds training size {len(X)}")
        self.X_ = X.copy()
        self.y_ = y.astype(np.int8)
        self.n_features_ = X.shape[1]
        return self

    def neighbors(self, X) -> np.ndarray:
        X = self._check_fitted(X)
        out = np.empty((len(X), self.n_neighbors), dtype=np.int64)
        for start in range(0, len(X), 128):
            q = X[start:start + 128]
            diff = q[:, None, :] - self.X_[None, :, :]
            dist = np.einsum("qnd,qnd->qn", diff, diff)
            out[start:start + 128] = np.argsort(dist, axis=1, kind="stable")[:, :self.n_neighbors]
        return out

    def _decision(self, X):
        return self.y_[self.neighbors(X)].mean(axis=1)

    def get_params(self):
        return {"n_neighbors": self.n_neighbors, "weights": self.weights}

    def _get_state(self):
        return {"X": [floats(r) for r in self.X_], "y": ints(self.y_)}

    def _set_state(self, state):
        self.X_ = np.asarray(state["X"], dtype=float).reshape(-1, self.n_features_)
        self.y_ = np.asarray(state["y"], dtype=np.int8)


@register
class GaussianNB(Classifier):
    """Gaussian naive Bayes with population variances floored at ``1e-9 * max feature variance``."""

    kind = "nb"

    def __init__(self, var_floor=1e-9):
        super().__init__()
        self.var_floor = var_floor

    def fit(self, X, y):
        X, y = check_xy(X, y, both_classes=True)
        floor = self.var_floor * float(np.var(X, axis=0).max())
        if floor <= 0:
            floor = self.var_floor
        self.theta_ = np.array([X[y == c].mean(axis=0) for c in (0, 1)])
        self.var_ = np.maximum(np.array([X[y == c].var(axis=0) for c in (0, 1)]), floor)
        self.prior_ = np.array([np.mean(y == c) for c in (0, 1)])
        self.n_features_ = X.shape[1]
        return self

    def joint_log_likelihood(self, X) -> np.ndarray:
        X = self._check_fitted(X)
        jll = []
        for c in (0, 1):
            ll = -0.5 * np.sum(np.log(2.0 * math.pi * self.var_[c]))
            ll = ll - 0.5 * np.sum((X - self.theta_[c]) ** 2 / self.var_[c], axis=1)
            jll.append(math.log(self.prior_[c]) + ll)
        return np.column_stack(jll)

    def predict_proba(self, X) -> np.ndarray:
        jll = self.joint_log_likelihood(X)
        p1 = sigmoid(jll[:, 1] - jll[:, 0])
        return np.column_stack([sigmoid(jll[:, 0] - jll[:, 1]), p1])

    def _decision(self, X):
        return self.predict_proba(X)[:, 1]

    def get_params(self):
        return {"var_floor": self.var_floor}

    def _get_state(self):
        return {"theta": [floats(r) for r in self.theta_], "var": [floats(r) for r in self.var_],
                "prior": floats(self.prior_)}

    def _set_state(self, state):
        self.theta_ = np.asarray(state["theta"], dtype=float)
        self.var_ = np.asarray(state["var"], dtype=float)
        self.prior_ = np.asarray(state["prior"], dtype=float)


# hyperparameters of the published benchmark; seeded kinds also take the run seed
DEFAULT_PARAMS = {
    "svm": {"C": 1.0, "kernel": "rbf", "gamma": "scale"},
    "lr": {"C": 1.0},
    "dt": {"criterion": "gini", "max_depth": None},
    "knn": {"n_neighbors": 5, "weights": "uniform"},
    "nb": {},
    "rf": {"n_estimators": 100, "criterion": "gini"},
    "sgd": {"alpha": 0.0001, "max_iter": 1000},
    "gboost": {"n_estimators": 100, "learning_rate": 0.1},
}
MODEL_KINDS = tuple(DEFAULT_PARAMS)
SEEDED = {"rf", "sgd", "dt"}
DISPLAY_NAMES = {"svm": "SVM", "rf": "RF", "sgd": "SGD", "nb": "NB", "dt": "DT",
                 "knn": "KNN", "lr": "LR", "gboost": "GBOOST"}


def make_model(kind: str, seed: int = 0, **overrides) -> Classifier:
    if kind not in DEFAULT_PARAMS:
        raise DataError(f"unknown model kind {kind!r}; expected one of {', '.join(MODEL_KINDS)}")
    params = {**DEFAULT_PARAMS[kind], **overrides}
    if kind in SEEDED:
        params.setdefault("seed", seed)
    return MODEL_REGISTRY[kind](**params)


def decision_score(model: Classifier, X) -> np.ndarray:
    return model.decision_score(X)


__all__ = [
    "DecisionTree", "RandomForest", "GradientBoosting", "SVMClassifier", "LogisticRegression",
    "SGDClassifier", "KNNClassifier", "GaussianNB", "make_model", "decision_score",
    "DEFAULT_PARAMS", "MODEL_KINDS", "DISPLAY_NAMES",
]
