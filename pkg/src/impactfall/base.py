"""Common fit/score/predict contract and the JSON model envelope."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import DataError, NotFittedError

FORMAT_TAG = "impactfall-model"
FORMAT_VERSION = 1

MODEL_REGISTRY: dict[str, type[Classifier]] = {}


def register(cls):
    MODEL_REGISTRY[cls.kind] = cls
    return cls


def check_xy(X, y=None, *, both_classes=False):
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise DataError(f"expected a 2-D feature matrix, got shape {X.shape}")
    if len(X) == 0:
        raise DataError("empty training set")
    if not np.isfinite(X).all():
        raise DataError("features must be finite (impute missing values first)")
    if y is None:
        return X
    y = np.asarray(y)
    if y.shape != (len(X),):
        raise DataError(f"label vector length {y.shape} does not match {len(X)} rows")
    if not np.all((y == 0) | (y == 1)):
        raise DataError("labels must be 0 or 1")
    y = y.astype(np.int64)
    if both_classes and (y.min() == y.max()):
        raise DataError("training data contains a single class")
    return X, y


class Classifier:
    """Binary classifier over labels {0, 1}.

    ``decision_score`` is monotone in confidence for class 1 and ``predict``
    returns 1 exactly when the score is strictly above ``score_threshold``.
    """

    kind = "base"
    score_threshold = 0.5

    def __init__(self):
        self.n_features_: int | None = None

    def fit(self, X, y):
        raise NotImplementedError

    def _decision(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _check_fitted(self, X) -> np.ndarray:
        if self.n_features_ is None:
            raise NotFittedError(f"{self.kind} model is not fitted")
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        if X.shape[1] != self.n_features_:
            raise DataError(f"expected {self.n_features_} features, got {X.shape[1]}")
        return X

    def decision_score(self, X) -> np.ndarray:
        return self._decision(self._check_fitted(X))

    def predict(self, X) -> np.ndarray:
        return (self.decision_score(X) > self.score_threshold).astype(np.int8)

    # serialization
    def get_params(self) -> dict:
        raise NotImplementedError

    def _get_state(self) -> dict:
        raise NotImplementedError

    def _set_state(self, state: dict) -> None:
        raise NotImplementedError

    def to_dict(self) -> dict:
        if self.n_features_ is None:
            raise NotFittedError(f"{self.kind} model is not fitted")
        return {
            "format": FORMAT_TAG,
            "version": FORMAT_VERSION,
            "kind": self.kind,
            "params": self.get_params(),
            "n_features": self.n_features_,
            "state": self._get_state(),
        }


def model_from_dict(d: dict) -> Classifier:
    if d.get("format") != FORMAT_TAG or d.get("version") != FORMAT_VERSION:
        raise DataError("not an impactfall model document")
    try:
        cls = MODEL_REGISTRY[d["kind"]]
    except KeyError:
        raise DataError(f"unknown model kind {d.get('kind')!r}") from None
    model = cls(**d["params"])
    model.n_features_ = int(d["n_features"])
    model._set_state(d["state"])
    return model


def save_model(model: Classifier, path) -> None:
    Path(path).write_text(json.dumps(model.to_dict(), sort_keys=True) + "\n")


def load_model(path) -> Classifier:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"missing model file: {path}")
    return model_from_dict(json.loads(path.read_text()))


def floats(a) -> list[float]:
    return [float(v) for v in np.asarray(a, dtype=float).ravel()]


def ints(a) -> list[int]:
    return [int(v) for v in np.asarray(a).ravel()]
