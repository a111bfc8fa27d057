"""Confusion matrices, accuracy/precision/recall/F1, ROC/AUC and the model benchmark."""
from __future__ import annotations

import csv
import json
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .base import Classifier
from .classifiers import DISPLAY_NAMES, make_model
from .dataio import CanonicalDataset
from .errors import DataError

# published UP-Fall results in percent (accuracy, recall, precision, F1) and training seconds
UPFALL_REFERENCE = {
    "svm": (99.50, 99.50, 99.50, 99.50, 0.059),
    "rf": (99.28, 98.47, 99.18, 98.47, 0.607),
    "sgd": (94.47, 97.71, 95.85, 96.77, 0.013),
    "nb": (98.85, 97.57, 97.94, 97.76, 0.001),
    "dt": (98.85, 97.57, 97.94, 97.76, 0.034),
    "knn": (98.35, 98.45, 99.03, 98.74, 0.005),
    "lr": (95.75, 87.71, 91.20, 94.64, 0.010),
    "gboost": (99.35, 98.65, 98.84, 98.74, 0.844),
}


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def _binary(values, name):
    arr = np.asarray(values)
    if not np.all((arr == 0) | (arr == 1)):
        raise DataError(f"{name} must contain only 0/1 labels")
    return arr.astype(np.int64)


def confusion(y_true, y_pred) -> ConfusionMatrix:
    t, p = _binary(y_true, "y_true"), _binary(y_pred, "y_pred")
    if t.shape != p.shape:
        raise DataError(f"length mismatch: {t.shape} vs {p.shape}")
    if t.size == 0:
        raise DataError("empty evaluation set")
    return ConfusionMatrix(
        tp=int(np.sum((t == 1) & (p == 1))),
        fp=int(np.sum((t == 0) & (p == 1))),
        tn=int(np.sum((t == 0) & (p == 0))),
        fn=int(np.sum((t == 1) & (p == 0))),
    )


def _ratio(a, b) -> float:
    return a / b if b else 0.0


def _f1(p, r) -> float:
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


@dataclass(frozen=True)
class MetricSet:
    accuracy: float
    precision: float
    recall: float
    f1: float
    weighted_precision: float
    weighted_recall: float
    weighted_f1: float
    training_time: float | None = None


def metrics(cm: ConfusionMatrix, training_time: float | None = None) -> MetricSet:
    """Positive-class (impact) metrics plus support-weighted averages over both classes."""
    n = cm.total
    if n == 0:
        raise DataError("empty confusion matrix")
    per_class = {}
    for cls, (tp, fp, fn) in {1: (cm.tp, cm.fp, cm.fn), 0: (cm.tn, cm.fn, cm.fp)}.items():
        p, r = _ratio(tp, tp + fp), _ratio(tp, tp + fn)
        per_class[cls] = (p, r, _f1(p, r), tp + fn)
    weighted = [sum(v[i] * v[3] for v in per_class.values()) / n for i in range(3)]
    p1, r1, f1, _ = per_class[1]
    return MetricSet((cm.tp + cm.tn) / n, p1, r1, f1, *weighted, training_time)


@dataclass(frozen=True)
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray
    auc: float


def roc_curve(y_true, scores) -> RocCurve:
    """Threshold sweep from the highest score down; tied scores form one step."""
    y = _binary(y_true, "y_true")
    s = np.asarray(scores, dtype=float)
    if s.shape != y.shape:
        raise DataError("scores and labels differ in length")
    if not np.isfinite(s).all():
        raise DataError("scores must be finite")
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DataError("ROC needs both classes in y_true")
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    last_of_group = np.append(np.flatnonzero(np.diff(s) != 0), len(s) - 1)
    tps = np.cumsum(y)[last_of_group]
    fps = (last_of_group + 1) - tps
    tpr = np.concatenate(([0.0], tps / n_pos))
    fpr = np.concatenate(([0.0], fps / n_neg))
    thresholds = np.concatenate(([np.inf], s[last_of_group]))
    auc = float(np.sum((fpr[1:] - fpr[:-1]) * (tpr[1:] + tpr[:-1]) / 2.0))
    return RocCurve(fpr, tpr, thresholds, auc)


@dataclass
class EvaluationReport:
    kind: str
    confusion: ConfusionMatrix
    metrics: MetricSet
    roc: RocCurve
    threshold: float
    train_seconds: float

    def to_dict(self) -> dict:
        m = self.metrics
        return {
            "name": DISPLAY_NAMES.get(self.kind, self.kind),
            "accuracy": m.accuracy,
            "precision": m.weighted_precision,
            "recall": m.weighted_recall,
            "f1": m.weighted_f1,
            "positive_class": {"precision": m.precision, "recall": m.recall, "f1": m.f1},
            "confusion": asdict(self.confusion),
            "auc": self.roc.auc,
            "threshold": self.threshold,
            "train_seconds": self.train_seconds,
        }


def sweep_threshold(model: Classifier, val: CanonicalDataset) -> float:
    """Decision threshold maximizing validation accuracy; the model default wins ties."""
    default = model.score_threshold
    if val.labels is None or len(val) == 0:
        return default
    s = model.decision_score(val.features)
    y = val.labels
    best_thr, best_acc = default, float(np.mean((s > default) == y))
    values = np.unique(s)
    for thr in np.concatenate((values[:-1] + np.diff(values) / 2.0, [values[0] - 1.0])):
        acc = float(np.mean((s > thr) == y))
        if acc > best_acc:
            best_thr, best_acc = float(thr), acc
    return best_thr


def evaluate_model(kind: str, model: Classifier, test: CanonicalDataset, train_seconds: float,
                   threshold: float | None = None) -> EvaluationReport:
    if test.labels is None:
        raise DataError("test split is unlabeled")
    thr = model.score_threshold if threshold is None else threshold
    scores = model.decision_score(test.features)
    pred = (scores > thr).astype(np.int64)
    cm = confusion(test.labels, pred)
    return EvaluationReport(kind, cm, metrics(cm, train_seconds), roc_curve(test.labels, scores), thr, train_seconds)


def fit_timed(kind: str, train: CanonicalDataset, seed: int = 0):
    if train.labels is None:
        raise DataError("training split is unlabeled")
    model = make_model(kind, seed=seed)
    start = time.perf_counter()
    model.fit(train.features, train.labels)
    return model, time.perf_counter() - start


def run_benchmark(train: CanonicalDataset, val: CanonicalDataset, test: CanonicalDataset,
                  kinds: Sequence[str], seed: int = 0, threshold_sweep: bool = False):
    """Fit each model on train (fits run one after another for comparable timing), score on test."""
    reports, models = {}, {}
    for kind in kinds:
        model, seconds = fit_timed(kind, train, seed)
        thr = sweep_threshold(model, val) if threshold_sweep else None
        reports[kind] = evaluate_model(kind, model, test, seconds, thr)
        models[kind] = model
    return reports, models


def report_document(reports: dict, *, seed: int, features: Sequence[str], sizes: dict) -> dict:
    return {
        "schema_version": 1,
        "seed": seed,
        "features": list(features),
        "split_sizes": sizes,
        "models": {kind: r.to_dict() for kind, r in reports.items()},
    }


def write_report(doc: dict, out_dir, reports: dict) -> None:
    out = Path(out_dir)
    (out / "report.json").write_text(json.dumps(doc, indent=2) + "\n")
    for kind, r in reports.items():
        with (out / f"roc_{kind}.csv").open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["fpr", "tpr"])
            for a, b in zip(r.roc.fpr, r.roc.tpr):
                writer.writerow([repr(float(a)), repr(float(b))])
        with (out / f"confusion_{kind}.csv").open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["tp", "fp", "tn", "fn"])
            writer.writerow([r.confusion.tp, r.confusion.fp, r.confusion.tn, r.confusion.fn])


def summary_table(doc: dict) -> str:
    """Markdown table of test metrics next to the published UP-Fall reference values."""
    lines = [
        "| Model | Accuracy (%) | Recall (%) | Precision (%) | F1 (%) | AUC | Train (s) | Ref. accuracy (%) | Ref. train (s) |",
        "|---|---|---|---|---|---|---|---|---|",
    ]
    for kind, m in doc["models"].items():
        ref = UPFALL_REFERENCE.get(kind)
        ref_acc = f"{ref[0]:.2f}" if ref else "-"
        ref_time = f"{ref[4]:.3f}" if ref else "-"
        lines.append(
            f"| {m['name']} | {100 * m['accuracy']:.2f} | {100 * m['recall']:.2f} | {100 * m['precision']:.2f} "
            f"| {100 * m['f1']:.2f} | {m['auc']:.4f} | {m['train_seconds']:.3f} | {ref_acc} | {ref_time} |"
        )
    return "\n".join(lines) + "\n"
