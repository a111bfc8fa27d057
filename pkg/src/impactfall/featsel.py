"""Forest Gini-importance ranking and the top-k OOB / training-time study."""
from __future__ import annotations

import csv
import statistics
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .dataio import CanonicalDataset
from .errors import DataError
from .trees import RandomForest

DEFAULT_STUDY_KS = (3, 5, 10, 20, "all")

# published UP-Fall results (k -> OOB error, training seconds); hardware-bound
UPFALL_TOPK_REFERENCE = {3: (0.011, 4.69), 5: (0.008, 6.11), 10: (0.007, 8.82), 20: (0.006, 10.92), 37: (0.007, 15.83)}


@dataclass(frozen=True)
class FeatureRanking:
    entries: tuple[tuple[str, float], ...]
    seed: int = 0
    forest_params: dict = field(default_factory=dict)

    @property
    def names(self) -> list[str]:
        return [name for name, _ in self.entries]

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class StudyRow:
    k: int
    oob_error: float
    train_seconds: float


def _labeled(train: CanonicalDataset):
    if train.labels is None:
        raise DataError("feature ranking needs a labeled dataset")
    if np.isnan(train.features).any():
        raise DataError("feature ranking needs imputed data")
    return train.features, train.labels


def rank_features(train: CanonicalDataset, seed: int = 0, n_estimators: int = 100, **forest_params) -> FeatureRanking:
    X, y = _labeled(train)
    forest = RandomForest(n_estimators=n_estimators, seed=seed, **forest_params).fit(X, y)
    imp = forest.feature_importances()
    # stable sort keeps column order on equal importance
    order = sorted(range(len(imp)), key=lambda j: -imp[j])
    entries = tuple((train.feature_names[j], float(imp[j])) for j in order)
    return FeatureRanking(entries, seed, {"n_estimators": n_estimators, **forest_params})


def select_top_k(ranking: FeatureRanking, k: int = 5) -> list[str]:
    if not 1 <= k <= len(ranking):
        raise DataError(f"k must be in [1, {len(ranking)}], got {k}")
    return ranking.names[:k]


def resolve_ks(ks: Sequence, n_features: int) -> list[int]:
    """Map the study grid to concrete sizes; ``"all"`` means every feature."""
    out = set()
    for k in ks:
        k = n_features if k == "all" else int(k)
        if not 1 <= k <= n_features:
            raise DataError(f"study size k={k} outside [1, {n_features}]")
        out.add(k)
    return sorted(out)


def topk_study(train: CanonicalDataset, ranking: FeatureRanking, ks: Sequence, seed: int = 0,
               n_estimators: int = 100, repeats: int = 3, **forest_params) -> list[StudyRow]:
    """Fit a forest on each top-k subset; time is the median wall clock over ``repeats`` fits."""
    _labeled(train)
    rows = []
    for k in resolve_ks(ks, len(ranking)):
        sub = train.select(select_top_k(ranking, k))
        X, y = sub.features, sub.labels
        times, forest = [], None
        for _ in range(repeats):
            start = time.perf_counter()
            forest = RandomForest(n_estimators=n_estimators, seed=seed, **forest_params).fit(X, y)
            times.append(time.perf_counter() - start)
        rows.append(StudyRow(k, forest.oob_error(X, y), statistics.median(times)))
    return rows


def write_importances(ranking: FeatureRanking, path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["rank", "feature", "importance"])
        for i, (name, imp) in enumerate(ranking.entries, start=1):
            writer.writerow([i, name, repr(imp)])


def read_importances(path) -> FeatureRanking:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"missing importances file: {path}")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        if next(reader, None) != ["rank", "feature", "importance"]:
            raise DataError(f"{path}: header must be rank,feature,importance")
        rows = [r for r in reader if r]
    return FeatureRanking(tuple((r[1], float(r[2])) for r in rows))


def write_topk_study(rows: Sequence[StudyRow], path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["k", "oob_error", "train_seconds"])
        for r in rows:
            writer.writerow([r.k, repr(r.oob_error), f"{r.train_seconds:.6f}"])
