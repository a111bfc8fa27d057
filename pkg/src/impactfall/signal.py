"""Signal magnitude, threshold-based impact detection and z-score scaling.

SMV and every threshold here work in physical g units on raw columns; the
z-scored tables produced by :func:`zscore_apply` are rejected.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .dataio import CanonicalDataset, TIMESTAMP_COLUMN, format_cell
from .errors import DataError

DEFAULT_BETA = 2.0
DEFAULT_REFRACTORY_MS = 500
# thresholds reported by earlier threshold-based fall detectors
LEGACY_BETAS = (1.0, 1.2, 1.4, 1.6)


@dataclass(frozen=True)
class DetectorConfig:
    beta: float = DEFAULT_BETA
    refractory: int = DEFAULT_REFRACTORY_MS

    def __post_init__(self):
        if not self.beta > 0:
            raise DataError(f"beta must be positive, got {self.beta}")
        if self.refractory < 0:
            raise DataError(f"refractory must be >= 0, got {self.refractory}")


@dataclass(frozen=True)
class SmvSeries:
    timestamps: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype=np.int64)
        vals = np.asarray(self.values, dtype=float)
        if ts.shape != vals.shape or ts.ndim != 1:
            raise DataError("SMV timestamps and values must be equal-length vectors")
        if np.any(vals < 0):
            raise DataError("SMV values must be non-negative")
        ts.setflags(write=False)
        vals.setflags(write=False)
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class ImpactEvent:
    start: int
    peak: int
    end: int
    peak_smv: float


@dataclass(frozen=True)
class NormParams:
    feature_names: tuple[str, ...]
    mean: np.ndarray
    std: np.ndarray

    def to_dict(self) -> dict:
        return {
            "feature_names": list(self.feature_names),
            "mean": [float(v) for v in self.mean],
            "std": [float(v) for v in self.std],
        }

    @classmethod
    def from_dict(cls, d: dict) -> NormParams:
        return cls(tuple(d["feature_names"]), np.asarray(d["mean"], dtype=float), np.asarray(d["std"], dtype=float))


def zscore_fit(train: CanonicalDataset) -> NormParams:
    if len(train) == 0:
        raise DataError("cannot fit normalization on an empty dataset")
    x = train.features
    if np.isnan(x).any():
        raise DataError("normalization requires imputed data (found missing cells)")
    mean = x.mean(axis=0)
    std = np.sqrt(((x - mean) ** 2).mean(axis=0))
    return NormParams(train.feature_names, mean, std)


def zscore_apply(data: CanonicalDataset, params: NormParams) -> CanonicalDataset:
    if data.feature_names != params.feature_names:
        raise DataError("feature names do not match normalization parameters")
    safe = np.where(params.std > 0, params.std, 1.0)
    z = np.where(params.std > 0, (data.features - params.mean) / safe, 0.0)
    return data.with_features(z, normalized=True)


def smv(a_x: float, a_y: float, a_z: float) -> float:
    if not all(math.isfinite(v) for v in (a_x, a_y, a_z)):
        raise DataError(f"non-finite acceleration sample ({a_x}, {a_y}, {a_z})")
    # hypot rescales internally, so tiny or huge components neither underflow nor overflow
    return math.hypot(a_x, a_y, a_z)


def _smv_columns(x: np.ndarray, y: np.ndarray, z: np.ndarray) -> np.ndarray:
    if not (np.isfinite(x).all() and np.isfinite(y).all() and np.isfinite(z).all()):
        raise DataError("non-finite acceleration values in SMV axes")
    return np.hypot(np.hypot(x, y), z)


def smv_series(dataset: CanonicalDataset, axes: Sequence[str]) -> SmvSeries:
    if dataset.normalized:
        raise DataError("SMV requires raw g units, got a z-scored dataset")
    if len(axes) != 3:
        raise DataError(f"expected three axis columns, got {list(axes)}")
    cols = [dataset.column(a) for a in axes]
    return SmvSeries(dataset.timestamps, _smv_columns(*cols))


def detect_onset(series: SmvSeries, config: DetectorConfig) -> int | None:
    """Timestamp of the first sample whose SMV strictly exceeds beta."""
    if len(series) == 0:
        raise DataError("empty SMV series")
    above = np.flatnonzero(series.values > config.beta)
    if len(above) == 0:
        return None
    return int(series.timestamps[above[0]])


def _runs(mask: np.ndarray) -> list[tuple[int, int]]:
    """Inclusive (first, last) index pairs of maximal True runs."""
    padded = np.concatenate(([False], mask, [False]))
    edges = np.flatnonzero(np.diff(padded.astype(np.int8)))
    return [(int(a), int(b) - 1) for a, b in zip(edges[::2], edges[1::2])]


def segment_events(series: SmvSeries, config: DetectorConfig) -> list[ImpactEvent]:
    """Group above-threshold runs into events.

    A run starting less than ``refractory`` ms after the previous run ended is
    merged into it. The peak is the first maximum inside the event.
    """
    if len(series) == 0:
        raise DataError("empty SMV series")
    ts, vals = series.timestamps, series.values
    merged: list[list[int]] = []
    for first, last in _runs(vals > config.beta):
        if merged and ts[first] - ts[merged[-1][1]] < config.refractory:
            merged[-1][1] = last
        else:
            merged.append([first, last])
    events = []
    for first, last in merged:
        # below-threshold samples inside a merged event can never be the peak
        k = first + int(np.argmax(vals[first:last + 1]))
        events.append(ImpactEvent(int(ts[first]), int(ts[k]), int(ts[last]), float(vals[k])))
    return events


def label_impacts(dataset: CanonicalDataset, series: SmvSeries, config: DetectorConfig) -> CanonicalDataset:
    """Label 1 where SMV > beta, 0 where SMV <= beta."""
    if len(series) != len(dataset):
        raise DataError(f"SMV series has {len(series)} samples, dataset has {len(dataset)} rows")
    if not np.array_equal(series.timestamps, dataset.timestamps):
        raise DataError("SMV series timestamps are not aligned with dataset rows")
    return dataset.with_labels((series.values > config.beta).astype(np.int8))


@dataclass(frozen=True)
class ReviewEntry:
    start_ms: int
    end_ms: int
    label: int


def read_review(path) -> list[ReviewEntry]:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"missing review file: {path}")
    entries = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return entries
        if [h.strip() for h in header] != ["start_ms", "end_ms", "label"]:
            raise DataError(f"{path}: review header must be start_ms,end_ms,label")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                start, end, label = (int(c) for c in row)
            except ValueError:
                raise DataError(f"{path}:{lineno}: malformed review row {row}") from None
            entries.append(ReviewEntry(start, end, label))
    return entries


def apply_review(dataset: CanonicalDataset, review: Sequence[ReviewEntry]) -> CanonicalDataset:
    """Override automatic labels on every row with ``start_ms <= t <= end_ms``."""
    if dataset.labels is None:
        raise DataError("review requires a labeled dataset")
    if not review:
        return dataset
    labels = dataset.labels.copy()
    for entry in review:
        if entry.label not in (0, 1):
            raise DataError(f"review label must be 0 or 1, got {entry.label}")
        if entry.end_ms < entry.start_ms:
            raise DataError(f"review range {entry.start_ms}..{entry.end_ms} is reversed")
        hit = (dataset.timestamps >= entry.start_ms) & (dataset.timestamps <= entry.end_ms)
        if not hit.any():
            raise DataError(f"review range {entry.start_ms}..{entry.end_ms} matches no rows")
        labels[hit] = entry.label
    return dataset.with_labels(labels)


def derive_features(dataset: CanonicalDataset, axes: Sequence[str], window: int = 5) -> CanonicalDataset:
    """Append ``smv`` plus its trailing rolling mean/std (population) per recording.

    A recording is a contiguous block of rows sharing subject, activity and
    trial; windows never cross recordings.
    """
    if window < 1:
        raise DataError("window must be >= 1")
    mag = smv_series(dataset, axes).values
    n = len(mag)
    mean = np.empty(n)
    std = np.empty(n)
    key = np.column_stack([dataset.subject, dataset.activity, dataset.trial])
    starts = np.flatnonzero(np.concatenate(([True], np.any(key[1:] != key[:-1], axis=1))))
    bounds = np.append(starts, n)
    for a, b in zip(bounds[:-1], bounds[1:]):
        for i in range(a, b):
            w = mag[max(a, i - window + 1):i + 1]
            m = w.mean()
            mean[i] = m
            std[i] = math.sqrt(((w - m) ** 2).mean())
    names = (*dataset.feature_names, "smv", f"smv_mean{window}", f"smv_std{window}")
    return dataset.with_features(np.column_stack([dataset.features, mag, mean, std]), names)


def write_smv_csv(series: SmvSeries, path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([TIMESTAMP_COLUMN, "smv_g"])
        for t, v in zip(series.timestamps, series.values):
            writer.writerow([int(t), format_cell(v)])


def read_smv_csv(path) -> SmvSeries:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"missing SMV file: {path}")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != [TIMESTAMP_COLUMN, "smv_g"]:
            raise DataError(f"{path}: SMV header must be {TIMESTAMP_COLUMN},smv_g")
        rows = [r for r in reader if r]
    return SmvSeries([int(r[0]) for r in rows], [float(r[1]) for r in rows])
