"""Sensor CSV ingestion, clock synchronization, imputation and splitting.

Timestamps are integer milliseconds throughout. Missing cells are NaN in
memory and the literal ``NAN`` on disk.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import DataError

TIMESTAMP_COLUMN = "timestamp_ms"
META_COLUMNS = ("subject", "activity", "trial")
LABEL_COLUMN = "label"
MISSING_TOKENS = {"", "nan"}


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


def round_half_up(value: float) -> int:
    return int(math.floor(value + 0.5))


def parse_cell(text: str) -> float:
    """Parse one numeric CSV cell; anything unparseable becomes NaN."""
    text = text.strip()
    if text.lower() in MISSING_TOKENS:
        return math.nan
    try:
        return float(text)
    except ValueError:
        return math.nan


def format_cell(value: float) -> str:
    if math.isnan(value):
        return "NAN"
    return repr(float(value))


@dataclass(frozen=True)
class RawSensorStream:
    """One device's samples as ingested: ``values[i, j]`` is channel j at ``timestamps[i]``."""

    device_id: str
    channel_names: tuple[str, ...]
    timestamps: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype=np.int64)
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 2 or vals.shape != (len(ts), len(self.channel_names)):
            raise DataError(
                f"{self.device_id}: values shape {vals.shape} does not match "
                f"{len(ts)} samples x {len(self.channel_names)} channels"
            )
        if len(ts) > 1 and np.any(np.diff(ts) <= 0):
            raise DataError(f"{self.device_id}: timestamps are not strictly increasing")
        object.__setattr__(self, "channel_names", tuple(self.channel_names))
        object.__setattr__(self, "timestamps", _frozen(ts))
        object.__setattr__(self, "values", _frozen(vals))

    def __len__(self) -> int:
        return len(self.timestamps)


@dataclass(frozen=True)
class CanonicalDataset:
    """Synchronized feature table with per-row metadata and optional 0/1 labels.

    ``normalized`` records whether the features were z-scored; physical-unit
    computations refuse normalized tables.
    """

    feature_names: tuple[str, ...]
    timestamps: np.ndarray
    features: np.ndarray
    subject: np.ndarray
    activity: np.ndarray
    trial: np.ndarray
    labels: np.ndarray | None = None
    normalized: bool = False

    def __post_init__(self):
        names = tuple(self.feature_names)
        if len(set(names)) != len(names):
            raise DataError("duplicate feature names")
        ts = np.asarray(self.timestamps, dtype=np.int64)
        n = len(ts)
        x = np.asarray(self.features, dtype=float)
        if x.ndim == 1 and n == 0:
            x = x.reshape(0, len(names))
        if x.shape != (n, len(names)):
            raise DataError(f"feature matrix shape {x.shape} != ({n}, {len(names)})")
        if n > 1 and np.any(np.diff(ts) < 0):
            raise DataError("timestamps must be non-decreasing")
        meta = []
        for name in META_COLUMNS:
            col = np.asarray(getattr(self, name), dtype=np.int64)
            if col.shape != (n,):
                raise DataError(f"{name} column has {col.shape[0]} rows, expected {n}")
            meta.append(_frozen(col))
        labels = self.labels
        if labels is not None:
            labels = np.asarray(labels)
            if labels.shape != (n,):
                raise DataError(f"label column has {labels.shape[0]} rows, expected {n}")
            if not np.all((labels == 0) | (labels == 1)):
                raise DataError("labels must be exactly 0 or 1")
            labels = _frozen(labels.astype(np.int8))
        object.__setattr__(self, "feature_names", names)
        object.__setattr__(self, "timestamps", _frozen(ts))
        object.__setattr__(self, "features", _frozen(x))
        for name, col in zip(META_COLUMNS, meta):
            object.__setattr__(self, name, col)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return len(self.timestamps)

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def column(self, name: str) -> np.ndarray:
        try:
            return self.features[:, self.feature_names.index(name)]
        except ValueError:
            raise DataError(f"unknown feature column {name!r}") from None

    def with_labels(self, labels) -> CanonicalDataset:
        return replace(self, labels=labels)

    def with_features(self, features, names: Sequence[str] | None = None, normalized=None) -> CanonicalDataset:
        return replace(
            self,
            features=features,
            feature_names=tuple(names) if names is not None else self.feature_names,
            normalized=self.normalized if normalized is None else normalized,
        )

    def select(self, names: Sequence[str]) -> CanonicalDataset:
        idx = []
        for name in names:
            if name not in self.feature_names:
                raise DataError(f"unknown feature column {name!r}")
            idx.append(self.feature_names.index(name))
        return self.with_features(self.features[:, idx], names)

    def take(self, rows) -> CanonicalDataset:
        rows = np.asarray(rows, dtype=np.int64)
        return replace(
            self,
            timestamps=self.timestamps[rows],
            features=self.features[rows],
            subject=self.subject[rows],
            activity=self.activity[rows],
            trial=self.trial[rows],
            labels=None if self.labels is None else self.labels[rows],
        )


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8
    val_fraction: float = 0.1
    test_fraction: float = 0.1
    seed: int = 0
    stratified: bool = True

    def __post_init__(self):
        fractions = (self.train_fraction, self.val_fraction, self.test_fraction)
        if any(not 0.0 < f < 1.0 for f in fractions):
            raise DataError(f"split fractions must lie in (0, 1), got {fractions}")
        if abs(sum(fractions) - 1.0) > 1e-9:
            raise DataError(f"split fractions must sum to 1, got {sum(fractions)!r}")


@dataclass(frozen=True)
class IngestSchema:
    """Column mapping for one device CSV.

    ``channels`` maps stream channel name -> CSV header name. When empty,
    every non-timestamp column is taken under its own name.
    """

    device_id: str
    timestamp_column: str = TIMESTAMP_COLUMN
    channels: Mapping[str, str] = field(default_factory=dict)


def ingest_csv(path, schema: IngestSchema) -> RawSensorStream:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"missing input file: {path}")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty file (no header row)")
        header = [h.strip() for h in header]
        if schema.timestamp_column not in header:
            raise DataError(f"{path}: header lacks timestamp column {schema.timestamp_column!r}")
        if schema.channels:
            missing = [col for col in schema.channels.values() if col not in header]
            if missing:
                raise DataError(f"{path}: header does not match schema, missing {missing}")
            names = list(schema.channels)
            cols = [header.index(schema.channels[name]) for name in names]
        else:
            cols = [i for i, h in enumerate(header) if h != schema.timestamp_column]
            names = [header[i] for i in cols]
        ts_col = header.index(schema.timestamp_column)

        timestamps, rows = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} cells, got {len(row)}")
            t = parse_cell(row[ts_col])
            if math.isnan(t):
                raise DataError(f"{path}:{lineno}: unparseable timestamp {row[ts_col]!r}")
            timestamps.append(round_half_up(t))
            rows.append([parse_cell(row[i]) for i in cols])

    if not rows:
        raise DataError(f"{path}: no samples")
    ts = np.asarray(timestamps, dtype=np.int64)
    bad = np.flatnonzero(np.diff(ts) <= 0)
    if len(bad):
        raise DataError(f"{path}: non-monotonic timestamps at data row {bad[0] + 2}")
    return RawSensorStream(schema.device_id, tuple(names), ts, np.asarray(rows, dtype=float).reshape(len(rows), len(names)))


def write_stream_csv(stream: RawSensorStream, path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([TIMESTAMP_COLUMN, *stream.channel_names])
        for t, vals in zip(stream.timestamps, stream.values):
            writer.writerow([int(t), *(format_cell(v) for v in vals)])


def _nearest_within(ref_ts: np.ndarray, other_ts: np.ndarray, tolerance: int) -> np.ndarray:
    """Index into ``other_ts`` of the nearest sample per reference timestamp, -1 if none within tolerance.

    Equidistant neighbours resolve to the earlier sample.
    """
    pos = np.searchsorted(other_ts, ref_ts, side="left")
    before = np.clip(pos - 1, 0, len(other_ts) - 1)
    after = np.clip(pos, 0, len(other_ts) - 1)
    d_before = np.where(pos > 0, ref_ts - other_ts[before], np.iinfo(np.int64).max)
    d_after = np.where(pos < len(other_ts), other_ts[after] - ref_ts, np.iinfo(np.int64).max)
    take_before = d_before <= d_after
    idx = np.where(take_before, before, after)
    dist = np.where(take_before, d_before, d_after)
    return np.where(dist <= tolerance, idx, -1)


def synchronize(streams: Sequence[RawSensorStream], reference: str, tolerance: int = 10) -> CanonicalDataset:
    """Join every stream onto the reference device's clock by nearest timestamp.

    Reference channels named ``subject``, ``activity`` or ``trial`` become row
    metadata instead of features (0 when absent). All other columns are
    renamed ``<device_id>_<channel>``.
    """
    if tolerance <= 0:
        raise DataError("tolerance must be positive")
    by_id = {s.device_id: s for s in streams}
    if len(by_id) != len(streams):
        raise DataError("duplicate device ids")
    if reference not in by_id:
        raise DataError(f"unknown reference device {reference!r}")
    ref = by_id[reference]
    if len(ref) == 0:
        raise DataError(f"reference stream {reference!r} is empty")

    keep = np.ones(len(ref), dtype=bool)
    matches = {}
    for stream in streams:
        if stream.device_id == reference:
            continue
        if len(stream) == 0:
            keep[:] = False
            continue
        idx = _nearest_within(ref.timestamps, stream.timestamps, tolerance)
        matches[stream.device_id] = idx
        keep &= idx >= 0
    if not keep.any():
        raise DataError("empty result after synchronization")

    n = int(keep.sum())
    meta = {name: np.zeros(n, dtype=np.int64) for name in META_COLUMNS}
    names, blocks = [], []
    for stream in streams:
        if stream.device_id == reference:
            vals = stream.values[keep]
        else:
            vals = stream.values[matches[stream.device_id][keep]]
        for j, channel in enumerate(stream.channel_names):
            if stream.device_id == reference and channel in META_COLUMNS:
                col = vals[:, j]
                if np.any(np.isnan(col)):
                    raise DataError(f"metadata column {channel!r} has missing values")
                meta[channel] = col.astype(np.int64)
                continue
            names.append(f"{stream.device_id}_{channel}")
            blocks.append(vals[:, j])
    features = np.column_stack(blocks) if blocks else np.empty((n, 0))
    return CanonicalDataset(tuple(names), ref.timestamps[keep], features, **meta)


def impute_missing(dataset: CanonicalDataset, statistics_source: CanonicalDataset) -> CanonicalDataset:
    """Replace NaN cells by the column mean of ``statistics_source``."""
    if dataset.feature_names != statistics_source.feature_names:
        raise DataError("feature names differ between dataset and statistics source")
    src = statistics_source.features
    present = ~np.isnan(src)
    empty = ~present.any(axis=0) if len(src) else np.ones(src.shape[1], dtype=bool)
    if empty.any():
        bad = [n for n, e in zip(dataset.feature_names, empty) if e]
        raise DataError(f"uninformative column(s), entirely missing: {bad}")
    missing = np.isnan(dataset.features)
    if not missing.any():
        return dataset
    means = np.where(present, src, 0.0).sum(axis=0) / present.sum(axis=0)
    filled = np.where(missing, means[np.newaxis, :], dataset.features)
    return dataset.with_features(filled)


def _largest_remainder(quotas: np.ndarray, total: int) -> np.ndarray:
    """Integer allocation summing to ``total``, each entry the floor or ceiling of its quota."""
    alloc = np.floor(quotas).astype(np.int64)
    short = total - int(alloc.sum())
    if short > 0:
        # stable sort keeps the lower index first on equal remainders
        order = np.argsort(-(quotas - alloc), kind="stable")
        alloc[order[:short]] += 1
    return alloc


def split(dataset: CanonicalDataset, spec: SplitSpec):
    """Seeded train/validation/test partition; each part keeps the original row order.

    Part sizes are ``floor(n * fraction)`` for validation and test, with the
    rest going to train. When stratified, the positive rows are spread over
    the parts in proportion to part size, so every part holds each class
    within one row of its share.
    """
    if dataset.labels is None:
        raise DataError("cannot split an unlabeled dataset")
    n = len(dataset)
    n_val = int(math.floor(n * spec.val_fraction))
    n_test = int(math.floor(n * spec.test_fraction))
    sizes = np.array([n - n_val - n_test, n_val, n_test])
    rng = np.random.default_rng(spec.seed)

    if spec.stratified:
        members = [np.flatnonzero(dataset.labels == c) for c in (0, 1)]
        counts = [len(m) for m in members]
        if min(counts) < 3:
            raise DataError(f"class too small to stratify: counts {{0: {counts[0]}, 1: {counts[1]}}}")
        pos = _largest_remainder(counts[1] * sizes / n, counts[1])
        alloc = (sizes - pos, pos)
        parts = ([], [], [])
        for m, per_part in zip(members, alloc):
            perm = rng.permutation(m)
            # validation first, then test, then train, matching the unstratified layout
            nv, nt = per_part[1], per_part[2]
            parts[1].append(perm[:nv])
            parts[2].append(perm[nv:nv + nt])
            parts[0].append(perm[nv + nt:])
        idx = [np.sort(np.concatenate(p)) for p in parts]
    else:
        perm = rng.permutation(n)
        idx = [np.sort(perm[n_val + n_test:]), np.sort(perm[:n_val]), np.sort(perm[n_val:n_val + n_test])]
    return tuple(dataset.take(i) for i in idx)


def write_dataset(dataset: CanonicalDataset, path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        header = [TIMESTAMP_COLUMN, *META_COLUMNS, *dataset.feature_names]
        if dataset.labels is not None:
            header.append(LABEL_COLUMN)
        writer.writerow(header)
        for i in range(len(dataset)):
            row = [int(dataset.timestamps[i]), int(dataset.subject[i]), int(dataset.activity[i]), int(dataset.trial[i])]
            row.extend(format_cell(v) for v in dataset.features[i])
            if dataset.labels is not None:
                row.append(int(dataset.labels[i]))
            writer.writerow(row)


def read_dataset(path) -> CanonicalDataset:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"missing dataset file: {path}")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header[:4]) != (TIMESTAMP_COLUMN, *META_COLUMNS):
            raise DataError(f"{path}: header must start with {TIMESTAMP_COLUMN},{','.join(META_COLUMNS)}")
        has_label = header[-1] == LABEL_COLUMN
        names = header[4:-1] if has_label else header[4:]
        rows = [r for r in reader if r]
    width = len(header)
    for lineno, r in enumerate(rows, start=2):
        if len(r) != width:
            raise DataError(f"{path}:{lineno}: expected {width} cells, got {len(r)}")
    try:
        ts = np.array([round_half_up(float(r[0])) for r in rows], dtype=np.int64)
        meta = {name: np.array([int(r[1 + k]) for r in rows], dtype=np.int64) for k, name in enumerate(META_COLUMNS)}
        labels = np.array([int(r[-1]) for r in rows]) if has_label else None
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None
    x = np.array([[parse_cell(c) for c in r[4:4 + len(names)]] for r in rows], dtype=float).reshape(len(rows), len(names))
    return CanonicalDataset(tuple(names), ts, x, labels=labels, **meta)
