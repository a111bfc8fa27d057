"""Seeded synthetic fall / ADL accelerometer traces with known impact times.

A fall trace rests upright at 1 g, drops into a free-fall dip, hits a
half-sine impact spike and rests lying down. ADL traces keep the magnitude
at exactly 1 g and only change orientation, so any detection on them comes
from noise. Also hosts brute-force oracles used to check the main
implementations.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .dataio import CanonicalDataset, RawSensorStream, round_half_up, synchronize
from .errors import DataError
from .signal import DetectorConfig, derive_features, label_impacts, smv_series

# codes follow the UP-Fall activity numbering
ACTIVITY_CODES = {
    "fall_forward": 1,
    "fall_backward": 3,
    "fall_lateral": 4,
    "walk": 6,
    "sit": 8,
    "lie": 11,
}
FALL_KINDS = ("fall_forward", "fall_backward", "fall_lateral")
ADL_KINDS = ("walk", "sit", "lie")

SPIKE_WIDTH_S = 0.150
DIP_LEVEL_G = 0.3
DIP_RANGE_S = (0.2, 0.4)
BASE_TIME_MS = 1_700_000_000_000
TRACE_GAP_MS = 1000
WAIST_AXES = ("waist_ax", "waist_ay", "waist_az")
# noiseless samples are kept this far (in g) from the labeling threshold
LABEL_MARGIN_G = 0.25
MAX_REDRAWS = 1000

_UPRIGHT = np.array([0.0, 0.0, 1.0])
_FINAL = {
    "fall_forward": np.array([1.0, 0.0, 0.0]),
    "fall_backward": np.array([-1.0, 0.0, 0.0]),
    "fall_lateral": np.array([0.0, 1.0, 0.0]),
}


@dataclass(frozen=True)
class TraceProfile:
    activity: str
    duration_s: float = 4.0
    sample_rate_hz: float = 18.0
    impact_time_s: float | None = None
    impact_peak_g: float = 3.0
    noise_std_g: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.activity not in ACTIVITY_CODES:
            raise DataError(f"unknown activity {self.activity!r}")
        if self.duration_s <= 0 or self.sample_rate_hz <= 0:
            raise DataError("duration and sample rate must be positive")
        if self.noise_std_g < 0:
            raise DataError("noise std must be >= 0")
        if self.is_fall:
            if self.impact_time_s is None:
                raise DataError("fall profiles need an impact time")
            half = SPIKE_WIDTH_S / 2
            if not (half + DIP_RANGE_S[1] <= self.impact_time_s <= self.duration_s - half):
                raise DataError(f"impact time {self.impact_time_s} s does not fit in {self.duration_s} s")
            if not 2.5 <= self.impact_peak_g <= 6.0:
                raise DataError(f"impact peak must lie in [2.5, 6] g, got {self.impact_peak_g}")

    @property
    def is_fall(self) -> bool:
        return self.activity in FALL_KINDS


@dataclass(frozen=True)
class GroundTruth:
    trace_id: str
    start_ms: int
    end_ms: int


def _unit(v):
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def _clean_signal(profile: TraceProfile, t: np.ndarray, dip_s: float) -> np.ndarray:
    n = len(t)
    if profile.activity == "walk":
        tilt = 0.15 * np.sin(2 * math.pi * 1.8 * t)
        return np.column_stack([np.sin(tilt), np.zeros(n), np.cos(tilt)])
    if profile.activity == "sit":
        return np.tile(_unit(np.array([0.0, 0.5, 0.87])), (n, 1))
    if profile.activity == "lie":
        return np.tile(np.array([0.0, 1.0, 0.0]), (n, 1))

    spike_start = profile.impact_time_s - SPIKE_WIDTH_S / 2
    spike_end = spike_start + SPIKE_WIDTH_S
    dip_start = spike_start - dip_s
    frac = np.clip((t - dip_start) / (spike_end - dip_start), 0.0, 1.0)[:, None]
    orient = _unit((1 - frac) * _UPRIGHT + frac * _FINAL[profile.activity])
    mag = np.ones(n)
    mag[(t >= dip_start) & (t < spike_start)] = DIP_LEVEL_G
    in_spike = (t >= spike_start) & (t <= spike_end)
    phase = np.sin(math.pi * (t[in_spike] - spike_start) / SPIKE_WIDTH_S)
    mag[in_spike] = np.maximum(DIP_LEVEL_G, profile.impact_peak_g * phase)
    return orient * mag[:, None]


def _sample_times(profile: TraceProfile, start_ms: int):
    n = int(math.floor(profile.duration_s * profile.sample_rate_hz)) + 1
    k = np.arange(n)
    t = k / profile.sample_rate_hz
    ts = np.array([start_ms + round_half_up(v * 1000.0) for v in t], dtype=np.int64)
    return t, ts


def impact_interval(profile: TraceProfile, beta: float = 2.0) -> tuple[float, float] | None:
    """Seconds during which the noiseless spike magnitude exceeds ``beta``."""
    if not profile.is_fall or profile.impact_peak_g <= beta:
        return None
    offset = SPIKE_WIDTH_S * math.asin(beta / profile.impact_peak_g) / math.pi
    start = profile.impact_time_s - SPIKE_WIDTH_S / 2
    return start + offset, start + SPIKE_WIDTH_S - offset


def sample_margin(profile: TraceProfile, beta: float = 2.0) -> float:
    """Smallest distance between any noiseless sampled magnitude and ``beta``."""
    t, _ = _sample_times(profile, 0)
    mag = np.linalg.norm(_clean_signal(profile, t, DIP_RANGE_S[0]), axis=1)
    return float(np.min(np.abs(mag - beta)))


def gen_trace(profile: TraceProfile, start_ms: int = 0, device_id: str = "waist", beta: float = 2.0):
    """One trace as a 3-axis stream plus its ground-truth impact intervals.

    The ground-truth interval is where the noiseless magnitude is above
    ``beta``, so its start is the true onset for that threshold.
    """
    rng = np.random.default_rng(profile.seed)
    dip_s = float(rng.uniform(*DIP_RANGE_S))
    t, ts = _sample_times(profile, start_ms)
    acc = _clean_signal(profile, t, dip_s)
    if profile.noise_std_g > 0:
        acc = acc + rng.normal(0.0, profile.noise_std_g, size=acc.shape)
    truth = []
    interval = impact_interval(profile, beta)
    if interval is not None:
        truth.append(tuple(start_ms + round_half_up(v * 1000.0) for v in interval))
    return RawSensorStream(device_id, ("ax", "ay", "az"), ts, acc), truth


def gen_streams(n_subjects=2, trials=3, seed=0, *, duration_s=4.0, sample_rate_hz=18.0,
                noise_std_g=0.05, n_distractors=4, activities=None, beta=2.0, margin_g=LABEL_MARGIN_G):
    """Raw device streams for a whole synthetic session.

    Returns ``(streams, ground_truth)``. Devices: ``waist`` (metadata
    channels plus ax/ay/az), ``wrist`` (attenuated, noisier copy, clock +3 ms)
    and ``ambient`` (pure-noise distractor channels, clock -4 ms).

    Fall impact time and peak are redrawn until every noiseless sample sits
    at least ``margin_g`` away from ``beta``, so the two label classes are
    separated by a gap instead of touching at the threshold.
    """
    if n_subjects < 1 or trials < 1:
        raise DataError("need at least one subject and one trial")
    activities = tuple(activities or (*FALL_KINDS, *ADL_KINDS))
    rng = np.random.default_rng(seed)
    step_ms = round_half_up(duration_s * 1000.0) + TRACE_GAP_MS

    waist, wrist, ambient, truth = [], [], [], []
    trace_no = 0
    for subject in range(1, n_subjects + 1):
        for activity in activities:
            for trial in range(1, trials + 1):
                for _ in range(MAX_REDRAWS):
                    impact = float(rng.uniform(1.0, duration_s - 1.0))
                    peak = float(rng.uniform(2.5, 6.0))
                    profile = TraceProfile(activity, duration_s, sample_rate_hz,
                                           impact if activity in FALL_KINDS else None,
                                           peak, noise_std_g)
                    if margin_g <= 0 or sample_margin(profile, beta) >= margin_g:
                        break
                else:
                    raise DataError(f"no fall shape keeps a {margin_g} g margin around beta={beta}")
                trace_seed = int(rng.integers(2**31))
                profile = replace(profile, seed=trace_seed)
                start = BASE_TIME_MS + trace_no * step_ms
                stream, intervals = gen_trace(profile, start, beta=beta)
                trace_id = f"s{subject:02d}_a{ACTIVITY_CODES[activity]:02d}_t{trial}"
                truth.extend(GroundTruth(trace_id, a, b) for a, b in intervals)
                n = len(stream)
                meta = np.tile([subject, ACTIVITY_CODES[activity], trial], (n, 1))
                waist.append((stream.timestamps, np.column_stack([meta, stream.values])))
                trng = np.random.default_rng(trace_seed + 1)
                wrist_vals = 0.8 * stream.values + trng.normal(0.0, 2 * noise_std_g + 0.05, size=stream.values.shape)
                wrist.append((stream.timestamps + 3, wrist_vals))
                ambient.append((stream.timestamps - 4, trng.normal(0.0, 1.0, size=(n, n_distractors))))
                trace_no += 1

    def join(parts, device, channels):
        ts = np.concatenate([p[0] for p in parts])
        vals = np.concatenate([p[1] for p in parts])
        return RawSensorStream(device, channels, ts, vals)

    streams = [
        join(waist, "waist", ("subject", "activity", "trial", "ax", "ay", "az")),
        join(wrist, "wrist", ("ax", "ay", "az")),
        join(ambient, "ambient", tuple(f"noise{k}" for k in range(n_distractors))),
    ]
    return streams, truth


def gen_dataset(n_subjects=2, trials=3, seed=0, *, beta=2.0, window=5, **kwargs):
    """Synchronized, feature-derived and SMV-labeled synthetic dataset.

    Same path as the command-line pipeline: sync on the waist clock, derive
    SMV features from the waist axes, label SMV > beta.
    """
    streams, truth = gen_streams(n_subjects, trials, seed, beta=beta, **kwargs)
    ds = derive_features(synchronize(streams, "waist", 10), WAIST_AXES, window)
    labeled = label_impacts(ds, smv_series(ds, WAIST_AXES), DetectorConfig(beta=beta))
    return labeled, truth


def write_ground_truth(truth, path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["trace_id", "start_ms", "end_ms"])
        for g in truth:
            writer.writerow([g.trace_id, g.start_ms, g.end_ms])


def distractor_columns(dataset: CanonicalDataset) -> list[str]:
    return [n for n in dataset.feature_names if n.startswith("ambient_")]


# Independent oracles: deliberately naive, for small inputs only.

def oracle_knn(train_X, train_y, x, k) -> int:
    rows = [(sum((a - b) ** 2 for a, b in zip(r, x)), i) for i, r in enumerate(train_X)]
    rows.sort()
    votes = sum(int(train_y[i]) for _, i in rows[:k])
    return 1 if 2 * votes > k else 0


def oracle_auc(y, scores) -> float:
    pos = [s for s, t in zip(scores, y) if t == 1]
    neg = [s for s, t in zip(scores, y) if t == 0]
    if not pos or not neg:
        raise DataError("AUC needs both classes")
    total = 0.0
    for p in pos:
        for q in neg:
            total += 1.0 if p > q else 0.5 if p == q else 0.0
    return total / (len(pos) * len(neg))


def _oracle_gini(labels) -> float:
    n = len(labels)
    ones = sum(labels)
    return 1.0 - (ones / n) ** 2 - ((n - ones) / n) ** 2


def oracle_split(rows, labels, eps=1e-12):
    """Exhaustive (feature, midpoint) scan; returns (feature, threshold) or None."""
    n = len(rows)
    parent = _oracle_gini(labels)
    best, best_gain = None, eps
    for f in range(len(rows[0])):
        values = sorted(set(r[f] for r in rows))
        for lo, hi in zip(values, values[1:]):
            thr = (lo + hi) / 2.0
            if thr >= hi:
                thr = lo
            left = [labels[i] for i in range(n) if rows[i][f] <= thr]
            right = [labels[i] for i in range(n) if rows[i][f] > thr]
            gain = parent - (len(left) * _oracle_gini(left) + len(right) * _oracle_gini(right)) / n
            if best is None and gain > eps or best is not None and gain > best_gain + eps:
                best, best_gain = (f, thr), gain
    return best


def oracle_greedy_tree(train_X, train_y, queries) -> list[int]:
    """Predictions of a fully grown greedy Gini tree, rebuilt per query by recursion."""
    rows = [list(map(float, r)) for r in train_X]
    labels = [int(v) for v in train_y]

    def predict(idx, x):
        sub_rows = [rows[i] for i in idx]
        sub_labels = [labels[i] for i in idx]
        split = oracle_split(sub_rows, sub_labels) if len(idx) >= 2 and 0 < sum(sub_labels) < len(idx) else None
        if split is None:
            return 1 if 2 * sum(sub_labels) > len(sub_labels) else 0
        f, thr = split
        side = [i for i in idx if (rows[i][f] <= thr) == (x[f] <= thr)]
        return predict(side, x)

    return [predict(list(range(len(rows))), list(map(float, q))) for q in queries]
