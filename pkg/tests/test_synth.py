import numpy as np
import pytest

from impactfall.errors import DataError
from impactfall.signal import DetectorConfig, SmvSeries, detect_onset, segment_events, smv
from impactfall.synth import (
    ACTIVITY_CODES, ADL_KINDS, FALL_KINDS, TraceProfile, distractor_columns, gen_dataset, gen_streams,
    gen_trace, impact_interval, oracle_auc, oracle_knn, sample_margin,
)


def trace_smv(stream):
    return SmvSeries(stream.timestamps, np.linalg.norm(stream.values, axis=1))


def test_adl_zero_noise_is_one_g():
    for kind in ADL_KINDS:
        s, truth = gen_trace(TraceProfile(kind, noise_std_g=0.0))
        np.testing.assert_allclose(trace_smv(s).values, 1.0, atol=1e-12)
        assert truth == []


def test_fall_at_1_9_s_onset():
    profile = TraceProfile("fall_forward", impact_time_s=1.9, impact_peak_g=3.0, seed=4)
    s, truth = gen_trace(profile)
    onset = detect_onset(trace_smv(s), DetectorConfig(2.0))
    assert abs(onset - 1900) <= 1000 / 18 + 75
    assert abs(onset - truth[0][0]) <= 1000 / 18


def test_fall_shape():
    profile = TraceProfile("fall_lateral", impact_time_s=2.0, impact_peak_g=4.0, noise_std_g=0.0, seed=1)
    s, _ = gen_trace(profile)
    mag = trace_smv(s).values
    t = (s.timestamps - s.timestamps[0]) / 1000.0
    assert np.all(mag[t < 1.4] == pytest.approx(1.0))
    assert np.all(mag[t > 2.2] == pytest.approx(1.0))
    pre = (t > 1.925 - 0.2) & (t < 1.925)
    assert np.all(mag[pre] < 0.5)
    assert mag.max() <= 4.0 + 1e-12 and mag.max() > 2.0


def test_determinism_and_profile_validation():
    p = TraceProfile("fall_backward", impact_time_s=2.0, seed=9)
    a, _ = gen_trace(p)
    b, _ = gen_trace(p)
    np.testing.assert_array_equal(a.values, b.values)
    with pytest.raises(DataError):
        TraceProfile("fall_forward")
    with pytest.raises(DataError):
        TraceProfile("fall_forward", impact_time_s=3.99)
    with pytest.raises(DataError):
        TraceProfile("fall_forward", impact_time_s=2.0, impact_peak_g=7.0)
    with pytest.raises(DataError):
        TraceProfile("jump")


def test_impact_interval():
    p = TraceProfile("fall_forward", impact_time_s=2.0, impact_peak_g=2.0 / np.sin(np.pi / 4))
    a, b = impact_interval(p, 2.0)
    assert a == pytest.approx(2.0 - 0.075 + 0.0375) and b == pytest.approx(2.0 + 0.075 - 0.0375)
    assert impact_interval(TraceProfile("walk")) is None


def test_dataset_counts_and_labels():
    ds, truth = gen_dataset(2, 3, seed=0)
    keys = {(s, a, t) for s, a, t in zip(ds.subject, ds.activity, ds.trial)}
    assert len(keys) == 2 * 3 * 6
    assert len(truth) == 2 * 3 * len(FALL_KINDS)
    mag = np.array([smv(*r) for r in ds.select(["waist_ax", "waist_ay", "waist_az"]).features])
    assert ds.labels.mean() == pytest.approx(np.mean(mag > 2.0))
    assert set(ds.activity.tolist()) == set(ACTIVITY_CODES.values())
    assert len(distractor_columns(ds)) == 4


def test_generated_classes_keep_a_margin():
    streams, _ = gen_streams(2, 3, seed=1, noise_std_g=0.0)
    waist = streams[0]
    mag = np.linalg.norm(waist.values[:, 3:6], axis=1)
    assert np.min(np.abs(mag - 2.0)) >= 0.25 - 1e-12
    p = TraceProfile("fall_forward", impact_time_s=2.0, impact_peak_g=3.0)
    assert sample_margin(p, 2.0) >= 0


def test_every_fall_has_an_event_and_adl_has_none():
    streams, truth = gen_streams(2, 3, seed=2, noise_std_g=0.1)
    waist = streams[0]
    series = SmvSeries(waist.timestamps, np.linalg.norm(waist.values[:, 3:6], axis=1))
    events = segment_events(series, DetectorConfig(2.0))
    for g in truth:
        assert any(e.start <= g.end_ms and e.end >= g.start_ms for e in events)
    assert len(events) == len(truth)


def test_oracles_basic():
    assert oracle_auc([0, 0, 1, 1], [0.1, 0.4, 0.35, 0.8]) == 0.75
    X = [[0.0], [1.0], [5.0]]
    assert oracle_knn(X, [0, 1, 1], [1.0], 1) == 1
    perm = [2, 0, 1]
    assert oracle_knn([X[i] for i in perm], [[0, 1, 1][i] for i in perm], [0.2], 1) == 0
    with pytest.raises(DataError):
        oracle_auc([1, 1], [0.1, 0.2])
