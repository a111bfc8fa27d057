import numpy as np
import pytest

from conftest import make_dataset
from impactfall.dataio import (
    IngestSchema, RawSensorStream, SplitSpec, impute_missing, ingest_csv, read_dataset, split,
    synchronize, write_dataset, write_stream_csv,
)
from impactfall.errors import DataError


def write(path, text):
    path.write_text(text)
    return path


def test_ingest_three_rows_four_channels(tmp_path):
    p = write(tmp_path / "a.csv", "timestamp_ms,a,b,c,d\n0,1,2,3,4\n10,1,2,3,4\n20,5,6,7,8\n")
    s = ingest_csv(p, IngestSchema("dev"))
    assert len(s) == 3
    assert s.channel_names == ("a", "b", "c", "d")
    assert s.values[2].tolist() == [5, 6, 7, 8]


def test_ingest_header_only_is_no_samples(tmp_path):
    p = write(tmp_path / "a.csv", "timestamp_ms,a\n")
    with pytest.raises(DataError, match="no samples"):
        ingest_csv(p, IngestSchema("dev"))


@pytest.mark.parametrize("token", ["NAN", "nan", "NaN", ""])
def test_ingest_missing_tokens(tmp_path, token):
    p = write(tmp_path / "a.csv", f"timestamp_ms,a,b\n0,1,{token}\n10,2,3\n")
    s = ingest_csv(p, IngestSchema("dev"))
    assert np.isnan(s.values[0, 1])
    assert s.values[1, 1] == 3


def test_ingest_unparseable_cell_is_missing(tmp_path):
    p = write(tmp_path / "a.csv", "timestamp_ms,a\n0,abc\n10,2\n")
    assert np.isnan(ingest_csv(p, IngestSchema("dev")).values[0, 0])


def test_ingest_errors(tmp_path):
    with pytest.raises(DataError, match="missing"):
        ingest_csv(tmp_path / "nope.csv", IngestSchema("dev"))
    p = write(tmp_path / "b.csv", "timestamp_ms,a\n10,1\n5,2\n")
    with pytest.raises(DataError):
        ingest_csv(p, IngestSchema("dev"))
    p = write(tmp_path / "c.csv", "time,a\n0,1\n")
    with pytest.raises(DataError):
        ingest_csv(p, IngestSchema("dev"))
    p = write(tmp_path / "d.csv", "timestamp_ms,a\n0,1\n")
    with pytest.raises(DataError):
        ingest_csv(p, IngestSchema("dev", channels={"x": "missing_col"}))


def test_ingest_channel_mapping_and_fractional_timestamps(tmp_path):
    p = write(tmp_path / "a.csv", "t,AccX,Other\n0.5,1,9\n2.4,2,9\n")
    s = ingest_csv(p, IngestSchema("dev", "t", {"ax": "AccX"}))
    assert s.channel_names == ("ax",)
    assert s.timestamps.tolist() == [1, 2]


def test_stream_roundtrip(tmp_path):
    s = RawSensorStream("dev", ("a", "b"), np.array([0, 5, 9]), np.array([[1.5, np.nan], [0.1, 2], [3, 4]]))
    write_stream_csv(s, tmp_path / "s.csv")
    back = ingest_csv(tmp_path / "s.csv", IngestSchema("dev"))
    np.testing.assert_array_equal(back.timestamps, s.timestamps)
    np.testing.assert_array_equal(back.values, s.values)


def stream(dev, ts, vals, channels=("x",)):
    return RawSensorStream(dev, channels, np.asarray(ts), np.asarray(vals, dtype=float).reshape(len(ts), -1))


def test_sync_identical_timestamps():
    a = stream("a", [0, 10, 20], [1, 2, 3])
    b = stream("b", [0, 10, 20], [4, 5, 6])
    ds = synchronize([a, b], "a", 10)
    assert len(ds) == 3
    assert ds.feature_names == ("a_x", "b_x")
    assert not np.isnan(ds.features).any()


def test_sync_offset_three_ms_hand_walk():
    ref = stream("a", [0, 50, 100, 150, 200], [0, 1, 2, 3, 4])
    b = stream("b", [3, 53, 103, 153, 203], [10, 11, 12, 13, 14])
    ds = synchronize([ref, b], "a", 10)
    assert ds.column("b_x").tolist() == [10, 11, 12, 13, 14]


def test_sync_tie_goes_to_earlier_sample():
    ref = stream("a", [10], [0])
    b = stream("b", [5, 15], [1, 2])
    assert synchronize([ref, b], "a", 10).column("b_x").tolist() == [1]


def test_sync_out_of_tolerance_is_empty():
    b = stream("b", [t + 50 for t in [0, 200, 400]], [1, 2, 3])
    ref = stream("a", [0, 200, 400], [0, 1, 2])
    with pytest.raises(DataError, match="empty result after synchronization"):
        synchronize([ref, b], "a", 10)


def test_sync_drops_unmatched_rows_and_respects_tolerance():
    ref = stream("a", [0, 100, 200, 300], [0, 1, 2, 3])
    b = stream("b", [2, 140, 195, 310], [9, 8, 7, 6])
    ds = synchronize([ref, b], "a", 10)
    assert ds.timestamps.tolist() == [0, 200, 300]
    assert ds.column("b_x").tolist() == [9, 7, 6]


def test_sync_errors():
    a = stream("a", [0], [1])
    with pytest.raises(DataError):
        synchronize([a], "zzz", 10)
    with pytest.raises(DataError):
        synchronize([a], "a", 0)


def test_sync_lifts_metadata_from_reference():
    ref = RawSensorStream("w", ("subject", "activity", "trial", "ax"), np.array([0, 10]),
                          np.array([[2, 6, 1, 0.5], [2, 6, 1, 0.7]]))
    ds = synchronize([ref], "w", 10)
    assert ds.feature_names == ("w_ax",)
    assert ds.subject.tolist() == [2, 2] and ds.activity.tolist() == [6, 6]


def test_impute_hand_arithmetic():
    ds = make_dataset([[1.0], [np.nan], [3.0]])
    out = impute_missing(ds, ds)
    assert out.features[:, 0].tolist() == [1, 2, 3]


def test_impute_uses_statistics_source():
    target = make_dataset([[np.nan], [5.0]])
    source = make_dataset([[10.0], [20.0]])
    assert impute_missing(target, source).features[:, 0].tolist() == [15.0, 5.0]


def test_impute_identity_and_errors():
    ds = make_dataset([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(impute_missing(ds, ds).features, ds.features)
    bad = make_dataset([[np.nan, 1.0], [np.nan, 2.0]])
    with pytest.raises(DataError, match="uninformative column"):
        impute_missing(bad, bad)
    other = make_dataset([[1.0]], names=["g"])
    with pytest.raises(DataError):
        impute_missing(make_dataset([[1.0]]), other)


def test_split_sizes_100():
    ds = make_dataset(np.arange(100.0), y=[i % 2 for i in range(100)])
    tr, va, te = split(ds, SplitSpec(seed=3))
    assert (len(tr), len(va), len(te)) == (80, 10, 10)


def test_split_floor_then_remainder_to_train():
    ds = make_dataset(np.arange(33.0), y=[1 if i < 7 else 0 for i in range(33)])
    tr, va, te = split(ds, SplitSpec(seed=0))
    assert (len(va), len(te)) == (3, 3)
    assert len(tr) == 27


def test_split_deterministic_disjoint_exhaustive():
    ds = make_dataset(np.arange(57.0), y=[int(i % 3 == 0) for i in range(57)], ts=np.arange(57))
    a = split(ds, SplitSpec(seed=7))
    b = split(ds, SplitSpec(seed=7))
    for p, q in zip(a, b):
        np.testing.assert_array_equal(p.timestamps, q.timestamps)
    all_ts = np.concatenate([p.timestamps for p in a])
    assert sorted(all_ts.tolist()) == list(range(57))


def test_split_stratified_balance_40_rows():
    y = [0] * 20 + [1] * 20
    ds = make_dataset(np.arange(40.0), y=y)
    for part in split(ds, SplitSpec(seed=1)):
        ones = int(part.labels.sum())
        assert abs(ones - len(part) / 2) <= 1


def test_split_errors():
    with pytest.raises(DataError):
        split(make_dataset(np.arange(10.0)), SplitSpec())
    with pytest.raises(DataError):
        split(make_dataset(np.arange(10.0), y=[1, 1] + [0] * 8), SplitSpec())
    with pytest.raises(DataError):
        SplitSpec(0.5, 0.2, 0.2)


def test_dataset_file_roundtrip(tmp_path):
    ds = make_dataset([[1.25, np.nan], [3.0, -4.5]], y=[0, 1], names=["a", "b"])
    write_dataset(ds, tmp_path / "d.csv")
    back = read_dataset(tmp_path / "d.csv")
    assert back.feature_names == ds.feature_names
    np.testing.assert_array_equal(back.features, ds.features)
    np.testing.assert_array_equal(back.labels, ds.labels)
    header = (tmp_path / "d.csv").read_text().splitlines()[0]
    assert header == "timestamp_ms,subject,activity,trial,a,b,label"


def test_dataset_invariants():
    with pytest.raises(DataError):
        make_dataset([[1.0], [2.0]], y=[0, 2])
    with pytest.raises(DataError):
        make_dataset([[1.0], [2.0]], ts=[10, 5])
