import numpy as np
import pandas as pd
import pytest

from crossalarm.data import pipeline
from crossalarm.data.frame import SplitSpec, TimeSeriesFrame
from crossalarm.data.synthetic import coupled_sines, inject_regime_shift
from crossalarm.exceptions import ConfigError, DataError, UsageError

CHANNEL_MAP = {"TQA": "torque", "HKLD": "hookload"}


def _frame(seconds, columns, start="2007-07-06T19:23:52Z"):
    timestamps = pd.Timestamp(start) + pd.to_timedelta(np.asarray(seconds, dtype=float), unit="s")
    return TimeSeriesFrame(
        timestamps=timestamps,
        channels=[f"c{i}" for i in range(len(columns))],
        values=np.column_stack(columns),
    )


def _write_csv(path, rows):
    lines = ["timestamp,TQA,HKLD,extra"] + [",".join(str(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def test_ingest_well_formed_csv(tmp_path):
    """Test ingestion of a 3-row file."""
    path = _write_csv(
        tmp_path / "raw.csv",
        [
            ("2007-07-06T19:23:52Z", 1.0, 10.0, 0),
            ("2007-07-06T19:23:56Z", 2.0, 20.0, 0),
            ("2007-07-06T19:24:00Z", 3.0, 30.0, 0),
        ],
    )
    frame = pipeline.ingest_csv(path, CHANNEL_MAP)
    assert frame.n_rows == 3
    assert frame.channels == ["torque", "hookload"]
    assert str(frame.timestamps.tz) == "UTC"


def test_ingest_sorts_and_collapses_duplicates(tmp_path):
    """Test sorting of shuffled rows and last-value duplicate policy."""
    path = _write_csv(
        tmp_path / "raw.csv",
        [
            ("2007-07-06T19:24:00Z", 3.0, 30.0, 0),
            ("2007-07-06T19:23:52Z", 1.0, 10.0, 0),
            ("2007-07-06T19:23:56Z", 2.0, 20.0, 0),
            ("2007-07-06T19:23:56Z", 5.0, 50.0, 0),
            ("not-a-time", 9.0, 90.0, 0),
        ],
    )
    frame, report = pipeline.read_csv(path, CHANNEL_MAP)
    assert frame.timestamps.is_monotonic_increasing
    np.testing.assert_allclose(frame.column("torque"), [1.0, 5.0, 3.0])
    assert report.duplicate_timestamps == 1
    assert report.dropped_timestamps == 1
    assert report.rows_kept == 3


def test_ingest_missing_channel(tmp_path):
    """Test the config error naming a missing column."""
    path = _write_csv(tmp_path / "raw.csv", [("2007-07-06T19:23:52Z", 1.0, 10.0, 0)])
    with pytest.raises(ConfigError, match="SPP"):
        pipeline.ingest_csv(path, {"TQA": "torque", "SPP": "standpipe_pressure"})


def test_ingest_empty_file(tmp_path):
    """Test the data error for an empty file."""
    path = tmp_path / "empty.csv"
    path.write_text("", encoding="utf-8")
    with pytest.raises(DataError):
        pipeline.ingest_csv(path, CHANNEL_MAP)


def test_remove_outliers_applies_only_a_supplied_rule():
    """Test the pass-through default and a clipping rule."""
    frame = _frame([0, 4, 8], [[1.0, 500.0, 2.0], [3.0, 3.0, 3.0]])
    assert pipeline.remove_outliers(frame) is frame

    def clip(f):
        return f.with_values(np.clip(f.values, None, 10.0))

    np.testing.assert_array_equal(pipeline.remove_outliers(frame, clip).values[:, 0], [1.0, 10.0, 2.0])


def test_resample_linear_midpoint():
    """Test interpolation between two samples 8 s apart."""
    frame = _frame([0, 8], [[0.0, 8.0], [1.0, 1.0]])
    out = pipeline.resample_linear(frame, 4.0)
    np.testing.assert_allclose(out.values[:, 0], [0.0, 4.0, 8.0])
    assert out.cadence_s == 4.0


def test_resample_is_idempotent_on_uniform_series(rng):
    """Test that a 4 s series is unchanged by 4 s resampling."""
    values = rng.normal(size=(50, 2))
    frame = _frame(np.arange(50) * 4.0, [values[:, 0], values[:, 1]])
    out = pipeline.resample_linear(frame, 4.0)
    np.testing.assert_allclose(out.values, frame.values, atol=1e-12)
    assert (out.timestamps == frame.timestamps).all()


def test_resample_coarse_series_matches_interp_oracle(rng):
    """Test 15 s data resampled to 4 s against numpy interpolation."""
    seconds = np.arange(11) * 15.0
    columns = [rng.normal(size=11), rng.normal(size=11)]
    out = pipeline.resample_linear(_frame(seconds, columns), 4.0)
    grid = np.arange(int(150 // 4) + 1) * 4.0
    assert out.n_rows == len(grid)
    np.testing.assert_allclose(out.values[:, 0], np.interp(grid, seconds, columns[0]))
    assert out.values[0, 1] == columns[1][0]
    assert np.all(np.diff(out.timestamps.asi8) == 4 * 10**9)


def test_resample_splits_on_long_gaps():
    """Test that gaps over max_gap produce segments instead of interpolation."""
    seconds = list(np.arange(10) * 4.0) + list(1000.0 + np.arange(30) * 4.0)
    frame = _frame(seconds, [np.arange(40.0), np.arange(40.0)])
    segments = pipeline.resample_segments(frame, 4.0, max_gap_s=300.0)
    assert [s.n_rows for s in segments] == [10, 30]
    assert pipeline.resample_linear(frame, 4.0).n_rows == 30
    kept = pipeline.resample_linear(frame, 4.0, keep=frame.timestamps[3])
    assert kept.n_rows == 10


def test_resample_errors():
    """Test errors for a bad cadence and for rows isolated by gaps."""
    frame = _frame([0, 1000], [[0.0, 1.0], [0.0, 1.0]])
    with pytest.raises(UsageError):
        pipeline.resample_linear(frame, 0.0)
    with pytest.raises(DataError):
        pipeline.resample_linear(frame, 4.0, max_gap_s=300.0)


def test_fit_stats_and_normalize():
    """Test population statistics and the normalization round trip."""
    frame = _frame([0, 4, 8], [[2.0, 4.0, 6.0], [1.0, 5.0, 3.0]])
    stats = pipeline.fit_stats(frame)
    assert stats.mean[0] == 4.0
    normalized = pipeline.normalize(frame, stats)
    np.testing.assert_allclose(normalized.values[:, 0], [-1.224744871, 0.0, 1.224744871], atol=1e-8)
    restored = pipeline.denormalize(normalized, stats)
    np.testing.assert_allclose(restored.values, frame.values, rtol=1e-10)


def test_fit_stats_rejects_constant_channel():
    """Test the data error naming a zero-variance channel."""
    frame = _frame([0, 4, 8], [[1.0, 2.0, 3.0], [5.0, 5.0, 5.0]])
    with pytest.raises(DataError, match="c1"):
        pipeline.fit_stats(frame)


def test_val_split_normalized_with_train_stats(sine_frame):
    """Test that later splits are not re-centred."""
    splits = pipeline.split(sine_frame.rows(0, 120), SplitSpec())
    stats = pipeline.fit_stats(splits.train)
    val = pipeline.normalize(splits.val, stats)
    assert abs(val.values.mean()) > 1e-6


@pytest.mark.parametrize("rows, expected", [(1000, (700, 100, 200)), (10, (7, 1, 2))])
def test_split_sizes(rows, expected):
    """Test contiguous 0.7/0.1/0.2 splits."""
    frame = _frame(np.arange(rows) * 4.0, [np.arange(rows, dtype=float), np.ones(rows) * np.arange(rows)])
    splits = pipeline.split(frame, SplitSpec())
    assert (splits.train.n_rows, splits.val.n_rows, splits.test.n_rows) == expected
    joined = np.concatenate([splits.train.values, splits.val.values, splits.test.values])
    np.testing.assert_array_equal(joined, frame.values)


def test_split_rejects_anomaly_outside_test():
    """Test the config error when the anomaly starts before the test split."""
    frame = _frame(np.arange(1000) * 4.0, [np.arange(1000.0), np.arange(1000.0) * 2])
    spec = SplitSpec(anomaly_start=frame.timestamps[650].to_pydatetime())
    with pytest.raises(ConfigError):
        pipeline.split(frame, spec)
    inside = SplitSpec(anomaly_start=frame.timestamps[900].to_pydatetime())
    assert pipeline.split(frame, inside).test.n_rows == 200


def test_split_fractions_must_sum_to_one():
    """Test split fraction validation."""
    with pytest.raises(ConfigError):
        SplitSpec(train_fraction=0.5, val_fraction=0.1, test_fraction=0.2)


def test_make_windows_counts_and_shift():
    """Test window counting and the stride-1 shift property."""
    values = np.arange(20.0).reshape(10, 2)
    windows = pipeline.make_windows(values, input_len=6, horizon=2)
    assert len(windows) == 3
    np.testing.assert_array_equal(windows.inputs[1, :-1], windows.inputs[0, 1:])
    np.testing.assert_array_equal(windows.targets[0], values[6:8])
    assert len(pipeline.make_windows(values, input_len=8, horizon=2)) == 1
    with pytest.raises(DataError):
        pipeline.make_windows(values, input_len=9, horizon=2)


def test_make_windows_stride_tiles_targets():
    """Test that stride tau windows have disjoint targets."""
    values = np.arange(60.0).reshape(30, 2)
    windows = pipeline.make_windows(values, input_len=6, horizon=4, stride=4)
    rows = [set(range(s + 6, s + 10)) for s in windows.starts]
    for first, second in zip(rows, rows[1:]):
        assert not first & second


def test_frame_csv_round_trip(tmp_path, sine_frame):
    """Test that written frames read back unchanged."""
    path = tmp_path / "frame.csv"
    pipeline.write_frame_csv(sine_frame, path)
    restored = pipeline.read_frame_csv(path, cadence_s=4.0)
    np.testing.assert_array_equal(restored.values, sine_frame.values)
    assert (restored.timestamps == sine_frame.timestamps).all()


def test_synthetic_series_is_positive_and_shift_changes_region():
    """Test the synthetic fixtures."""
    frame = coupled_sines(n_steps=500, seed=1)
    assert frame.n_channels == 10
    assert np.all(frame.values > 0)
    shifted = inject_regime_shift(frame, 300, 400, ["torque", "hookload", "rotary_speed"])
    np.testing.assert_array_equal(shifted.values[:300], frame.values[:300])
    assert not np.allclose(shifted.column("torque")[300:400], frame.column("torque")[300:400])
    with pytest.raises(UsageError):
        inject_regime_shift(frame, 300, 400, ["torque"])
