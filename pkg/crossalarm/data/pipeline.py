"""crossalarm - Data pipeline"""

from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from loguru import logger
from numpy.lib.stride_tricks import sliding_window_view
from pydantic import BaseModel

from crossalarm.data.frame import (
    NormStats,
    Splits,
    SplitSpec,
    TimeSeriesFrame,
    WindowSet,
    to_utc_timestamp,
)
from crossalarm.exceptions import ConfigError, DataError, UsageError

OutlierRule = Callable[[TimeSeriesFrame], TimeSeriesFrame]


class IngestReport(BaseModel):
    """Model for the row accounting of one CSV ingestion"""

    path: str
    rows_read: int
    dropped_timestamps: int
    duplicate_timestamps: int
    rows_kept: int


def read_csv(
    path: Union[str, Path],
    channel_map: Dict[str, str],
    timestamp_column: str = "timestamp",
) -> Tuple[TimeSeriesFrame, IngestReport]:
    """
    Method used to parse a drilling CSV into a time-sorted frame plus row accounting.

    `channel_map` maps CSV header names to canonical channel names; its order
    fixes the channel order of the frame.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: file not found.")
    try:
        raw = pd.read_csv(path, encoding="utf-8")
    except pd.errors.EmptyDataError as error:
        raise DataError(f"{path}: file is empty.") from error

    if timestamp_column not in raw.columns:
        raise ConfigError(f"{path}: timestamp column '{timestamp_column}' not in header.")
    missing = [column for column in channel_map if column not in raw.columns]
    if missing:
        raise ConfigError(f"{path}: mapped channel column(s) {missing} not in header.")
    if raw.empty:
        raise DataError(f"{path}: file has a header but no rows.")

    stamps = pd.to_datetime(raw[timestamp_column], utc=True, errors="coerce", format="ISO8601")
    unparsed = stamps.isna()
    dropped = int(unparsed.sum())
    if dropped:
        logger.warning(f"{path}: dropped {dropped} row(s) with unparseable timestamps")

    values = raw.loc[~unparsed, list(channel_map)].apply(pd.to_numeric, errors="coerce")
    values.columns = list(channel_map.values())
    values.index = pd.DatetimeIndex(stamps[~unparsed])
    values = values.sort_index(kind="mergesort")

    duplicated = values.index.duplicated(keep="last")
    duplicates = int(duplicated.sum())
    if duplicates:
        logger.warning(f"{path}: collapsed {duplicates} duplicate timestamp(s) to their last value")
        values = values[~duplicated]

    if values.empty:
        raise DataError(f"{path}: no rows with a parseable timestamp.")

    frame = TimeSeriesFrame(
        timestamps=values.index,
        channels=list(values.columns),
        values=values.to_numpy(dtype=np.float64),
    )
    report = IngestReport(
        path=str(path),
        rows_read=len(raw),
        dropped_timestamps=dropped,
        duplicate_timestamps=duplicates,
        rows_kept=frame.n_rows,
    )
    logger.info(f"{path}: ingested {frame.n_rows} rows x {frame.n_channels} channels")
    return frame, report


def ingest_csv(
    path: Union[str, Path],
    channel_map: Dict[str, str],
    timestamp_column: str = "timestamp",
) -> TimeSeriesFrame:
    frame, _ = read_csv(path, channel_map, timestamp_column)
    return frame


def remove_outliers(frame: TimeSeriesFrame, rule: Optional[OutlierRule] = None) -> TimeSeriesFrame:
    """
    Outlier removal hook. No rule is applied unless one is supplied.
    """
    if rule is None:
        return frame
    return rule(frame)


def _seconds(frame: TimeSeriesFrame) -> np.ndarray:
    return np.asarray((frame.timestamps - frame.timestamps[0]) / pd.Timedelta(seconds=1), dtype=np.float64)


def split_segments(frame: TimeSeriesFrame, max_gap_s: float = 300.0) -> List[TimeSeriesFrame]:
    """
    Split a frame wherever consecutive timestamps are more than max_gap_s apart.
    """
    if frame.n_rows == 0:
        return []
    gaps = np.diff(_seconds(frame)) > max_gap_s
    boundaries = (np.flatnonzero(gaps) + 1).tolist()
    edges = [0] + boundaries + [frame.n_rows]
    return [frame.rows(start, stop) for start, stop in zip(edges[:-1], edges[1:])]


def _resample_segment(segment: TimeSeriesFrame, cadence_s: float) -> TimeSeriesFrame:
    seconds = _seconds(segment)
    steps = int(np.floor(seconds[-1] / cadence_s + 1e-9))
    grid = np.arange(steps + 1, dtype=np.float64) * cadence_s

    columns = []
    for position, channel in enumerate(segment.channels):
        column = segment.values[:, position]
        finite = np.isfinite(column)
        if finite.sum() < 2:
            raise DataError(
                f"Channel '{channel}' has fewer than 2 values in the segment starting "
                f"{segment.timestamps[0].isoformat()}."
            )
        columns.append(np.interp(grid, seconds[finite], column[finite]))

    timestamps = segment.timestamps[0] + pd.to_timedelta(grid, unit="s")
    return TimeSeriesFrame(
        timestamps=timestamps,
        channels=list(segment.channels),
        values=np.column_stack(columns),
        cadence_s=float(cadence_s),
    )


def resample_segments(
    frame: TimeSeriesFrame, cadence_s: float, max_gap_s: float = 300.0
) -> List[TimeSeriesFrame]:
    """
    Method used to resample every gap-free segment onto a uniform cadence grid.

    Segments with fewer than two rows cannot be interpolated and are skipped.
    """
    if cadence_s <= 0:
        raise UsageError(f"cadence_s must be positive, got {cadence_s}.")
    if frame.n_rows < 2:
        raise DataError(f"Resampling needs at least 2 rows, got {frame.n_rows}.")

    segments = [segment for segment in split_segments(frame, max_gap_s) if segment.n_rows >= 2]
    if not segments:
        raise DataError(
            f"Every row is isolated by a gap longer than {max_gap_s} s; nothing to interpolate."
        )
    return [_resample_segment(segment, cadence_s) for segment in segments]


def resample_linear(
    frame: TimeSeriesFrame,
    cadence_s: float,
    max_gap_s: float = 300.0,
    keep: Optional[object] = None,
) -> TimeSeriesFrame:
    """
    Method used to linearly interpolate a frame onto a uniform grid.

    Gaps longer than max_gap_s are never interpolated across; the segment
    containing `keep` (a timestamp) is returned, otherwise the longest one.
    """
    segments = resample_segments(frame, cadence_s, max_gap_s)
    chosen = max(segments, key=lambda segment: segment.n_rows)
    if keep is not None:
        stamp = to_utc_timestamp(keep)
        containing = [s for s in segments if s.timestamps[0] <= stamp <= s.timestamps[-1]]
        if not containing:
            raise DataError(f"No gap-free segment contains {stamp.isoformat()}.")
        chosen = containing[0]
    if len(segments) > 1:
        logger.warning(
            f"Kept 1 of {len(segments)} gap-free segments "
            f"({chosen.timestamps[0].isoformat()} to {chosen.timestamps[-1].isoformat()})"
        )
    return chosen


def fit_stats(train_frame: TimeSeriesFrame) -> NormStats:
    """
    Method used to fit per-channel mean and population standard deviation.
    """
    if train_frame.n_rows == 0:
        raise DataError("Cannot fit normalization statistics on an empty frame.")
    mean = train_frame.values.mean(axis=0)
    std = train_frame.values.std(axis=0)
    for channel, mu, sigma in zip(train_frame.channels, mean, std):
        if sigma <= 1e-12 * max(1.0, abs(mu)):
            raise DataError(f"Channel '{channel}' has zero variance and cannot be normalized.")
    return NormStats(channels=list(train_frame.channels), mean=mean.tolist(), std=std.tolist())


def normalize(frame: TimeSeriesFrame, stats: NormStats) -> TimeSeriesFrame:
    stats.check_channels(frame.channels)
    return frame.with_values(stats.normalize_values(frame.values))


def denormalize(frame: TimeSeriesFrame, stats: NormStats) -> TimeSeriesFrame:
    stats.check_channels(frame.channels)
    return frame.with_values(stats.denormalize_values(frame.values))


def split(frame: TimeSeriesFrame, spec: SplitSpec) -> Splits:
    """
    Method used to divide a frame into contiguous train/val/test splits.

    The annotated anomaly region, when present, must fall inside the test split.
    """
    rows = frame.n_rows
    n_train = int(round(rows * spec.train_fraction))
    n_val = int(round(rows * spec.val_fraction))
    if n_train + n_val > rows:
        n_val = rows - n_train

    splits = Splits(
        train=frame.rows(0, n_train),
        val=frame.rows(n_train, n_train + n_val),
        test=frame.rows(n_train + n_val, rows),
    )

    if spec.anomaly_start is not None:
        if splits.test.n_rows == 0:
            raise ConfigError("The test split is empty but an anomaly region is annotated.")
        start = to_utc_timestamp(spec.anomaly_start)
        end = to_utc_timestamp(spec.anomaly_end) if spec.anomaly_end is not None else start
        first, last = splits.test.timestamps[0], splits.test.timestamps[-1]
        if start < first or end > last:
            raise ConfigError(
                f"Anomaly region {start.isoformat()} to {end.isoformat()} is not inside the "
                f"test split ({first.isoformat()} to {last.isoformat()}); adjust the split fractions."
            )

    logger.info(
        f"Split {rows} rows into {splits.train.n_rows}/{splits.val.n_rows}/{splits.test.n_rows}"
    )
    return splits


def make_windows(
    frame: Union[TimeSeriesFrame, np.ndarray],
    input_len: int,
    horizon: int,
    stride: int = 1,
) -> WindowSet:
    """
    Method used to cut (input, target) pairs: window k reads rows [k, k+T) and
    targets rows [k+T, k+T+tau).
    """
    values = frame.values if isinstance(frame, TimeSeriesFrame) else np.asarray(frame, dtype=np.float64)
    if input_len < 1 or horizon < 1 or stride < 1:
        raise UsageError("input_len, horizon and stride must all be positive.")
    rows = values.shape[0]
    count = rows - input_len - horizon + 1
    if count < 1:
        raise DataError(
            f"Frame has {rows} rows; windows need at least input_len + horizon = {input_len + horizon}."
        )

    span = sliding_window_view(values, input_len + horizon, axis=0)
    starts = np.arange(0, count, stride)
    blocks = np.transpose(span[starts], (0, 2, 1))
    return WindowSet(
        inputs=np.ascontiguousarray(blocks[:, :input_len, :]),
        targets=np.ascontiguousarray(blocks[:, input_len:, :]),
        starts=starts,
    )


def format_timestamps(timestamps: pd.DatetimeIndex) -> List[str]:
    """ISO-8601 UTC strings with a trailing Z; sub-second digits only when present."""
    if len(timestamps) and np.any(np.asarray(timestamps.asi8) % 1_000_000_000 != 0):
        return list(timestamps.strftime("%Y-%m-%dT%H:%M:%S.%fZ"))
    return list(timestamps.strftime("%Y-%m-%dT%H:%M:%SZ"))


def write_frame_csv(frame: TimeSeriesFrame, path: Union[str, Path]) -> None:
    table = pd.DataFrame(frame.values, columns=frame.channels)
    table.insert(0, "timestamp", format_timestamps(frame.timestamps))
    table.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")


def read_frame_csv(
    path: Union[str, Path], cadence_s: Optional[float] = None
) -> TimeSeriesFrame:
    """
    Method used to load a frame previously written by `write_frame_csv`.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: file not found; run the preprocess command first.")
    table = pd.read_csv(path, encoding="utf-8")
    if "timestamp" not in table.columns:
        raise DataError(f"{path}: missing 'timestamp' column.")
    channels = [column for column in table.columns if column != "timestamp"]
    return TimeSeriesFrame(
        timestamps=pd.to_datetime(table["timestamp"], utc=True, format="ISO8601"),
        channels=channels,
        values=table[channels].to_numpy(dtype=np.float64),
        cadence_s=cadence_s,
    )
