"""crossalarm - Time series frame models"""

from datetime import datetime
from typing import List, Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel, field_validator, model_validator

from crossalarm.exceptions import ConfigError, DataError


def to_utc_index(values) -> pd.DatetimeIndex:
    index = pd.DatetimeIndex(values)
    if index.tz is None:
        return index.tz_localize("UTC")
    return index.tz_convert("UTC")


def to_utc_timestamp(value) -> pd.Timestamp:
    stamp = pd.Timestamp(value)
    if stamp.tzinfo is None:
        return stamp.tz_localize("UTC")
    return stamp.tz_convert("UTC")


def _frozen_array(value, ndim: int) -> np.ndarray:
    array = np.array(value, dtype=np.float64, copy=True)
    if array.ndim != ndim:
        raise DataError(f"Expected a {ndim}-D array, got shape {array.shape}.")
    array.setflags(write=False)
    return array


class TimeSeriesFrame(BaseModel):
    """Timestamped multivariate series; rows are time steps, columns are channels."""

    timestamps: pd.DatetimeIndex
    channels: List[str]
    values: np.ndarray
    cadence_s: Optional[float] = None

    model_config = {"arbitrary_types_allowed": True, "frozen": True}

    @field_validator("timestamps", mode="before")
    @classmethod
    def utc_timestamps(cls, value):
        return to_utc_index(value)

    @field_validator("values", mode="before")
    @classmethod
    def read_only_values(cls, value):
        return _frozen_array(value, ndim=2)

    @model_validator(mode="after")
    def check_layout(self):
        rows, columns = self.values.shape
        if len(self.channels) < 2:
            raise DataError(f"A frame needs at least 2 channels, got {self.channels}.")
        if columns != len(self.channels):
            raise DataError(
                f"Frame has {columns} value columns but {len(self.channels)} channel names."
            )
        if len(self.timestamps) != rows:
            raise DataError(
                f"Frame has {rows} rows but {len(self.timestamps)} timestamps."
            )
        if len(set(self.channels)) != len(self.channels):
            raise DataError(f"Duplicate channel names in {self.channels}.")
        return self

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_channels(self) -> int:
        return self.values.shape[1]

    def with_values(self, values: np.ndarray) -> "TimeSeriesFrame":
        return TimeSeriesFrame(
            timestamps=self.timestamps,
            channels=list(self.channels),
            values=values,
            cadence_s=self.cadence_s,
        )

    def rows(self, start: int, stop: int) -> "TimeSeriesFrame":
        return TimeSeriesFrame(
            timestamps=self.timestamps[start:stop],
            channels=list(self.channels),
            values=self.values[start:stop],
            cadence_s=self.cadence_s,
        )

    def column(self, channel: str) -> np.ndarray:
        return self.values[:, self.channels.index(channel)]

    def to_dataframe(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.values, columns=self.channels)
        frame.insert(0, "timestamp", self.timestamps)
        return frame


class NormStats(BaseModel):
    """Per-channel mean and population standard deviation fitted on the training split."""

    channels: List[str]
    mean: List[float]
    std: List[float]

    @model_validator(mode="after")
    def check_stats(self):
        if not (len(self.channels) == len(self.mean) == len(self.std)):
            raise DataError("NormStats channels, mean and std must have equal lengths.")
        for channel, std in zip(self.channels, self.std):
            if not np.isfinite(std) or std <= 0.0:
                raise DataError(f"Channel '{channel}' has zero variance and cannot be normalized.")
        return self

    def check_channels(self, channels: List[str]) -> None:
        if list(channels) != list(self.channels):
            raise ConfigError(
                f"Channel order {list(channels)} does not match normalization stats {self.channels}."
            )

    def normalize_values(self, values: np.ndarray) -> np.ndarray:
        return (np.asarray(values, dtype=np.float64) - np.asarray(self.mean)) / np.asarray(self.std)

    def denormalize_values(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values, dtype=np.float64) * np.asarray(self.std) + np.asarray(self.mean)


class SplitSpec(BaseModel):
    """Model for the contiguous train/val/test division and the anomaly annotation"""

    train_fraction: float = 0.7
    val_fraction: float = 0.1
    test_fraction: float = 0.2
    anomaly_start: Optional[datetime] = None
    anomaly_end: Optional[datetime] = None

    @model_validator(mode="after")
    def check_fractions(self):
        fractions = (self.train_fraction, self.val_fraction, self.test_fraction)
        if any(f < 0 for f in fractions) or self.train_fraction == 0 or self.test_fraction == 0:
            raise ConfigError(f"Invalid split fractions {fractions}.")
        if abs(sum(fractions) - 1.0) > 1e-9:
            raise ConfigError(f"Split fractions must sum to 1, got {sum(fractions)}.")
        if (
            self.anomaly_start is not None
            and self.anomaly_end is not None
            and to_utc_timestamp(self.anomaly_end) < to_utc_timestamp(self.anomaly_start)
        ):
            raise ConfigError("anomaly_end precedes anomaly_start.")
        return self


class Splits(BaseModel):
    """Model for the three contiguous splits"""

    train: TimeSeriesFrame
    val: TimeSeriesFrame
    test: TimeSeriesFrame


class WindowSet(BaseModel):
    """Sliding windows: inputs (K, T, D), targets (K, tau, D) and the first row of every window."""

    inputs: np.ndarray
    targets: np.ndarray
    starts: np.ndarray

    model_config = {"arbitrary_types_allowed": True}

    @model_validator(mode="after")
    def check_shapes(self):
        if self.inputs.ndim != 3 or self.targets.ndim != 3:
            raise DataError("Windows must be 3-D arrays (count, steps, channels).")
        if not (len(self.inputs) == len(self.targets) == len(self.starts)):
            raise DataError("Window inputs, targets and starts differ in count.")
        return self

    def __len__(self) -> int:
        return len(self.starts)

    @property
    def input_len(self) -> int:
        return self.inputs.shape[1]

    @property
    def horizon(self) -> int:
        return self.targets.shape[1]

    def subset(self, index) -> "WindowSet":
        return WindowSet(
            inputs=self.inputs[index], targets=self.targets[index], starts=self.starts[index]
        )
