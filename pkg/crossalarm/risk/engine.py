"""crossalarm - Risk signal, warning threshold and alarm detection"""

from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from loguru import logger
from pydantic import BaseModel

from crossalarm.data.frame import TimeSeriesFrame, to_utc_timestamp
from crossalarm.exceptions import AlignmentError, ConfigError, UsageError
from crossalarm.models import AlarmInterval, AlarmReport, ThresholdConfig
from crossalarm.network.hed import PredictionSeries


class RiskSeries(BaseModel):
    """
    Relative errors per channel (percent), their min-max normalized form for
    the included channels, and the Risk sum per time step.
    """

    timestamps: pd.DatetimeIndex
    channels: List[str]
    excluded: List[str]
    relative_errors: np.ndarray
    normalized: np.ndarray
    risk: np.ndarray

    model_config = {"arbitrary_types_allowed": True}

    @property
    def included(self) -> List[str]:
        return [c for c in self.channels if c not in self.excluded]

    def __len__(self) -> int:
        return len(self.risk)

    def to_dataframe(self, w_v: Optional[float] = None) -> pd.DataFrame:
        """Columns timestamp, risk, threshold, alarm and one normalized error per included channel."""
        frame = pd.DataFrame({"timestamp": self.timestamps, "risk": self.risk})
        threshold = np.full(len(self.risk), np.nan if w_v is None else w_v)
        frame["threshold"] = threshold
        frame["alarm"] = (self.risk > w_v).astype(int) if w_v is not None else 0
        for position, channel in enumerate(self.included):
            frame[channel] = self.normalized[:, position]
        return frame


class NormalStats(BaseModel):
    """Model for the Risk mean and population deviation over the normal window"""

    mu: float
    sigma: float
    samples: int
    start: int
    stop: int


def relative_error(truth, prediction, epsilon: Union[float, np.ndarray] = 0.0) -> np.ndarray:
    """
    Percent error |truth - prediction| / |truth| * 100, or 0 where |truth| <= epsilon.

    `epsilon` broadcasts, so a per-channel guard can be given as a row vector.
    """
    truth = np.asarray(truth, dtype=np.float64)
    prediction = np.asarray(prediction, dtype=np.float64)
    magnitude = np.abs(truth)
    guarded = magnitude > epsilon
    safe = np.where(guarded, magnitude, 1.0)
    return np.where(guarded, np.abs(truth - prediction) / safe * 100.0, 0.0)


def normalize_errors(errors: np.ndarray, window: Optional[int] = None) -> np.ndarray:
    """
    Min-max scale each column to [0, 1].

    Without a window the span is the whole series; with one, each value is
    scaled against the trailing `window` rows ending at it. Constant spans
    map to 0.
    """
    errors = np.asarray(errors, dtype=np.float64)
    if errors.ndim == 1:
        errors = errors[:, None]
    if window is None:
        low = errors.min(axis=0, keepdims=True) if len(errors) else np.zeros((1, errors.shape[1]))
        high = errors.max(axis=0, keepdims=True) if len(errors) else low
    else:
        if window < 1:
            raise UsageError(f"Normalization window must be positive, got {window}.")
        frame = pd.DataFrame(errors)
        low = frame.rolling(window, min_periods=1).min().to_numpy()
        high = frame.rolling(window, min_periods=1).max().to_numpy()
    spread = high - low
    safe = np.where(spread > 0, spread, 1.0)
    return np.where(spread > 0, (errors - low) / safe, 0.0)


def _check_alignment(truth: TimeSeriesFrame, predictions: PredictionSeries) -> int:
    input_len, horizon = predictions.input_len, predictions.horizon
    lookahead = len(predictions.values) - horizon
    if list(truth.channels) != list(predictions.channels):
        raise AlignmentError(
            f"Truth channels {truth.channels} differ from prediction channels {predictions.channels}."
        )
    if truth.n_rows != input_len + lookahead:
        raise AlignmentError(
            f"Truth has {truth.n_rows} rows; predictions over {lookahead + 1} windows of "
            f"{input_len} steps need {input_len + lookahead}."
        )
    if horizon > input_len:
        raise AlignmentError(
            f"Horizon {horizon} exceeds input length {input_len}; the first window has no truth to compare."
        )
    overlap = truth.timestamps[input_len:]
    predicted = predictions.timestamps[:lookahead]
    mismatch = np.flatnonzero(overlap != predicted)
    if len(mismatch):
        first = mismatch[0]
        raise AlignmentError(
            f"Prediction timestamp {predicted[first]} does not match truth timestamp {overlap[first]}."
        )
    return lookahead


def risk_series(
    truth: TimeSeriesFrame,
    predictions: PredictionSeries,
    excluded: Sequence[str] = (),
    epsilon: Optional[Union[float, np.ndarray]] = None,
    epsilon_scale: float = 1e-3,
    window: Optional[int] = None,
) -> RiskSeries:
    """
    Method used to turn raw-unit truth and forecasts into the Risk signal.

    The first window's tau forecasts are compared element by element with the
    last tau truth rows before the forecast start. Each later window lambda
    compares its newest forecast (tau steps ahead) with the truth row that
    follows its input, and the value is stamped at the forecast instant. The
    last window has no such truth row and is dropped.
    """
    lookahead = _check_alignment(truth, predictions)
    input_len, horizon = predictions.input_len, predictions.horizon
    unknown = sorted(set(excluded) - set(truth.channels))
    if unknown:
        logger.warning(f"Excluded channels not in the data: {unknown}")
    if epsilon is None:
        epsilon = epsilon_scale * truth.values.std(axis=0)

    later = max(lookahead - 1, 0)
    first_truth = truth.values[input_len - horizon:input_len]
    later_truth = truth.values[input_len + 1:input_len + 1 + later]
    compared_truth = np.concatenate([first_truth, later_truth], axis=0)
    compared_pred = predictions.values[: horizon + later]
    errors = relative_error(compared_truth, compared_pred, epsilon)

    included = [i for i, c in enumerate(truth.channels) if c not in set(excluded)]
    normalized = normalize_errors(errors[:, included], window=window) if included else np.zeros(
        (len(errors), 0)
    )
    return RiskSeries(
        timestamps=predictions.timestamps[: len(errors)],
        channels=list(truth.channels),
        excluded=[c for c in truth.channels if c in set(excluded)],
        relative_errors=errors,
        normalized=normalized,
        risk=normalized.sum(axis=1),
    )


def normal_stats(risk: Sequence[float], start: int, stop: int, min_samples: int = 100) -> NormalStats:
    """Mean and population standard deviation of risk[start:stop]."""
    values = np.asarray(risk, dtype=np.float64)
    if not 0 <= start < stop <= len(values):
        raise UsageError(
            f"Normal window [{start}, {stop}) lies outside the risk series of length {len(values)}."
        )
    if stop - start < min_samples:
        raise UsageError(
            f"Normal window [{start}, {stop}) holds {stop - start} samples, fewer than {min_samples}."
        )
    window = values[start:stop]
    return NormalStats(
        mu=float(window.mean()),
        sigma=float(window.std()),
        samples=int(stop - start),
        start=int(start),
        stop=int(stop),
    )


def normal_window(
    risk: RiskSeries, cfg: ThresholdConfig, anomaly_start=None
) -> Tuple[int, int]:
    """
    Positions [start, stop) of the normal window within a risk series.

    Explicit timestamps win; otherwise [k1 * tau, k2 * tau), with an open k2
    running up to the anomaly start or the end of the series.
    """
    timestamps = risk.timestamps
    if cfg.normal_start is not None:
        start = int(timestamps.searchsorted(to_utc_timestamp(cfg.normal_start), side="left"))
        stop = int(timestamps.searchsorted(to_utc_timestamp(cfg.normal_end), side="right"))
    else:
        start = cfg.k1 * cfg.horizon
        if cfg.k2 is not None:
            stop = cfg.k2 * cfg.horizon
        elif anomaly_start is not None:
            stop = int(timestamps.searchsorted(to_utc_timestamp(anomaly_start), side="left"))
        else:
            stop = len(timestamps)
    if anomaly_start is not None and stop > start:
        if timestamps[min(stop, len(timestamps)) - 1] >= to_utc_timestamp(anomaly_start):
            raise ConfigError(
                f"Normal window ending {timestamps[min(stop, len(timestamps)) - 1]} overlaps the "
                f"annotated anomaly starting {anomaly_start}; the baseline would be contaminated."
            )
    return start, stop


def fit_normal_stats(risk: RiskSeries, cfg: ThresholdConfig, anomaly_start=None) -> NormalStats:
    start, stop = normal_window(risk, cfg, anomaly_start)
    stats = normal_stats(risk.risk, start, stop, cfg.min_samples)
    logger.info(
        f"Normal window [{start}, {stop}): mu={stats.mu:.6f}, sigma={stats.sigma:.6f}"
    )
    return stats


def error_decomposition(mu: float, sigma: float, mse_tau: float) -> Tuple[float, float]:
    """Modeling error mse_tau * (mu + 2 sigma) and fluctuation error mu + 2 sigma."""
    fluctuation = mu + 2.0 * sigma
    return mse_tau * fluctuation, fluctuation


def warning_threshold(mu: float, sigma: float, mse_tau: float) -> float:
    """W_v = (1 + mse_tau)(mu + 2 sigma), with mse_tau as a fraction."""
    if sigma < 0 or mse_tau < 0:
        raise UsageError(f"sigma ({sigma}) and mse_tau ({mse_tau}) must be non-negative.")
    return (1.0 + mse_tau) * (mu + 2.0 * sigma)


def find_alarm_intervals(risk: Sequence[float], w_v: float, min_persist: int = 3) -> List[Tuple[int, int]]:
    """Maximal runs with risk > w_v lasting at least min_persist steps, as inclusive (start, end)."""
    if min_persist < 1:
        raise UsageError(f"min_persist must be at least 1, got {min_persist}.")
    above = np.asarray(risk, dtype=np.float64) > w_v
    edges = np.diff(np.concatenate([[0], above.astype(np.int8), [0]]))
    starts = np.flatnonzero(edges == 1)
    stops = np.flatnonzero(edges == -1)
    return [(int(s), int(e) - 1) for s, e in zip(starts, stops) if e - s >= min_persist]


def detect_values(
    risk: Sequence[float],
    timestamps: pd.DatetimeIndex,
    w_v: float,
    horizon: int,
    cadence_s: float,
    min_persist: int = 3,
    event_time=None,
    stats: Optional[NormalStats] = None,
    mse_tau: Optional[float] = None,
) -> AlarmReport:
    """
    Method used to locate alarm intervals and derive the warning time.

    t_p runs from the start of the earliest interval beginning before the
    event to the event instant; with no event it is the first interval's
    length. W_t = tau * cadence + t_p and is absent when t_p is.
    """
    spans = find_alarm_intervals(risk, w_v, min_persist)
    intervals = [
        AlarmInterval(
            start=timestamps[s].to_pydatetime(),
            end=timestamps[e].to_pydatetime(),
            start_index=s,
            end_index=e,
            steps=e - s + 1,
            duration_s=(e - s + 1) * cadence_s,
        )
        for s, e in spans
    ]
    t_tau = horizon * cadence_s
    t_p = None
    event = None
    if event_time is not None:
        event = to_utc_timestamp(event_time)
        before = [i for i in intervals if to_utc_timestamp(i.start) < event]
        if before:
            t_p = (event - to_utc_timestamp(before[0].start)).total_seconds()
    elif intervals:
        t_p = intervals[0].duration_s

    for interval in intervals:
        logger.info(f"Alarm from {interval.start} to {interval.end} ({interval.steps} steps)")
    if not intervals:
        logger.info(f"No alarm: Risk never exceeded W_v={w_v:.6f} for {min_persist} steps")

    return AlarmReport(
        horizon=horizon,
        cadence_s=cadence_s,
        mu=None if stats is None else stats.mu,
        sigma=None if stats is None else stats.sigma,
        mse_tau=mse_tau,
        w_v=w_v,
        min_persist=min_persist,
        intervals=intervals,
        event_time=None if event is None else event.to_pydatetime(),
        t_tau_s=t_tau,
        t_p_s=t_p,
        w_t_s=None if t_p is None else t_tau + t_p,
    )


def detect(
    risk: RiskSeries,
    w_v: float,
    horizon: int,
    cadence_s: float,
    min_persist: int = 3,
    event_time=None,
    stats: Optional[NormalStats] = None,
    mse_tau: Optional[float] = None,
) -> AlarmReport:
    return detect_values(
        risk.risk,
        risk.timestamps,
        w_v,
        horizon,
        cadence_s,
        min_persist=min_persist,
        event_time=event_time,
        stats=stats,
        mse_tau=mse_tau,
    )
