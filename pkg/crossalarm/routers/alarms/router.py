"""crossalarm API - Alarms"""

import pandas as pd
from fastapi import APIRouter, HTTPException, status

import crossalarm.routers.alarms.models as models
from crossalarm.exceptions import CrossAlarmError
from crossalarm.risk import engine

router = APIRouter()

EPOCH = pd.Timestamp(0, tz="UTC")


@router.post(path="/warning_threshold", response_model=models.ThresholdResponse)
def warning_threshold(info: models.ThresholdRequest):
    """
    Compute W_v = (1 + mse_tau)(mu + 2 sigma) and split it into modeling
    and fluctuation error.
    """

    modeling, fluctuation = engine.error_decomposition(info.mu, info.sigma, info.mse_tau)

    return {
        "w_v": engine.warning_threshold(info.mu, info.sigma, info.mse_tau),
        "modeling_error": modeling,
        "fluctuation_error": fluctuation,
    }


@router.post(path="/normal_stats", response_model=models.NormalStatsResponse)
def normal_stats(info: models.NormalStatsRequest):
    """
    Fit mean and population standard deviation over risk[start:stop].
    """

    stop = len(info.risk) if info.stop is None else info.stop

    try:
        stats = engine.normal_stats(info.risk, info.start, stop, info.min_samples)
    except CrossAlarmError as error:
        raise HTTPException(status_code=status.HTTP_400_BAD_REQUEST, detail=str(error))

    return {"mu": stats.mu, "sigma": stats.sigma, "samples": stats.samples}


@router.post(path="/detect", response_model=models.DetectResponse)
def detect(info: models.DetectRequest):
    """
    Find alarm intervals in a risk series sampled every cadence_s seconds.

    Timestamps start at the Unix epoch; event_index marks the event instant.
    """

    if info.event_index is not None and info.event_index >= len(info.risk):
        raise HTTPException(
            status_code=status.HTTP_400_BAD_REQUEST,
            detail=f"event_index {info.event_index} is outside a series of {len(info.risk)} values.",
        )

    timestamps = EPOCH + pd.to_timedelta(
        [step * info.cadence_s for step in range(len(info.risk))], unit="s"
    )
    event_time = None
    if info.event_index is not None:
        event_time = timestamps[info.event_index]

    try:
        report = engine.detect_values(
            info.risk,
            pd.DatetimeIndex(timestamps),
            info.w_v,
            info.horizon,
            info.cadence_s,
            min_persist=info.min_persist,
            event_time=event_time,
        )
    except CrossAlarmError as error:
        raise HTTPException(status_code=status.HTTP_400_BAD_REQUEST, detail=str(error))

    return {
        "w_v": report.w_v,
        "min_persist": report.min_persist,
        "intervals": report.intervals,
        "t_tau_s": report.t_tau_s,
        "t_p_s": report.t_p_s,
        "w_t_s": report.w_t_s,
        "w_t_min": report.w_t_min,
    }
