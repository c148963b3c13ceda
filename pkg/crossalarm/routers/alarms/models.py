from typing import List, Optional

from pydantic import BaseModel, Field

from crossalarm.models import AlarmInterval


class ThresholdRequest(BaseModel):
    """Model for a warning threshold request"""

    mu: float
    sigma: float = Field(ge=0.0)
    mse_tau: float = Field(ge=0.0)


class ThresholdResponse(BaseModel):
    """Model for a warning threshold and its error decomposition"""

    w_v: float
    modeling_error: float
    fluctuation_error: float


class NormalStatsRequest(BaseModel):
    """Model for fitting normal statistics over a slice of a risk series"""

    risk: List[float]
    start: int = Field(0, ge=0)
    stop: Optional[int] = None
    min_samples: int = Field(100, ge=1)


class NormalStatsResponse(BaseModel):
    """Model for normal statistics"""

    mu: float
    sigma: float
    samples: int


class DetectRequest(BaseModel):
    """Model for an alarm detection request over an index-based risk series"""

    risk: List[float]
    w_v: float
    min_persist: int = Field(3, ge=1)
    horizon: int = Field(ge=1)
    cadence_s: float = Field(4.0, gt=0.0)
    event_index: Optional[int] = Field(None, ge=0)


class DetectResponse(BaseModel):
    """Model for detected alarm intervals and warning time"""

    w_v: float
    min_persist: int
    intervals: List[AlarmInterval]
    t_tau_s: float
    t_p_s: Optional[float] = None
    w_t_s: Optional[float] = None
    w_t_min: Optional[float] = None
