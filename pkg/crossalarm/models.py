"""crossalarm - Models"""

import math
from datetime import datetime
from typing import Annotated, Dict, List, Literal, Optional

from pydantic import BaseModel, Field, field_validator, model_validator

from crossalarm import config
from crossalarm.data.frame import SplitSpec
from crossalarm.exceptions import ConfigError, DimensionError


def _split_list(value):
    if isinstance(value, str):
        return [item.strip() for item in value.split(",") if item.strip()]
    return value


class DswConfig(BaseModel):
    """Model for the dimension-segment-wise embedding geometry"""

    seg_len: int = Field(12, ge=1)
    d_model: int = Field(64, ge=1)
    input_len: int = Field(96, ge=1)
    n_channels: int = Field(ge=1)

    @model_validator(mode="after")
    def check_divisible(self):
        if self.input_len % self.seg_len:
            raise DimensionError(
                f"input_len {self.input_len} is not a multiple of seg_len {self.seg_len}; "
                "pad the window or choose input_len as a multiple of seg_len."
            )
        return self

    @property
    def n_segments(self) -> int:
        return self.input_len // self.seg_len


class CrossformerConfig(BaseModel):
    """Model for every architecture hyperparameter stored with a checkpoint"""

    input_len: int = Field(96, ge=1)
    horizon: int = Field(12, ge=1)
    seg_len: int = Field(12, ge=1)
    d_model: int = Field(64, ge=1)
    heads: int = Field(4, ge=1)
    layers: int = Field(3, ge=0)
    routers: int = Field(3, ge=1)
    mlp_ratio: int = Field(4, ge=1)
    dropout: float = Field(0.0, ge=0.0, lt=1.0)
    dimension_attention: Literal["router", "full"] = "router"
    channels: List[str] = Field(default_factory=lambda: list(config.DEFAULT_CHANNELS))
    seed: int = 0

    _split_channels = field_validator("channels", mode="before")(_split_list)

    @model_validator(mode="after")
    def check_geometry(self):
        if self.input_len % self.seg_len:
            raise DimensionError(
                f"input_len {self.input_len} is not a multiple of seg_len {self.seg_len}; "
                "pad the window or choose input_len as a multiple of seg_len."
            )
        if self.d_model % self.heads:
            raise ConfigError(f"d_model {self.d_model} is not divisible by heads {self.heads}.")
        if len(self.channels) < 2:
            raise ConfigError("At least 2 channels are required.")
        return self

    @property
    def n_channels(self) -> int:
        return len(self.channels)

    @property
    def n_segments(self) -> int:
        return self.input_len // self.seg_len

    @property
    def out_segments(self) -> int:
        return math.ceil(self.horizon / self.seg_len)

    def dsw(self) -> DswConfig:
        return DswConfig(
            seg_len=self.seg_len,
            d_model=self.d_model,
            input_len=self.input_len,
            n_channels=self.n_channels,
        )


class TrainConfig(BaseModel):
    """Model for optimizer, batching and early stopping settings"""

    learning_rate: float = Field(1e-4, gt=0)
    batch_size: int = Field(32, ge=1)
    max_epochs: int = Field(100, ge=1)
    patience: int = Field(5, ge=1)
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


class ThresholdConfig(BaseModel):
    """Model for the normal window and penalty used to derive the warning threshold"""

    horizon: int = Field(ge=1)
    mse_tau: float = Field(0.0, ge=0.0)
    k1: int = Field(0, ge=0)
    k2: Optional[int] = None
    min_samples: int = Field(100, ge=1)
    epsilon_scale: float = Field(1e-3, ge=0.0)
    normal_start: Optional[datetime] = None
    normal_end: Optional[datetime] = None

    @model_validator(mode="after")
    def check_window(self):
        if self.k2 is not None and (self.k2 - self.k1) * self.horizon < self.min_samples:
            raise ConfigError(
                f"Normal window [k1*tau, k2*tau) = [{self.k1 * self.horizon}, {self.k2 * self.horizon}) "
                f"holds fewer than min_samples={self.min_samples} samples."
            )
        if (self.normal_start is None) != (self.normal_end is None):
            raise ConfigError("normal_start and normal_end must be given together.")
        return self


class MetricsReport(BaseModel):
    """Model for MSE and MAE over n compared values"""

    mse: float = Field(ge=0.0)
    mae: float = Field(ge=0.0)
    n: int = Field(ge=1)

    @model_validator(mode="after")
    def check_jensen(self):
        if self.mae * self.mae > self.mse * (1.0 + 1e-9) + 1e-300:
            raise ValueError(f"MAE^2 ({self.mae**2}) exceeds MSE ({self.mse}).")
        return self


class AlarmInterval(BaseModel):
    """Model for a maximal run of Risk above the warning threshold"""

    start: datetime
    end: datetime
    start_index: int
    end_index: int
    steps: int
    duration_s: float


class AlarmReport(BaseModel):
    """Model for the threshold fit, alarm intervals and warning time"""

    horizon: int
    cadence_s: float
    mu: Optional[float] = None
    sigma: Optional[float] = None
    mse_tau: Optional[float] = None
    w_v: float
    min_persist: int
    intervals: List[AlarmInterval] = []
    event_time: Optional[datetime] = None
    t_tau_s: float
    t_p_s: Optional[float] = None
    w_t_s: Optional[float] = None

    @property
    def t_tau_min(self) -> float:
        return self.t_tau_s / 60.0

    @property
    def w_t_min(self) -> Optional[float]:
        return None if self.w_t_s is None else self.w_t_s / 60.0

    def table_row(self) -> Dict[str, object]:
        """One row in the layout tau | mu | sigma | MSE% | W_v | W_t(min)."""
        return {
            "tau": self.horizon,
            "mu": self.mu,
            "sigma": self.sigma,
            "mse_percent": None if self.mse_tau is None else 100.0 * self.mse_tau,
            "w_v": self.w_v,
            "w_t_min": "—" if self.w_t_min is None else round(self.w_t_min, 2),
        }


class RunConfig(BaseModel):
    """Model for the flat key=value run configuration shared by every CLI command"""

    model_config = {"extra": "forbid"}

    raw_csv: str
    output_dir: str = "output"
    timestamp_column: str = "timestamp"
    channel_map: Dict[str, str] = Field(
        default_factory=lambda: {name: name for name in config.DEFAULT_CHANNELS}
    )
    cadence_s: float = Field(4.0, gt=0)
    max_gap_s: float = Field(300.0, gt=0)
    train_fraction: float = 0.7
    val_fraction: float = 0.1
    test_fraction: float = 0.2
    anomaly_start: Optional[datetime] = None
    anomaly_end: Optional[datetime] = None
    event_time: Optional[datetime] = None

    input_len: int = 96
    horizon: int = 12
    seg_len: int = 12
    d_model: int = 64
    heads: int = 4
    layers: int = 3
    routers: int = 3
    mlp_ratio: int = 4
    dropout: float = 0.0
    dimension_attention: Literal["router", "full"] = "router"

    learning_rate: float = 1e-4
    batch_size: int = 32
    max_epochs: int = 100
    patience: int = 5
    seed: int = 0
    resume: bool = False

    excluded_channels: List[str] = Field(
        default_factory=lambda: list(config.DEFAULT_EXCLUDED_CHANNELS)
    )
    epsilon_scale: float = 1e-3
    k1: int = 0
    k2: Optional[int] = None
    normal_start: Optional[datetime] = None
    normal_end: Optional[datetime] = None
    min_persist: int = Field(3, ge=1)
    min_normal_samples: int = Field(100, ge=1)

    checkpoint: Optional[str] = None
    eval_checkpoints: List[str] = []
    sweep_horizons: List[int] = []
    sweep_seg_lens: List[int] = []
    sweep_seeds: List[int] = []
    log_level: str = config.LOG_LEVEL

    _split_lists = field_validator(
        "excluded_channels",
        "eval_checkpoints",
        "sweep_horizons",
        "sweep_seg_lens",
        "sweep_seeds",
        mode="before",
    )(_split_list)

    @field_validator("channel_map", mode="before")
    @classmethod
    def parse_channel_map(cls, value):
        """Accept `csv_name:channel,csv_name:channel` as well as a mapping."""
        if isinstance(value, str):
            mapping = {}
            for pair in _split_list(value):
                source, _, target = pair.partition(":")
                mapping[source.strip()] = (target or source).strip()
            return mapping
        return value

    @field_validator(
        "anomaly_start",
        "anomaly_end",
        "event_time",
        "normal_start",
        "normal_end",
        "k2",
        "checkpoint",
        mode="before",
    )
    @classmethod
    def blank_is_none(cls, value):
        return None if value == "" else value

    @property
    def channels(self) -> List[str]:
        return list(self.channel_map.values())

    def split_spec(self) -> SplitSpec:
        return SplitSpec(
            train_fraction=self.train_fraction,
            val_fraction=self.val_fraction,
            test_fraction=self.test_fraction,
            anomaly_start=self.anomaly_start,
            anomaly_end=self.anomaly_end,
        )

    def crossformer_config(self, channels: List[str]) -> CrossformerConfig:
        return CrossformerConfig(
            input_len=self.input_len,
            horizon=self.horizon,
            seg_len=self.seg_len,
            d_model=self.d_model,
            heads=self.heads,
            layers=self.layers,
            routers=self.routers,
            mlp_ratio=self.mlp_ratio,
            dropout=self.dropout,
            dimension_attention=self.dimension_attention,
            channels=list(channels),
            seed=self.seed,
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            max_epochs=self.max_epochs,
            patience=self.patience,
            seed=self.seed,
        )

    def threshold_config(self, mse_tau: float) -> ThresholdConfig:
        return ThresholdConfig(
            horizon=self.horizon,
            mse_tau=mse_tau,
            k1=self.k1,
            k2=self.k2,
            min_samples=self.min_normal_samples,
            epsilon_scale=self.epsilon_scale,
            normal_start=self.normal_start,
            normal_end=self.normal_end,
        )


class HealthCheckResponse(BaseModel):
    """crossalarm - HealthCheckResponse"""

    status: str


class Link(BaseModel):
    """Link model."""

    href: Annotated[
        str,
        Field(
            json_schema_extra={
                "description": "Supplies the URI to a remote resource.",
                "examples": ["http://localhost:8000/api/v1/alarms/detect"],
            }
        ),
    ]
    rel: Annotated[
        str,
        Field(
            json_schema_extra={
                "description": "The type or semantics of the relation.",
                "examples": ["service-desc"],
            }
        ),
    ]
    type: Optional[str] = None
    title: Optional[str] = None


class Landing(BaseModel):
    """Landing model."""

    title: Optional[str] = None
    description: Optional[str] = None
    links: List[Link]
