"""crossalarm - Hierarchical encoder-decoder and the Crossformer model"""

import math
from typing import List, Optional

import numpy as np
import pandas as pd
from loguru import logger
from pydantic import BaseModel, model_validator

from crossalarm.data.frame import NormStats, TimeSeriesFrame
from crossalarm.exceptions import ConfigError, DataError, DimensionError
from crossalarm.models import CrossformerConfig
from crossalarm.network.attention import (
    STAGE_CROSS,
    AttentionHook,
    MultiHeadAttention,
    TwoStageAttention,
    warn_router_count,
)
from crossalarm.network.embedding import POSITION_STD, DswEmbedding
from crossalarm.network.layers import MLP, Dropout, LayerNorm, Module, xavier_uniform
from crossalarm.tensor import Tensor, as_tensor, functional as F, parameter


class SegmentMerge(Module):
    """Fuse adjacent segment pairs of each channel through M (d_model x 2 d_model)."""

    def __init__(self, d_model: int, rng: np.random.Generator):
        self.weight = parameter(xavier_uniform(rng, d_model, 2 * d_model))

    def forward(self, z: Tensor) -> Tensor:
        segments = z.shape[-2]
        if segments < 2:
            raise ConfigError(
                "Segment merging reached a single segment; reduce layers or raise input_len."
            )
        pairs = segments // 2
        even = F.slice_(z, (Ellipsis, slice(0, 2 * pairs, 2), slice(None)))
        odd = F.slice_(z, (Ellipsis, slice(1, 2 * pairs, 2), slice(None)))
        merged = F.matmul(F.concat([even, odd], axis=-1), F.transpose(self.weight))
        if segments % 2:
            # odd count: the last segment passes through unmerged
            last = F.slice_(z, (Ellipsis, slice(segments - 1, segments), slice(None)))
            merged = F.concat([merged, last], axis=-2)
        return merged


class EncoderLayer(Module):
    def __init__(self, n_in: int, cfg: CrossformerConfig, rng, dropout: Dropout, index: int):
        self.merge = SegmentMerge(cfg.d_model, rng) if index > 0 else None
        self.n_segments = math.ceil(n_in / 2) if index > 0 else n_in
        self.tsa = TwoStageAttention(
            self.n_segments,
            cfg.d_model,
            cfg.heads,
            cfg.routers,
            cfg.mlp_ratio * cfg.d_model,
            rng,
            dropout=dropout,
            mode=cfg.dimension_attention,
            layer_id=f"encoder.{index}",
        )

    def forward(self, z: Tensor, hook: Optional[AttentionHook] = None) -> Tensor:
        if self.merge is not None:
            z = self.merge(z)
        return self.tsa(z, hook)


class Encoder(Module):
    """N layers; the first applies TSA only, later ones merge pairs first."""

    def __init__(self, cfg: CrossformerConfig, rng: np.random.Generator, dropout: Dropout):
        self.input_segments = cfg.n_segments
        self.layers: List[EncoderLayer] = []
        segments = cfg.n_segments
        for index in range(cfg.layers):
            if index > 0 and segments < 2:
                raise ConfigError(
                    f"{cfg.layers} encoder layers need more than {cfg.n_segments} input segments; "
                    "reduce layers or raise input_len."
                )
            layer = EncoderLayer(segments, cfg, rng, dropout, index)
            self.layers.append(layer)
            segments = layer.n_segments

    @property
    def segment_counts(self) -> List[int]:
        """Per-channel segment count of every retained output, the embedding first."""
        return [self.input_segments] + [layer.n_segments for layer in self.layers]

    def forward(self, h: Tensor, hook: Optional[AttentionHook] = None) -> List[Tensor]:
        outputs = [h]
        for layer in self.layers:
            outputs.append(layer(outputs[-1], hook))
        return outputs


class DecoderLayer(Module):
    def __init__(self, cfg: CrossformerConfig, rng, dropout: Dropout, index: int):
        self.dropout = dropout
        self.tsa = TwoStageAttention(
            cfg.out_segments,
            cfg.d_model,
            cfg.heads,
            cfg.routers,
            cfg.mlp_ratio * cfg.d_model,
            rng,
            dropout=dropout,
            mode=cfg.dimension_attention,
            layer_id=f"decoder.{index}",
        )
        self.cross_attention = MultiHeadAttention(cfg.d_model, cfg.heads, rng)
        self.norm1 = LayerNorm(cfg.d_model)
        self.mlp = MLP(cfg.d_model, cfg.mlp_ratio * cfg.d_model, rng)
        self.norm2 = LayerNorm(cfg.d_model)
        self.head = parameter(xavier_uniform(rng, cfg.seg_len, cfg.d_model))
        self.layer_id = f"decoder.{index}"

    def forward(self, x: Tensor, memory: Tensor, hook: Optional[AttentionHook] = None):
        """Returns the layer output and its projected segments (..., D, tau_seg, seg_len)."""
        x = self.tsa(x, hook)
        cross_hook = None if hook is None else (lambda stage, w: hook(self.layer_id, stage, w))
        attended = self.cross_attention(x, memory, memory, stage=STAGE_CROSS, hook=cross_hook)
        x = self.norm1(x + self.dropout(attended))
        out = self.norm2(x + self.dropout(self.mlp(x)))
        return out, F.matmul(out, F.transpose(self.head))


class Decoder(Module):
    """N + 1 layers starting from the learnable table E_dec (tau_seg, D, d_model)."""

    def __init__(self, cfg: CrossformerConfig, rng: np.random.Generator, dropout: Dropout):
        self.position = parameter(
            rng.normal(0.0, POSITION_STD, size=(cfg.out_segments, cfg.n_channels, cfg.d_model))
        )
        self.layers = [DecoderLayer(cfg, rng, dropout, index) for index in range(cfg.layers + 1)]

    def forward(self, memories: List[Tensor], hook: Optional[AttentionHook] = None):
        if len(memories) != len(self.layers):
            raise DimensionError(
                f"Decoder has {len(self.layers)} layers but received {len(memories)} encoder outputs."
            )
        x = F.transpose(self.position, (1, 0, 2))
        outputs, projections = [], []
        for layer, memory in zip(self.layers, memories):
            x, projected = layer(x, memory, hook)
            outputs.append(x)
            projections.append(projected)
        return outputs, projections


class CrossformerModel(Module):
    """
    DSW embedding, N-layer encoder, (N + 1)-layer decoder and summed prediction head.

    forward maps windows (B, T, D) or (T, D) to forecasts (B, tau, D) or (tau, D).
    """

    def __init__(self, cfg: CrossformerConfig, rng: Optional[np.random.Generator] = None):
        rng = rng if rng is not None else np.random.default_rng(cfg.seed)
        warn_router_count(cfg.routers, cfg.n_channels)
        self.config = cfg
        self.dropout = Dropout(cfg.dropout)
        self.embedding = DswEmbedding(cfg.dsw(), rng)
        self.encoder = Encoder(cfg, rng, self.dropout)
        self.decoder = Decoder(cfg, rng, self.dropout)

    def encode(self, window, hook: Optional[AttentionHook] = None) -> List[Tensor]:
        return self.encoder(self.embedding(window), hook)

    def decode(self, memories: List[Tensor], hook: Optional[AttentionHook] = None):
        return self.decoder(memories, hook)

    def forward(self, window, hook: Optional[AttentionHook] = None) -> Tensor:
        window = as_tensor(window)
        _, projections = self.decode(self.encode(window, hook), hook)
        total = projections[0]
        for projected in projections[1:]:
            total = total + projected
        *lead, channels, segments, seg_len = total.shape
        steps = F.reshape(total, (*lead, channels, segments * seg_len))
        steps = F.swapaxes(steps, -2, -1)
        return F.slice_(steps, (Ellipsis, slice(0, self.config.horizon), slice(None)))

    def predict_window(self, window: np.ndarray) -> np.ndarray:
        """Forecast tau x D from one T x D window."""
        window = np.asarray(window, dtype=np.float64)
        if window.ndim != 2:
            raise DimensionError(f"predict_window expects a (T, D) window, got {window.shape}.")
        return self.forward(window).numpy()

    def predict_batch(self, windows: np.ndarray, batch_size: int = 256) -> np.ndarray:
        windows = np.asarray(windows, dtype=np.float64)
        chunks = [
            self.forward(windows[start:start + batch_size]).numpy()
            for start in range(0, len(windows), batch_size)
        ]
        if not chunks:
            return np.zeros((0, self.config.horizon, self.config.n_channels))
        return np.concatenate(chunks, axis=0)


class PredictionSeries(BaseModel):
    """Sliding-window forecast; row k targets timestamps[k] and came from window windows[k]."""

    timestamps: pd.DatetimeIndex
    channels: List[str]
    values: np.ndarray
    windows: np.ndarray
    input_len: int
    horizon: int

    model_config = {"arbitrary_types_allowed": True}

    @model_validator(mode="after")
    def check_lengths(self):
        if not (len(self.timestamps) == len(self.values) == len(self.windows)):
            raise DataError("PredictionSeries timestamps, values and windows differ in length.")
        return self

    @property
    def n_windows(self) -> int:
        return int(self.windows.max()) + 1

    def denormalized(self, stats: NormStats) -> "PredictionSeries":
        stats.check_channels(self.channels)
        return self.model_copy(update={"values": stats.denormalize_values(self.values)})


def assemble_series(window_outputs: np.ndarray):
    """
    Method used to concatenate per-window forecasts (Lambda + 1, tau, D).

    Window 0 contributes all tau rows; every later window contributes its newest row.
    Returns (values, provenance).
    """
    count, horizon, _ = window_outputs.shape
    values = np.concatenate([window_outputs[0], window_outputs[1:, horizon - 1, :]], axis=0)
    provenance = np.concatenate([np.zeros(horizon, dtype=np.int64), np.arange(1, count)])
    return values, provenance


def predict_series(
    model: CrossformerModel, frame: TimeSeriesFrame, batch_size: int = 256
) -> PredictionSeries:
    """
    Method used to run the stride-1 window iterator over a normalized frame.

    Window lambda reads rows [lambda, lambda + T); there are Lambda + 1 windows
    with Lambda = rows - T, and the result covers Lambda + tau steps after row T - 1.
    """
    cfg = model.config
    if list(frame.channels) != list(cfg.channels):
        raise ConfigError(f"Frame channels {frame.channels} differ from model channels {cfg.channels}.")
    if frame.n_rows < cfg.input_len:
        raise DataError(
            f"Frame has {frame.n_rows} rows, fewer than the input length {cfg.input_len}."
        )
    windows = np.lib.stride_tricks.sliding_window_view(frame.values, cfg.input_len, axis=0)
    windows = np.swapaxes(windows, 1, 2)
    logger.info(f"Predicting {len(windows)} windows of {cfg.input_len} steps, horizon {cfg.horizon}")
    outputs = model.predict_batch(windows, batch_size=batch_size)
    values, provenance = assemble_series(outputs)

    cadence = frame.cadence_s
    if cadence is None:
        cadence = float(frame.timestamps.to_series().diff().dt.total_seconds().median())
    steps = np.arange(1, len(values) + 1)
    timestamps = frame.timestamps[cfg.input_len - 1] + pd.to_timedelta(steps * cadence, unit="s")
    return PredictionSeries(
        timestamps=pd.DatetimeIndex(timestamps),
        channels=list(cfg.channels),
        values=values,
        windows=provenance,
        input_len=cfg.input_len,
        horizon=cfg.horizon,
    )
