"""crossalarm - Dimension-segment-wise embedding"""

from typing import Union

import numpy as np

from crossalarm.exceptions import DimensionError
from crossalarm.models import DswConfig
from crossalarm.network.layers import Module, xavier_uniform
from crossalarm.tensor import Tensor, as_tensor, functional as F, parameter

POSITION_STD = 0.02


def segment(x: Union[Tensor, np.ndarray], seg_len: int) -> Tensor:
    """
    Method used to cut a (..., T, D) window into per-channel segments.

    Returns a tensor of shape (..., D, T / seg_len, seg_len) in which cell
    (d, i) holds rows [i * seg_len, (i + 1) * seg_len) of channel d.
    """
    x = as_tensor(x)
    if x.ndim < 2:
        raise DimensionError(f"segment needs a (T, D) window, got shape {x.shape}.")
    steps, channels = x.shape[-2], x.shape[-1]
    if seg_len < 1 or steps % seg_len:
        raise DimensionError(
            f"Window length {steps} is not a multiple of seg_len {seg_len}; "
            "pad the window or choose input_len as a multiple of seg_len."
        )
    lead = x.shape[:-2]
    per_channel = F.swapaxes(x, -2, -1)
    return F.reshape(per_channel, (*lead, channels, steps // seg_len, seg_len))


def embed(segments: Tensor, projection: Tensor, position: Tensor) -> Tensor:
    """
    Method used to project every segment to d_model and add its position vector.

    `projection` is (d_model, seg_len); `position` is indexed (segment, channel)
    with shape (n_segments, D, d_model). Output is (..., D, n_segments, d_model).
    """
    segments = as_tensor(segments)
    d_model, seg_len = projection.shape
    n_segments, channels, width = position.shape
    if segments.shape[-1] != seg_len:
        raise DimensionError(
            f"Segments have length {segments.shape[-1]}, projection expects {seg_len}."
        )
    if segments.shape[-3:-1] != (channels, n_segments) or width != d_model:
        raise DimensionError(
            f"Segments {segments.shape} do not fit position table {position.shape} "
            f"and projection {projection.shape}."
        )
    projected = F.matmul(segments, F.transpose(projection))
    return projected + F.transpose(position, (1, 0, 2))


class DswEmbedding(Module):
    """Learnable projection E and position table E_pos."""

    def __init__(self, dsw: DswConfig, rng: np.random.Generator):
        self.dsw = dsw
        self.projection = parameter(xavier_uniform(rng, dsw.d_model, dsw.seg_len))
        self.position = parameter(
            rng.normal(0.0, POSITION_STD, size=(dsw.n_segments, dsw.n_channels, dsw.d_model))
        )

    def forward(self, x: Union[Tensor, np.ndarray]) -> Tensor:
        x = as_tensor(x)
        if x.shape[-2:] != (self.dsw.input_len, self.dsw.n_channels):
            raise DimensionError(
                f"Expected windows of shape ({self.dsw.input_len}, {self.dsw.n_channels}), "
                f"got {x.shape}."
            )
        return embed(segment(x, self.dsw.seg_len), self.projection, self.position)
