"""crossalarm - Multi-head and two-stage attention"""

import math
import threading
from collections import Counter
from contextlib import contextmanager
from typing import Callable, Iterator, List, Optional

import numpy as np
from loguru import logger

from crossalarm.exceptions import DimensionError
from crossalarm.network.layers import MLP, Dropout, LayerNorm, Linear, Module
from crossalarm.tensor import Tensor, as_tensor, functional as F, parameter

ROUTER_STD = 0.02

STAGE_TIME = "time"
STAGE_AGGREGATE = "dimension_aggregate"
STAGE_DISPATCH = "dimension_dispatch"
STAGE_FULL = "dimension_full"
STAGE_CROSS = "cross"

# hook(layer_id, stage, weights) with weights shaped (..., heads, queries, keys)
AttentionHook = Callable[[str, str, np.ndarray], None]

_counters = threading.local()


@contextmanager
def count_scores() -> Iterator[Counter]:
    """
    Count query-key score entries per attention stage while the block is active.

    Counts are the number of softmax weights produced, summed over batch and heads.
    """
    stack = _counter_stack()
    counts: Counter = Counter()
    stack.append(counts)
    try:
        yield counts
    finally:
        stack.remove(counts)


def _counter_stack() -> List[Counter]:
    if not hasattr(_counters, "stack"):
        _counters.stack = []
    return _counters.stack


def _count(stage: str, entries: int) -> None:
    for counts in _counter_stack():
        counts[stage] += entries


class MultiHeadAttention(Module):
    """
    Scaled dot-product attention over the second-to-last axis.

    Leading axes of query and key/value broadcast against each other, so one
    set of queries can attend within every batch and channel at once.
    """

    def __init__(self, d_model: int, heads: int, rng: np.random.Generator):
        if d_model % heads:
            raise DimensionError(f"d_model {d_model} is not divisible by heads {heads}.")
        self.d_model = d_model
        self.heads = heads
        self.query = Linear(d_model, d_model, rng)
        self.key = Linear(d_model, d_model, rng)
        self.value = Linear(d_model, d_model, rng)
        self.output = Linear(d_model, d_model, rng)

    def _split_heads(self, x: Tensor) -> Tensor:
        *lead, rows, _ = x.shape
        x = F.reshape(x, (*lead, rows, self.heads, self.d_model // self.heads))
        return F.swapaxes(x, -3, -2)

    def forward(
        self,
        query,
        key,
        value,
        stage: str = STAGE_TIME,
        hook: Optional[Callable[[str, np.ndarray], None]] = None,
    ) -> Tensor:
        query, key, value = as_tensor(query), as_tensor(key), as_tensor(value)
        for name, tensor in (("query", query), ("key", key), ("value", value)):
            if tensor.ndim < 2 or tensor.shape[-1] != self.d_model:
                raise DimensionError(
                    f"msa {name} must end in width {self.d_model}, got shape {tensor.shape}."
                )
        if key.shape[-2] != value.shape[-2]:
            raise DimensionError(
                f"msa key rows {key.shape[-2]} differ from value rows {value.shape[-2]}."
            )

        q = self._split_heads(self.query(query))
        k = self._split_heads(self.key(key))
        v = self._split_heads(self.value(value))
        scale = 1.0 / math.sqrt(self.d_model // self.heads)
        scores = F.matmul(q, F.swapaxes(k, -2, -1)) * scale
        weights = F.softmax(scores, axis=-1)
        _count(stage, weights.size)
        if hook is not None:
            hook(stage, weights.numpy())

        context = F.swapaxes(F.matmul(weights, v), -3, -2)
        *lead, rows, _, _ = context.shape
        return self.output(F.reshape(context, (*lead, rows, self.d_model)))


class TwoStageAttention(Module):
    """
    One TSA layer acting on (..., D, L, d_model).

    The time stage attends over the L segments of each channel separately; the
    dimension stage attends across channels at each segment position, through
    c learnable routers or, with mode "full", directly between all channels.
    """

    def __init__(
        self,
        n_segments: int,
        d_model: int,
        heads: int,
        routers: int,
        mlp_hidden: int,
        rng: np.random.Generator,
        dropout: Optional[Dropout] = None,
        mode: str = "router",
        layer_id: str = "tsa",
    ):
        self.n_segments = n_segments
        self.mode = mode
        self.layer_id = layer_id
        self.dropout = dropout or Dropout(0.0)

        self.time_attention = MultiHeadAttention(d_model, heads, rng)
        self.time_norm1 = LayerNorm(d_model)
        self.time_mlp = MLP(d_model, mlp_hidden, rng)
        self.time_norm2 = LayerNorm(d_model)

        if mode == "router":
            self.routers = parameter(rng.normal(0.0, ROUTER_STD, size=(n_segments, routers, d_model)))
            self.dim_sender = MultiHeadAttention(d_model, heads, rng)
            self.dim_receiver = MultiHeadAttention(d_model, heads, rng)
        elif mode == "full":
            self.dim_attention = MultiHeadAttention(d_model, heads, rng)
        else:
            raise DimensionError(f"Unknown dimension attention mode '{mode}'.")
        self.dim_norm1 = LayerNorm(d_model)
        self.dim_mlp = MLP(d_model, mlp_hidden, rng)
        self.dim_norm2 = LayerNorm(d_model)

    def _hook(self, hook: Optional[AttentionHook]):
        if hook is None:
            return None
        return lambda stage, weights: hook(self.layer_id, stage, weights)

    def cross_time_stage(self, z, hook: Optional[AttentionHook] = None) -> Tensor:
        z = as_tensor(z)
        attended = self.time_attention(z, z, z, stage=STAGE_TIME, hook=self._hook(hook))
        x = self.time_norm1(z + self.dropout(attended))
        return self.time_norm2(x + self.dropout(self.time_mlp(x)))

    def cross_dimension_stage(self, z_time, hook: Optional[AttentionHook] = None) -> Tensor:
        z_time = as_tensor(z_time)
        if z_time.ndim < 3 or z_time.shape[-2] != self.n_segments:
            raise DimensionError(
                f"Expected {self.n_segments} segments on axis -2, got shape {z_time.shape}."
            )
        per_step = F.swapaxes(z_time, -3, -2)
        step_hook = self._hook(hook)
        if self.mode == "router":
            buffer = self.dim_sender(
                self.routers, per_step, per_step, stage=STAGE_AGGREGATE, hook=step_hook
            )
            received = self.dim_receiver(
                per_step, buffer, buffer, stage=STAGE_DISPATCH, hook=step_hook
            )
        else:
            received = self.dim_attention(
                per_step, per_step, per_step, stage=STAGE_FULL, hook=step_hook
            )
        y = self.dim_norm1(per_step + self.dropout(received))
        y = self.dim_norm2(y + self.dropout(self.dim_mlp(y)))
        return F.swapaxes(y, -3, -2)

    def forward(self, z, hook: Optional[AttentionHook] = None) -> Tensor:
        return self.cross_dimension_stage(self.cross_time_stage(z, hook), hook)


def warn_router_count(routers: int, channels: int) -> None:
    if routers >= channels:
        logger.warning(
            f"Router count c={routers} is not below the channel count D={channels}; "
            "the dimension stage saves nothing over full attention."
        )
