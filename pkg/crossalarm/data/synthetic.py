"""crossalarm - Synthetic drilling-like fixtures"""

from typing import List, Optional, Sequence

import numpy as np
import pandas as pd

from crossalarm import config
from crossalarm.data.frame import TimeSeriesFrame
from crossalarm.exceptions import UsageError

# Raw operating level per channel; unknown channels default to 100.
CHANNEL_LEVELS = {
    "hole_depth": 3000.0,
    "bit_depth": 2990.0,
    "block_position": 20.0,
    "torque": 15.0,
    "hookload": 120.0,
    "rotary_speed": 140.0,
    "standpipe_pressure": 18000.0,
    "mud_flow_in": 2500.0,
    "weight_on_bit": 8.0,
    "rate_of_penetration": 25.0,
}


def coupled_sines(
    n_steps: int = 20000,
    channels: Optional[Sequence[str]] = None,
    cadence_s: float = 4.0,
    noise: float = 0.05,
    seed: int = 0,
    start: str = "2007-07-06T19:23:52Z",
    periods: Sequence[float] = (48.0, 140.0),
) -> TimeSeriesFrame:
    """
    Method used to build a multichannel series driven by two shared sine drivers.

    Every channel mixes both drivers with its own weights and phase lag, so the
    channels are coupled; raw values stay strictly positive.
    """
    channels = list(channels or config.DEFAULT_CHANNELS)
    if n_steps < 2:
        raise UsageError("n_steps must be at least 2.")
    rng = np.random.default_rng(seed)
    steps = np.arange(n_steps, dtype=np.float64)

    columns = []
    for channel in channels:
        level = CHANNEL_LEVELS.get(channel, 100.0)
        amplitude = 0.1 * level
        weight_fast, weight_slow = rng.uniform(0.3, 1.0, size=2)
        lag = rng.uniform(0.0, 2.0 * np.pi)
        fast = np.sin(2.0 * np.pi * steps / periods[0] + lag)
        slow = np.sin(2.0 * np.pi * steps / periods[1] + 0.5 * lag)
        signal = (weight_fast * fast + weight_slow * slow) / (weight_fast + weight_slow)
        columns.append(level + amplitude * (signal + noise * rng.standard_normal(n_steps)))

    timestamps = pd.Timestamp(start) + pd.to_timedelta(steps * cadence_s, unit="s")
    return TimeSeriesFrame(
        timestamps=timestamps,
        channels=channels,
        values=np.column_stack(columns),
        cadence_s=float(cadence_s),
    )


def inject_regime_shift(
    frame: TimeSeriesFrame,
    start_row: int,
    stop_row: int,
    channels: List[str],
    drift: float = 1.0,
) -> TimeSeriesFrame:
    """
    Method used to break the cross-channel coupling inside [start_row, stop_row).

    Each selected channel is mirrored around its local level (reversing its
    coupling sign) and drifts by `drift` amplitudes over the region.
    """
    if len(channels) < 3:
        raise UsageError("A regime shift must touch at least 3 channels.")
    if not 0 <= start_row < stop_row <= frame.n_rows:
        raise UsageError(f"Invalid shift rows [{start_row}, {stop_row}) for {frame.n_rows} rows.")

    values = frame.values.copy()
    ramp = np.linspace(0.0, 1.0, stop_row - start_row)
    for channel in channels:
        position = frame.channels.index(channel)
        region = values[start_row:stop_row, position]
        level = frame.values[:start_row, position].mean() if start_row > 0 else region.mean()
        amplitude = frame.values[:, position].std()
        values[start_row:stop_row, position] = 2.0 * level - region + drift * amplitude * ramp
    return frame.with_values(values)
