"""crossalarm - Dynamic warning threshold over a risk stream"""

import threading
from collections import deque
from typing import Iterable, Iterator, Optional

import numpy as np
from loguru import logger
from pydantic import BaseModel

from crossalarm.exceptions import UsageError
from crossalarm.risk.engine import warning_threshold


class ThresholdSnapshot(BaseModel):
    """Model for the threshold state after one stream step"""

    step: int
    value: float
    alarm: bool
    mu: Optional[float] = None
    sigma: Optional[float] = None
    w_v: Optional[float] = None
    stale: bool = True
    refits: int = 0

    model_config = {"frozen": True}


class DynamicThreshold:
    """
    Warning threshold refitted every `refit_every` steps from the trailing
    `window_len` samples that were not alarmed when they arrived.

    A refit with fewer than `min_samples` usable samples keeps the previous
    threshold and marks it stale, unless the full window is steady: a spread
    of at most `rebase_ratio` times the fitted sigma marks a shifted normal
    level rather than an anomaly, and the whole window is refitted. A ratio of 0 turns this off.

    Updates and snapshots take a lock, so readers on other threads always
    see one consistent state.
    """

    def __init__(
        self,
        mse_tau: float,
        refit_every: int,
        window_len: int,
        min_samples: int = 30,
        mu: Optional[float] = None,
        sigma: Optional[float] = None,
        rebase_ratio: float = 2.0,
    ):
        if refit_every < 1 or window_len < 1 or min_samples < 1:
            raise UsageError("refit_every, window_len and min_samples must be positive.")
        if rebase_ratio < 0:
            raise UsageError(f"rebase_ratio must be non-negative, got {rebase_ratio}.")
        self.rebase_ratio = rebase_ratio
        self.mse_tau = mse_tau
        self.refit_every = refit_every
        self.min_samples = min_samples
        self._history = deque(maxlen=window_len)
        self._lock = threading.Lock()
        self._step = 0
        self._refits = 0
        self._mu = mu
        self._sigma = sigma
        self._w_v = None if mu is None or sigma is None else warning_threshold(mu, sigma, mse_tau)
        self._stale = self._w_v is None
        self._last = self._snapshot(float("nan"), False)

    def _snapshot(self, value: float, alarm: bool) -> ThresholdSnapshot:
        return ThresholdSnapshot(
            step=self._step,
            value=value,
            alarm=alarm,
            mu=self._mu,
            sigma=self._sigma,
            w_v=self._w_v,
            stale=self._stale,
            refits=self._refits,
        )

    def _rebase(self, values: np.ndarray) -> bool:
        """Whether a full window without enough normal samples is steady enough to refit on."""
        if self.rebase_ratio == 0 or len(values) < self._history.maxlen or self._sigma is None:
            return False
        if float(values.std()) > self.rebase_ratio * self._sigma:
            return False
        logger.info(
            f"Step {self._step}: the last {len(values)} samples were alarmed with steady spread "
            f"{values.std():.6f}; refitting on the whole window"
        )
        return True

    def _refit(self) -> None:
        normal = np.array([value for value, alarmed in self._history if not alarmed])
        if len(normal) < self.min_samples:
            window = np.array([value for value, _ in self._history])
            if self._rebase(window):
                normal = window
            else:
                self._stale = True
                logger.warning(
                    f"Step {self._step}: {len(normal)} non-alarmed samples, fewer than "
                    f"{self.min_samples}; holding W_v={self._w_v}"
                )
                return
        self._mu = float(normal.mean())
        self._sigma = float(normal.std())
        self._w_v = warning_threshold(self._mu, self._sigma, self.mse_tau)
        self._stale = False
        self._refits += 1

    def update(self, value: float) -> ThresholdSnapshot:
        with self._lock:
            value = float(value)
            alarm = self._w_v is not None and value > self._w_v
            self._history.append((value, alarm))
            self._step += 1
            if self._step % self.refit_every == 0:
                self._refit()
            self._last = self._snapshot(value, alarm)
            return self._last

    def snapshot(self) -> ThresholdSnapshot:
        with self._lock:
            return self._last


def dynamic_threshold_stream(
    values: Iterable[float],
    mse_tau: float,
    refit_every: int,
    window_len: int,
    min_samples: int = 30,
    rebase_ratio: float = 2.0,
) -> Iterator[ThresholdSnapshot]:
    """Method used to yield one threshold snapshot per arriving risk value."""
    threshold = DynamicThreshold(
        mse_tau, refit_every, window_len, min_samples, rebase_ratio=rebase_ratio
    )
    for value in values:
        yield threshold.update(value)
