"""crossalarm - Training and evaluation"""

import math
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
from loguru import logger
from pydantic import BaseModel

from crossalarm.data.frame import WindowSet
from crossalarm.exceptions import DimensionError, NumericalError, UsageError
from crossalarm.models import MetricsReport, TrainConfig
from crossalarm.network.hed import CrossformerModel
from crossalarm.tensor import GradTape, functional as F
from crossalarm.tensor.optim import Adam


class EpochRecord(BaseModel):
    """Model for one epoch of training history"""

    epoch: int
    train_loss: float
    val_mse: float
    val_mae: float


class TrainingResult(BaseModel):
    """Model for the outcome of a training run"""

    history: List[EpochRecord]
    best_epoch: int
    best_val_mse: float
    stopped_early: bool
    optimizer: Adam

    model_config = {"arbitrary_types_allowed": True}


def _paired(y: np.ndarray, y_hat: np.ndarray):
    y = np.asarray(y, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    if y.shape != y_hat.shape:
        raise DimensionError(f"Compared arrays differ in shape: {y.shape} vs {y_hat.shape}.")
    if y.size == 0:
        raise UsageError("Cannot compute metrics over zero values.")
    return y, y_hat


def mse(y, y_hat) -> float:
    y, y_hat = _paired(y, y_hat)
    return float(np.mean((y - y_hat) ** 2))


def mae(y, y_hat) -> float:
    y, y_hat = _paired(y, y_hat)
    return float(np.mean(np.abs(y - y_hat)))


def metrics(y, y_hat) -> MetricsReport:
    y, y_hat = _paired(y, y_hat)
    return MetricsReport(mse=mse(y, y_hat), mae=mae(y, y_hat), n=int(y.size))


def evaluate(model: CrossformerModel, windows: WindowSet, batch_size: int = 256) -> MetricsReport:
    """Method used to score a model on every window of a split."""
    if len(windows) == 0:
        raise UsageError("Cannot evaluate on an empty window set.")
    predictions = model.predict_batch(windows.inputs, batch_size=batch_size)
    return metrics(windows.targets, predictions)


def persistence_forecast(windows: WindowSet) -> np.ndarray:
    """Last observed row held flat across the horizon."""
    last = windows.inputs[:, -1:, :]
    return np.repeat(last, windows.horizon, axis=1)


def evaluate_persistence(windows: WindowSet) -> MetricsReport:
    if len(windows) == 0:
        raise UsageError("Cannot evaluate on an empty window set.")
    return metrics(windows.targets, persistence_forecast(windows))


def trimmed_mean(values: Sequence[float]) -> float:
    """Mean after dropping one minimum and one maximum."""
    values = sorted(float(v) for v in values)
    if len(values) < 3:
        raise UsageError(f"Trimmed averaging needs at least 3 runs, got {len(values)}.")
    kept = values[1:-1]
    return sum(kept) / len(kept)


def evaluate_protocol(run: Callable[[int], MetricsReport], seeds: Sequence[int]) -> Dict[str, float]:
    """
    Method used to repeat a run once per seed and trim-average MSE and MAE.
    """
    reports = [run(seed) for seed in seeds]
    logger.info(f"Protocol over {len(reports)} runs: MSE {[round(r.mse, 6) for r in reports]}")
    return {
        "runs": len(reports),
        "mse": trimmed_mean([r.mse for r in reports]),
        "mae": trimmed_mean([r.mae for r in reports]),
    }


def train(
    model: CrossformerModel,
    train_windows: WindowSet,
    val_windows: WindowSet,
    cfg: TrainConfig,
    optimizer: Optional[Adam] = None,
    history: Optional[List[EpochRecord]] = None,
    best_state: Optional[Dict[str, np.ndarray]] = None,
    on_epoch: Optional[Callable[[EpochRecord, bool], None]] = None,
) -> TrainingResult:
    """
    Method used to fit a model with Adam on the MSE over the full horizon.

    Batch order for epoch e comes from default_rng((seed, e)), so a run is
    fully determined by the seed. The parameters with the lowest validation
    MSE are restored before returning. Passing an optimizer and history
    resumes a run; epochs continue numbering after the given history, the
    patience count restarts from the epochs since its best record and
    `best_state` holds the parameters of that record.
    `on_epoch(record, improved)` is called after every epoch.
    """
    if len(train_windows) == 0 or len(val_windows) == 0:
        raise UsageError("Training needs non-empty train and validation windows.")
    history = list(history or [])
    if optimizer is None:
        optimizer = Adam(
            model.named_parameters(),
            lr=cfg.learning_rate,
            beta1=cfg.beta1,
            beta2=cfg.beta2,
            eps=cfg.eps,
        )

    best_val = min((r.val_mse for r in history), default=math.inf)
    best_epoch = min(history, key=lambda r: r.val_mse).epoch if history else -1
    stale = 0
    if not history:
        best_val = evaluate(model, val_windows, cfg.batch_size).mse
    else:
        stale = history[-1].epoch - best_epoch
        if best_state is None and stale:
            logger.warning(
                f"Resuming without the parameters of best epoch {best_epoch}; "
                "the current parameters stand in for them"
            )
    if best_state is not None:
        best_state = {name: np.array(array, dtype=np.float64) for name, array in best_state.items()}
    else:
        best_state = model.state_dict()
    stopped_early = False
    first_epoch = len(history)

    for epoch in range(first_epoch, first_epoch + cfg.max_epochs):
        rng = np.random.default_rng((cfg.seed, epoch))
        order = rng.permutation(len(train_windows))
        model.set_rng(rng if model.config.dropout > 0 else None)

        total, seen = 0.0, 0
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            with GradTape():
                prediction = model(train_windows.inputs[batch])
                loss = F.mse_loss(prediction, train_windows.targets[batch])
                value = loss.item()
                if not math.isfinite(value):
                    raise NumericalError(
                        f"Loss became {value} at epoch {epoch}, batch {start // cfg.batch_size}; "
                        f"lower the learning rate ({cfg.learning_rate}) or check the inputs."
                    )
                optimizer.zero_grad()
                loss.backward()
            optimizer.step()
            total += value * len(batch)
            seen += len(batch)

        model.set_rng(None)
        report = evaluate(model, val_windows, cfg.batch_size)
        record = EpochRecord(
            epoch=epoch, train_loss=total / seen, val_mse=report.mse, val_mae=report.mae
        )
        history.append(record)
        improved = report.mse < best_val
        logger.info(
            f"Epoch {epoch}: train loss {record.train_loss:.6f}, val MSE {report.mse:.6f}"
            + (" (best)" if improved else "")
        )
        if improved:
            best_val, best_epoch, stale = report.mse, epoch, 0
            best_state = model.state_dict()
        else:
            stale += 1
        if on_epoch is not None:
            on_epoch(record, improved)
        if stale >= cfg.patience:
            stopped_early = True
            logger.info(f"Early stopping after {cfg.patience} epochs without improvement")
            break

    model.load_state_dict(best_state)
    return TrainingResult(
        history=history,
        best_epoch=best_epoch,
        best_val_mse=best_val,
        stopped_early=stopped_early,
        optimizer=optimizer,
    )
