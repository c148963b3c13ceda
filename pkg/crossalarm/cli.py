"""crossalarm - Command line interface"""

import argparse
import sys
import time
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from loguru import logger
from pydantic import ValidationError

from crossalarm import utilities
from crossalarm.data import pipeline
from crossalarm.data.frame import NormStats, TimeSeriesFrame, WindowSet
from crossalarm.data.synthetic import coupled_sines, inject_regime_shift
from crossalarm.exceptions import ConfigError, CrossAlarmError, UsageError
from crossalarm.models import AlarmReport, RunConfig
from crossalarm.network.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from crossalarm.network.hed import CrossformerModel, PredictionSeries, predict_series
from crossalarm.risk import engine as risk_engine
from crossalarm.tensor.optim import Adam
from crossalarm.training import engine as training

COMMANDS = ["preprocess", "train", "predict", "detect", "eval", "sweep", "export-attention", "synthesize"]
SPLITS = ("train", "val", "test")
STATS_FILE = "norm_stats.json"
BEST_CHECKPOINT = "best.ckpt"
LAST_CHECKPOINT = "last.ckpt"
FLOAT_FORMAT = "%.17g"


def _write_table(table: pd.DataFrame, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    table.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n", na_rep="")
    return path


def _split_path(cfg: RunConfig, name: str) -> Path:
    return Path(cfg.output_dir) / f"{name}.csv"


def _load_stats(cfg: RunConfig) -> NormStats:
    return NormStats(**utilities.read_json(Path(cfg.output_dir) / STATS_FILE))


def _load_split(cfg: RunConfig, name: str) -> TimeSeriesFrame:
    return pipeline.read_frame_csv(_split_path(cfg, name), cadence_s=cfg.cadence_s)


def _checkpoint_path(cfg: RunConfig) -> Path:
    return Path(cfg.checkpoint) if cfg.checkpoint else Path(cfg.output_dir) / BEST_CHECKPOINT


def _load_checked(path: Path, cfg: RunConfig, stats: NormStats) -> Checkpoint:
    checkpoint = load_checkpoint(path)
    stats.check_channels(checkpoint.config.channels)
    if checkpoint.config.horizon != cfg.horizon or checkpoint.config.input_len != cfg.input_len:
        raise ConfigError(
            f"Checkpoint {path} was trained with input_len={checkpoint.config.input_len}, "
            f"horizon={checkpoint.config.horizon}; the config asks for "
            f"input_len={cfg.input_len}, horizon={cfg.horizon}."
        )
    return checkpoint


def cmd_preprocess(cfg: RunConfig) -> Dict[str, Path]:
    """Ingest, resample, split and normalize the raw CSV."""
    frame, report = pipeline.read_csv(cfg.raw_csv, cfg.channel_map, cfg.timestamp_column)
    frame = pipeline.remove_outliers(frame)
    segments = pipeline.split_segments(frame, cfg.max_gap_s)
    frame = pipeline.resample_linear(frame, cfg.cadence_s, cfg.max_gap_s, keep=cfg.anomaly_start)
    splits = pipeline.split(frame, cfg.split_spec())
    stats = pipeline.fit_stats(splits.train)

    output = Path(cfg.output_dir)
    written = {}
    for name in SPLITS:
        normalized = pipeline.normalize(getattr(splits, name), stats)
        path = _split_path(cfg, name)
        path.parent.mkdir(parents=True, exist_ok=True)
        pipeline.write_frame_csv(normalized, path)
        written[name] = path
    written["stats"] = utilities.write_json(stats.model_dump(), output / STATS_FILE)
    written["report"] = utilities.write_json(
        {
            "ingest": report.model_dump(),
            "gap_segments": len(segments),
            "resampled_rows": frame.n_rows,
            "first_timestamp": frame.timestamps[0].isoformat(),
            "last_timestamp": frame.timestamps[-1].isoformat(),
            "split_rows": {name: getattr(splits, name).n_rows for name in SPLITS},
        },
        output / "preprocess_report.json",
    )
    return written


def cmd_train(cfg: RunConfig) -> Dict[str, Path]:
    """Train on the normal train split, early-stopping on the validation split."""
    started = time.perf_counter()
    stats = _load_stats(cfg)
    output = Path(cfg.output_dir)
    model_cfg = cfg.crossformer_config(stats.channels)
    train_cfg = cfg.train_config()
    train_windows = pipeline.make_windows(_load_split(cfg, "train"), cfg.input_len, cfg.horizon)
    val_windows = pipeline.make_windows(_load_split(cfg, "val"), cfg.input_len, cfg.horizon)

    history: List[training.EpochRecord] = []
    best_state: Optional[Dict[str, np.ndarray]] = None
    checkpoint: Optional[Checkpoint] = None
    resume_path = output / LAST_CHECKPOINT
    if cfg.resume and resume_path.is_file():
        checkpoint = load_checkpoint(resume_path)
        ignored = {"seed"}
        stored = checkpoint.config.model_dump(exclude=ignored)
        wanted = model_cfg.model_dump(exclude=ignored)
        conflicts = {k: (stored[k], wanted[k]) for k in stored if stored[k] != wanted[k]}
        if conflicts:
            raise ConfigError(f"Cannot resume: checkpoint and config disagree on {conflicts}.")
        model = checkpoint.model
    else:
        model = CrossformerModel(model_cfg)
    optimizer = Adam(
        model.named_parameters(),
        lr=train_cfg.learning_rate,
        beta1=train_cfg.beta1,
        beta2=train_cfg.beta2,
        eps=train_cfg.eps,
    )
    if checkpoint is not None:
        optimizer.load_state_dict(checkpoint.optimizer_state)
        history = [training.EpochRecord(**r) for r in checkpoint.extra.get("history", [])]
        best_path = output / BEST_CHECKPOINT
        if best_path.is_file():
            best_state = load_checkpoint(best_path).model.state_dict()
        logger.info(f"Resuming from {resume_path} after {len(history)} epochs")

    completed = list(history)
    best = output / BEST_CHECKPOINT

    def save_last(record: training.EpochRecord, improved: bool) -> None:
        completed.append(record)
        if improved:
            save_checkpoint(
                best,
                model,
                norm_stats=stats,
                extra={"best_epoch": record.epoch, "val_mse": record.val_mse},
            )
        save_checkpoint(
            resume_path,
            model,
            norm_stats=stats,
            optimizer=optimizer,
            extra={"history": [r.model_dump() for r in completed]},
        )

    result = training.train(
        model,
        train_windows,
        val_windows,
        train_cfg,
        optimizer=optimizer,
        history=history,
        best_state=best_state,
        on_epoch=save_last,
    )
    if result.best_epoch < 0 or not best.is_file():
        save_checkpoint(
            best,
            model,
            norm_stats=stats,
            extra={"best_epoch": result.best_epoch, "val_mse": result.best_val_mse},
        )
    else:
        logger.info(f"Best epoch {result.best_epoch} is stored in {best}")
    metadata = utilities.write_json(
        {
            "config": cfg.model_dump(mode="json"),
            "seed": cfg.seed,
            "optimizer": {
                "name": "adam",
                "learning_rate": train_cfg.learning_rate,
                "beta1": train_cfg.beta1,
                "beta2": train_cfg.beta2,
                "eps": train_cfg.eps,
            },
            "history": [r.model_dump() for r in result.history],
            "best_epoch": result.best_epoch,
            "best_val_mse": result.best_val_mse,
            "stopped_early": result.stopped_early,
            "checkpoint": str(best),
            "wall_time_s": time.perf_counter() - started,
        },
        output / "run_metadata.json",
    )
    return {"checkpoint": best, "metadata": metadata}


def _predict_test(cfg: RunConfig) -> Tuple[Checkpoint, NormStats, TimeSeriesFrame, PredictionSeries]:
    stats = _load_stats(cfg)
    checkpoint = _load_checked(_checkpoint_path(cfg), cfg, stats)
    test = _load_split(cfg, "test")
    series = predict_series(checkpoint.model, test)
    truth = pipeline.denormalize(test, stats)
    return checkpoint, stats, truth, series.denormalized(stats)


def prediction_table(truth: TimeSeriesFrame, series: PredictionSeries) -> pd.DataFrame:
    """timestamp, window, then <channel>_truth and <channel>_pred per channel."""
    rows = len(series.values)
    aligned = np.full((rows, truth.n_channels), np.nan)
    available = max(0, min(rows, truth.n_rows - series.input_len))
    aligned[:available] = truth.values[series.input_len:series.input_len + available]
    columns = {
        "timestamp": pipeline.format_timestamps(series.timestamps),
        "window": series.windows,
    }
    for position, channel in enumerate(series.channels):
        columns[f"{channel}_truth"] = aligned[:, position]
        columns[f"{channel}_pred"] = series.values[:, position]
    return pd.DataFrame(columns)


def cmd_predict(cfg: RunConfig) -> Dict[str, Path]:
    """Sliding-window forecasts over the test split, in raw units."""
    _, _, truth, series = _predict_test(cfg)
    path = _write_table(prediction_table(truth, series), Path(cfg.output_dir) / "predictions.csv")
    return {"predictions": path}


def _alarm_report(
    cfg: RunConfig,
    model: CrossformerModel,
    stats: NormStats,
    test: TimeSeriesFrame,
    val_windows: WindowSet,
) -> Tuple[risk_engine.RiskSeries, risk_engine.NormalStats, float, AlarmReport]:
    series = predict_series(model, test).denormalized(stats)
    truth = pipeline.denormalize(test, stats)
    mse_tau = training.evaluate(model, val_windows).mse

    risk = risk_engine.risk_series(
        truth, series, excluded=cfg.excluded_channels, epsilon_scale=cfg.epsilon_scale
    )
    normal = risk_engine.fit_normal_stats(
        risk, cfg.threshold_config(mse_tau), anomaly_start=cfg.anomaly_start
    )
    w_v = risk_engine.warning_threshold(normal.mu, normal.sigma, mse_tau)
    report = risk_engine.detect(
        risk,
        w_v,
        cfg.horizon,
        cfg.cadence_s,
        min_persist=cfg.min_persist,
        event_time=cfg.event_time,
        stats=normal,
        mse_tau=mse_tau,
    )
    return risk, normal, w_v, report


def cmd_detect(cfg: RunConfig) -> Dict[str, Path]:
    """Risk over the test split, warning threshold and alarm report."""
    stats = _load_stats(cfg)
    checkpoint = _load_checked(_checkpoint_path(cfg), cfg, stats)
    val_windows = pipeline.make_windows(_load_split(cfg, "val"), cfg.input_len, cfg.horizon)
    risk, normal, w_v, report = _alarm_report(
        cfg, checkpoint.model, stats, _load_split(cfg, "test"), val_windows
    )

    output = Path(cfg.output_dir)
    table = risk.to_dataframe(w_v)
    table["timestamp"] = pipeline.format_timestamps(risk.timestamps)
    risk_path = _write_table(table, output / "risk.csv")
    report_path = utilities.write_json(
        {
            **report.model_dump(mode="json"),
            "normal_window": {"start": normal.start, "stop": normal.stop, "samples": normal.samples},
            "table": report.table_row(),
        },
        output / "alarm_report.json",
    )
    return {"risk": risk_path, "report": report_path}


def cmd_eval(cfg: RunConfig) -> Dict[str, Path]:
    """MSE/MAE per split for each checkpoint, the persistence baseline and the trimmed protocol."""
    stats = _load_stats(cfg)
    paths = [Path(p) for p in cfg.eval_checkpoints] or [_checkpoint_path(cfg)]
    checkpoints = [_load_checked(path, cfg, stats) for path in paths]
    windows = {
        name: pipeline.make_windows(_load_split(cfg, name), cfg.input_len, cfg.horizon)
        for name in ("val", "test")
    }

    rows = []
    for path, checkpoint in zip(paths, checkpoints):
        for name, split_windows in windows.items():
            report = training.evaluate(checkpoint.model, split_windows)
            rows.append({"model": str(path), "split": name, **report.model_dump()})
    for name, split_windows in windows.items():
        report = training.evaluate_persistence(split_windows)
        rows.append({"model": "persistence", "split": name, **report.model_dump()})

    protocol = None
    if len(checkpoints) >= 3:
        protocol = {
            name: training.evaluate_protocol(
                lambda index, w=split_windows: training.evaluate(checkpoints[index].model, w),
                range(len(checkpoints)),
            )
            for name, split_windows in windows.items()
        }
    path = utilities.write_json(
        {"metrics": rows, "protocol": protocol}, Path(cfg.output_dir) / "metrics.json"
    )
    return {"metrics": path}


def cmd_sweep(cfg: RunConfig) -> Dict[str, Path]:
    """
    Method used to retrain once per (horizon, seg_len) pair and collect one alarm row per pair.

    Empty `sweep_horizons` or `sweep_seg_lens` fall back to the configured
    value. With three or more `sweep_seeds` the test MSE/MAE are the trimmed
    mean over seeds; the alarm row always comes from the first seed.
    """
    stats = _load_stats(cfg)
    frames = {name: _load_split(cfg, name) for name in SPLITS}
    seeds = cfg.sweep_seeds or [cfg.seed]
    rows = []
    for horizon in cfg.sweep_horizons or [cfg.horizon]:
        windows = {
            name: pipeline.make_windows(frame, cfg.input_len, horizon) for name, frame in frames.items()
        }
        for seg_len in cfg.sweep_seg_lens or [cfg.seg_len]:
            run_cfg = cfg.model_copy(update={"horizon": horizon, "seg_len": seg_len})
            models = []
            for seed in seeds:
                seeded = run_cfg.model_copy(update={"seed": seed})
                model = CrossformerModel(seeded.crossformer_config(stats.channels))
                training.train(model, windows["train"], windows["val"], seeded.train_config())
                models.append(model)

            if len(models) >= 3:
                scores = training.evaluate_protocol(
                    lambda index: training.evaluate(models[index], windows["test"]), range(len(models))
                )
            else:
                single = training.evaluate(models[0], windows["test"])
                scores = {"runs": 1, "mse": single.mse, "mae": single.mae}
            _, _, _, report = _alarm_report(run_cfg, models[0], stats, frames["test"], windows["val"])
            row = {
                **report.table_row(),
                "seg_len": seg_len,
                "runs": scores["runs"],
                "test_mse": scores["mse"],
                "test_mae": scores["mae"],
                "persistence_mse": training.evaluate_persistence(windows["test"]).mse,
                "alarms": len(report.intervals),
            }
            logger.info(f"Sweep tau={horizon} seg_len={seg_len}: {row}")
            rows.append(row)

    output = Path(cfg.output_dir)
    return {
        "sweep_csv": _write_table(pd.DataFrame(rows), output / "sweep.csv"),
        "sweep_json": utilities.write_json({"rows": rows}, output / "sweep.json"),
    }


def cmd_export_attention(cfg: RunConfig, window_index: int) -> Dict[str, Path]:
    """One CSV of attention weights per (layer, stage, head) for one test window."""
    stats = _load_stats(cfg)
    checkpoint = _load_checked(_checkpoint_path(cfg), cfg, stats)
    windows = pipeline.make_windows(_load_split(cfg, "test"), cfg.input_len, cfg.horizon)
    if not 0 <= window_index < len(windows):
        raise UsageError(f"Window index {window_index} is outside [0, {len(windows)}).")

    captured = []
    checkpoint.model.forward(
        windows.inputs[window_index],
        hook=lambda layer, stage, weights: captured.append((layer, stage, weights)),
    )
    output = Path(cfg.output_dir) / "attention"
    written = {}
    for layer, stage, weights in captured:
        heads = weights.shape[-3]
        for head in range(heads):
            matrix = weights[..., head, :, :]
            queries, keys = matrix.shape[-2], matrix.shape[-1]
            flat = matrix.reshape(-1, keys)
            table = pd.DataFrame(flat, columns=[f"key_{k}" for k in range(keys)])
            table.insert(0, "query", np.tile(np.arange(queries), len(flat) // queries))
            table.insert(0, "group", np.repeat(np.arange(len(flat) // queries), queries))
            name = f"{layer}_{stage}_head{head}"
            written[name] = _write_table(table, output / f"{name}.csv")
    return written


def cmd_synthesize(
    cfg: RunConfig, rows: int, shift_start: Optional[int], shift_stop: Optional[int]
) -> Dict[str, Path]:
    """Write a coupled-sine raw CSV, optionally with a regime shift, to raw_csv."""
    headers = list(cfg.channel_map)
    frame = coupled_sines(n_steps=rows, channels=cfg.channels, cadence_s=cfg.cadence_s, seed=cfg.seed)
    if shift_start is not None and shift_stop is not None:
        shifted = [c for c in cfg.channels if c not in cfg.excluded_channels][:3]
        frame = inject_regime_shift(frame, shift_start, shift_stop, shifted)
    table = pd.DataFrame(frame.values, columns=headers)
    table.insert(0, cfg.timestamp_column, pipeline.format_timestamps(frame.timestamps))
    return {"raw_csv": _write_table(table, Path(cfg.raw_csv))}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crossalarm", description="Crossformer forecasting and stuck-pipe risk alarms"
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="flat key=value run configuration file")
    parser.add_argument(
        "--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
        help="override one configuration value; repeatable",
    )
    parser.add_argument("--window", type=int, default=0, help="test window for export-attention")
    parser.add_argument("--rows", type=int, default=20000, help="rows written by synthesize")
    parser.add_argument("--shift-start", type=int, default=None, help="first shifted row for synthesize")
    parser.add_argument("--shift-stop", type=int, default=None, help="row after the shift for synthesize")
    return parser


def run(args: argparse.Namespace) -> Dict[str, Path]:
    cfg = RunConfig(**utilities.load_config_values(args.config, args.overrides))
    output = Path(cfg.output_dir)
    utilities.configure_logging(cfg.log_level, output / utilities.LOG_FILE)
    utilities.write_effective_config(cfg.model_dump(), output)
    logger.info(f"crossalarm {args.command} (seed {cfg.seed})")

    if args.command == "preprocess":
        return cmd_preprocess(cfg)
    if args.command == "train":
        return cmd_train(cfg)
    if args.command == "predict":
        return cmd_predict(cfg)
    if args.command == "detect":
        return cmd_detect(cfg)
    if args.command == "eval":
        return cmd_eval(cfg)
    if args.command == "sweep":
        return cmd_sweep(cfg)
    if args.command == "export-attention":
        return cmd_export_attention(cfg, args.window)
    return cmd_synthesize(cfg, args.rows, args.shift_start, args.shift_stop)


def main(argv: Optional[List[str]] = None) -> int:
    """Run one command; returns 0 on success, 2 on config/data errors, 3 on numerical failure."""
    args = build_parser().parse_args(argv)
    try:
        written = run(args)
    except CrossAlarmError as error:
        logger.error(f"{type(error).__name__}: {error}")
        return error.exit_code
    except ValidationError as error:
        logger.error(f"Invalid configuration: {error}")
        return 2
    except OSError as error:
        logger.error(f"{error}")
        return 2
    for name, path in written.items():
        logger.info(f"Wrote {name}: {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
