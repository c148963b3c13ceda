import json

import pandas as pd
import pytest
from loguru import logger

from crossalarm import cli
from crossalarm.exceptions import NumericalError
from crossalarm.utilities import load_config_values, parse_overrides

CONFIG = """\
channel_map=TQA:torque,HKLD:hookload,RPM:rotary_speed
excluded_channels=
input_len=8
horizon=4
seg_len=4
d_model=8
heads=2
layers=1
routers=2
mlp_ratio=2
learning_rate=0.001
batch_size=64
max_epochs=2
min_normal_samples=20
seed=4
"""


@pytest.fixture()
def workspace(tmp_path, monkeypatch):
    monkeypatch.delenv("CROSSALARM_SEED", raising=False)
    monkeypatch.setattr(cli.utilities.config, "CROSSALARM_SEED", None)
    path = tmp_path / "run.env"
    path.write_text(
        CONFIG + f"raw_csv={tmp_path / 'raw.csv'}\noutput_dir={tmp_path / 'out'}\n", encoding="utf-8"
    )
    return tmp_path, path


def _main(config_path, command, *extra):
    return cli.main([command, "--config", str(config_path), *extra])


@pytest.mark.slow
def test_full_pipeline(workspace):
    """Test synthesize, preprocess, train, predict, detect, eval and export-attention."""
    root, config_path = workspace
    out = root / "out"
    assert _main(config_path, "synthesize", "--rows", "600") == 0
    assert _main(config_path, "preprocess") == 0
    split_rows = json.loads((out / "preprocess_report.json").read_text())["split_rows"]
    assert split_rows == {"train": 420, "val": 60, "test": 120}
    first_train = (out / "train.csv").read_bytes()
    assert _main(config_path, "preprocess") == 0
    assert (out / "train.csv").read_bytes() == first_train

    assert _main(config_path, "train") == 0
    assert (out / "best.ckpt").is_file() and (out / "last.ckpt").is_file()
    metadata = json.loads((out / "run_metadata.json").read_text())
    assert [r["epoch"] for r in metadata["history"]] == [0, 1]
    assert metadata["seed"] == 4

    assert _main(config_path, "predict") == 0
    predictions = pd.read_csv(out / "predictions.csv")
    assert len(predictions) == 4 + (120 - 8)
    assert {"torque_truth", "torque_pred", "window"} <= set(predictions.columns)

    assert _main(config_path, "detect") == 0
    report = json.loads((out / "alarm_report.json").read_text())
    assert report["t_tau_s"] == 16.0
    assert report["w_v"] >= report["mu"]
    risk = pd.read_csv(out / "risk.csv")
    assert len(risk) == 4 + (120 - 8) - 1

    assert _main(config_path, "eval") == 0
    metrics = json.loads((out / "metrics.json").read_text())
    assert {(row["model"], row["split"]) for row in metrics["metrics"]} >= {
        ("persistence", "val"),
        ("persistence", "test"),
    }

    assert _main(config_path, "export-attention", "--window", "0") == 0
    exported = sorted(p.name for p in (out / "attention").iterdir())
    assert "encoder.0_time_head0.csv" in exported
    assert "decoder.1_cross_head1.csv" in exported
    assert _main(config_path, "export-attention", "--window", "5000") == 2

    assert _main(config_path, "train", "--set", "resume=true", "--set", "max_epochs=1") == 0
    metadata = json.loads((out / "run_metadata.json").read_text())
    assert [r["epoch"] for r in metadata["history"]] == [0, 1, 2]
    assert _main(config_path, "train", "--set", "resume=true", "--set", "d_model=16") == 2


def test_missing_channel_column_exits_with_code_2(workspace):
    """Test the config error exit code for a column absent from the CSV."""
    root, config_path = workspace
    assert _main(config_path, "synthesize", "--rows", "50") == 0
    mapping = "channel_map=TQA:torque,HKLD:hookload,SPP:standpipe_pressure"
    assert _main(config_path, "preprocess", "--set", mapping) == 2
    logger.remove()
    assert "SPP" in (root / "out" / "crossalarm.log").read_text()


def test_unknown_key_and_bad_override_exit_with_code_2(workspace):
    """Test refusals of unknown config keys and malformed overrides."""
    _, config_path = workspace
    assert _main(config_path, "preprocess", "--set", "colour=blue") == 2
    assert _main(config_path, "preprocess", "--set", "no-equals-sign") == 2


def test_numerical_failure_exits_with_code_3(workspace, monkeypatch):
    """Test the exit code mapping for numerical errors."""
    _, config_path = workspace

    def explode(args):
        raise NumericalError("loss became nan")

    monkeypatch.setattr(cli, "run", explode)
    assert _main(config_path, "train") == 3


def test_config_precedence(workspace, monkeypatch):
    """Test file < --set < CROSSALARM_SEED precedence."""
    _, config_path = workspace
    values = load_config_values(config_path, ["seed=9", "horizon=6"])
    assert values["seed"] == "9"
    assert values["horizon"] == "6"
    monkeypatch.setenv("CROSSALARM_SEED", "21")
    assert load_config_values(config_path, ["seed=9"])["seed"] == "21"
    assert parse_overrides(["a=1", "a=2"]) == {"a": "2"}


def test_effective_config_round_trips(workspace):
    """Test that the written effective config reproduces the run config."""
    root, config_path = workspace
    assert _main(config_path, "synthesize", "--rows", "50") == 0
    written = root / "out" / "effective_config.env"
    first = cli.RunConfig(**load_config_values(config_path, []))
    again = cli.RunConfig(**load_config_values(written, []))
    assert again == first


@pytest.mark.slow
def test_same_seed_reproduces_checkpoints_and_alarms(workspace):
    """Test that two workspaces run with one seed write byte-identical artifacts."""
    root, config_path = workspace
    second = root / "second"
    second.mkdir()
    second_config = second / "run.env"
    second_config.write_text(
        CONFIG + f"raw_csv={second / 'raw.csv'}\noutput_dir={second / 'out'}\n", encoding="utf-8"
    )
    for path in (config_path, second_config):
        for command in (("synthesize", "--rows", "600"), ("preprocess",), ("train",), ("detect",)):
            assert _main(path, *command) == 0

    outputs = [root / "out", second / "out"]
    for name in ("train.csv", "norm_stats.json", "best.ckpt", "last.ckpt", "risk.csv", "alarm_report.json"):
        assert (outputs[0] / name).read_bytes() == (outputs[1] / name).read_bytes(), name
    first, again = (json.loads((out / "run_metadata.json").read_text()) for out in outputs)
    assert first["history"] == again["history"]
    assert first["best_epoch"] == again["best_epoch"]


@pytest.mark.slow
def test_sweep_retrains_per_horizon_and_segment(workspace):
    """Test one alarm row per (horizon, seg_len) pair and trimmed averaging over seeds."""
    root, config_path = workspace
    out = root / "out"
    assert _main(config_path, "synthesize", "--rows", "600") == 0
    assert _main(config_path, "preprocess") == 0

    assert _main(config_path, "sweep", "--set", "sweep_horizons=2,4", "--set", "sweep_seg_lens=2,4") == 0
    rows = json.loads((out / "sweep.json").read_text())["rows"]
    assert [(row["tau"], row["seg_len"]) for row in rows] == [(2, 2), (2, 4), (4, 2), (4, 4)]
    assert all(row["runs"] == 1 and row["w_v"] >= row["mu"] for row in rows)
    table = pd.read_csv(out / "sweep.csv")
    assert len(table) == 4
    assert {"tau", "mu", "sigma", "mse_percent", "w_v", "w_t_min", "test_mse", "test_mae"} <= set(table.columns)

    assert _main(config_path, "sweep", "--set", "sweep_seeds=1,2,3") == 0
    rows = json.loads((out / "sweep.json").read_text())["rows"]
    assert [(row["tau"], row["seg_len"], row["runs"]) for row in rows] == [(4, 4, 3)]

    assert _main(config_path, "sweep", "--set", "sweep_seg_lens=3") == 2
