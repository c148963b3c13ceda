import json
import zipfile

import numpy as np
import pytest

from crossalarm.data.frame import NormStats
from crossalarm.exceptions import ConfigError, DimensionError
from crossalarm.network.checkpoint import load_checkpoint, read_header, save_checkpoint
from crossalarm.network.hed import CrossformerModel
from crossalarm.tensor import GradTape, functional as F
from crossalarm.tensor.optim import Adam

STATS = NormStats(channels=["a", "b", "c"], mean=[1.0, 2.0, 3.0], std=[0.5, 1.5, 2.5])


def test_checkpoint_bytes_are_deterministic(tmp_path, tiny_config):
    """Test that saving the same model twice gives identical files."""
    model = CrossformerModel(tiny_config)
    first = save_checkpoint(tmp_path / "first.ckpt", model, STATS)
    second = save_checkpoint(tmp_path / "second.ckpt", model, STATS)
    assert first.read_bytes() == second.read_bytes()


def test_checkpoint_round_trip(tmp_path, tiny_config, rng):
    """Test that a loaded model predicts exactly like the saved one."""
    model = CrossformerModel(tiny_config)
    path = save_checkpoint(tmp_path / "model.ckpt", model, STATS, extra={"epoch": 3})
    restored = load_checkpoint(path)
    window = rng.normal(size=(8, 3))
    np.testing.assert_array_equal(restored.model.predict_window(window), model.predict_window(window))
    assert restored.config == tiny_config
    assert restored.norm_stats == STATS
    assert restored.optimizer_state is None
    assert restored.extra == {"epoch": 3}


def test_checkpoint_keeps_optimizer_moments(tmp_path, tiny_config, rng):
    """Test that Adam moments and step survive a save and load."""
    model = CrossformerModel(tiny_config)
    optimizer = Adam(model.named_parameters(), lr=1e-3)
    with GradTape() as tape:
        loss = F.mse_loss(model(rng.normal(size=(2, 8, 3))), rng.normal(size=(2, 4, 3)))
    tape.backward(loss)
    optimizer.step()

    path = save_checkpoint(tmp_path / "model.ckpt", model, optimizer=optimizer)
    restored = load_checkpoint(path)
    assert restored.optimizer_state["step"] == 1
    for name, moment in optimizer.first_moment.items():
        np.testing.assert_array_equal(restored.optimizer_state["first_moment"][name], moment)
    header = read_header(path)
    assert header["optimizer"]["learning_rate"] == 1e-3
    assert header["byte_order"] == "little"


def test_read_header_rejects_foreign_files(tmp_path):
    """Test refusals for a missing file, a non-zip and a wrong format."""
    with pytest.raises(ConfigError):
        read_header(tmp_path / "missing.ckpt")

    not_zip = tmp_path / "plain.ckpt"
    not_zip.write_text("hello", encoding="utf-8")
    with pytest.raises(ConfigError):
        read_header(not_zip)

    foreign = tmp_path / "foreign.ckpt"
    with zipfile.ZipFile(foreign, "w") as archive:
        archive.writestr("header.json", json.dumps({"format": "other", "version": 1}))
    with pytest.raises(ConfigError):
        read_header(foreign)


def test_load_state_dict_checks_names_and_shapes(tiny_config):
    """Test the refusal of mismatched parameter sets."""
    model = CrossformerModel(tiny_config)
    state = model.state_dict()
    name = next(iter(state))
    with pytest.raises(ConfigError):
        model.load_state_dict({k: v for k, v in state.items() if k != name})
    state[name] = np.zeros((1, 1, 1, 1))
    with pytest.raises(DimensionError):
        model.load_state_dict(state)
