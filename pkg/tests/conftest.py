import numpy as np
import pytest
from fastapi.testclient import TestClient

from crossalarm import main
from crossalarm.data import pipeline
from crossalarm.data.frame import SplitSpec
from crossalarm.data.synthetic import coupled_sines, inject_regime_shift
from crossalarm.models import CrossformerConfig, TrainConfig
from crossalarm.network.hed import CrossformerModel
from crossalarm.training.engine import train

SHIFTED_ROWS = (18500, 19000)
SHIFTED_CHANNELS = ["torque", "hookload", "rotary_speed"]


@pytest.fixture()
def app():
    with TestClient(app=main.app) as client:
        yield client


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)


@pytest.fixture()
def tiny_config():
    return CrossformerConfig(
        input_len=8,
        horizon=4,
        seg_len=4,
        d_model=8,
        heads=2,
        layers=1,
        routers=2,
        mlp_ratio=2,
        channels=["a", "b", "c"],
        seed=7,
    )


@pytest.fixture()
def sine_frame():
    return coupled_sines(n_steps=400, channels=["torque", "hookload", "rotary_speed"], seed=3)


@pytest.fixture(scope="session")
def sines_run():
    """T=96, tau=12 model trained on 20k coupled-sine steps; the test span carries a regime shift."""
    raw = coupled_sines(n_steps=20000, seed=5)
    shifted = inject_regime_shift(raw, *SHIFTED_ROWS, SHIFTED_CHANNELS, drift=5.0)
    shift_start = shifted.timestamps[SHIFTED_ROWS[0]]
    shift_end = shifted.timestamps[SHIFTED_ROWS[1] - 1]
    splits = pipeline.split(shifted, SplitSpec(anomaly_start=shift_start, anomaly_end=shift_end))
    stats = pipeline.fit_stats(splits.train)
    train_frame, val_frame, test_frame = (
        pipeline.normalize(getattr(splits, name), stats) for name in ("train", "val", "test")
    )

    model = CrossformerModel(
        CrossformerConfig(
            input_len=96,
            horizon=12,
            seg_len=12,
            d_model=16,
            heads=2,
            layers=2,
            routers=3,
            mlp_ratio=2,
            channels=list(raw.channels),
            seed=0,
        )
    )
    val_windows = pipeline.make_windows(val_frame, 96, 12)
    train(
        model,
        pipeline.make_windows(train_frame, 96, 12, stride=2),
        val_windows,
        TrainConfig(learning_rate=2e-3, batch_size=32, max_epochs=15, patience=5, seed=0),
    )
    return {
        "model": model,
        "stats": stats,
        "val_windows": val_windows,
        "test": test_frame,
        "shift_start": shift_start,
        "shift_end": shift_end,
    }
