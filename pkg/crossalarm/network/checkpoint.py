"""crossalarm - Checkpoint container"""

import io
import json
import zipfile
from pathlib import Path
from typing import Dict, Optional, Union

import numpy as np
from loguru import logger
from pydantic import BaseModel

from crossalarm import config
from crossalarm.data.frame import NormStats
from crossalarm.exceptions import ConfigError
from crossalarm.models import CrossformerConfig
from crossalarm.network.hed import CrossformerModel
from crossalarm.tensor.optim import Adam

HEADER = "header.json"
FIXED_DATE = (1980, 1, 1, 0, 0, 0)
DTYPE = "<f8"


class Checkpoint(BaseModel):
    """Model for everything restored from a checkpoint file"""

    model: CrossformerModel
    norm_stats: Optional[NormStats] = None
    optimizer_state: Optional[dict] = None
    extra: dict = {}

    model_config = {"arbitrary_types_allowed": True}

    @property
    def config(self) -> CrossformerConfig:
        return self.model.config


def _encode_array(array: np.ndarray) -> bytes:
    buffer = io.BytesIO()
    np.lib.format.write_array(buffer, np.ascontiguousarray(array, dtype=DTYPE), allow_pickle=False)
    return buffer.getvalue()


def _decode_array(payload: bytes) -> np.ndarray:
    return np.lib.format.read_array(io.BytesIO(payload), allow_pickle=False).astype(np.float64)


def _write_member(archive: zipfile.ZipFile, name: str, payload: bytes) -> None:
    info = zipfile.ZipInfo(name, date_time=FIXED_DATE)
    info.compress_type = zipfile.ZIP_DEFLATED
    info.external_attr = 0o644 << 16
    archive.writestr(info, payload)


def save_checkpoint(
    path: Union[str, Path],
    model: CrossformerModel,
    norm_stats: Optional[NormStats] = None,
    optimizer: Optional[Adam] = None,
    extra: Optional[dict] = None,
) -> Path:
    """
    Method used to write a model to a self-describing zip archive.

    Members are `header.json` plus one little-endian float64 `.npy` per
    parameter (and per Adam moment when an optimizer is given). Member
    timestamps are fixed, so equal inputs give byte-identical files.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    params = model.named_parameters()
    header = {
        "format": config.CHECKPOINT_FORMAT,
        "version": config.CHECKPOINT_VERSION,
        "byte_order": "little",
        "dtype": "float64",
        "hyperparameters": model.config.model_dump(mode="json"),
        "norm_stats": None if norm_stats is None else norm_stats.model_dump(mode="json"),
        "parameters": [{"name": name, "shape": list(t.shape)} for name, t in params.items()],
        "optimizer": None,
        "extra": extra or {},
    }
    optimizer_state = None
    if optimizer is not None:
        optimizer_state = optimizer.state_dict()
        header["optimizer"] = {
            "step": optimizer_state["step"],
            "learning_rate": optimizer.lr,
            "beta1": optimizer.beta1,
            "beta2": optimizer.beta2,
            "eps": optimizer.eps,
        }

    with zipfile.ZipFile(path, "w") as archive:
        _write_member(archive, HEADER, json.dumps(header, indent=2, sort_keys=True).encode("utf-8"))
        for name, tensor in params.items():
            _write_member(archive, f"parameters/{name}.npy", _encode_array(tensor.data))
        if optimizer_state is not None:
            for moment in ("first_moment", "second_moment"):
                for name, array in optimizer_state[moment].items():
                    _write_member(archive, f"optimizer/{moment}/{name}.npy", _encode_array(array))
    logger.info(f"Saved checkpoint with {len(params)} tensors to {path}")
    return path


def read_header(path: Union[str, Path]) -> Dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"Checkpoint {path} does not exist.")
    try:
        with zipfile.ZipFile(path) as archive:
            header = json.loads(archive.read(HEADER))
    except (zipfile.BadZipFile, KeyError, json.JSONDecodeError) as error:
        raise ConfigError(f"{path} is not a checkpoint: {error}") from error
    if header.get("format") != config.CHECKPOINT_FORMAT:
        raise ConfigError(f"{path} has format {header.get('format')!r}.")
    if header.get("version") != config.CHECKPOINT_VERSION:
        raise ConfigError(
            f"{path} has checkpoint version {header.get('version')}, "
            f"expected {config.CHECKPOINT_VERSION}."
        )
    return header


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    """Method used to rebuild a model, its normalization stats and optimizer state."""
    header = read_header(path)
    cfg = CrossformerConfig(**header["hyperparameters"])
    model = CrossformerModel(cfg)

    with zipfile.ZipFile(path) as archive:
        names = set(archive.namelist())
        state = {}
        for entry in header["parameters"]:
            member = f"parameters/{entry['name']}.npy"
            if member not in names:
                raise ConfigError(f"Checkpoint {path} lacks parameter '{entry['name']}'.")
            state[entry["name"]] = _decode_array(archive.read(member))
        model.load_state_dict(state)

        optimizer_state = None
        if header.get("optimizer"):
            optimizer_state = {"step": header["optimizer"]["step"]}
            for moment in ("first_moment", "second_moment"):
                optimizer_state[moment] = {
                    name: _decode_array(archive.read(f"optimizer/{moment}/{name}.npy"))
                    for name in state
                }

    stats = header.get("norm_stats")
    return Checkpoint(
        model=model,
        norm_stats=None if stats is None else NormStats(**stats),
        optimizer_state=optimizer_state,
        extra=header.get("extra", {}),
    )
