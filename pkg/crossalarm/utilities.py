"""crossalarm - Utilities"""

import json
import os
import sys
from datetime import datetime
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np
from dotenv import dotenv_values
from loguru import logger

from crossalarm import config
from crossalarm.exceptions import ConfigError

LOG_FORMAT = "{time:YYYY-MM-DD HH:mm:ss} | {level} | {message}"
LOG_FILE = "crossalarm.log"
EFFECTIVE_CONFIG = "effective_config.env"


def configure_logging(level: str = config.LOG_LEVEL, log_file: Optional[Union[str, Path]] = None) -> None:
    """
    Method used to reset loguru sinks to stderr and, optionally, a log file.
    """
    logger.remove()
    logger.add(sys.stderr, level=level.upper(), format=LOG_FORMAT)
    if log_file is not None:
        Path(log_file).parent.mkdir(parents=True, exist_ok=True)
        logger.add(str(log_file), level=level.upper(), format=LOG_FORMAT, mode="w")


def parse_overrides(pairs: List[str]) -> Dict[str, str]:
    """Turn `key=value` strings into a mapping; later keys win."""
    overrides = {}
    for pair in pairs or []:
        key, sep, value = pair.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"Override '{pair}' is not of the form key=value.")
        overrides[key.strip()] = value.strip()
    return overrides


def load_config_values(path: Optional[Union[str, Path]], overrides: List[str]) -> Dict[str, str]:
    """
    Method used to merge a flat key=value config file, --set overrides and
    the CROSSALARM_SEED environment variable, in that order of precedence.
    """
    values: Dict[str, str] = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"Config file {path} does not exist.")
        values.update({k: v for k, v in dotenv_values(path).items() if v is not None})
    values.update(parse_overrides(overrides))
    seed = os.getenv("CROSSALARM_SEED", config.CROSSALARM_SEED)
    if seed:
        values["seed"] = seed
    return values


def _format_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, datetime):
        return value.isoformat()
    if isinstance(value, dict):
        return ",".join(f"{k}:{v}" for k, v in value.items())
    if isinstance(value, (list, tuple)):
        return ",".join(str(v) for v in value)
    return str(value)


def write_effective_config(values: Dict[str, object], output_dir: Union[str, Path]) -> Path:
    """Write sorted key=value lines that reproduce the run when fed back with --config."""
    path = Path(output_dir) / EFFECTIVE_CONFIG
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"{key}={_format_value(values[key])}" for key in sorted(values)]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def _json_default(value):
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, datetime):
        return value.isoformat()
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def write_json(data: Dict, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        json.dumps(data, indent=2, sort_keys=True, default=_json_default) + "\n", encoding="utf-8"
    )
    return path


def read_json(path: Union[str, Path]) -> Dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"{path} does not exist; run the earlier command first.")
    return json.loads(path.read_text(encoding="utf-8"))
