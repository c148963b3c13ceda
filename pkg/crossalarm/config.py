import os

from dotenv import load_dotenv

load_dotenv()

CROSSALARM_SEED = os.getenv("CROSSALARM_SEED")
LOG_LEVEL = os.getenv("CROSSALARM_LOG_LEVEL", "INFO")
DEBUG = os.getenv("CROSSALARM_DEBUG", "0").lower() in ("1", "true", "yes")
DEFAULT_CHANNELS = [
    "hole_depth",
    "bit_depth",
    "block_position",
    "torque",
    "hookload",
    "rotary_speed",
    "standpipe_pressure",
    "mud_flow_in",
    "weight_on_bit",
    "rate_of_penetration",
]
DEFAULT_EXCLUDED_CHANNELS = [
    "hole_depth",
    "bit_depth",
    "block_position",
]
CHECKPOINT_FORMAT = "crossalarm-checkpoint"
CHECKPOINT_VERSION = 1
