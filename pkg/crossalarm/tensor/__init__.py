"""crossalarm - Tensor library with reverse-mode automatic differentiation"""

from crossalarm.tensor.tensor import (
    GradTape,
    Operation,
    Tensor,
    as_tensor,
    backward,
    current_tape,
    debug_enabled,
    parameter,
    set_debug,
)
from crossalarm.tensor import functional

__all__ = [
    "GradTape",
    "Operation",
    "Tensor",
    "as_tensor",
    "backward",
    "current_tape",
    "debug_enabled",
    "functional",
    "parameter",
    "set_debug",
]
