"""crossalarm - Parameterized building blocks"""

from typing import Dict, List, Optional

import numpy as np

from crossalarm.exceptions import ConfigError, DimensionError
from crossalarm.tensor import Tensor, functional as F, parameter


def xavier_uniform(rng: np.random.Generator, fan_out: int, fan_in: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_out, fan_in))


class Module:
    """
    Base class for anything owning parameters.

    Parameters are discovered from attributes: tensors with requires_grad,
    child modules and lists of child modules, named by attribute path.
    """

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def named_parameters(self, prefix: str = "") -> Dict[str, Tensor]:
        params: Dict[str, Tensor] = {}
        for name, value in vars(self).items():
            path = f"{prefix}{name}"
            if isinstance(value, Tensor) and value.requires_grad:
                params[path] = value
            elif isinstance(value, Module):
                params.update(value.named_parameters(f"{path}."))
            elif isinstance(value, list):
                for position, item in enumerate(value):
                    if isinstance(item, Module):
                        params.update(item.named_parameters(f"{path}.{position}."))
        return params

    def parameters(self) -> List[Tensor]:
        return list(self.named_parameters().values())

    def children(self) -> List["Module"]:
        found = []
        for value in vars(self).values():
            if isinstance(value, Module):
                found.append(value)
            elif isinstance(value, list):
                found.extend(item for item in value if isinstance(item, Module))
        return found

    def zero_grad(self) -> None:
        for tensor in self.parameters():
            tensor.zero_grad()

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: tensor.numpy() for name, tensor in self.named_parameters().items()}

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        """Copy arrays into the existing parameters in place."""
        params = self.named_parameters()
        missing = sorted(set(params) - set(state))
        unexpected = sorted(set(state) - set(params))
        if missing or unexpected:
            raise ConfigError(
                f"Parameter names differ; missing {missing}, unexpected {unexpected}."
            )
        for name, tensor in params.items():
            array = np.asarray(state[name], dtype=np.float64)
            if array.shape != tensor.shape:
                raise DimensionError(
                    f"Parameter '{name}' has shape {tensor.shape}, stored array has {array.shape}."
                )
            tensor.data[...] = array

    def set_rng(self, rng: Optional[np.random.Generator]) -> None:
        """Enable dropout with the given generator, or disable it with None."""
        for child in self.children():
            child.set_rng(rng)


class Dropout(Module):
    def __init__(self, p: float = 0.0):
        self.p = p
        self.rng: Optional[np.random.Generator] = None

    def forward(self, x: Tensor) -> Tensor:
        return F.dropout(x, self.p, self.rng)

    def set_rng(self, rng: Optional[np.random.Generator]) -> None:
        self.rng = rng


class Linear(Module):
    """Affine map y = x W^T + b with W stored as (out_features, in_features)."""

    def __init__(
        self, in_features: int, out_features: int, rng: np.random.Generator, bias: bool = True
    ):
        self.in_features = in_features
        self.out_features = out_features
        self.weight = parameter(xavier_uniform(rng, out_features, in_features))
        self.bias = parameter(np.zeros(out_features)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.in_features:
            raise DimensionError(
                f"Linear expects last axis {self.in_features}, got shape {x.shape}."
            )
        out = F.matmul(x, F.transpose(self.weight))
        if self.bias is not None:
            out = out + self.bias
        return out


class LayerNorm(Module):
    def __init__(self, features: int):
        self.gain = parameter(np.ones(features))
        self.bias = parameter(np.zeros(features))

    def forward(self, x: Tensor) -> Tensor:
        return F.layer_norm(x, self.gain, self.bias, axis=-1)


class MLP(Module):
    """Two linear layers with GELU in between."""

    def __init__(self, features: int, hidden: int, rng: np.random.Generator):
        self.fc1 = Linear(features, hidden, rng)
        self.fc2 = Linear(hidden, features, rng)

    def forward(self, x: Tensor) -> Tensor:
        return self.fc2(F.gelu(self.fc1(x)))
