"""crossalarm - Optimizers"""

from typing import Dict, Optional

import numpy as np

from crossalarm.tensor.tensor import Tensor


class Adam:
    """
    Adaptive moment estimation over a fixed, ordered list of named parameters.
    """

    def __init__(
        self,
        parameters: Dict[str, Tensor],
        lr: float = 1e-4,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.parameters = parameters
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.first_moment = {name: np.zeros_like(p.data) for name, p in parameters.items()}
        self.second_moment = {name: np.zeros_like(p.data) for name, p in parameters.items()}

    def zero_grad(self) -> None:
        for param in self.parameters.values():
            param.zero_grad()

    def step(self) -> None:
        self.step_count += 1
        correction1 = 1.0 - self.beta1**self.step_count
        correction2 = 1.0 - self.beta2**self.step_count
        for name, param in self.parameters.items():
            if param.grad is None:
                continue
            m = self.first_moment[name]
            v = self.second_moment[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * param.grad
            v *= self.beta2
            v += (1.0 - self.beta2) * param.grad * param.grad
            update = (m / correction1) / (np.sqrt(v / correction2) + self.eps)
            param.data -= self.lr * update

    def state_dict(self) -> Dict[str, object]:
        return {
            "step": self.step_count,
            "first_moment": {k: v.copy() for k, v in self.first_moment.items()},
            "second_moment": {k: v.copy() for k, v in self.second_moment.items()},
        }

    def load_state_dict(self, state: Optional[Dict[str, object]]) -> None:
        if not state:
            return
        self.step_count = int(state["step"])
        for name in self.parameters:
            self.first_moment[name] = np.array(state["first_moment"][name], dtype=np.float64)
            self.second_moment[name] = np.array(state["second_moment"][name], dtype=np.float64)
