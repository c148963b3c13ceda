"""crossalarm - Finite-difference gradient checks"""

from typing import Callable, Dict, Optional, Sequence

import numpy as np

from crossalarm.tensor.tensor import GradTape, Tensor


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """
    Norm-relative difference ||a - n|| / max(||a|| + ||n||, tiny).
    """
    analytic = np.asarray(analytic, dtype=np.float64).reshape(-1)
    numeric = np.asarray(numeric, dtype=np.float64).reshape(-1)
    scale = np.linalg.norm(analytic) + np.linalg.norm(numeric)
    if scale < 1e-300:
        return 0.0
    return float(np.linalg.norm(analytic - numeric) / scale)


def numerical_gradient(
    loss_fn: Callable[[], Tensor],
    tensor: Tensor,
    step: float = 1e-5,
    indices: Optional[Sequence[int]] = None,
) -> np.ndarray:
    """
    Central differences of a scalar loss with respect to the flat entries of tensor.

    Only the flat positions in `indices` are probed when given.
    """
    flat = tensor.data.reshape(-1)
    positions = range(flat.size) if indices is None else indices
    grads = np.zeros(len(positions), dtype=np.float64)
    for slot, position in enumerate(positions):
        original = flat[position]
        flat[position] = original + step
        upper = loss_fn().item()
        flat[position] = original - step
        lower = loss_fn().item()
        flat[position] = original
        grads[slot] = (upper - lower) / (2.0 * step)
    return grads


def analytic_gradients(loss_fn: Callable[[], Tensor], tensors: Sequence[Tensor]) -> Dict[int, np.ndarray]:
    for tensor in tensors:
        tensor.zero_grad()
    with GradTape() as tape:
        loss = loss_fn()
    tape.backward(loss)
    return {
        id(tensor): (tensor.grad if tensor.grad is not None else np.zeros_like(tensor.data))
        for tensor in tensors
    }


def check_gradients(
    loss_fn: Callable[[], Tensor],
    tensors: Sequence[Tensor],
    step: float = 1e-5,
    samples_per_tensor: Optional[int] = None,
    seed: int = 0,
) -> float:
    """
    Method used to compare tape gradients with central finite differences.

    Returns the norm-relative error over every probed entry. When
    `samples_per_tensor` is set, that many random entries of each tensor are
    probed instead of all of them.
    """
    rng = np.random.default_rng(seed)
    analytic = analytic_gradients(loss_fn, tensors)
    analytic_parts = []
    numeric_parts = []
    for tensor in tensors:
        size = tensor.data.size
        if samples_per_tensor is None or samples_per_tensor >= size:
            indices = list(range(size))
        else:
            indices = sorted(rng.choice(size, size=samples_per_tensor, replace=False).tolist())
        analytic_parts.append(analytic[id(tensor)].reshape(-1)[indices])
        numeric_parts.append(numerical_gradient(loss_fn, tensor, step, indices))
    return relative_error(np.concatenate(analytic_parts), np.concatenate(numeric_parts))
