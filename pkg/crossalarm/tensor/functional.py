"""crossalarm - Differentiable operations"""

import math
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from crossalarm.exceptions import DimensionError
from crossalarm.tensor.tensor import Tensor, as_tensor, record

_GELU_K = math.sqrt(2.0 / math.pi)


def unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """
    Sum out broadcast dimensions so that grad matches shape.
    """
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError as error:
        raise DimensionError(
            f"{op}: shapes {a.shape} and {b.shape} are not broadcast-compatible."
        ) from error


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "add")

    def rule(g):
        return unbroadcast(g, a.shape), unbroadcast(g, b.shape)

    return record("add", a.data + b.data, (a, b), rule)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "sub")

    def rule(g):
        return unbroadcast(g, a.shape), unbroadcast(-g, b.shape)

    return record("sub", a.data - b.data, (a, b), rule)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "mul")

    def rule(g):
        return unbroadcast(g * b.data, a.shape), unbroadcast(g * a.data, b.shape)

    return record("mul", a.data * b.data, (a, b), rule)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "div")

    def rule(g):
        return (
            unbroadcast(g / b.data, a.shape),
            unbroadcast(-g * a.data / (b.data * b.data), b.shape),
        )

    return record("div", a.data / b.data, (a, b), rule)


def neg(a) -> Tensor:
    a = as_tensor(a)
    return record("neg", -a.data, (a,), lambda g: (-g,))


def matmul(a, b) -> Tensor:
    """
    Matrix product over the last two axes; leading axes broadcast.
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(
            f"matmul needs at least 2-D operands, got {a.shape} and {b.shape}."
        )
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(
            f"matmul inner extents differ: {a.shape} x {b.shape}."
        )
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError as error:
        raise DimensionError(
            f"matmul batch extents differ: {a.shape} x {b.shape}."
        ) from error

    def rule(g):
        grad_a = np.matmul(g, np.swapaxes(b.data, -1, -2))
        grad_b = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return unbroadcast(grad_a, a.shape), unbroadcast(grad_b, b.shape)

    return record("matmul", np.matmul(a.data, b.data), (a, b), rule)


def sum_(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)

    def rule(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return record("sum", a.data.sum(axis=axis, keepdims=keepdims), (a,), rule)


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    if axis is None:
        count = a.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        count = int(np.prod([a.shape[ax] for ax in axes]))

    def rule(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / count, a.shape).copy(),)

    return record("mean", a.data.mean(axis=axis, keepdims=keepdims), (a,), rule)


def reshape(a, shape: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    try:
        out = a.data.reshape(shape)
    except ValueError as error:
        raise DimensionError(f"Cannot reshape {a.shape} into {tuple(shape)}.") from error
    return record("reshape", out.copy(), (a,), lambda g: (g.reshape(a.shape),))


def transpose(a, axes: Optional[Sequence[int]] = None) -> Tensor:
    a = as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    if sorted(ax % a.ndim for ax in axes) != list(range(a.ndim)):
        raise DimensionError(f"Invalid permutation {tuple(axes)} for shape {a.shape}.")
    inverse = np.argsort([ax % a.ndim for ax in axes])
    return record(
        "transpose",
        np.transpose(a.data, axes).copy(),
        (a,),
        lambda g: (np.transpose(g, inverse),),
    )


def swapaxes(a, axis1: int, axis2: int) -> Tensor:
    a = as_tensor(a)
    axes = list(range(a.ndim))
    axes[axis1], axes[axis2] = axes[axis2], axes[axis1]
    return transpose(a, axes)


def slice_(a, index) -> Tensor:
    """
    Copying slice; backward scatters the gradient into a zero buffer.
    """
    a = as_tensor(a)
    try:
        out = np.array(a.data[index], dtype=np.float64)
    except IndexError as error:
        raise DimensionError(f"Index {index!r} out of range for shape {a.shape}.") from error

    def rule(g):
        grad = np.zeros_like(a.data)
        if _is_basic(index):
            grad[index] += g
        else:
            np.add.at(grad, index, g)
        return (grad,)

    return record("slice", out, (a,), rule)


def _is_basic(index) -> bool:
    parts = index if isinstance(index, tuple) else (index,)
    return all(
        isinstance(part, (int, np.integer, slice)) or part is Ellipsis or part is None
        for part in parts
    )


def concat(tensors: Sequence[Union[Tensor, np.ndarray]], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise DimensionError("concat needs at least one tensor.")
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as error:
        shapes = [t.shape for t in tensors]
        raise DimensionError(f"concat along axis {axis} failed for shapes {shapes}.") from error
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def rule(g):
        return tuple(np.split(g, bounds, axis=axis))

    return record("concat", out, tensors, rule)


def softmax(x, axis: int = -1) -> Tensor:
    """
    Softmax with max subtraction; every slice along axis sums to one.
    """
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    exp = np.exp(shifted)
    y = exp / exp.sum(axis=axis, keepdims=True)

    def rule(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return record("softmax", y, (x,), rule)


def layer_norm(x, gain, bias, axis: int = -1, eps: float = 1e-5) -> Tensor:
    """
    Normalize each slice along axis to zero mean and unit population variance,
    then apply gain and bias.
    """
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    axis = axis % x.ndim
    extent = x.shape[axis]
    if gain.shape != (extent,) or bias.shape != (extent,):
        raise DimensionError(
            f"layer_norm gain/bias must have shape ({extent},), got {gain.shape} and {bias.shape}."
        )
    view = [1] * x.ndim
    view[axis] = extent
    gain_b = gain.data.reshape(view)
    bias_b = bias.data.reshape(view)
    reduce_axes = tuple(ax for ax in range(x.ndim) if ax != axis)

    mu = x.data.mean(axis=axis, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=axis, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std
    out = xhat * gain_b + bias_b

    def rule(g):
        dxhat = g * gain_b
        grad_x = inv_std * (
            dxhat
            - dxhat.mean(axis=axis, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=axis, keepdims=True)
        )
        grad_gain = (g * xhat).sum(axis=reduce_axes).reshape(extent)
        grad_bias = g.sum(axis=reduce_axes).reshape(extent)
        return grad_x, grad_gain, grad_bias

    return record("layer_norm", out, (x, gain, bias), rule)


def gelu(x) -> Tensor:
    """Tanh approximation of the Gaussian error linear unit."""
    x = as_tensor(x)
    inner = _GELU_K * (x.data + 0.044715 * x.data**3)
    t = np.tanh(inner)
    out = 0.5 * x.data * (1.0 + t)

    def rule(g):
        d_inner = _GELU_K * (1.0 + 3 * 0.044715 * x.data**2)
        local = 0.5 * (1.0 + t) + 0.5 * x.data * (1.0 - t * t) * d_inner
        return (g * local,)

    return record("gelu", out, (x,), rule)


def relu(x) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0
    return record("relu", x.data * mask, (x,), lambda g: (g * mask,))


def dropout(x, p: float, rng: Optional[np.random.Generator]) -> Tensor:
    """Inverted dropout; identity when p == 0 or no generator is given."""
    x = as_tensor(x)
    if p <= 0.0 or rng is None:
        return x
    keep = (rng.random(x.shape) >= p) / (1.0 - p)
    return record("dropout", x.data * keep, (x,), lambda g: (g * keep,))


def mse_loss(prediction, target) -> Tensor:
    """Mean squared error over every element."""
    diff = sub(prediction, target)
    return mean(mul(diff, diff))
