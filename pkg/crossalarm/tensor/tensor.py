"""crossalarm - Tensor and gradient tape"""

import threading
from typing import Callable, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from crossalarm import config
from crossalarm.exceptions import NumericalError, UsageError

ArrayLike = Union[np.ndarray, float, int, Sequence]

_local = threading.local()
_debug = {"enabled": config.DEBUG}


def set_debug(enabled: bool) -> None:
    """
    Method used to toggle NaN/Inf detection on every tensor operation.
    """
    _debug["enabled"] = bool(enabled)


def debug_enabled() -> bool:
    return _debug["enabled"]


class Operation(NamedTuple):
    """One recorded operation: inputs, output and the rule mapping dL/d(output) to dL/d(inputs)."""

    name: str
    inputs: Tuple["Tensor", ...]
    output: "Tensor"
    backward: Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]


class GradTape:
    """
    Ordered record of the operations executed while the tape is active.

    Operations are appended as they run, so every operation's inputs are
    recorded before it. A tape is bound to the thread that entered it.
    """

    def __init__(self):
        self.operations: List[Operation] = []

    def __enter__(self) -> "GradTape":
        _stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        stack = _stack()
        if stack and stack[-1] is self:
            stack.pop()

    def __len__(self) -> int:
        return len(self.operations)

    def record(self, operation: Operation) -> None:
        self.operations.append(operation)

    def backward(self, loss: "Tensor") -> None:
        """
        Replay the tape in reverse from a scalar loss.

        Leaf tensors with requires_grad receive their gradient added to
        `grad`; calling backward twice without `zero_grad` accumulates.
        """
        if loss.data.size != 1:
            raise UsageError(
                f"backward needs a scalar loss, got shape {loss.shape}."
            )
        if loss._tape is not self:
            raise UsageError("Loss was not produced on this tape.")

        grads = {id(loss): np.ones_like(loss.data)}
        for operation in reversed(self.operations):
            out_grad = grads.pop(id(operation.output), None)
            if out_grad is None:
                continue
            input_grads = operation.backward(out_grad)
            for tensor, grad in zip(operation.inputs, input_grads):
                if grad is None or not tensor.requires_grad:
                    continue
                if tensor._tape is None:
                    tensor._accumulate(grad)
                elif id(tensor) in grads:
                    grads[id(tensor)] = grads[id(tensor)] + grad
                else:
                    grads[id(tensor)] = grad


def _stack() -> List[GradTape]:
    if not hasattr(_local, "tapes"):
        _local.tapes = []
    return _local.tapes


def current_tape() -> Optional[GradTape]:
    stack = _stack()
    return stack[-1] if stack else None


class Tensor:
    """
    Dense float64 array with optional participation in a gradient tape.

    Storage is a contiguous row-major numpy array owned by the tensor;
    slicing and reshaping produce copies, never views.
    """

    __array_priority__ = 100

    def __init__(self, data: ArrayLike, requires_grad: bool = False):
        self.data = np.array(data, dtype=np.float64, copy=True, order="C")
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self._tape: Optional[GradTape] = None

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self._tape is None

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        if self.data.size != 1:
            raise UsageError(f"item() needs a single element, got shape {self.shape}.")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def backward(self) -> None:
        backward(self)

    def _accumulate(self, grad: np.ndarray) -> None:
        if grad.shape != self.data.shape:
            grad = np.broadcast_to(grad, self.data.shape)
        if self.grad is None:
            self.grad = np.array(grad, dtype=np.float64, copy=True)
        else:
            self.grad = self.grad + grad

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def __add__(self, other):
        return functional.add(self, other)

    def __radd__(self, other):
        return functional.add(other, self)

    def __sub__(self, other):
        return functional.sub(self, other)

    def __rsub__(self, other):
        return functional.sub(other, self)

    def __mul__(self, other):
        return functional.mul(self, other)

    def __rmul__(self, other):
        return functional.mul(other, self)

    def __truediv__(self, other):
        return functional.div(self, other)

    def __neg__(self):
        return functional.neg(self)

    def __matmul__(self, other):
        return functional.matmul(self, other)

    def __getitem__(self, index):
        return functional.slice_(self, index)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return functional.reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return functional.transpose(self, axes or None)

    def sum(self, axis=None, keepdims: bool = False):
        return functional.sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return functional.mean(self, axis=axis, keepdims=keepdims)


def as_tensor(value: Union["Tensor", ArrayLike]) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def parameter(data: ArrayLike) -> Tensor:
    """Leaf tensor that takes part in gradient computation."""
    return Tensor(data, requires_grad=True)


def record(
    name: str,
    data: np.ndarray,
    inputs: Sequence[Tensor],
    backward_rule: Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]],
) -> Tensor:
    """
    Wrap an op result and append it to the active tape when any input needs gradients.
    """
    if _debug["enabled"] and not np.all(np.isfinite(data)):
        raise NumericalError(f"Non-finite values produced by {name}.")

    out = Tensor.__new__(Tensor)
    out.data = np.ascontiguousarray(data, dtype=np.float64)
    out.grad = None
    out._tape = None
    out.requires_grad = False

    tape = current_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out._tape = tape
        tape.record(Operation(name, tuple(inputs), out, backward_rule))
    return out


def backward(loss: Tensor) -> None:
    """
    Populate `grad` on every requires_grad leaf reachable from a scalar loss.
    """
    if loss.data.size != 1:
        raise UsageError(f"backward needs a scalar loss, got shape {loss.shape}.")
    if loss._tape is None:
        raise UsageError(
            "Loss is not attached to a gradient tape; compute it inside `with GradTape():`."
        )
    loss._tape.backward(loss)


from crossalarm.tensor import functional  # noqa: E402
