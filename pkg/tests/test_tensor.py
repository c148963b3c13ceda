import numpy as np
import pytest

from crossalarm.exceptions import DimensionError, NumericalError, UsageError
from crossalarm.tensor import GradTape, Tensor, functional as F, parameter, set_debug
from crossalarm.tensor.gradcheck import check_gradients, relative_error
from crossalarm.tensor.optim import Adam


def test_matmul_gradient_is_transposed_operand():
    """Test the gradient of sum(A @ B) with respect to A."""
    a = parameter(np.arange(6.0).reshape(2, 3))
    b = parameter(np.arange(12.0).reshape(3, 4))
    with GradTape() as tape:
        loss = F.sum_(F.matmul(a, b))
    tape.backward(loss)
    expected = np.ones((2, 4)) @ b.data.T
    np.testing.assert_allclose(a.grad, expected)
    np.testing.assert_allclose(b.grad, a.data.T @ np.ones((2, 4)))


def test_square_gradient():
    """Test d(x^2)/dx = 2x."""
    x = parameter([3.0])
    with GradTape() as tape:
        loss = F.sum_(x * x)
    tape.backward(loss)
    np.testing.assert_allclose(x.grad, [6.0])


def test_gradients_accumulate_until_zeroed():
    """Test that two backward passes add into the leaf gradient."""
    x = parameter([1.0, 2.0])
    for _ in range(2):
        with GradTape() as tape:
            loss = F.sum_(x * 3.0)
        tape.backward(loss)
    np.testing.assert_allclose(x.grad, [6.0, 6.0])
    x.zero_grad()
    assert x.grad is None


def test_backward_requires_scalar():
    """Test that a non-scalar loss is refused."""
    x = parameter([1.0, 2.0])
    with GradTape() as tape:
        y = x * 2.0
    with pytest.raises(UsageError):
        tape.backward(y)


def test_backward_outside_tape():
    """Test that a loss computed without a tape cannot be differentiated."""
    x = parameter([1.0])
    loss = F.sum_(x * 2.0)
    with pytest.raises(UsageError):
        loss.backward()


def test_broadcast_mismatch_raises():
    """Test the dimension error for incompatible shapes."""
    with pytest.raises(DimensionError):
        F.add(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4,))))
    with pytest.raises(DimensionError):
        F.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))


def test_debug_mode_flags_non_finite():
    """Test NaN detection when debug mode is on."""
    set_debug(True)
    try:
        with pytest.raises(NumericalError):
            F.div(Tensor([0.0]), Tensor([0.0]))
    finally:
        set_debug(False)


def test_softmax_rows_sum_to_one(rng):
    """Test the softmax postcondition on large logits."""
    logits = Tensor(rng.normal(0.0, 50.0, size=(4, 7)))
    weights = F.softmax(logits, axis=-1).numpy()
    np.testing.assert_allclose(weights.sum(axis=-1), 1.0, atol=1e-12)
    assert np.all(weights >= 0)


def test_layer_norm_statistics(rng):
    """Test zero mean and unit variance after layer norm."""
    x = Tensor(rng.normal(3.0, 2.0, size=(5, 16)))
    out = F.layer_norm(x, np.ones(16), np.zeros(16)).numpy()
    np.testing.assert_allclose(out.mean(axis=-1), 0.0, atol=1e-10)
    np.testing.assert_allclose(out.var(axis=-1), 1.0, atol=1e-3)


@pytest.mark.parametrize(
    "op",
    [
        lambda x, w, g: F.sum_(F.softmax(F.matmul(x, w), axis=-1) * g),
        lambda x, w, g: F.sum_(F.layer_norm(F.matmul(x, w), w[0], w[1]) * g),
        lambda x, w, g: F.sum_(F.gelu(F.matmul(x, w)) * g),
        lambda x, w, g: F.sum_(F.relu(F.matmul(x, w)) * g),
        lambda x, w, g: F.mean(F.swapaxes(F.reshape(F.matmul(x, w), (3, 4, 1)), 0, 1) * g.reshape(3, 4, 1).transpose(1, 0, 2)),
        lambda x, w, g: F.sum_(F.concat([F.slice_(F.matmul(x, w), (slice(None), slice(0, 2))), x], axis=1) * 2.0),
        lambda x, w, g: F.mse_loss(F.div(F.matmul(x, w), F.add(F.mul(w, w), 1.0)[0]), g),
    ],
)
def test_gradcheck_primitives(rng, op):
    """Test tape gradients against central differences for composed primitives."""
    x = parameter(rng.normal(size=(3, 4)))
    w = parameter(rng.normal(size=(4, 4)))
    g = rng.normal(size=(3, 4))
    error = check_gradients(lambda: op(x, w, g), [x, w])
    assert error < 1e-6


def test_relative_error_of_identical_vectors():
    """Test the norm-relative error helper."""
    assert relative_error(np.ones(3), np.ones(3)) == 0.0
    assert relative_error(np.zeros(3), np.zeros(3)) == 0.0


def test_dropout_identity_without_generator():
    """Test that dropout is a no-op at inference."""
    x = Tensor(np.ones((2, 3)))
    assert F.dropout(x, 0.5, None) is x


def test_adam_moves_against_gradient():
    """Test one Adam step on a quadratic."""
    x = parameter([1.0, -1.0])
    optimizer = Adam({"x": x}, lr=0.1)
    with GradTape() as tape:
        loss = F.sum_(x * x)
    optimizer.zero_grad()
    tape.backward(loss)
    optimizer.step()
    np.testing.assert_allclose(x.data, [0.9, -0.9], atol=1e-6)
    state = optimizer.state_dict()
    assert state["step"] == 1
