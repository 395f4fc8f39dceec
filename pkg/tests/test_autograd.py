import numpy as np
import pytest

from quakeloc.tensor import Parameter, Tensor, concat, no_grad
from quakeloc.tensor.autograd import _unbroadcast

from _gradcheck import check_gradients, probe


def t64(rng, *shape):
    return Tensor(rng.standard_normal(shape), requires_grad=True, dtype=np.float64)


def test_linear_grad_equals_input():
    x = np.array([1.0, -2.0, 3.5])
    w = Tensor(np.zeros(3), requires_grad=True, dtype=np.float64)
    (w * x).sum().backward()
    assert np.array_equal(w.grad, x)


@pytest.mark.parametrize(
    "op",
    [
        lambda a, b: a + b,
        lambda a, b: a - b,
        lambda a, b: a * b,
        lambda a, b: a @ b.transpose(1, 0),
        lambda a, b: (a * 3.0 - b / 2.0).mean(axis=0),
        lambda a, b: concat([a, b], axis=1).reshape(-1),
        lambda a, b: (a * b).sum(axis=1, keepdims=True) + a,
        lambda a, b: 1.0 - a,
    ],
)
def test_elementwise_and_matmul_gradients(op, rng):
    a, b = t64(rng, 4, 3), t64(rng, 4, 3)
    out_shape = op(a, b).shape
    r = probe(out_shape, rng)
    err = check_gradients(lambda: (op(a, b) * r).sum(), [a, b], rng)
    assert err < 1e-6


def test_broadcast_gradient_reduces(rng):
    a, bias = t64(rng, 5, 3), t64(rng, 3)
    (a + bias).sum().backward()
    assert np.allclose(bias.grad, 5.0)
    assert _unbroadcast(np.ones((2, 4, 3)), (1, 3)).tolist() == [[8.0, 8.0, 8.0]]


def test_gradients_accumulate_over_shared_nodes(rng):
    x = t64(rng, 3)
    y = x * x + x  # x used three times
    y.sum().backward()
    assert np.allclose(x.grad, 2 * x.data + 1)


def test_no_grad_records_nothing(rng):
    x = t64(rng, 3)
    with no_grad():
        y = x * 2.0
    assert not y.requires_grad
    with pytest.raises(RuntimeError):
        y.sum().backward()


def test_parameter_trainable_flag():
    p = Parameter(np.ones(2), name="w")
    assert p.requires_grad and p.trainable
    p.trainable = False
    assert not p.requires_grad
    out = (p * 2.0).sum()
    assert not out.requires_grad
