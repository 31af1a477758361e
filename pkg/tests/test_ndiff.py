import numpy as np
import pytest

from icubench import ndiff as nd
from icubench.ndiff import Tape, Tensor, gradcheck, precision


def _param(rng, shape, name, positive=False):
    x = rng.normal(size=shape)
    if positive:
        x = np.abs(x) + 0.5
    return Tensor(x, requires_grad=True, name=name)


CASES = {
    "add": (lambda a, b: nd.add(a, b), [(3, 4), (4,)]),
    "sub": (lambda a, b: nd.sub(a, b), [(2, 3, 4), (3, 1)]),
    "mul": (lambda a, b: nd.mul(a, b), [(3, 4), (1, 4)]),
    "neg": (lambda a: nd.neg(a), [(5,)]),
    "matmul_2d": (lambda a, b: nd.matmul(a, b), [(3, 4), (4, 2)]),
    "matmul_3d": (lambda a, b: nd.matmul(a, b), [(2, 3, 4), (4, 5)]),
    "sigmoid": (lambda a: nd.sigmoid(a), [(3, 4)]),
    "tanh": (lambda a: nd.tanh(a), [(3, 4)]),
    "relu": (lambda a: nd.relu(a), [(4, 5)]),
    "softmax": (lambda a: nd.softmax(a), [(3, 6)]),
    "square": (lambda a: nd.square(a), [(2, 3)]),
    "concat": (lambda a, b: nd.concat([a, b]), [(2, 3, 2), (2, 3, 4)]),
    "stack": (lambda a, b: nd.stack([a, b]), [(3, 2), (3, 2)]),
    "slice_time": (lambda a: nd.slice_time(a, 1), [(3, 2, 2)]),
    "reverse_time": (lambda a: nd.reverse_time(a, [3, 1]), [(3, 2, 2)]),
    "sum_axis": (lambda a: nd.sum(a, axis=1), [(3, 4)]),
    "mean": (lambda a: nd.mean(a, axis=0), [(3, 4)]),
    "dropout": (lambda a: nd.dropout(a, 0.4, 3), [(4, 4)]),
}


@pytest.mark.parametrize("name", sorted(CASES))
def test_primitive_gradients(name):
    fn, shapes = CASES[name]
    rng = np.random.default_rng(sorted(CASES).index(name))
    with precision(np.float64):
        params = [_param(rng, s, f"p{i}") for i, s in enumerate(shapes)]
        # random projection so every output entry reaches the scalar
        w = Tensor(np.random.default_rng(99).normal(size=fn(*params).shape))
        errors = gradcheck(lambda: nd.sum(nd.mul(fn(*params), w)), params)
    assert max(errors.values()) < 1e-6, errors


def test_log_and_clip_gradients():
    rng = np.random.default_rng(5)
    with precision(np.float64):
        x = _param(rng, (3, 3), "x", positive=True)
        w = Tensor(rng.normal(size=(3, 3)))
        err = gradcheck(lambda: nd.sum(nd.mul(nd.log(x), w)), [x])
        assert err["x"] < 1e-6
        # keep entries away from the clip edges where the derivative jumps
        y = Tensor(np.array([0.1, 0.5, 2.0, -3.0]), requires_grad=True, name="y")
        err = gradcheck(lambda: nd.sum(nd.mul(nd.clip(y, -1.0, 1.0), Tensor([1.0, 2.0, 3.0, 4.0]))), [y])
        assert err["y"] < 1e-6
        assert np.allclose(y.grad, [1.0, 2.0, 0.0, 0.0])


def test_sigmoid_at_zero():
    with precision(np.float64):
        x = Tensor(0.0, requires_grad=True)
        with Tape() as tape:
            y = nd.sigmoid(x)
        tape.backward(y)
    assert y.item() == 0.5
    assert x.grad == pytest.approx(0.25, abs=1e-15)


def test_softmax_uniform_rows():
    s = nd.softmax(Tensor(np.zeros((2, 3)))).data
    assert np.allclose(s, 1 / 3)
    z = nd.softmax(Tensor(np.random.default_rng(0).normal(size=(5, 7)) * 30)).data
    assert np.allclose(z.sum(axis=1), 1.0)


def test_linear_gradient_structure():
    with precision(np.float64):
        W = Tensor(np.ones((2, 3)), requires_grad=True)
        x = Tensor([[1.0, 2.0], [3.0, 4.0]])
        with Tape() as tape:
            loss = nd.sum(x @ W)
        tape.backward(loss)
    # d/dW sum(x W) = column sums of x broadcast over W's columns
    assert np.array_equal(W.grad, np.array([[4.0] * 3, [6.0] * 3]))


def test_disconnected_parameter_gets_zero():
    a = Tensor([1.0, 2.0], requires_grad=True)
    b = Tensor([3.0], requires_grad=True)
    with Tape() as tape:
        loss = nd.sum(nd.square(a))
    tape.backward(loss, [a, b])
    assert np.array_equal(b.grad, [0.0])


def test_backward_twice_is_an_error():
    a = Tensor([1.0], requires_grad=True)
    with Tape() as tape:
        loss = nd.sum(nd.mul(a, 2.0))
    tape.backward(loss)
    with pytest.raises(RuntimeError):
        tape.backward(loss)


def test_backward_needs_scalar():
    a = Tensor([1.0, 2.0], requires_grad=True)
    with Tape() as tape:
        out = nd.mul(a, 2.0)
    with pytest.raises(nd.ShapeError):
        tape.backward(out)


def test_shared_subexpression_accumulates():
    with precision(np.float64):
        a = Tensor(3.0, requires_grad=True)
        with Tape() as tape:
            y = nd.mul(a, a)
            loss = nd.add(y, y)
        tape.backward(loss)
    assert a.grad == pytest.approx(12.0)


def test_incompatible_shapes():
    with pytest.raises(nd.ShapeError):
        nd.add(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4,))))
    with pytest.raises(nd.ShapeError):
        nd.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))
    with pytest.raises(nd.ShapeError):
        nd.concat([Tensor(np.zeros((2, 3))), Tensor(np.zeros((3, 3)))])


def test_default_dtype_is_single_precision():
    assert Tensor([1, 2]).data.dtype == np.float32
    with precision(np.float64):
        assert Tensor([1, 2]).data.dtype == np.float64
    assert Tensor([1, 2]).data.dtype == np.float32


def test_no_recording_outside_tape():
    a = Tensor([1.0], requires_grad=True)
    out = nd.mul(a, 2.0)
    assert not out.requires_grad


def test_dropout_modes():
    x = Tensor(np.ones((100, 100)))
    assert nd.dropout(x, 0.5, 0, train=False) is x
    y = nd.dropout(x, 0.5, 0).data
    assert set(np.unique(y)) <= {0.0, 2.0}
    assert abs(y.mean() - 1.0) < 0.05
    assert np.array_equal(nd.dropout(x, 0.5, 0).data, y)
    with pytest.raises(ValueError):
        nd.dropout(x, 1.5, 0)


def test_reverse_time_respects_lengths():
    x = Tensor(np.arange(8, dtype=float).reshape(4, 2, 1))
    out = nd.reverse_time(x, [4, 2]).data[..., 0]
    assert out[:, 0].tolist() == [6, 4, 2, 0]
    assert out[:, 1].tolist() == [3, 1, 5, 7]


def test_directional_gradcheck_agrees():
    rng = np.random.default_rng(2)
    with precision(np.float64):
        A = _param(rng, (4, 3), "A")
        x = Tensor(rng.normal(size=(5, 4)))
        fn = lambda: nd.sum(nd.tanh(x @ A))  # noqa: E731
        assert gradcheck(fn, [A], directional=True)["A"] < 1e-6
