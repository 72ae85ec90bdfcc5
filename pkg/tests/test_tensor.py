import math
import zlib

import numpy as np
import pytest
import scipy.sparse as sp

from floorgnn import tensor as T
from floorgnn.errors import BadIndexError, NotScalarError, ShapeError, TapeConsumedError
from floorgnn.tensor import Tape, Tensor

from conftest import numeric_grad, rel_err


def _away_from_zero(rng, shape):
    x = rng.normal(size=shape)
    return np.sign(x) * (0.1 + np.abs(x))


def _dims(rng, k):
    return [int(d) for d in rng.integers(1, 7, size=k)]


def _case(rng, name):
    """(inputs, fn) for one random instance of a primitive."""
    if name == "matmul":
        m, k, n = _dims(rng, 3)
        return [rng.normal(size=(m, k)), rng.normal(size=(k, n))], lambda a, b: T.matmul(a, b)
    if name == "add":
        m, n = _dims(rng, 2)
        return [rng.normal(size=(m, n)), rng.normal(size=(m, n))], T.add
    if name == "sub_broadcast":
        m, n = _dims(rng, 2)
        return [rng.normal(size=(m, n)), rng.normal(size=(1, n))], T.sub
    if name == "mul_broadcast":
        m, n = _dims(rng, 2)
        return [rng.normal(size=(m, n)), rng.normal(size=(m, 1))], T.mul
    if name == "div":
        m, n = _dims(rng, 2)
        return [rng.normal(size=(m, n)), 0.5 + rng.random((m, n))], T.div
    if name == "bias_add":
        m, n = _dims(rng, 2)
        return [rng.normal(size=(m, n)), rng.normal(size=n)], T.bias_add
    if name == "scale":
        m, n = _dims(rng, 2)
        c = rng.normal()
        return [rng.normal(size=(m, n))], lambda x: T.scale(x, c)
    if name == "relu":
        return [_away_from_zero(rng, _dims(rng, 2))], T.relu
    if name == "leaky_relu":
        return [_away_from_zero(rng, _dims(rng, 2))], lambda x: T.leaky_relu(x, 0.2)
    if name == "exp":
        return [rng.normal(size=_dims(rng, 2))], T.exp
    if name == "log":
        return [0.2 + rng.random(_dims(rng, 2))], T.log
    if name == "concat":
        m, a, b = _dims(rng, 3)
        return [rng.normal(size=(m, a)), rng.normal(size=(m, b))], lambda x, y: T.concat([x, y])
    if name == "reshape":
        m, n = _dims(rng, 2)
        return [rng.normal(size=(m, n))], lambda x: T.reshape(x, (n, m))
    if name == "gather":
        m, n, k = _dims(rng, 3)
        idx = rng.integers(0, m, size=k)
        return [rng.normal(size=(m, n))], lambda x: T.gather(x, idx)
    if name in ("segment_sum", "segment_mean"):
        m, n, s = _dims(rng, 3)
        seg = rng.integers(0, s, size=m)
        op = getattr(T, name)
        return [rng.normal(size=(m, n))], lambda x: op(x, seg, s)
    if name == "segment_softmax":
        m, s = _dims(rng, 2)
        seg = rng.integers(0, s, size=m)
        return [rng.normal(size=(m, 1))], lambda x: T.segment_softmax(x, seg, s)
    if name == "sparse_matmul":
        m, n, k = _dims(rng, 3)
        A = sp.random(m, n, density=0.5, random_state=int(rng.integers(1 << 30)), format="csr")
        return [rng.normal(size=(n, k))], lambda x: T.sparse_matmul(A, x)
    if name == "sum":
        return [rng.normal(size=_dims(rng, 2))], T.sum
    if name == "mean":
        return [rng.normal(size=_dims(rng, 2))], T.mean
    if name == "softmax_cross_entropy":
        n, c = _dims(rng, 2)
        labels = rng.integers(0, c, size=n)
        return [rng.normal(size=(n, c))], lambda x: T.softmax_cross_entropy(x, labels)
    raise KeyError(name)


PRIMITIVES = [
    "matmul", "add", "sub_broadcast", "mul_broadcast", "div", "bias_add", "scale", "relu",
    "leaky_relu", "exp", "log", "concat", "reshape", "gather", "segment_sum", "segment_mean",
    "segment_softmax", "sparse_matmul", "sum", "mean", "softmax_cross_entropy",
]


@pytest.mark.parametrize("name", PRIMITIVES)
def test_primitive_matches_finite_differences(name):
    rng = np.random.default_rng(zlib.crc32(name.encode()))
    for _ in range(100):
        arrays, fn = _case(rng, name)
        out_shape = fn(*[Tensor(a) for a in arrays]).shape
        proj = rng.normal(size=out_shape)

        def scalar():
            return float((fn(*[Tensor(a) for a in arrays]).data * proj).sum())

        inputs = [Tensor(a, requires_grad=True) for a in arrays]
        with Tape() as tape:
            loss = T.sum(T.mul(fn(*inputs), proj))
        grads = tape.backward(loss, inputs)
        for a, g in zip(arrays, grads):
            assert rel_err(g, numeric_grad(scalar, a)) < 1e-4, name


def test_segment_mean_values():
    assert T.segment_mean(Tensor([[1.0], [3.0]]), [0, 0], 1).data.tolist() == [[2.0]]
    out = T.segment_mean(Tensor([[1.0, 2.0]]), [0], 2).data
    assert out[1].tolist() == [0.0, 0.0]


def test_segment_mean_gradient_is_one_over_count():
    x = Tensor(np.ones((5, 2)), requires_grad=True)
    with Tape() as tape:
        loss = T.sum(T.segment_mean(x, [0, 0, 1, 1, 1], 3))
    (g,) = tape.backward(loss, [x])
    np.testing.assert_allclose(g[:, 0], [1 / 2, 1 / 2, 1 / 3, 1 / 3, 1 / 3])


def test_segment_bad_index():
    with pytest.raises(BadIndexError):
        T.segment_sum(Tensor(np.ones((2, 1))), [0, 3], 2)
    with pytest.raises(BadIndexError):
        T.gather(Tensor(np.ones((2, 1))), [2])


def test_cross_entropy_uniform_is_log_classes():
    loss = T.softmax_cross_entropy(Tensor(np.zeros((4, 8))), [0, 3, 5, 7])
    assert abs(loss.item() - math.log(8)) < 1e-12


def test_cross_entropy_saturated():
    logits = np.zeros((1, 8))
    logits[0, 2] = 1000.0
    assert T.softmax_cross_entropy(Tensor(logits), [2]).item() < 1e-6


def test_cross_entropy_gradient_closed_form(rng):
    logits = rng.normal(size=(5, 8))
    labels = rng.integers(0, 8, size=5)
    x = Tensor(logits, requires_grad=True)
    with Tape() as tape:
        loss = T.softmax_cross_entropy(x, labels)
    (g,) = tape.backward(loss, [x])
    soft = np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True)
    expected = (soft - np.eye(8)[labels]) / 5
    np.testing.assert_allclose(g, expected, atol=1e-15)


def test_cross_entropy_shift_invariance(rng):
    for _ in range(50):
        logits = rng.normal(size=(4, 8))
        labels = rng.integers(0, 8, size=4)
        shifted = logits + rng.normal(size=(4, 1)) * 10
        a = T.softmax_cross_entropy(Tensor(logits), labels).item()
        b = T.softmax_cross_entropy(Tensor(shifted), labels).item()
        assert abs(a - b) < 1e-9


def test_cross_entropy_bad_label():
    with pytest.raises(BadIndexError):
        T.softmax_cross_entropy(Tensor(np.zeros((2, 8))), [0, 8])


def test_relu_gate():
    x = Tensor([1.0, -2.0], requires_grad=True)
    with Tape() as tape:
        loss = T.sum(T.relu(x))
    assert tape.backward(loss, [x])[0].tolist() == [1.0, 0.0]


def test_matmul_chain_finite_differences(rng):
    a, b, c = rng.normal(size=(3, 4)), rng.normal(size=(4, 2)), rng.normal(size=(2, 3))
    ts = [Tensor(v, requires_grad=True) for v in (a, b, c)]
    with Tape() as tape:
        loss = T.sum(T.matmul(T.matmul(ts[0], ts[1]), ts[2]))
    grads = tape.backward(loss, ts)

    def f():
        return float((a @ b @ c).sum())

    for arr, g in zip((a, b, c), grads):
        assert rel_err(g, numeric_grad(f, arr, h=1e-5)) < 1e-4


def test_unused_parameter_gets_zero_gradient():
    x = Tensor([1.0, 2.0], requires_grad=True)
    unused = Tensor(np.ones((2, 2)), requires_grad=True)
    with Tape() as tape:
        loss = T.sum(T.scale(x, 3.0))
    gx, gu = tape.backward(loss, [x, unused])
    assert gx.tolist() == [3.0, 3.0]
    assert gu.tolist() == [[0.0, 0.0], [0.0, 0.0]]


def test_backward_twice_is_rejected():
    x = Tensor([1.0], requires_grad=True)
    with Tape() as tape:
        loss = T.sum(T.exp(x))
    T.backward(loss, [x])
    with pytest.raises(TapeConsumedError):
        T.backward(loss, [x])


def test_backward_needs_scalar():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with Tape() as tape:
        y = T.exp(x)
    with pytest.raises(NotScalarError):
        tape.backward(y)


def test_gradient_accumulates_over_reuse():
    x = Tensor([2.0], requires_grad=True)
    with Tape() as tape:
        loss = T.sum(T.add(T.mul(x, x), x))
    assert tape.backward(loss, [x])[0].tolist() == [5.0]


def test_no_tape_means_no_recording():
    x = Tensor([1.0], requires_grad=True)
    y = T.exp(x)
    assert not y.requires_grad and y._tape is None


def test_shape_errors():
    with pytest.raises(ShapeError):
        T.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))
    with pytest.raises(ShapeError):
        T.bias_add(Tensor(np.ones((2, 3))), Tensor(np.ones(2)))
