"""Dense float64 tensors with tape-based reverse-mode differentiation.

Operations record onto the active :class:`Tape` (entered with ``with Tape():``)
whenever one of their inputs requires a gradient. Outside a tape everything
runs eagerly with no bookkeeping, which is how inference is done.

    with Tape() as tape:
        loss = softmax_cross_entropy(x @ w, labels)
    grads = tape.backward(loss, [w])
"""

from __future__ import annotations

import contextvars

import numpy as np


from .errors import BadIndexError, NotScalarError, ShapeError, TapeConsumedError

_ACTIVE = contextvars.ContextVar("floorgnn_active_tape", default=None)


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_tape")

    def __init__(self, data, requires_grad=False):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._tape = None

    @property
    def shape(self):
        return self.data.shape

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else self.data.item()

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor({self.data!r}{flag})"

    __add__ = lambda self, other: add(self, other)
    __radd__ = lambda self, other: add(other, self)
    __sub__ = lambda self, other: sub(self, other)
    __rsub__ = lambda self, other: sub(other, self)
    __mul__ = lambda self, other: mul(self, other)
    __rmul__ = lambda self, other: mul(other, self)
    __truediv__ = lambda self, other: div(self, other)
    __rtruediv__ = lambda self, other: div(other, self)
    __matmul__ = lambda self, other: matmul(self, other)
    __neg__ = lambda self: mul(self, -1.0)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class Tape:
    """Append-only record of differentiable operations.

    A tape supports exactly one :meth:`backward`; a second call raises
    ``TapeConsumedError``.
    """

    def __init__(self):
        self.nodes = []  # (op name, output, inputs, vjp)
        self.consumed = False
        self._token = None

    def __enter__(self):
        self._token = _ACTIVE.set(self)
        return self

    def __exit__(self, *exc):
        _ACTIVE.reset(self._token)
        self._token = None
        return False

    def record(self, op, out, inputs, vjp):
        if self.consumed:
            raise TapeConsumedError("tape already consumed by backward")
        out.requires_grad = True
        out._tape = self
        self.nodes.append((op, out, inputs, vjp))
        return out

    def backward(self, loss: Tensor, params=None):
        """Accumulate d(loss)/d(leaf) into ``.grad`` for every leaf reached.

        With ``params`` given, parameters off the loss path receive zero
        gradients and the list of gradients is returned in order.
        """
        if self.consumed:
            raise TapeConsumedError("backward already called on this tape")
        if loss.data.size != 1:
            raise NotScalarError(f"loss must be a scalar, got shape {loss.shape}")
        self.consumed = True

        grads = {id(loss): np.ones_like(loss.data)}
        leaves = {}
        for _, out, inputs, vjp in reversed(self.nodes):
            g = grads.pop(id(out), None)
            if g is None:
                continue
            for inp, gi in zip(inputs, vjp(g)):
                if gi is None or not inp.requires_grad:
                    continue
                key = id(inp)
                if key in grads:
                    grads[key] = grads[key] + gi
                else:
                    grads[key] = gi
                if inp._tape is not self:
                    leaves[key] = inp
        for key, leaf in leaves.items():
            leaf.grad = grads[key]
        if loss.requires_grad and loss._tape is None:
            loss.grad = np.ones_like(loss.data)

        if params is None:
            return None
        for p in params:
            if id(p) not in leaves and p is not loss:
                p.grad = np.zeros_like(p.data)
        return [p.grad for p in params]

    def __len__(self):
        return len(self.nodes)


def backward(loss: Tensor, params=None):
    """Run reverse mode on the tape that produced ``loss``."""
    if loss.data.size != 1:
        raise NotScalarError(f"loss must be a scalar, got shape {loss.shape}")
    tape = loss._tape
    if tape is None:
        if params is None:
            return None
        for p in params:
            p.grad = np.ones_like(p.data) if p is loss else np.zeros_like(p.data)
        return [p.grad for p in params]
    return tape.backward(loss, params)


def _make(op, value, inputs, vjp) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = value
    out.requires_grad = False
    out.grad = None
    out._tape = None
    tape = _ACTIVE.get()
    if tape is not None and any(t.requires_grad for t in inputs):
        tape.record(op, out, inputs, vjp)
    return out


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# --- elementwise --------------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(
        "add",
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(
        "sub",
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(
        "mul",
        a.data * b.data,
        (a, b),
        lambda g: (
            _unbroadcast(g * b.data, a.shape) if a.requires_grad else None,
            _unbroadcast(g * a.data, b.shape) if b.requires_grad else None,
        ),
    )


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data
    return _make(
        "div",
        out,
        (a, b),
        lambda g: (_unbroadcast(g / b.data, a.shape), _unbroadcast(-g * out / b.data, b.shape)),
    )


def scale(x, c: float) -> Tensor:
    """Multiply by a constant scalar."""
    x = as_tensor(x)
    c = float(c)
    return _make("scale", x.data * c, (x,), lambda g: (g * c,))


def bias_add(x, b) -> Tensor:
    """Add a length-F bias row to every row of an (M, F) tensor."""
    x, b = as_tensor(x), as_tensor(b)
    if b.data.ndim != 1 or x.data.ndim != 2 or b.shape[0] != x.shape[1]:
        raise ShapeError(f"bias of shape {b.shape} does not fit {x.shape}")
    return _make("bias_add", x.data + b.data, (x, b), lambda g: (g, g.sum(axis=0)))


def relu(x) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0
    return _make("relu", np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def leaky_relu(x, slope: float = 0.2) -> Tensor:
    x = as_tensor(x)
    factor = np.where(x.data > 0, 1.0, slope)
    return _make("leaky_relu", x.data * factor, (x,), lambda g: (g * factor,))


def exp(x) -> Tensor:
    x = as_tensor(x)
    out = np.exp(x.data)
    return _make("exp", out, (x,), lambda g: (g * out,))


def log(x) -> Tensor:
    x = as_tensor(x)
    return _make("log", np.log(x.data), (x,), lambda g: (g / x.data,))


# --- reductions and shape ops -------------------------------------------------------


def sum(x) -> Tensor:  # noqa: A001 - mirrors numpy naming
    x = as_tensor(x)
    return _make("sum", np.array(x.data.sum()), (x,), lambda g: (np.broadcast_to(g, x.shape).copy(),))


def mean(x) -> Tensor:
    x = as_tensor(x)
    n = max(x.data.size, 1)
    return _make("mean", np.array(x.data.mean()), (x,), lambda g: (np.full(x.shape, g / n),))


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return _make(
        "matmul",
        a.data @ b.data,
        (a, b),
        lambda g: (
            g @ b.data.T if a.requires_grad else None,
            a.data.T @ g if b.requires_grad else None,
        ),
    )


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    return _make("reshape", x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),))


def concat(tensors, axis: int = -1) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in ts]
    splits = np.cumsum(sizes)[:-1]
    return _make(
        "concat",
        np.concatenate([t.data for t in ts], axis=axis),
        tuple(ts),
        lambda g: tuple(np.split(g, splits, axis=axis)),
    )


def _check_index(idx, n, what):
    idx = np.asarray(idx, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise BadIndexError(f"{what} index out of range [0, {n})")
    return idx


def _segment_sum(values, seg, n):
    tail = values.shape[1:]
    k = int(np.prod(tail)) if tail else 1
    flat = (seg[:, None] * k + np.arange(k)).ravel()
    out = np.bincount(flat, weights=values.reshape(-1), minlength=n * k)
    return out.reshape((n,) + tail)


def gather(x, idx) -> Tensor:
    """Rows ``x[idx]``."""
    x = as_tensor(x)
    n = x.shape[0]
    idx = _check_index(idx, n, "gather")
    return _make("gather", x.data[idx], (x,), lambda g: (_segment_sum(g, idx, n),))


def segment_sum(values, segment_of_row, n_segments: int) -> Tensor:
    values = as_tensor(values)
    seg = _check_index(segment_of_row, n_segments, "segment")
    if len(seg) != values.shape[0]:
        raise ShapeError("one segment id per row required")
    return _make("segment_sum", _segment_sum(values.data, seg, n_segments), (values,), lambda g: (g[seg],))


def segment_mean(values, segment_of_row, n_segments: int) -> Tensor:
    """Per-segment row mean; segments with no rows give zeros."""
    values = as_tensor(values)
    seg = _check_index(segment_of_row, n_segments, "segment")
    if len(seg) != values.shape[0]:
        raise ShapeError("one segment id per row required")
    counts = np.bincount(seg, minlength=n_segments).astype(np.float64)
    inv = np.where(counts > 0, 1.0 / np.maximum(counts, 1.0), 0.0)
    inv = inv.reshape((-1,) + (1,) * (values.data.ndim - 1))
    out = _segment_sum(values.data, seg, n_segments) * inv
    return _make("segment_mean", out, (values,), lambda g: ((g * inv)[seg],))


def sparse_matmul(A, x) -> Tensor:
    """``A @ x`` for a constant scipy.sparse matrix ``A`` (no gradient w.r.t. ``A``)."""
    x = as_tensor(x)
    if A.shape[1] != x.shape[0]:
        raise ShapeError(f"cannot multiply {A.shape} by {x.shape}")
    return _make("sparse_matmul", np.asarray(A @ x.data), (x,), lambda g: (np.asarray(A.T @ g),))


def segment_max(values, segment_of_row, n_segments: int) -> np.ndarray:
    """Per-segment max as a constant (no gradient); empty segments give -inf."""
    v = as_tensor(values).data
    out = np.full((n_segments,) + v.shape[1:], -np.inf)
    np.maximum.at(out, np.asarray(segment_of_row, dtype=np.int64), v)
    return out


def segment_softmax(scores, segment_of_row, n_segments: int) -> Tensor:
    """Softmax of ``scores`` within each segment (e.g. over a node's incoming edges)."""
    seg = _check_index(segment_of_row, n_segments, "segment")
    shift = segment_max(scores, seg, n_segments)[seg]
    ex = exp(sub(scores, shift))
    denom = segment_sum(ex, seg, n_segments)
    return div(ex, gather(denom, seg))


# --- loss ---------------------------------------------------------------------------


def log_softmax_np(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def softmax_cross_entropy(logits, labels) -> Tensor:
    """Mean over rows of -log softmax(logits)[i, labels[i]], max-shifted for stability."""
    logits = as_tensor(logits)
    if logits.data.ndim != 2:
        raise ShapeError("logits must be (N, C)")
    n, c = logits.shape
    labels = _check_index(labels, c, "label")
    if labels.shape != (n,):
        raise ShapeError("one label per row required")
    logp = log_softmax_np(logits.data)
    loss = -logp[np.arange(n), labels].mean()

    def vjp(g):
        d = np.exp(logp)
        d[np.arange(n), labels] -= 1.0
        return (d * (g / n),)

    return _make("softmax_cross_entropy", np.array(loss), (logits,), vjp)
