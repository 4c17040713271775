"""Minimal reverse-mode autodiff over numpy arrays.

Every op returns a new :class:`Tensor` that remembers its parents and a
closure mapping the output gradient to parent gradients.  Tensors are
treated as immutable values; gradients live in the dict returned by
:func:`backprop`, never on the tensors themselves.

Only the handful of primitives the topic-attention model needs are here.
Broadcasting is limited to adding a bias over leading axes.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

# guards square roots whose derivative blows up at 0
NORM_EPS = 1e-12


class EmptySentenceError(ValueError):
    """Raised when a softmax row has no unmasked position."""


class Tensor:
    __slots__ = ("data", "parents", "backward_fn", "name")

    def __init__(self, data, parents: Sequence["Tensor"] = (), backward_fn=None, name=None):
        self.data = np.asarray(data)
        self.parents = tuple(parents)
        self.backward_fn = backward_fn
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self):
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


def parameter(data, name=None, dtype=None) -> Tensor:
    arr = np.array(data, dtype=dtype if dtype is not None else np.float64)
    return Tensor(arr, name=name)


def constant(data, dtype=None) -> Tensor:
    return Tensor(np.asarray(data, dtype=dtype))


def _as_tensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(x, dtype=dtype))


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (numpy broadcasting rules)."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# elementwise
# ---------------------------------------------------------------------------


def add(a, b) -> Tensor:
    a = _as_tensor(a)
    b = _as_tensor(b, a)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return Tensor(a.data + b.data, (a, b), backward)


def sub(a, b) -> Tensor:
    a = _as_tensor(a)
    b = _as_tensor(b, a)

    def backward(g):
        return _unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)

    return Tensor(a.data - b.data, (a, b), backward)


def mul(a, b) -> Tensor:
    a = _as_tensor(a)
    b = _as_tensor(b, a)

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.data.shape)

    return Tensor(a.data * b.data, (a, b), backward)


def scale(a: Tensor, factor: float) -> Tensor:
    return Tensor(a.data * factor, (a,), lambda g: (g * factor,))


def sigmoid(a: Tensor) -> Tensor:
    # split by sign so exp never overflows
    x = a.data
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return Tensor(out, (a,), lambda g: (g * out * (1.0 - out),))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return Tensor(out, (a,), lambda g: (g * (1.0 - out * out),))


def relu(a: Tensor) -> Tensor:
    keep = a.data > 0
    return Tensor(np.where(keep, a.data, 0), (a,), lambda g: (g * keep,))


def one_minus(a: Tensor) -> Tensor:
    return Tensor(1.0 - a.data, (a,), lambda g: (-g,))


# ---------------------------------------------------------------------------
# reductions and products
# ---------------------------------------------------------------------------


def total(a: Tensor) -> Tensor:
    """Sum of all elements as a 0-d tensor."""
    shape = a.shape
    return Tensor(a.data.sum(), (a,), lambda g: (np.broadcast_to(g, shape).copy(),))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """``a @ b`` for a of rank >= 1 and b of rank 2."""
    if b.data.ndim != 2:
        raise ValueError("matmul expects a rank-2 right operand")
    if a.shape[-1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch {a.shape} @ {b.shape}")

    def backward(g):
        ga = g @ b.data.T
        a2 = a.data.reshape(-1, a.shape[-1])
        gb = a2.T @ g.reshape(-1, b.shape[1])
        return ga, gb

    return Tensor(a.data @ b.data, (a, b), backward)


def einsum(spec: str, a: Tensor, b: Tensor) -> Tensor:
    """Two-operand einsum without repeated or operand-private indices.

    Each index of either operand must appear in the other operand or in the
    output, which makes the gradient another einsum of the same shape.
    """
    ins, out = spec.replace(" ", "").split("->")
    sa, sb = ins.split(",")
    for own, other in ((sa, sb), (sb, sa)):
        for ch in own:
            if ch not in other and ch not in out:
                raise ValueError(f"index {ch!r} is summed within a single operand in {spec}")

    def backward(g):
        ga = np.einsum(f"{out},{sb}->{sa}", g, b.data)
        gb = np.einsum(f"{sa},{out}->{sb}", a.data, g)
        return ga, gb

    return Tensor(np.einsum(spec, a.data, b.data), (a, b), backward)


def l2_norm(a: Tensor) -> Tensor:
    """Euclidean norm over the last axis.

    The forward value is exact (zero stays zero); the derivative uses a
    floored norm so it stays finite at the origin.
    """
    sq = np.sum(a.data * a.data, axis=-1)
    out = np.sqrt(sq)
    denom = np.sqrt(sq + NORM_EPS)

    def backward(g):
        return ((g / denom)[..., None] * a.data,)

    return Tensor(out, (a,), backward)


# ---------------------------------------------------------------------------
# shape ops
# ---------------------------------------------------------------------------


def reshape(a: Tensor, shape) -> Tensor:
    old = a.shape
    return Tensor(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def transpose(a: Tensor, axes) -> Tensor:
    inv = np.argsort(axes)
    return Tensor(np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inv),))


def concat(parts: Sequence[Tensor], axis: int = -1) -> Tensor:
    sizes = [p.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return Tensor(np.concatenate([p.data for p in parts], axis=axis), tuple(parts), backward)


def stack(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    n = len(parts)

    def backward(g):
        return tuple(np.take(g, i, axis=axis) for i in range(n))

    return Tensor(np.stack([p.data for p in parts], axis=axis), tuple(parts), backward)


def take(a: Tensor, index: int, axis: int) -> Tensor:
    """Select one slice along ``axis`` (the axis is dropped)."""
    shape = a.shape
    ax = axis % a.data.ndim

    def backward(g):
        full = np.zeros(shape, dtype=g.dtype)
        sl = [slice(None)] * len(shape)
        sl[ax] = index
        full[tuple(sl)] = g
        return (full,)

    return Tensor(np.take(a.data, index, axis=ax), (a,), backward)


def gather_rows(table: Tensor, ids: np.ndarray) -> Tensor:
    """Embedding lookup: ``out[...] = table[ids[...]]``."""
    ids = np.asarray(ids)
    shape = table.shape

    def backward(g):
        full = np.zeros(shape, dtype=g.dtype)
        np.add.at(full, ids.reshape(-1), g.reshape(-1, shape[-1]))
        return (full,)

    return Tensor(table.data[ids], (table,), backward)


def gather_time(a: Tensor, index: np.ndarray) -> Tensor:
    """Per-row permutation along axis 1: ``out[b, t] = a[b, index[b, t]]``."""
    index = np.asarray(index)
    batch = np.arange(a.shape[0])[:, None]
    shape = a.shape

    def backward(g):
        full = np.zeros(shape, dtype=g.dtype)
        np.add.at(full, (np.broadcast_to(batch, index.shape), index), g)
        return (full,)

    return Tensor(a.data[batch, index], (a,), backward)


# ---------------------------------------------------------------------------
# model-specific primitives
# ---------------------------------------------------------------------------


def squash(v: Tensor) -> Tensor:
    """Rescale each last-axis vector to length ``|v|^2 / (1 + |v|^2)``.

    Computed as ``v * n / (1 + n^2)`` with the exact norm ``n``, so the zero
    vector maps to exactly zero.  Only the derivative's ``1 / n`` uses a
    floored norm, which keeps gradients finite at the origin.
    """
    x = v.data
    n2 = np.sum(x * x, axis=-1, keepdims=True)
    n = np.sqrt(n2)
    factor = n / (1.0 + n2)
    out = x * factor

    def backward(g):
        # d factor / d n, folded with d n / d v = v / n
        dfac = (1.0 - n2) / ((1.0 + n2) ** 2) / np.sqrt(n2 + NORM_EPS)
        vg = np.sum(x * g, axis=-1, keepdims=True)
        return (g * factor + x * (dfac * vg),)

    return Tensor(out, (v,), backward)


def masked_softmax(scores: Tensor, mask) -> Tensor:
    """Softmax over the last axis restricted to ``mask``; masked entries are 0."""
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != scores.shape:
        mask = np.broadcast_to(mask, scores.shape)
    if not np.all(mask.any(axis=-1)):
        raise EmptySentenceError("softmax over a row with every position masked (empty sentence)")
    s = np.where(mask, scores.data, -np.inf)
    s = s - s.max(axis=-1, keepdims=True)
    e = np.where(mask, np.exp(s), 0.0).astype(scores.dtype, copy=False)
    out = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        dot = np.sum(g * out, axis=-1, keepdims=True)
        return (out * (g - dot),)

    return Tensor(out, (scores,), backward)


def dropout(a: Tensor, rate: float, rng: np.random.Generator | None, training: bool) -> Tensor:
    """Inverted dropout; identity when not training or rate is 0."""
    if not training or rate <= 0.0:
        return a
    if rng is None:
        raise ValueError("dropout in training mode needs an explicit generator")
    keep = rng.random(a.shape) >= rate
    mask = keep.astype(a.dtype) / (1.0 - rate)
    return Tensor(a.data * mask, (a,), lambda g: (g * mask,))


def mse_loss(pred: Tensor, target) -> Tensor:
    target = _as_tensor(target, pred)
    if pred.shape != target.shape:
        raise ValueError(f"mse_loss shape mismatch {pred.shape} vs {target.shape}")
    n = pred.data.size
    diff = pred.data - target.data

    def backward(g):
        gp = g * (2.0 / n) * diff
        return gp, -gp

    return Tensor(np.mean(diff * diff), (pred, target), backward)


def orthogonality_penalty(T: Tensor) -> Tensor:
    """Frobenius norm of ``Tn Tn^T - I`` where ``Tn`` has unit-length rows."""
    x = T.data
    if x.ndim != 2:
        raise ValueError("orthogonality_penalty expects a k x d matrix")
    norms = np.sqrt(np.sum(x * x, axis=1, keepdims=True))
    if np.any(norms == 0):
        raise ValueError("topic matrix has a zero row (degenerate topic)")
    tn = x / norms
    gram = tn @ tn.T - np.eye(x.shape[0], dtype=x.dtype)
    sq = np.sum(gram * gram)
    out = np.sqrt(sq)

    def backward(g):
        dgram = g * gram / np.sqrt(sq + NORM_EPS)
        dtn = (dgram + dgram.T) @ tn
        # through the row normalisation
        radial = np.sum(dtn * tn, axis=1, keepdims=True)
        return ((dtn - tn * radial) / norms,)

    return Tensor(out, (T,), backward)


# ---------------------------------------------------------------------------
# backprop
# ---------------------------------------------------------------------------


def topological_order(root: Tensor) -> list[Tensor]:
    """Nodes reachable from ``root``, every node after all of its inputs."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack_: list[tuple[Tensor, bool]] = [(root, False)]
    while stack_:
        node, done = stack_.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack_.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack_.append((p, False))
    return order


def backprop(loss: Tensor, params: Iterable[Tensor]) -> list[np.ndarray]:
    """Gradient of the scalar ``loss`` with respect to each of ``params``."""
    params = list(params)
    if loss.data.size != 1:
        raise ValueError(f"backprop needs a scalar loss, got shape {loss.shape}")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(topological_order(loss)):
        if node.backward_fn is None:
            continue
        g = grads.pop(id(node), None)
        if g is None:
            continue
        for parent, pg in zip(node.parents, node.backward_fn(g)):
            if pg is None:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
    return [
        np.asarray(grads[id(p)], dtype=p.dtype).reshape(p.shape)
        if id(p) in grads
        else np.zeros_like(p.data)
        for p in params
    ]


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> np.ndarray:
    """``|a - n| / max(|a|, |n|, floor)``; the floor keeps near-zero entries sane."""
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


def numeric_gradient(f: Callable[[], Tensor], param: Tensor, eps: float = 1e-5) -> np.ndarray:
    """Central differences of ``f`` w.r.t. every coordinate of ``param``.

    ``param.data`` is perturbed in place and restored afterwards.
    """
    flat = param.data.reshape(-1)
    out = np.zeros(flat.shape, dtype=np.float64)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + eps
        up = float(f().data)
        flat[i] = old - eps
        down = float(f().data)
        flat[i] = old
        out[i] = (up - down) / (2 * eps)
    return out.reshape(param.shape)


def finite_difference_check(
    f: Callable[[], Tensor],
    params: Sequence[Tensor],
    eps: float = 1e-5,
    floor: float = 1e-6,
) -> float:
    """Max relative discrepancy between backprop and central differences.

    ``f`` rebuilds the scalar loss from the current values of ``params``
    on every call (and must be deterministic, e.g. reseed any dropout).
    """
    analytic = backprop(f(), params)
    worst = 0.0
    for p, a in zip(params, analytic):
        if p.data.size == 0:
            continue
        n = numeric_gradient(f, p, eps)
        worst = max(worst, float(relative_error(a, n, floor).max()))
    return worst
