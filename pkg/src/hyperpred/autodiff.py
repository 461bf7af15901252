"""Small reverse-mode differentiation engine over float64 numpy arrays.

Every differentiable quantity is a :class:`Value`.  Operations build a tape
of parent links; :meth:`Value.backward` walks it once in reverse topological
order and accumulates ``d root / d node`` into each node's ``grad``.

Most ops accept an optional leading batch axis so that whole minibatches run
through one tape node instead of a Python loop per sample.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import NumericalError, ParameterError, ShapeError

BackwardFn = Callable[["Value"], None]


class Value:
    """A tape node: array data, same-shape gradient slot and parent links.

    ``requires_grad`` is False for constants; interior nodes require a
    gradient when any parent does.  The gradient buffer is allocated on
    first access.
    """

    __slots__ = ("data", "_grad", "op", "parents", "_backward", "requires_grad")

    def __init__(
        self,
        data,
        parents: Sequence["Value"] = (),
        op: str = "",
        backward: BackwardFn | None = None,
        requires_grad: bool | None = None,
    ):
        self.data = np.asarray(data, dtype=np.float64)
        self._grad = None
        self.op = op
        self.parents = tuple(parents)
        self._backward = backward
        if requires_grad is None:
            requires_grad = any(p.requires_grad for p in self.parents) if self.parents else True
        self.requires_grad = requires_grad

    @property
    def grad(self) -> np.ndarray:
        if self._grad is None or self._grad.shape != self.data.shape:
            self._grad = np.zeros_like(self.data)
        return self._grad

    @grad.setter
    def grad(self, value: np.ndarray) -> None:
        self._grad = value

    def __repr__(self) -> str:
        return f"Value(shape={self.data.shape}, op={self.op or 'leaf'!r})"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def zero_grad(self) -> None:
        self._grad = None

    def detach(self) -> "Value":
        """Same data, no history.  Gradients stop here."""
        return Value(self.data, requires_grad=False)

    def backward(self, grad: np.ndarray | None = None) -> None:
        """Accumulate gradients of this node into every reachable ancestor.

        Without an explicit ``grad`` the node must hold a single element.
        Calling this twice on one tape accumulates twice.
        """
        if grad is None:
            if self.data.size != 1:
                raise ShapeError(f"backward() needs a scalar root, got shape {self.data.shape}")
            grad = np.ones_like(self.data)
        self.grad = self.grad + np.asarray(grad, dtype=np.float64).reshape(self.data.shape)
        for node in reversed(_topological_order(self)):
            if node._backward is not None and node.requires_grad:
                node._backward(node)

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, exponent: float):
        return power(self, exponent)


def _topological_order(root: Value) -> list[Value]:
    order: list[Value] = []
    seen: set[int] = set()
    stack: list[tuple[Value, bool]] = [(root, False)]
    while stack:
        node, finished = stack.pop()
        if finished:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order


def as_value(x) -> Value:
    """Wrap raw arrays and scalars as constants."""
    return x if isinstance(x, Value) else Value(x, requires_grad=False)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# elementwise arithmetic
# ---------------------------------------------------------------------------


def add(a, b) -> Value:
    a, b = as_value(a), as_value(b)

    def _backward(out: Value) -> None:
        a.grad += _unbroadcast(out.grad, a.shape)
        b.grad += _unbroadcast(out.grad, b.shape)

    return Value(a.data + b.data, (a, b), "add", _backward)


def sub(a, b) -> Value:
    a, b = as_value(a), as_value(b)

    def _backward(out: Value) -> None:
        a.grad += _unbroadcast(out.grad, a.shape)
        b.grad -= _unbroadcast(out.grad, b.shape)

    return Value(a.data - b.data, (a, b), "sub", _backward)


def mul(a, b) -> Value:
    a, b = as_value(a), as_value(b)

    def _backward(out: Value) -> None:
        a.grad += _unbroadcast(out.grad * b.data, a.shape)
        b.grad += _unbroadcast(out.grad * a.data, b.shape)

    return Value(a.data * b.data, (a, b), "mul", _backward)


def div(a, b) -> Value:
    a, b = as_value(a), as_value(b)

    def _backward(out: Value) -> None:
        a.grad += _unbroadcast(out.grad / b.data, a.shape)
        b.grad -= _unbroadcast(out.grad * a.data / b.data**2, b.shape)

    return Value(a.data / b.data, (a, b), "div", _backward)


def neg(a) -> Value:
    a = as_value(a)

    def _backward(out: Value) -> None:
        a.grad -= out.grad

    return Value(-a.data, (a,), "neg", _backward)


def power(a, exponent: float) -> Value:
    """Elementwise ``a ** exponent`` for a constant real exponent."""
    a = as_value(a)
    exponent = float(exponent)

    def _backward(out: Value) -> None:
        if exponent == 1.0:
            a.grad += out.grad
        else:
            a.grad += out.grad * exponent * a.data ** (exponent - 1.0)

    return Value(a.data**exponent, (a,), "pow", _backward)


def absolute(a) -> Value:
    """``|a|`` with subgradient 0 at 0."""
    a = as_value(a)

    def _backward(out: Value) -> None:
        a.grad += out.grad * np.sign(a.data)

    return Value(np.abs(a.data), (a,), "abs", _backward)


def clamp(a, lo: float, hi: float) -> Value:
    """Clip into ``[lo, hi]``; gradient passes only where the input was inside."""
    a = as_value(a)
    inside = (a.data >= lo) & (a.data <= hi)

    def _backward(out: Value) -> None:
        a.grad += out.grad * inside

    return Value(np.clip(a.data, lo, hi), (a,), "clamp", _backward)


# ---------------------------------------------------------------------------
# reductions and shape plumbing
# ---------------------------------------------------------------------------


def sum(a, axis: int | None = None) -> Value:  # noqa: A001 - mirrors numpy
    a = as_value(a)

    def _backward(out: Value) -> None:
        g = out.grad if axis is None else np.expand_dims(out.grad, axis)
        a.grad += np.broadcast_to(g, a.shape)

    return Value(a.data.sum(axis=axis), (a,), "sum", _backward)


def mean(a, axis: int | None = None) -> Value:
    a = as_value(a)
    count = a.data.size if axis is None else a.shape[axis]
    if count == 0:
        raise ShapeError(f"mean over empty axis of shape {a.shape}")

    def _backward(out: Value) -> None:
        g = out.grad if axis is None else np.expand_dims(out.grad, axis)
        a.grad += np.broadcast_to(g, a.shape) / count

    return Value(a.data.mean(axis=axis), (a,), "mean", _backward)


def reshape(a, shape: tuple[int, ...]) -> Value:
    a = as_value(a)

    def _backward(out: Value) -> None:
        a.grad += out.grad.reshape(a.shape)

    return Value(a.data.reshape(shape), (a,), "reshape", _backward)


def transpose(a, axes: tuple[int, ...] | None = None) -> Value:
    a = as_value(a)
    axes = tuple(reversed(range(a.data.ndim))) if axes is None else tuple(axes)
    inverse = tuple(np.argsort(axes))

    def _backward(out: Value) -> None:
        a.grad += out.grad.transpose(inverse)

    return Value(a.data.transpose(axes), (a,), "transpose", _backward)


def concat(values: Sequence[Value], axis: int = -1) -> Value:
    values = [as_value(v) for v in values]
    sizes = [v.shape[axis] for v in values]
    cuts = np.cumsum(sizes)[:-1]

    def _backward(out: Value) -> None:
        for v, g in zip(values, np.split(out.grad, cuts, axis=axis)):
            v.grad += g

    return Value(np.concatenate([v.data for v in values], axis=axis), values, "concat", _backward)


def gather_rows(a, index) -> Value:
    """Rows ``a[index]`` of a 2-D value; repeated indices accumulate gradient."""
    a = as_value(a)
    index = np.asarray(index, dtype=np.intp)

    def _backward(out: Value) -> None:
        np.add.at(a.grad, index, out.grad)

    return Value(a.data[index], (a,), "gather", _backward)


# ---------------------------------------------------------------------------
# linear algebra
# ---------------------------------------------------------------------------


def matmul(a, b) -> Value:
    a, b = as_value(a), as_value(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} x {b.shape}")

    def _backward(out: Value) -> None:
        if a.requires_grad:
            a.grad += out.grad @ b.data.T
        if b.requires_grad:
            b.grad += a.data.T @ out.grad

    return Value(a.data @ b.data, (a, b), "matmul", _backward)


def spmm(matrix: sp.spmatrix | np.ndarray, b) -> Value:
    """Constant (possibly sparse) matrix times a differentiable dense matrix."""
    b = as_value(b)
    if matrix.shape[1] != b.shape[0]:
        raise ShapeError(f"spmm shape mismatch: {matrix.shape} x {b.shape}")
    matrix_t = matrix.T.tocsr() if sp.issparse(matrix) else matrix.T

    def _backward(out: Value) -> None:
        if b.requires_grad:
            b.grad += np.asarray(matrix_t @ out.grad)

    return Value(np.asarray(matrix @ b.data), (b,), "spmm", _backward)


# ---------------------------------------------------------------------------
# activations
# ---------------------------------------------------------------------------


def leaky_relu(x, slope: float = 0.01) -> Value:
    """``x`` where ``x >= 0`` else ``slope * x``.

    The derivative at exactly 0 is taken as ``slope``.
    """
    x = as_value(x)
    positive = x.data > 0

    def _backward(out: Value) -> None:
        x.grad += np.where(positive, out.grad, slope * out.grad)

    return Value(np.where(positive, x.data, slope * x.data), (x,), "leaky_relu", _backward)


def _stable_sigmoid(z: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def sigmoid(x) -> Value:
    x = as_value(x)
    s = _stable_sigmoid(x.data)

    def _backward(out: Value) -> None:
        x.grad += out.grad * s * (1.0 - s)

    return Value(s, (x,), "sigmoid", _backward)


def softplus(x) -> Value:
    x = as_value(x)

    def _backward(out: Value) -> None:
        x.grad += out.grad * _stable_sigmoid(x.data)

    return Value(np.logaddexp(0.0, x.data), (x,), "softplus", _backward)


# ---------------------------------------------------------------------------
# 1-D signal ops, shapes (channels, length) or (batch, channels, length)
# ---------------------------------------------------------------------------


def conv1d(x, kernels, bias) -> Value:
    """Width-3 cross-correlation, stride 1, zero padding 1 (length preserving)."""
    x, kernels, bias = as_value(x), as_value(kernels), as_value(bias)
    if kernels.data.ndim != 3 or kernels.shape[2] != 3:
        raise ShapeError(f"conv1d kernels must be (out, in, 3), got {kernels.shape}")
    if x.data.ndim not in (2, 3) or x.shape[-2] != kernels.shape[1]:
        raise ShapeError(f"conv1d input {x.shape} does not match kernels {kernels.shape}")
    if bias.shape != (kernels.shape[0],):
        raise ShapeError(f"conv1d bias {bias.shape} does not match kernels {kernels.shape}")
    length = x.shape[-1]
    if length < 1:
        raise ShapeError(f"conv1d needs length >= 1, got {x.shape}")

    batched = x.data.ndim == 3
    xb = x.data if batched else x.data[None]
    n_batch, c_in = xb.shape[0], xb.shape[1]
    padded = np.pad(xb, ((0, 0), (0, 0), (1, 1)))
    # cols[b, c * 3 + j, l] = padded[b, c, l + j]
    cols = np.stack([padded[:, :, j : j + length] for j in range(3)], axis=2)
    cols = cols.reshape(n_batch, c_in * 3, length)
    w2 = kernels.data.reshape(kernels.shape[0], c_in * 3)
    out = np.matmul(w2, cols)
    out += bias.data[None, :, None]

    def _backward(node: Value) -> None:
        g = node.grad if batched else node.grad[None]
        if kernels.requires_grad:
            flat_g = g.transpose(1, 0, 2).reshape(g.shape[1], -1)
            flat_cols = cols.transpose(1, 0, 2).reshape(c_in * 3, -1)
            kernels.grad += (flat_g @ flat_cols.T).reshape(kernels.shape)
        if bias.requires_grad:
            bias.grad += g.sum(axis=(0, 2))
        if x.requires_grad:
            dcols = np.matmul(w2.T, g).reshape(n_batch, c_in, 3, length)
            dx = dcols[:, :, 1, :].copy()
            dx[:, :, :-1] += dcols[:, :, 0, 1:]
            dx[:, :, 1:] += dcols[:, :, 2, :-1]
            x.grad += dx if batched else dx[0]

    return Value(out if batched else out[0], (x, kernels, bias), "conv1d", _backward)


def avgpool1d(x, window: int) -> Value:
    """Non-overlapping mean pooling over the last axis.

    A trailing partial window is averaged over the elements it actually has.
    """
    if window <= 0:
        raise ParameterError(f"pooling window must be >= 1, got {window}")
    x = as_value(x)
    length = x.shape[-1]
    n_out = -(-length // window)
    pad = n_out * window - length
    counts = np.full(n_out, float(window))
    counts[-1] = length - (n_out - 1) * window
    padded = np.pad(x.data, [(0, 0)] * (x.data.ndim - 1) + [(0, pad)])
    out = padded.reshape(*x.shape[:-1], n_out, window).sum(axis=-1) / counts

    def _backward(node: Value) -> None:
        spread = np.repeat(node.grad / counts, window, axis=-1)
        x.grad += spread[..., :length]

    return Value(out, (x,), "avgpool1d", _backward)


def upsample1d(x, factor: int = 2) -> Value:
    """Nearest-neighbour upsampling over the last axis."""
    x = as_value(x)

    def _backward(node: Value) -> None:
        x.grad += node.grad.reshape(*x.shape, factor).sum(axis=-1)

    return Value(np.repeat(x.data, factor, axis=-1), (x,), "upsample1d", _backward)


def adain(x, style_scale, style_shift, eps: float = 1e-5) -> Value:
    """Adaptive instance normalisation.

    Each channel of ``x`` is normalised over its length (biased variance)
    then restyled as ``scale * x_hat + shift``.  ``style_scale`` and
    ``style_shift`` have shape ``(channels,)`` or ``(batch, channels)``.
    """
    if eps <= 0:
        raise ParameterError(f"adain eps must be > 0, got {eps}")
    x, style_scale, style_shift = as_value(x), as_value(style_scale), as_value(style_shift)
    if style_scale.shape != x.shape[:-1] or style_shift.shape != x.shape[:-1]:
        raise ShapeError(
            f"adain style shapes {style_scale.shape}/{style_shift.shape} do not match input {x.shape}"
        )
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    inv_std = 1.0 / np.sqrt((centered**2).mean(axis=-1, keepdims=True) + eps)
    x_hat = centered * inv_std
    scale = style_scale.data[..., None]
    out = scale * x_hat + style_shift.data[..., None]

    def _backward(node: Value) -> None:
        g = node.grad
        style_scale.grad += (g * x_hat).sum(axis=-1)
        style_shift.grad += g.sum(axis=-1)
        d_hat = g * scale
        x.grad += inv_std * (
            d_hat
            - d_hat.mean(axis=-1, keepdims=True)
            - x_hat * (d_hat * x_hat).mean(axis=-1, keepdims=True)
        )

    return Value(out, (x, style_scale, style_shift), "adain", _backward)


# ---------------------------------------------------------------------------
# similarity and set pooling
# ---------------------------------------------------------------------------


def cosine_similarity(a, b, eps: float = 1e-8) -> Value:
    """``a.b / (max(|a|, eps) * max(|b|, eps))`` along the last axis.

    1-D inputs give a scalar; ``(rows, d)`` inputs give one value per row.
    """
    if eps <= 0:
        raise ParameterError(f"cosine eps must be > 0, got {eps}")
    a, b = as_value(a), as_value(b)
    if a.shape != b.shape:
        raise ShapeError(f"cosine_similarity shape mismatch: {a.shape} vs {b.shape}")
    norm_a = np.linalg.norm(a.data, axis=-1, keepdims=True)
    norm_b = np.linalg.norm(b.data, axis=-1, keepdims=True)
    den_a = np.maximum(norm_a, eps)
    den_b = np.maximum(norm_b, eps)
    dot = (a.data * b.data).sum(axis=-1, keepdims=True)
    cos = dot / (den_a * den_b)

    def _backward(node: Value) -> None:
        g = node.grad[..., None]
        # the norm only contributes gradient where it exceeds eps
        ga = b.data / (den_a * den_b) - np.where(norm_a > eps, cos * a.data / den_a**2, 0.0)
        gb = a.data / (den_a * den_b) - np.where(norm_b > eps, cos * b.data / den_b**2, 0.0)
        a.grad += g * ga
        b.grad += g * gb

    return Value(cos[..., 0], (a, b), "cosine", _backward)


def pool_candidates(
    nodes, candidates: Sequence[Iterable[int]], weights=None, straight_through: bool = False
) -> Value:
    """Element-wise max minus element-wise min over each candidate's rows.

    ``nodes`` is ``(num_nodes, d)``.  ``candidates`` is a list of node-index
    collections.  When ``weights`` is given it has shape
    ``(len(candidates), num_nodes)`` and row ``b`` scales the node rows of
    candidate ``b`` before pooling.  With ``straight_through`` the forward
    pass ignores the weights (hard membership) while the backward pass
    differentiates the weighted form.  Ties route gradient to the first
    attaining member.  Returns ``(len(candidates), d)``.
    """
    nodes = as_value(nodes)
    sets = [np.asarray(list(c), dtype=np.intp) for c in candidates]
    if not sets:
        raise ShapeError("pool_candidates needs at least one candidate")
    width = max(len(s) for s in sets)
    if min(len(s) for s in sets) == 0:
        raise ShapeError("pool_candidates got an empty candidate")
    n_cand = len(sets)
    index = np.zeros((n_cand, width), dtype=np.intp)
    mask = np.zeros((n_cand, width), dtype=bool)
    for b, s in enumerate(sets):
        index[b, : len(s)] = s
        mask[b, : len(s)] = True

    rows = nodes.data[index]  # (B, m, d)
    parents: tuple[Value, ...] = (nodes,)
    if weights is not None:
        weights = as_value(weights)
        if weights.shape != (n_cand, nodes.shape[0]):
            raise ShapeError(
                f"weights shape {weights.shape} != ({n_cand}, {nodes.shape[0]})"
            )
        w = np.take_along_axis(weights.data, index, axis=1)  # (B, m)
        if straight_through:
            w = np.ones_like(w)
        else:
            rows = rows * w[..., None]
        parents = (nodes, weights)
    else:
        w = np.ones((n_cand, width))

    m3 = mask[..., None]
    arg_max = np.where(m3, rows, -np.inf).argmax(axis=1)  # (B, d)
    arg_min = np.where(m3, rows, np.inf).argmin(axis=1)
    hi = np.take_along_axis(rows, arg_max[:, None, :], axis=1)[:, 0, :]
    lo = np.take_along_axis(rows, arg_min[:, None, :], axis=1)[:, 0, :]

    def _backward(node: Value) -> None:
        g = node.grad
        dims = np.broadcast_to(np.arange(g.shape[1]), g.shape)
        batch = np.broadcast_to(np.arange(n_cand)[:, None], g.shape)
        node_max = index[batch, arg_max]
        node_min = index[batch, arg_min]
        if nodes.requires_grad:
            np.add.at(nodes.grad, (node_max, dims), g * w[batch, arg_max])
            np.add.at(nodes.grad, (node_min, dims), -g * w[batch, arg_min])
        if weights is not None and weights.requires_grad:
            np.add.at(weights.grad, (batch, node_max), g * nodes.data[node_max, dims])
            np.add.at(weights.grad, (batch, node_min), -g * nodes.data[node_min, dims])

    return Value(hi - lo, parents, "maxmin", _backward)


# ---------------------------------------------------------------------------
# finite-difference validation
# ---------------------------------------------------------------------------


def numerical_gradient(f: Callable[[], Value], param: Value, h: float = 1e-5, entries=None):
    """Central differences of scalar ``f()`` w.r.t. selected flat entries of ``param``."""
    flat = param.data.reshape(-1)
    entries = range(flat.size) if entries is None else entries
    grads = {}
    for i in entries:
        orig = flat[i]
        flat[i] = orig + h
        up = f().item()
        flat[i] = orig - h
        down = f().item()
        flat[i] = orig
        grads[int(i)] = (up - down) / (2.0 * h)
    return grads


def gradient_check(
    f: Callable[[], Value],
    params: Sequence[Value],
    h: float = 1e-5,
    max_entries: int | None = None,
    rng: np.random.Generator | None = None,
) -> float:
    """Max relative error between tape gradients and central differences.

    The error for one entry is ``|analytic - numeric| / max(1, |analytic|)``.
    ``max_entries`` subsamples large parameters (entries chosen by ``rng``).
    ``f`` must rebuild its tape from the current parameter data on every call.
    """
    for p in params:
        p.zero_grad()
    loss = f()
    if not np.all(np.isfinite(loss.data)):
        raise NumericalError(f"non-finite loss {loss.data!r} in gradient check")
    loss.backward()
    analytic = [p.grad.reshape(-1).copy() for p in params]
    rng = rng if rng is not None else np.random.default_rng(0)

    worst = 0.0
    for p, ana in zip(params, analytic):
        entries = None
        if max_entries is not None and p.data.size > max_entries:
            entries = rng.choice(p.data.size, size=max_entries, replace=False)
        for i, num in numerical_gradient(f, p, h, entries).items():
            if not np.isfinite(num):
                raise NumericalError("non-finite loss during finite differencing")
            err = abs(ana[i] - num) / max(1.0, abs(ana[i]))
            worst = max(worst, err)
    return worst
