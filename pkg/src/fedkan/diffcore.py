"""Float64 arrays, seeded randomness and a small reverse-mode autodiff graph.

Values are plain ``numpy.ndarray`` objects of dtype float64. A :class:`Tensor`
wraps one value and records the operation that produced it so that
:meth:`Tensor.backward` can push gradients back to every participating node.

Broadcasting is limited to scalar-with-array; anything else raises
:class:`~fedkan.errors.DimensionError`.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import DimensionError, NumericError

VJP = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


def as_array(data, shape: Sequence[int] | None = None) -> np.ndarray:
    """Coerce ``data`` to a finite float64 array, optionally reshaped."""
    arr = np.array(data, dtype=np.float64)
    if shape is not None:
        try:
            arr = arr.reshape(tuple(shape))
        except ValueError:
            raise DimensionError("data does not fill shape", arr.shape, tuple(shape)) from None
    _check_finite(arr, "as_array")
    return arr


def _check_finite(arr: np.ndarray, op: str) -> None:
    if not np.isfinite(arr).all():
        raise NumericError(f"non-finite value produced by {op}")


class SeededRng:
    """Deterministic random stream keyed by ``(seed, stream path)``.

    Backed by numpy's PCG64 seeded through ``SeedSequence`` with the stream path
    as spawn key, so the same key reproduces the same draws under one numpy
    release. Use :meth:`fork` to hand each worker its own independent stream.
    """

    def __init__(self, seed: int, stream: int | Sequence[int] = ()):
        if isinstance(stream, (int, np.integer)):
            stream = (int(stream),)
        self.seed = int(seed)
        self.stream = tuple(int(s) for s in stream)
        seq = np.random.SeedSequence(entropy=self.seed, spawn_key=self.stream)
        self._gen = np.random.Generator(np.random.PCG64(seq))

    def fork(self, stream_id: int) -> SeededRng:
        return SeededRng(self.seed, self.stream + (int(stream_id),))

    def random(self, size=None) -> np.ndarray:
        return self._gen.random(size)

    def uniform(self, low: float, high: float, size=None) -> np.ndarray:
        return self._gen.uniform(low, high, size)

    def normal(self, loc: float, scale: float, size=None) -> np.ndarray:
        return self._gen.normal(loc, scale, size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def integers(self, low: int, high: int, size=None) -> np.ndarray:
        return self._gen.integers(low, high, size)

    def __repr__(self) -> str:
        return f"SeededRng(seed={self.seed}, stream={self.stream})"


class Tensor:
    """A node in the differentiation graph.

    ``grad`` always has the shape of ``value`` and starts at zero. Each call to
    :meth:`backward` adds the fresh gradient into ``grad`` of every node reached,
    so repeated calls accumulate until :func:`reset_gradients` is used.
    """

    __slots__ = ("value", "grad", "requires_grad", "_parents", "_vjp", "op")
    __array_priority__ = 100

    def __init__(self, value, requires_grad: bool = False):
        self.value = value if isinstance(value, np.ndarray) and value.dtype == np.float64 else np.array(value, dtype=np.float64)
        _check_finite(self.value, "Tensor")
        self.grad = np.zeros_like(self.value)
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._vjp: VJP | None = None
        self.op = "leaf"

    @classmethod
    def from_op(cls, value: np.ndarray, parents: Sequence[Tensor], vjp: VJP, op: str) -> Tensor:
        """Build the output of a recorded operation.

        ``vjp`` maps the output gradient to one gradient (or ``None``) per parent.
        The graph is only recorded when some parent requires a gradient.
        """
        out = cls(value)
        out.op = op
        if any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._vjp = vjp
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    def numpy(self) -> np.ndarray:
        return self.value

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.value)

    def backward(self) -> None:
        if self.value.shape != () and self.value.size != 1:
            raise DimensionError("backward requires a scalar loss", self.value.shape)
        order = _toposort(self)
        fresh: dict[int, np.ndarray] = {id(self): np.ones_like(self.value)}
        for node in reversed(order):
            g = fresh.get(id(node))
            if g is None:
                continue
            node.grad = node.grad + g
            if node._vjp is None:
                continue
            for parent, pg in zip(node._parents, node._vjp(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                fresh[key] = fresh[key] + pg if key in fresh else pg

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

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op!r}, requires_grad={self.requires_grad})"


def _toposort(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def reset_gradients(tensors: Iterable[Tensor]) -> None:
    for t in tensors:
        t.zero_grad()


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(as_array(data), requires_grad=requires_grad)


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def _is_scalar(t: Tensor) -> bool:
    return t.value.ndim == 0


def _binary_shapes(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape and not (_is_scalar(a) or _is_scalar(b)):
        raise DimensionError(f"{op} shape mismatch", a.shape, b.shape)


def _unbroadcast(g: np.ndarray, t: Tensor) -> np.ndarray:
    return np.asarray(g.sum()) if _is_scalar(t) and g.ndim else g


def add(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    _binary_shapes(a, b, "add")
    return Tensor.from_op(
        a.value + b.value, (a, b), lambda g: (_unbroadcast(g, a), _unbroadcast(g, b)), "add"
    )


def sub(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    _binary_shapes(a, b, "sub")
    return Tensor.from_op(
        a.value - b.value, (a, b), lambda g: (_unbroadcast(g, a), _unbroadcast(-g, b)), "sub"
    )


def mul(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    _binary_shapes(a, b, "mul")
    return Tensor.from_op(
        a.value * b.value,
        (a, b),
        lambda g: (_unbroadcast(g * b.value, a), _unbroadcast(g * a.value, b)),
        "mul",
    )


def scale(a, factor: float) -> Tensor:
    a = _lift(a)
    factor = float(factor)
    return Tensor.from_op(a.value * factor, (a,), lambda g: (g * factor,), "scale")


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # Split by sign so exp never overflows.
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a) -> Tensor:
    a = _lift(a)
    s = _sigmoid(np.atleast_1d(a.value)).reshape(a.shape)
    return Tensor.from_op(s, (a,), lambda g: (g * s * (1.0 - s),), "sigmoid")


def silu(a) -> Tensor:
    a = _lift(a)
    x = a.value
    s = _sigmoid(np.atleast_1d(x)).reshape(x.shape)
    return Tensor.from_op(x * s, (a,), lambda g: (g * (s * (1.0 + x * (1.0 - s))),), "silu")


def relu(a) -> Tensor:
    a = _lift(a)
    mask = (a.value > 0).astype(np.float64)
    return Tensor.from_op(a.value * mask, (a,), lambda g: (g * mask,), "relu")


def exp(a) -> Tensor:
    a = _lift(a)
    with np.errstate(over="ignore"):
        out = np.exp(a.value)
    _check_finite(out, "exp")
    return Tensor.from_op(out, (a,), lambda g: (g * out,), "exp")


def log(a) -> Tensor:
    a = _lift(a)
    if (a.value <= 0).any():
        raise NumericError("log of non-positive value")
    return Tensor.from_op(np.log(a.value), (a,), lambda g: (g / a.value,), "log")


_ELEMENTWISE: dict[str, Callable[..., Tensor]] = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "scale": scale,
    "silu": silu,
    "relu": relu,
    "sigmoid": sigmoid,
    "exp": exp,
    "log": log,
}


def elementwise(op: str, *operands) -> Tensor:
    """Dispatch a pointwise operation by name, e.g. ``elementwise("scale", x, 0.5)``."""
    try:
        fn = _ELEMENTWISE[op]
    except KeyError:
        raise ValueError(f"unknown elementwise op {op!r}; choose from {sorted(_ELEMENTWISE)}") from None
    return fn(*operands)


def matmul(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError("matmul shape mismatch", a.shape, b.shape)
    with np.errstate(over="ignore", invalid="ignore"):
        out = a.value @ b.value
    _check_finite(out, "matmul")
    return Tensor.from_op(out, (a, b), lambda g: (g @ b.value.T, a.value.T @ g), "matmul")


def sum(a, axis: int | None = None) -> Tensor:  # noqa: A001 - mirrors numpy naming
    a = _lift(a)
    shape = a.shape
    if axis is None:
        return Tensor.from_op(
            np.asarray(a.value.sum()), (a,), lambda g: (np.broadcast_to(g, shape).copy(),), "sum"
        )
    axis = axis % a.ndim

    def vjp(g):
        return (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),)

    return Tensor.from_op(a.value.sum(axis=axis), (a,), vjp, "sum")


def mean(a, axis: int | None = None) -> Tensor:
    a = _lift(a)
    count = a.value.size if axis is None else a.shape[axis]
    return scale(sum(a, axis), 1.0 / count)


def reshape(a, shape: Sequence[int]) -> Tensor:
    a = _lift(a)
    old = a.shape
    try:
        out = a.value.reshape(tuple(shape))
    except ValueError:
        raise DimensionError("reshape size mismatch", old, tuple(shape)) from None
    return Tensor.from_op(out, (a,), lambda g: (g.reshape(old),), "reshape")


def logsumexp(a, axis: int = -1) -> Tensor:
    """Stable ``log(sum(exp(a)))`` along ``axis`` using the max shift."""
    a = _lift(a)
    x = a.value
    m = x.max(axis=axis, keepdims=True)
    shifted = np.exp(x - m)
    total = shifted.sum(axis=axis, keepdims=True)
    out = (m + np.log(total)).squeeze(axis)
    soft = shifted / total

    def vjp(g):
        return (np.expand_dims(g, axis) * soft,)

    return Tensor.from_op(out, (a,), vjp, "logsumexp")


def pick(a, index: Sequence[int]) -> Tensor:
    """Row-wise selection ``out[r] = a[r, index[r]]`` for a 2-D tensor."""
    a = _lift(a)
    idx = np.asarray(index, dtype=np.int64)
    if a.ndim != 2 or idx.shape != (a.shape[0],):
        raise DimensionError("pick expects a (rows, cols) tensor and one index per row", a.shape, idx.shape)
    rows = np.arange(a.shape[0])
    shape = a.shape

    def vjp(g):
        full = np.zeros(shape)
        np.add.at(full, (rows, idx), g)
        return (full,)

    return Tensor.from_op(a.value[rows, idx], (a,), vjp, "pick")


def einsum(subscripts: str, *operands) -> Tensor:
    """Differentiable ``numpy.einsum`` with an explicit output (``->``).

    Every index of each operand must appear in the output or in another
    operand; the gradient of operand ``k`` is then itself an einsum of the
    output gradient with the remaining operands.
    """
    ops = [_lift(o) for o in operands]
    if "->" not in subscripts:
        raise ValueError("einsum requires an explicit output, e.g. 'ij,jk->ik'")
    lhs, out_idx = subscripts.replace(" ", "").split("->")
    in_idx = lhs.split(",")
    if len(in_idx) != len(ops):
        raise DimensionError(f"einsum expects {len(in_idx)} operands, got {len(ops)}")
    sizes: dict[str, int] = {}
    for idx, t in zip(in_idx, ops):
        if len(idx) != t.ndim:
            raise DimensionError(f"einsum subscript {idx!r} does not match operand rank", t.shape)
        for ch, n in zip(idx, t.shape):
            if sizes.setdefault(ch, n) != n:
                raise DimensionError(f"einsum extent mismatch on index {ch!r}", *(o.shape for o in ops))
    for k, idx in enumerate(in_idx):
        others = set(out_idx).union(*(set(s) for j, s in enumerate(in_idx) if j != k))
        if not set(idx) <= others:
            raise DimensionError(f"einsum index of operand {k} appears nowhere else; use sum()")
    values = [t.value for t in ops]
    out = np.einsum(subscripts, *values, optimize=len(ops) > 2)

    def vjp(g):
        grads = []
        for k, idx in enumerate(in_idx):
            if not ops[k].requires_grad:
                grads.append(None)
                continue
            rest = [v for j, v in enumerate(values) if j != k]
            rest_idx = [s for j, s in enumerate(in_idx) if j != k]
            spec = ",".join([out_idx, *rest_idx]) + "->" + idx
            grads.append(np.einsum(spec, g, *rest, optimize=len(rest) > 1))
        return grads

    return Tensor.from_op(out, ops, vjp, "einsum")
