"""Dense tensors with reverse-mode automatic differentiation.

Every operation records its parent tensors and a vector-Jacobian product
(vjp). The vjp is itself written with tensor operations, so when a backward
pass runs with ``create_graph=True`` it is recorded like any forward
computation and can be differentiated again. That is what makes
gradient-of-gradient-norm penalties possible.

The graph is kept implicitly through parent links; :func:`grad` linearizes it
into a topologically ordered tape at backward time and visits each node once.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager, nullcontext
from typing import Callable, Iterable, Sequence

import numpy as np

_local = threading.local()
_default_dtype = np.float64


class ShapeError(ValueError):
    """Operands have incompatible shapes."""


def set_default_dtype(dtype) -> None:
    """Switch between float64 (default, audit mode) and float32 (speed mode)."""
    global _default_dtype
    dtype = np.dtype(dtype)
    if dtype not in (np.float32, np.float64):
        raise ValueError(f"unsupported dtype {dtype}")
    _default_dtype = dtype.type


def get_default_dtype():
    return _default_dtype


def is_recording() -> bool:
    return getattr(_local, "recording", True)


@contextmanager
def no_grad():
    """Evaluate operations without recording them."""
    prev = is_recording()
    _local.recording = False
    try:
        yield
    finally:
        _local.recording = prev


class Tensor:
    __slots__ = ("data", "requires_grad", "parents", "vjp", "op")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data)
        if arr.dtype != _default_dtype and not (
            isinstance(data, np.ndarray) and arr.dtype.kind == "f"
        ):
            arr = arr.astype(_default_dtype)
        self.data = arr
        self.requires_grad = requires_grad
        self.parents: tuple[Tensor, ...] = ()
        self.vjp: Callable | None = None
        self.op = "leaf"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> Tensor:
        return Tensor(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, op={self.op}{flag})"

    def __len__(self) -> int:
        return len(self.data)

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return getitem(self, key)

    def sum(self, axis=None, keepdims: bool = False) -> Tensor:
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> Tensor:
        return mean(self, axis, keepdims)

    def reshape(self, *shape) -> Tensor:
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def swapaxes(self, a1: int, a2: int) -> Tensor:
        return swapaxes(self, a1, a2)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data: np.ndarray, parents: tuple[Tensor, ...], vjp: Callable, op: str) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.requires_grad = False
    out.parents = ()
    out.vjp = None
    out.op = op
    if is_recording() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.parents = parents
        out.vjp = vjp
    return out


def _sum_to_array(x: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if x.shape == shape:
        return x
    lead = x.ndim - len(shape)
    axes = tuple(range(lead)) + tuple(
        i + lead for i, n in enumerate(shape) if n == 1 and x.shape[i + lead] != 1
    )
    out = x.sum(axis=axes, keepdims=True)
    return out.reshape(shape)


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: cannot broadcast shapes {a.shape} and {b.shape}") from None


# -- shape plumbing ---------------------------------------------------------


def sum_to(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    """Sum broadcast dimensions away so that ``x`` takes ``shape``."""
    shape = tuple(shape)
    if x.shape == shape:
        return x
    return _node(_sum_to_array(x.data, shape), (x,), lambda g: (broadcast_to(g, x.shape),), "sum_to")


def broadcast_to(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    shape = tuple(shape)
    if x.shape == shape:
        return x
    data = np.ascontiguousarray(np.broadcast_to(x.data, shape))
    return _node(data, (x,), lambda g: (sum_to(g, x.shape),), "broadcast_to")


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    try:
        data = x.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {x.shape} into {tuple(shape)}") from None
    return _node(data, (x,), lambda g: (reshape(g, x.shape),), "reshape")


def swapaxes(x: Tensor, a1: int, a2: int) -> Tensor:
    data = np.swapaxes(x.data, a1, a2)
    return _node(data, (x,), lambda g: (swapaxes(g, a1, a2),), "swapaxes")


def _is_basic_index(key) -> bool:
    keys = key if isinstance(key, tuple) else (key,)
    return all(k is Ellipsis or k is None or isinstance(k, (slice, int, np.integer)) for k in keys)


def getitem(x: Tensor, key) -> Tensor:
    data = x.data[key]
    if not isinstance(data, np.ndarray):
        data = np.asarray(data)
    return _node(data, (x,), lambda g: (embed(g, key, x.shape),), "getitem")


def embed(x: Tensor, key, shape: tuple[int, ...]) -> Tensor:
    """Place ``x`` at ``key`` inside a zero tensor of ``shape`` (adjoint of indexing)."""
    out = np.zeros(shape, dtype=x.data.dtype)
    if _is_basic_index(key):
        out[key] = x.data
    else:
        np.add.at(out, key, x.data)
    return _node(out, (x,), lambda g: (getitem(g, key),), "embed")


def concat(xs: Sequence[Tensor], axis: int = 0) -> Tensor:
    xs = [as_tensor(x) for x in xs]
    data = np.concatenate([x.data for x in xs], axis=axis)
    ax = axis % data.ndim
    bounds = np.cumsum([0] + [x.shape[ax] for x in xs])

    def vjp(g):
        out = []
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            key = (slice(None),) * ax + (slice(int(lo), int(hi)),)
            out.append(getitem(g, key))
        return tuple(out)

    return _node(data, tuple(xs), vjp, "concat")


def pad1d(x: Tensor, left: int, right: int) -> Tensor:
    """Zero-pad the last axis."""
    if left == 0 and right == 0:
        return x
    length = x.shape[-1]
    shape = x.shape[:-1] + (length + left + right,)
    return embed(x, (Ellipsis, slice(left, left + length)), shape)


def unfold1d(x: Tensor, kernel: int, stride: int) -> Tensor:
    """Extract sliding windows of the last axis: ``out[..., k, t] = x[..., t*stride + k]``."""
    length = x.shape[-1]
    if kernel > length:
        raise ShapeError(f"unfold1d: kernel {kernel} longer than input of shape {x.shape}")
    windows = np.lib.stride_tricks.sliding_window_view(x.data, kernel, axis=-1)[..., ::stride, :]
    data = np.ascontiguousarray(np.swapaxes(windows, -1, -2))
    return _node(data, (x,), lambda g: (fold1d(g, stride, length),), "unfold1d")


def fold1d(cols: Tensor, stride: int, length: int) -> Tensor:
    """Overlap-add windows back onto an axis of ``length`` (adjoint of :func:`unfold1d`)."""
    kernel, n_out = cols.shape[-2], cols.shape[-1]
    if (n_out - 1) * stride + kernel > length:
        raise ShapeError(f"fold1d: windows of shape {cols.shape} do not fit length {length}")
    out = np.zeros(cols.shape[:-2] + (length,), dtype=cols.data.dtype)
    span = stride * (n_out - 1) + 1
    for k in range(kernel):
        out[..., k : k + span : stride] += cols.data[..., k, :]
    return _node(out, (cols,), lambda g: (unfold1d(g, kernel, stride),), "fold1d")


# -- arithmetic -------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")
    return _node(
        a.data + b.data, (a, b), lambda g: (sum_to(g, a.shape), sum_to(g, b.shape)), "add"
    )


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "sub")
    return _node(
        a.data - b.data, (a, b), lambda g: (sum_to(g, a.shape), sum_to(-g, b.shape)), "sub"
    )


def neg(a: Tensor) -> Tensor:
    return _node(-a.data, (a,), lambda g: (-g,), "neg")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "mul")
    return _node(
        a.data * b.data,
        (a, b),
        lambda g: (sum_to(g * b, a.shape), sum_to(g * a, b.shape)),
        "mul",
    )


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "div")
    return _node(
        a.data / b.data,
        (a, b),
        lambda g: (sum_to(g / b, a.shape), sum_to(-g * a / (b * b), b.shape)),
        "div",
    )


def power(x: Tensor, p: float) -> Tensor:
    p = float(p)
    if p == 2.0:
        return x * x
    return _node(x.data**p, (x,), lambda g: (g * p * power(x, p - 1.0),), "power")


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    try:
        data = np.matmul(a.data, b.data)
    except ValueError:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}") from None

    def vjp(g):
        ga = sum_to(matmul(g, swapaxes(b, -1, -2)), a.shape)
        gb = sum_to(matmul(swapaxes(a, -1, -2), g), b.shape)
        return ga, gb

    return _node(data, (a, b), vjp, "matmul")


def tsum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    data = np.sum(x.data, axis=axis, keepdims=keepdims)
    if not isinstance(data, np.ndarray):
        data = np.asarray(data, dtype=x.data.dtype)

    def vjp(g):
        if axis is None:
            kshape = (1,) * x.ndim
        else:
            axes = (axis,) if isinstance(axis, int) else tuple(axis)
            axes = {a % x.ndim for a in axes}
            kshape = tuple(1 if i in axes else n for i, n in enumerate(x.shape))
        return (broadcast_to(reshape(g, kshape), x.shape),)

    return _node(data, (x,), vjp, "sum")


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        n = x.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        n = int(np.prod([x.shape[a] for a in axes]))
    return tsum(x, axis, keepdims) * (1.0 / n)


# -- elementwise nonlinearities --------------------------------------------


def exp(x: Tensor) -> Tensor:
    out = _node(np.exp(x.data), (x,), lambda g: (g * out,), "exp")
    return out


def log(x: Tensor) -> Tensor:
    return _node(np.log(x.data), (x,), lambda g: (g / x,), "log")


def sqrt(x: Tensor) -> Tensor:
    out = _node(np.sqrt(x.data), (x,), lambda g: (g * 0.5 / out,), "sqrt")
    return out


def tanh(x: Tensor) -> Tensor:
    out = _node(np.tanh(x.data), (x,), lambda g: (g * (1.0 - out * out),), "tanh")
    return out


def _sigmoid_array(z: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def sigmoid(x: Tensor) -> Tensor:
    out = _node(_sigmoid_array(x.data), (x,), lambda g: (g * out * (1.0 - out),), "sigmoid")
    return out


def softplus(x: Tensor) -> Tensor:
    return _node(np.logaddexp(0.0, x.data), (x,), lambda g: (g * sigmoid(x),), "softplus")


def relu(x: Tensor) -> Tensor:
    mask = (x.data > 0).astype(x.data.dtype)
    return _node(x.data * mask, (x,), lambda g: (g * Tensor(mask),), "relu")


def tabs(x: Tensor) -> Tensor:
    sign = np.sign(x.data)
    return _node(np.abs(x.data), (x,), lambda g: (g * Tensor(sign),), "abs")


# -- reductions and losses --------------------------------------------------


def l2_norm(x: Tensor) -> Tensor:
    """Euclidean norm of all entries; the gradient at zero is taken as zero."""
    n = np.sqrt(np.sum(x.data * x.data))

    def vjp(g):
        if out.data == 0:
            return (Tensor(np.zeros(x.shape, dtype=x.data.dtype)),)
        return (g * x / out,)

    out = _node(np.asarray(n, dtype=x.data.dtype), (x,), vjp, "l2_norm")
    return out


def global_norm(xs: Iterable[Tensor]) -> Tensor:
    """Joint Euclidean norm of a collection of tensors."""
    xs = list(xs)
    flat = concat([reshape(x, (x.size,)) for x in xs], axis=0)
    return l2_norm(flat)


def bce_loss(p, target) -> Tensor:
    """Mean binary cross-entropy of probabilities ``p`` against ``target``."""
    p, target = as_tensor(p), as_tensor(target)
    return -mean(target * log(p) + (1.0 - target) * log(1.0 - p))


def bce_with_logits(z, target) -> Tensor:
    """Binary cross-entropy evaluated from logits; equals ``bce_loss(sigmoid(z), target)``."""
    z, target = as_tensor(z), as_tensor(target)
    # split form keeps the gradient of a saturated correct logit from rounding to 0
    return mean(target * softplus(-z) + (1.0 - target) * softplus(z))


# -- differentiation --------------------------------------------------------


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
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def grad(loss: Tensor, params: Sequence[Tensor], create_graph: bool = False) -> list[Tensor]:
    """Gradients of a scalar ``loss`` with respect to each tensor in ``params``.

    Parameters not connected to ``loss`` get a zero gradient. With
    ``create_graph=True`` the backward pass is recorded, so the returned
    gradients can be differentiated again.
    """
    if loss.size != 1:
        raise ShapeError(f"grad: loss must be scalar, got shape {loss.shape}")
    params = list(params)
    grads: dict[int, Tensor] = {}
    if loss.requires_grad:
        grads[id(loss)] = Tensor(np.ones_like(loss.data))
        ctx = nullcontext() if create_graph else no_grad()
        with ctx:
            for node in reversed(_toposort(loss)):
                g = grads.get(id(node))
                if g is None or node.vjp is None:
                    continue
                for parent, pg in zip(node.parents, node.vjp(g)):
                    if pg is None or not parent.requires_grad:
                        continue
                    key = id(parent)
                    grads[key] = pg if key not in grads else grads[key] + pg
    out = []
    for p in params:
        g = grads.get(id(p))
        if g is None:
            g = Tensor(np.zeros(p.shape, dtype=p.data.dtype))
        elif g.shape != p.shape:
            g = sum_to(g, p.shape)
        out.append(g)
    return out


def grad_of_gradnorm(loss: Tensor, params: Sequence[Tensor]) -> tuple[float, list[Tensor]]:
    """Return ``||d loss/d params||_2`` and its gradient with respect to ``params``.

    ``loss`` must have been built from ``params`` with recording enabled. The
    second-order term comes from differentiating the recorded backward pass
    (Hessian-vector products). A zero gradient norm yields zero gradients.
    """
    params = list(params)
    first = grad(loss, params, create_graph=True)
    norm = global_norm(first)
    return float(norm.data), grad(norm, params)


def grad_of_gradnorm_fd(
    loss_fn: Callable[[list[Tensor]], Tensor],
    arrays: Sequence[np.ndarray],
    step: float = 1e-5,
) -> tuple[float, list[np.ndarray]]:
    """Finite-difference counterpart of :func:`grad_of_gradnorm`.

    Uses ``d||g||/d theta = H g / ||g||`` with the Hessian-vector product taken
    as a central difference of gradients along the unit gradient direction.
    Only first-order backward passes are needed.
    """

    def gradients(arrs):
        ps = [Tensor(a, requires_grad=True) for a in arrs]
        return [g.data for g in grad(loss_fn(ps), ps)]

    g0 = gradients(arrays)
    norm = float(np.sqrt(sum(np.sum(g * g) for g in g0)))
    if norm == 0.0:
        return 0.0, [np.zeros_like(a) for a in arrays]
    direction = [g / norm for g in g0]
    plus = gradients([a + step * d for a, d in zip(arrays, direction)])
    minus = gradients([a - step * d for a, d in zip(arrays, direction)])
    return norm, [(gp - gm) / (2.0 * step) for gp, gm in zip(plus, minus)]
