"""Layer functions built from tensor primitives, plus parameter initializers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import (
    ShapeError,
    Tensor,
    as_tensor,
    fold1d,
    getitem,
    matmul,
    pad1d,
    reshape,
    sigmoid,
    swapaxes,
    tanh,
    unfold1d,
)


def conv_out_len(length: int, kernel: int, stride: int = 1, padding: int = 0) -> int:
    return (length + 2 * padding - kernel) // stride + 1


def conv_transpose_out_len(length: int, kernel: int, stride: int = 1, padding: int = 0) -> int:
    return (length - 1) * stride - 2 * padding + kernel


def conv1d(x, weight, bias=None, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation of ``x`` (N, C_in, L) with ``weight`` (C_out, C_in, K)."""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 3 or weight.ndim != 3 or x.shape[1] != weight.shape[1]:
        raise ShapeError(f"conv1d: input {x.shape} incompatible with weight {weight.shape}")
    n, c_in, length = x.shape
    c_out, _, k = weight.shape
    if conv_out_len(length, k, stride, padding) < 1:
        raise ShapeError(f"conv1d: input {x.shape} too short for weight {weight.shape}")
    cols = unfold1d(pad1d(x, padding, padding), k, stride)
    cols = reshape(cols, (n, c_in * k, cols.shape[-1]))
    out = matmul(reshape(weight, (c_out, c_in * k)), cols)
    if bias is not None:
        out = out + reshape(as_tensor(bias), (1, c_out, 1))
    return out


def conv1d_transpose(x, weight, bias=None, stride: int = 1, padding: int = 0) -> Tensor:
    """Transposed convolution of ``x`` (N, C_in, L) with ``weight`` (C_in, C_out, K)."""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 3 or weight.ndim != 3 or x.shape[1] != weight.shape[0]:
        raise ShapeError(
            f"conv1d_transpose: input {x.shape} incompatible with weight {weight.shape}"
        )
    n, c_in, length = x.shape
    _, c_out, k = weight.shape
    full = (length - 1) * stride + k
    if full - 2 * padding < 1:
        raise ShapeError(f"conv1d_transpose: padding {padding} too large for input {x.shape}")
    cols = matmul(swapaxes(reshape(weight, (c_in, c_out * k)), 0, 1), x)
    out = fold1d(reshape(cols, (n, c_out, k, length)), stride, full)
    if padding:
        out = getitem(out, (Ellipsis, slice(padding, full - padding)))
    if bias is not None:
        out = out + reshape(as_tensor(bias), (1, c_out, 1))
    return out


def linear(x, weight, bias=None) -> Tensor:
    """``x @ weight.T + bias`` with ``weight`` shaped (out, in)."""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.shape[-1] != weight.shape[-1]:
        raise ShapeError(f"linear: input {x.shape} incompatible with weight {weight.shape}")
    out = matmul(x, swapaxes(weight, 0, 1))
    if bias is not None:
        out = out + bias
    return out


def lstm_cell(x, h, c, w_ih, w_hh, b_ih, b_hh) -> tuple[Tensor, Tensor]:
    """One LSTM step with gates stacked in (input, forget, cell, output) order."""
    hidden = h.shape[-1]
    gates = linear(x, w_ih, b_ih) + linear(h, w_hh, b_hh)
    i = sigmoid(getitem(gates, (Ellipsis, slice(0, hidden))))
    f = sigmoid(getitem(gates, (Ellipsis, slice(hidden, 2 * hidden))))
    g = tanh(getitem(gates, (Ellipsis, slice(2 * hidden, 3 * hidden))))
    o = sigmoid(getitem(gates, (Ellipsis, slice(3 * hidden, 4 * hidden))))
    c_next = f * c + i * g
    return o * tanh(c_next), c_next


# -- initialization ---------------------------------------------------------


def uniform_init(rng: np.random.Generator, shape, fan_in: int, dtype=np.float64) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


# -- spectral normalization -------------------------------------------------


@dataclass(frozen=True)
class PowerIterState:
    """Persistent left/right singular vector estimates for one weight."""

    u: np.ndarray
    v: np.ndarray

    @classmethod
    def random(cls, rng: np.random.Generator, rows: int, cols: int) -> PowerIterState:
        u = rng.standard_normal(rows)
        v = rng.standard_normal(cols)
        return cls(u / np.linalg.norm(u), v / np.linalg.norm(v))


def _unit(x: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(x)
    return x / n if n > 0 else x


def power_iterate(w: np.ndarray, state: PowerIterState, iters: int = 1) -> PowerIterState:
    mat = w.reshape(w.shape[0], -1)
    u, v = state.u, state.v
    for _ in range(iters):
        v = _unit(mat.T @ u)
        u = _unit(mat @ v)
    return PowerIterState(u, v)


def spectral_normalize(
    weight, state: PowerIterState, power_iters: int = 1
) -> tuple[Tensor, PowerIterState]:
    """Divide ``weight`` by its top singular value estimated by power iteration.

    The weight is viewed as a matrix (rows = first axis). ``power_iters``
    refinement steps are applied to ``state`` first; pass 0 to reuse the
    current estimate unchanged. The singular vectors are treated as constants,
    so gradients flow only through the weight. An all-zero weight is returned
    as is.
    """
    weight = as_tensor(weight)
    if power_iters:
        state = power_iterate(weight.data, state, power_iters)
    mat = reshape(weight, (weight.shape[0], -1))
    u = Tensor(state.u.reshape(1, -1).astype(weight.data.dtype))
    v = Tensor(state.v.reshape(-1, 1).astype(weight.data.dtype))
    sigma = matmul(matmul(u, mat), v)
    if sigma.data.item() == 0.0:
        return weight, state
    return weight / reshape(sigma, (1,) * weight.ndim), state
