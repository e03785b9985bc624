"""LSTM forecaster used to score synthetic curves.

The forecaster reads a curve in blocks of 24 points, carries its cell state
along the curve, and after each block predicts the next 24 points through a
linear layer and tanh. The LSTM score is the test MSE of a forecaster trained
on artificial curves minus that of an identical one trained on natural
curves.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import ndtensor as nt
from .curves import Curve, stack
from .errors import DomainError
from .ndtensor import AdamState, Tensor, TrainingError

BLOCK = 24


@dataclass(frozen=True)
class ForecasterArchitecture:
    block: int = BLOCK
    hidden: int = 12

    @classmethod
    def preset(cls, scale: str) -> ForecasterArchitecture:
        # paper scale: 4*48*(24+48) + 8*48 + 48*24 + 24 = 15384 parameters
        if scale == "paper":
            return cls(hidden=48)
        if scale == "desk":
            return cls(hidden=12)
        raise DomainError(f"unknown scale {scale!r}")

    def n_params(self) -> int:
        h, b = self.hidden, self.block
        return 4 * h * (b + h) + 8 * h + b * h + b


@dataclass(frozen=True)
class ForecastTrainConfig:
    epochs: int = 40
    lr: float = 1e-4
    batch_size: int = 50
    # weights on |mean|, |2nd|, |3rd|, |4th central moment| differences
    stat_loss_weights: tuple[float, float, float, float] = (1.0, 1.0, 1.0, 1.0)
    seed: int = 0
    train_stride: int = 1

    def __post_init__(self):
        object.__setattr__(self, "stat_loss_weights", tuple(float(w) for w in self.stat_loss_weights))
        if len(self.stat_loss_weights) != 4:
            raise DomainError("stat_loss_weights needs 4 entries (mean, m2, m3, m4)")
        if not all(math.isfinite(w) and w >= 0 for w in self.stat_loss_weights):
            raise DomainError("stat_loss_weights must be finite and nonnegative")
        if self.epochs < 0 or self.batch_size < 1 or self.train_stride < 1:
            raise DomainError("epochs >= 0, batch_size >= 1 and train_stride >= 1 required")


@dataclass(frozen=True)
class ForecasterModel:
    arch: ForecasterArchitecture
    params: dict[str, np.ndarray]
    opt: AdamState = field(default_factory=AdamState)

    def predict(self, blocks: np.ndarray) -> np.ndarray:
        """Given (N, B, block) inputs, return (N, B, block) next-block predictions."""
        with nt.no_grad():
            preds = _unroll(self.arch, _tensors(self.params), Tensor(blocks))
        return np.stack([p.data for p in preds], axis=1)


def init_forecaster(arch: ForecasterArchitecture, seed: int) -> ForecasterModel:
    rng = np.random.default_rng(seed)
    h, b = arch.hidden, arch.block
    dtype = nt.get_default_dtype()
    params = {
        "w_ih": nt.uniform_init(rng, (4 * h, b), h, dtype),
        "w_hh": nt.uniform_init(rng, (4 * h, h), h, dtype),
        "b_ih": nt.uniform_init(rng, (4 * h,), h, dtype),
        "b_hh": nt.uniform_init(rng, (4 * h,), h, dtype),
        "head.w": nt.uniform_init(rng, (b, h), h, dtype),
        "head.b": nt.uniform_init(rng, (b,), h, dtype),
    }
    return ForecasterModel(arch, params)


def _tensors(params, requires_grad=False):
    return {k: Tensor(v, requires_grad=requires_grad) for k, v in params.items()}


def _unroll(arch: ForecasterArchitecture, p: dict[str, Tensor], blocks: Tensor) -> list[Tensor]:
    n, n_blocks, _ = blocks.shape
    dtype = blocks.data.dtype
    h = Tensor(np.zeros((n, arch.hidden), dtype=dtype))
    c = Tensor(np.zeros((n, arch.hidden), dtype=dtype))
    preds = []
    for t in range(n_blocks):
        x = blocks[:, t, :]
        h, c = nt.lstm_cell(x, h, c, p["w_ih"], p["w_hh"], p["b_ih"], p["b_hh"])
        preds.append(nt.tanh(nt.linear(h, p["head.w"], p["head.b"])))
    return preds


def _moments(x: Tensor) -> list[Tensor]:
    mu = x.mean(axis=-1, keepdims=True)
    d = x - mu
    d2 = d * d
    return [mu, d2.mean(axis=-1, keepdims=True), (d2 * d).mean(axis=-1, keepdims=True),
            (d2 * d2).mean(axis=-1, keepdims=True)]


def forecast_loss(pred: Tensor, truth, weights: Sequence[float]) -> Tensor:
    """MSE plus weighted mean absolute differences of per-block mean and
    2nd/3rd/4th central moments."""
    truth = nt.as_tensor(truth)
    diff = pred - truth
    loss = (diff * diff).mean()
    if any(weights):
        for w, sp, st in zip(weights, _moments(pred), _moments(truth)):
            if w:
                loss = loss + w * nt.tabs(sp - st).mean()
    return loss


def _blocks(curves: np.ndarray, offset: int, n_blocks: int, block: int) -> np.ndarray:
    seg = curves[:, offset : offset + n_blocks * block]
    return seg.reshape(len(curves), n_blocks, block)


def training_sequences(curves: Sequence[Curve], block: int = BLOCK, stride: int = 1) -> np.ndarray:
    """Block sequences (S, B, block) starting at every ``stride``-th offset
    within the first block, truncated to a common block count."""
    x = stack(curves)
    length = x.shape[1]
    offsets = list(range(0, block, stride))
    n_blocks = (length - offsets[-1]) // block
    if n_blocks < 2:
        raise DomainError(f"curves of length {length} are too short for {block}-point forecasting")
    return np.concatenate([_blocks(x, off, n_blocks, block) for off in offsets], axis=0)


def train_forecaster(
    curves: Sequence[Curve],
    config: ForecastTrainConfig,
    arch: ForecasterArchitecture | None = None,
) -> ForecasterModel:
    if not curves:
        raise DomainError("train_forecaster needs at least one curve")
    arch = arch or ForecasterArchitecture()
    model = init_forecaster(arch, config.seed)
    seqs = training_sequences(curves, arch.block, config.train_stride).astype(nt.get_default_dtype())
    rng = np.random.default_rng(config.seed)
    opt = AdamState(lr=config.lr)
    params = model.params
    names = list(params)
    for epoch in range(config.epochs):
        order = rng.permutation(len(seqs))
        for b, lo in enumerate(range(0, len(seqs), config.batch_size)):
            batch = seqs[order[lo : lo + config.batch_size]]
            p = _tensors(params, requires_grad=True)
            preds = _unroll(arch, p, Tensor(batch[:, :-1, :]))
            pred = nt.concat([q.reshape(q.shape[0], 1, arch.block) for q in preds], axis=1)
            loss = forecast_loss(pred, batch[:, 1:, :], config.stat_loss_weights)
            if not np.isfinite(loss.data):
                raise TrainingError(f"forecaster: non-finite loss at epoch {epoch}, batch {b}")
            grads = nt.grad(loss, [p[k] for k in names])
            params, opt = nt.adam_step(opt, params, {k: g.data for k, g in zip(names, grads)})
    return replace(model, params=params, opt=opt)


def _canonical(curves: Sequence[Curve]) -> np.ndarray:
    x = stack(curves)
    keys = sorted(range(len(curves)), key=lambda i: (curves[i].household_id, x[i].tobytes()))
    return x[keys]


def evaluate_forecaster(model, test_curves: Sequence[Curve], block: int = BLOCK) -> float:
    """Mean squared error over all non-overlapping next-block predictions.

    ``model`` needs a ``predict(blocks)`` method. Curves are put in a
    canonical order first, so the result does not depend on input order.
    """
    if not test_curves:
        raise DomainError("evaluate_forecaster needs test curves")
    x = _canonical(test_curves)
    n_blocks = x.shape[1] // block
    if n_blocks < 2:
        raise DomainError(f"test curves of length {x.shape[1]} allow no {block}-point prediction")
    blocks = _blocks(x, 0, n_blocks, block)
    pred = np.asarray(model.predict(blocks[:, :-1, :]))
    err = pred - blocks[:, 1:, :]
    return float(np.mean(err * err))


def lstm_score(
    member_curves: Sequence[Curve],
    artificial_curves: Sequence[Curve],
    test_curves: Sequence[Curve],
    config: ForecastTrainConfig,
    arch: ForecasterArchitecture | None = None,
) -> float:
    """Test MSE when trained on artificial curves minus test MSE when trained
    on natural curves; identical architecture, config and seed for both."""
    if not member_curves or not artificial_curves or not test_curves:
        raise DomainError("lstm_score needs non-empty member, artificial and test sets")
    natural = train_forecaster(member_curves, config, arch)
    fake = train_forecaster(artificial_curves, config, arch)
    return evaluate_forecaster(fake, test_curves) - evaluate_forecaster(natural, test_curves)


def write_forecast_csv(path, model: ForecasterModel, curve: Curve, block: int = BLOCK) -> None:
    """Joined next-block predictions for one curve as ``t,truth,prediction`` rows."""
    n_blocks = len(curve) // block
    blocks = curve.values[: n_blocks * block].reshape(1, n_blocks, block)
    pred = model.predict(blocks[:, :-1, :]).reshape(-1)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "truth", "prediction"])
        for i, p in enumerate(pred):
            t = block + i
            w.writerow([t, repr(float(curve.values[t])), repr(float(p))])
