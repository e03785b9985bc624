"""1-D convolutional GAN for load curves.

The generator maps a standard-normal latent vector through fully connected
layers and a stack of transposed convolutions to a curve in [-1, 1]. The
discriminator is a stack of strided convolutions and fully connected layers,
all spectrally normalized, ending in a sigmoid.

Parameters live in plain ``dict[str, np.ndarray]`` maps; forward functions
take the same names mapped to :class:`~gpa.ndtensor.Tensor` so that callers
choose which side is differentiated.
"""

from __future__ import annotations

import csv
import hashlib
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import ndtensor as nt
from .curves import Curve, NormalizationRecord, Scale, stack
from .errors import DomainError
from .ndtensor import AdamState, PowerIterState, Tensor, TrainingError

logger = logging.getLogger(__name__)

SCENARIOS = ("diff_lr", "same_lr", "regularized")
INIT_POWER_ITERS = 15
_SCENARIO_PRESETS = {
    "diff_lr": dict(lr_generator=1e-4, lr_discriminator=1e-5, eta=0.0),
    "same_lr": dict(lr_generator=1e-4, lr_discriminator=1e-4, eta=0.0),
    "regularized": dict(lr_generator=1e-4, lr_discriminator=1e-4, eta=1e-2),
}


@dataclass(frozen=True)
class GanArchitecture:
    """Layer layout shared by generator and discriminator.

    Generator: ``latent -> g_hidden... -> g_channels[0] * g_base_len`` (fully
    connected, ReLU), reshaped to channels and upsampled by one transposed
    convolution per entry of ``g_channels`` down to a single tanh channel.
    Discriminator: one strided convolution per entry of ``d_channels`` (ReLU),
    flattened, then ``d_hidden`` fully connected layers and a scalar output.
    ``width`` scales every channel count and hidden size.
    """

    latent_dim: int = 8
    curve_len: int = 96
    g_hidden: tuple[int, ...] = (32,)
    g_base_len: int = 12
    g_channels: tuple[int, ...] = (32, 32, 16)
    d_channels: tuple[int, ...] = (16, 32, 32)
    d_hidden: tuple[int, ...] = (64,)
    kernel: int = 4
    stride: int = 2
    padding: int = 1
    width: float = 1.0

    def __post_init__(self):
        for name in ("g_hidden", "g_channels", "d_channels", "d_hidden"):
            object.__setattr__(self, name, tuple(int(v) for v in getattr(self, name)))
        if self.latent_dim < 1 or self.curve_len < 1:
            raise DomainError("latent_dim and curve_len must be positive")
        if not self.g_channels or not self.d_channels:
            raise DomainError("generator and discriminator need at least one convolution")
        if self.generator_out_len() != self.curve_len:
            raise DomainError(
                f"generator produces length {self.generator_out_len()}, expected {self.curve_len}"
            )
        if self.discriminator_feature_len() < 1:
            raise DomainError("discriminator convolutions shrink the curve to nothing")

    @classmethod
    def desk(cls) -> GanArchitecture:
        return cls()

    @classmethod
    def paper(cls) -> GanArchitecture:
        return cls(
            latent_dim=42,
            curve_len=672,
            g_hidden=(236,),
            g_base_len=21,
            g_channels=(192, 128, 128, 48, 48),
            d_channels=(16, 16, 128, 192, 256),
            d_hidden=(156,),
        )

    @classmethod
    def preset(cls, scale: str) -> GanArchitecture:
        if scale == "desk":
            return cls.desk()
        if scale == "paper":
            return cls.paper()
        raise DomainError(f"unknown scale {scale!r}")

    def _w(self, n: int) -> int:
        return max(1, int(round(n * self.width)))

    @property
    def gen_hidden(self) -> list[int]:
        return [self._w(h) for h in self.g_hidden]

    @property
    def gen_channels(self) -> list[int]:
        return [self._w(c) for c in self.g_channels] + [1]

    @property
    def disc_channels(self) -> list[int]:
        return [1] + [self._w(c) for c in self.d_channels]

    @property
    def disc_hidden(self) -> list[int]:
        return [self._w(h) for h in self.d_hidden]

    def generator_out_len(self) -> int:
        length = self.g_base_len
        for _ in self.g_channels:
            length = nt.conv_transpose_out_len(length, self.kernel, self.stride, self.padding)
        return length

    def discriminator_feature_len(self) -> int:
        length = self.curve_len
        for _ in self.d_channels:
            length = nt.conv_out_len(length, self.kernel, self.stride, self.padding)
        return length

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> GanArchitecture:
        return cls(**d)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 140
    batch_size: int = 20
    lr_generator: float = 1e-4
    lr_discriminator: float = 1e-4
    eta: float = 0.0
    seed: int = 0
    scenario: str = "same_lr"
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    checkpoint_every: int = 0
    checkpoint_dir: str | None = None
    # "exact" differentiates through the backward pass; "finite_difference"
    # approximates the Hessian-vector product for cross-checking
    penalty_mode: str = "exact"

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1:
            raise DomainError("epochs must be >= 0 and batch_size >= 1")
        if self.eta < 0:
            raise DomainError(f"eta must be nonnegative, got {self.eta}")
        if self.scenario not in SCENARIOS:
            raise DomainError(f"unknown scenario {self.scenario!r}")
        if self.penalty_mode not in ("exact", "finite_difference"):
            raise DomainError(f"unknown penalty_mode {self.penalty_mode!r}")

    @classmethod
    def for_scenario(cls, scenario: str, **overrides) -> TrainConfig:
        if scenario not in _SCENARIO_PRESETS:
            raise DomainError(f"unknown scenario {scenario!r}")
        return cls(scenario=scenario, **{**_SCENARIO_PRESETS[scenario], **overrides})

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class GanModel:
    arch: GanArchitecture
    g_params: dict[str, np.ndarray]
    d_params: dict[str, np.ndarray]
    sn_state: dict[str, PowerIterState]
    g_opt: AdamState = field(default_factory=AdamState)
    d_opt: AdamState = field(default_factory=AdamState)
    epoch: int = 0
    fingerprint: str = ""
    normalization: NormalizationRecord | None = None
    config: TrainConfig | None = None
    seed: int = 0

    @property
    def eta(self) -> float:
        return self.config.eta if self.config is not None else 0.0

    def n_generator_params(self) -> int:
        return sum(p.size for p in self.g_params.values())

    def n_discriminator_params(self) -> int:
        return sum(p.size for p in self.d_params.values())


def training_fingerprint(curves: Sequence[Curve]) -> str:
    """SHA-256 over the sorted distinct household ids of a training set
    (over the raw bytes when given a bare array)."""
    if isinstance(curves, np.ndarray):
        return hashlib.sha256(np.ascontiguousarray(curves).tobytes()).hexdigest()
    ids = sorted({c.household_id for c in curves})
    return hashlib.sha256("\n".join(ids).encode("utf-8")).hexdigest()


# -- parameters -------------------------------------------------------------


def init_model(
    arch: GanArchitecture, seed: int = 0, normalization: NormalizationRecord | None = None
) -> GanModel:
    rng = np.random.default_rng(seed)
    dtype = nt.get_default_dtype()
    g: dict[str, np.ndarray] = {}
    fan = arch.latent_dim
    for i, h in enumerate(arch.gen_hidden):
        g[f"fc{i}.w"] = nt.uniform_init(rng, (h, fan), fan, dtype)
        g[f"fc{i}.b"] = nt.uniform_init(rng, (h,), fan, dtype)
        fan = h
    chans = arch.gen_channels
    proj = chans[0] * arch.g_base_len
    g["proj.w"] = nt.uniform_init(rng, (proj, fan), fan, dtype)
    g["proj.b"] = nt.uniform_init(rng, (proj,), fan, dtype)
    for i, (cin, cout) in enumerate(zip(chans[:-1], chans[1:])):
        fan_in = cout * arch.kernel
        g[f"up{i}.w"] = nt.uniform_init(rng, (cin, cout, arch.kernel), fan_in, dtype)
        g[f"up{i}.b"] = nt.uniform_init(rng, (cout,), fan_in, dtype)

    d: dict[str, np.ndarray] = {}
    sn: dict[str, PowerIterState] = {}
    chans = arch.disc_channels
    for i, (cin, cout) in enumerate(zip(chans[:-1], chans[1:])):
        fan_in = cin * arch.kernel
        d[f"conv{i}.w"] = nt.uniform_init(rng, (cout, cin, arch.kernel), fan_in, dtype)
        d[f"conv{i}.b"] = nt.uniform_init(rng, (cout,), fan_in, dtype)
        sn[f"conv{i}"] = PowerIterState.random(rng, cout, cin * arch.kernel)
    fan = chans[-1] * arch.discriminator_feature_len()
    for i, h in enumerate(arch.disc_hidden + [1]):
        name = f"fc{i}" if i < len(arch.disc_hidden) else "out"
        d[f"{name}.w"] = nt.uniform_init(rng, (h, fan), fan, dtype)
        d[f"{name}.b"] = nt.uniform_init(rng, (h,), fan, dtype)
        sn[name] = PowerIterState.random(rng, h, fan)
        fan = h
    # random vectors give a meaningless (even negative) norm estimate
    sn = {k: nt.power_iterate(d[f"{k}.w"], st, INIT_POWER_ITERS) for k, st in sn.items()}
    return GanModel(arch, g, d, sn, normalization=normalization, seed=seed)


def as_tensors(params: dict[str, np.ndarray], requires_grad: bool = False) -> dict[str, Tensor]:
    return {k: Tensor(v, requires_grad=requires_grad) for k, v in params.items()}


# -- forward passes ---------------------------------------------------------


def generator_forward(arch: GanArchitecture, g: dict[str, Tensor], z: Tensor) -> Tensor:
    """Map latent vectors (N, latent_dim) to curves (N, curve_len)."""
    h = z
    for i in range(len(arch.g_hidden)):
        h = nt.relu(nt.linear(h, g[f"fc{i}.w"], g[f"fc{i}.b"]))
    h = nt.relu(nt.linear(h, g["proj.w"], g["proj.b"]))
    h = h.reshape(h.shape[0], arch.gen_channels[0], arch.g_base_len)
    n_up = len(arch.g_channels)
    for i in range(n_up):
        h = nt.conv1d_transpose(h, g[f"up{i}.w"], g[f"up{i}.b"], arch.stride, arch.padding)
        h = nt.relu(h) if i < n_up - 1 else nt.tanh(h)
    return h.reshape(h.shape[0], arch.curve_len)


def discriminator_logits(
    arch: GanArchitecture,
    d: dict[str, Tensor],
    sn_state: dict[str, PowerIterState],
    x,
    power_iters: int = 0,
) -> tuple[Tensor, dict[str, PowerIterState]]:
    """Logits (N,) for curves (N, curve_len), with spectral normalization on
    every weight. Returns the (possibly refined) power-iteration state."""
    x = nt.as_tensor(x)
    if x.ndim != 2 or x.shape[1] != arch.curve_len:
        raise DomainError(f"discriminator expects curves of length {arch.curve_len}, got shape {x.shape}")
    new_state = {}

    def weight(name):
        w, new_state[name] = nt.spectral_normalize(d[f"{name}.w"], sn_state[name], power_iters)
        return w

    h = x.reshape(x.shape[0], 1, arch.curve_len)
    for i in range(len(arch.d_channels)):
        h = nt.relu(nt.conv1d(h, weight(f"conv{i}"), d[f"conv{i}.b"], arch.stride, arch.padding))
    h = h.reshape(h.shape[0], -1)
    for i in range(len(arch.d_hidden)):
        h = nt.relu(nt.linear(h, weight(f"fc{i}"), d[f"fc{i}.b"]))
    out = nt.linear(h, weight("out"), d["out.b"])
    return out.reshape(out.shape[0]), new_state


def _as_batch(curves) -> np.ndarray:
    if isinstance(curves, np.ndarray):
        return np.atleast_2d(curves)
    return stack(list(curves))


def latent(n: int, latent_dim: int, rng: np.random.Generator) -> np.ndarray:
    return rng.standard_normal((n, latent_dim)).astype(nt.get_default_dtype())


def generate_array(model: GanModel, z: np.ndarray, chunk: int = 256) -> np.ndarray:
    g = as_tensors(model.g_params)
    out = []
    with nt.no_grad():
        for lo in range(0, len(z), chunk):
            out.append(generator_forward(model.arch, g, Tensor(z[lo : lo + chunk])).data)
    return np.concatenate(out, axis=0)


def generate(model: GanModel, n: int, seed: int) -> list[Curve]:
    """``n`` normalized curves from standard-normal latents drawn under ``seed``."""
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    z = latent(n, model.arch.latent_dim, np.random.default_rng(seed))
    return [Curve(f"gen-{i:06d}", row, Scale.NORMALIZED) for i, row in enumerate(generate_array(model, z))]


def discriminate(model: GanModel, curves, chunk: int = 256) -> np.ndarray:
    """Discriminator probability that each curve is natural."""
    x = _as_batch(curves)
    d = as_tensors(model.d_params)
    logits = []
    with nt.no_grad():
        for lo in range(0, len(x), chunk):
            lg, _ = discriminator_logits(model.arch, d, model.sn_state, x[lo : lo + chunk])
            logits.append(lg.data)
    return nt.tensor._sigmoid_array(np.concatenate(logits))


# -- losses -----------------------------------------------------------------


def d_loss_tensor(
    arch: GanArchitecture,
    d: dict[str, Tensor],
    sn_state: dict[str, PowerIterState],
    real: np.ndarray,
    fake: np.ndarray,
) -> Tensor:
    """Cross-entropy of real curves against label 1 plus fakes against label 0
    (mean over each half, then summed)."""
    real_logits, _ = discriminator_logits(arch, d, sn_state, real)
    fake_logits, _ = discriminator_logits(arch, d, sn_state, fake)
    return nt.bce_with_logits(real_logits, 1.0) + nt.bce_with_logits(fake_logits, 0.0)


def regularized_loss_tensor(
    arch: GanArchitecture,
    d: dict[str, Tensor],
    sn_state: dict[str, PowerIterState],
    real: np.ndarray,
    fake: np.ndarray,
    eta: float,
) -> tuple[Tensor, float]:
    """``L - eta * ||grad_theta L||_2`` with the norm kept differentiable.

    ``d`` must require gradients when ``eta > 0``. Returns the loss and the
    gradient norm; with ``eta == 0`` the plain loss is returned untouched.
    """
    if eta < 0:
        raise DomainError(f"eta must be nonnegative, got {eta}")
    loss = d_loss_tensor(arch, d, sn_state, real, fake)
    if eta == 0:
        return loss, float("nan")
    params = list(d.values())
    norm = nt.global_norm(nt.grad(loss, params, create_graph=True))
    return loss - eta * norm, float(norm.data)


def discriminator_loss(model: GanModel, real_batch, fake_batch) -> float:
    if len(real_batch) == 0 or len(fake_batch) == 0:
        raise DomainError("discriminator_loss needs non-empty batches")
    d = as_tensors(model.d_params)
    with nt.no_grad():
        loss = d_loss_tensor(model.arch, d, model.sn_state, _as_batch(real_batch), _as_batch(fake_batch))
    return float(loss.data)


def regularized_loss(model: GanModel, real_batch, fake_batch, eta: float) -> float:
    if len(real_batch) == 0 or len(fake_batch) == 0:
        raise DomainError("regularized_loss needs non-empty batches")
    d = as_tensors(model.d_params, requires_grad=eta > 0)
    loss, _ = regularized_loss_tensor(
        model.arch, d, model.sn_state, _as_batch(real_batch), _as_batch(fake_batch), eta
    )
    return float(loss.data)


def discriminator_grads(
    model: GanModel, real: np.ndarray, fake: np.ndarray, eta: float, penalty_mode: str = "exact"
) -> tuple[float, float, dict[str, np.ndarray]]:
    """Loss value, gradient norm and parameter gradients of the (regularized)
    discriminator loss at the model's current parameters."""
    names = list(model.d_params)
    d = as_tensors(model.d_params, requires_grad=True)
    params = [d[k] for k in names]
    arch, sn = model.arch, model.sn_state
    if eta > 0 and penalty_mode == "finite_difference":
        loss = d_loss_tensor(arch, d, sn, real, fake)
        base = nt.grad(loss, params)

        def loss_fn(ps):
            return d_loss_tensor(arch, dict(zip(names, ps)), sn, real, fake)

        norm, penalty = nt.grad_of_gradnorm_fd(loss_fn, [model.d_params[k] for k in names])
        grads = {k: g.data - eta * p for k, g, p in zip(names, base, penalty)}
        return float(loss.data) - eta * norm, norm, grads
    loss, norm = regularized_loss_tensor(arch, d, sn, real, fake, eta)
    grads = nt.grad(loss, params)
    return float(loss.data), norm, {k: g.data for k, g in zip(names, grads)}


def generator_loss_tensor(model: GanModel, g: dict[str, Tensor], z: np.ndarray) -> Tensor:
    """Non-saturating generator loss: cross-entropy of D(G(z)) against label 1."""
    fake = generator_forward(model.arch, g, Tensor(z))
    logits, _ = discriminator_logits(model.arch, as_tensors(model.d_params), model.sn_state, fake)
    return nt.bce_with_logits(logits, 1.0)


# -- training ---------------------------------------------------------------


@dataclass(frozen=True)
class LossRecord:
    epoch: int
    batch: int
    d_loss: float
    g_loss: float
    grad_norm_penalty: float


def refresh_spectral_state(model: GanModel, iters: int = 1) -> GanModel:
    sn = {
        name: nt.power_iterate(model.d_params[f"{name}.w"], st, iters)
        for name, st in model.sn_state.items()
    }
    return replace(model, sn_state=sn)


def train(
    model: GanModel,
    member_curves: Sequence[Curve],
    config: TrainConfig,
    on_epoch: Callable[[GanModel, int], None] | None = None,
) -> tuple[GanModel, list[LossRecord]]:
    """Alternate one discriminator and one generator Adam step per batch.

    Each step draws fresh latents. The discriminator's power-iteration vectors
    are refined once per discriminator step. Raises :class:`TrainingError`
    on a non-finite loss, naming the epoch and batch.
    """
    if len(member_curves) == 0:
        raise DomainError("train needs at least one member curve")
    data = _as_batch(member_curves).astype(nt.get_default_dtype())
    if data.shape[1] != model.arch.curve_len:
        raise DomainError(f"curves of length {data.shape[1]} do not match architecture {model.arch.curve_len}")
    rng = np.random.default_rng(config.seed)
    g_opt = model.g_opt if model.g_opt.step else AdamState(
        lr=config.lr_generator, beta1=config.beta1, beta2=config.beta2, eps=config.adam_eps
    )
    d_opt = model.d_opt if model.d_opt.step else AdamState(
        lr=config.lr_discriminator, beta1=config.beta1, beta2=config.beta2, eps=config.adam_eps
    )
    g_opt = replace(g_opt, lr=config.lr_generator)
    d_opt = replace(d_opt, lr=config.lr_discriminator)
    model = replace(
        model,
        g_opt=g_opt,
        d_opt=d_opt,
        config=config,
        fingerprint=training_fingerprint(member_curves),
    )
    log: list[LossRecord] = []
    latent_dim = model.arch.latent_dim
    for epoch in range(config.epochs):
        order = rng.permutation(len(data))
        for b, lo in enumerate(range(0, len(data), config.batch_size)):
            real = data[order[lo : lo + config.batch_size]]
            fake = generate_array(model, latent(len(real), latent_dim, rng))
            model = refresh_spectral_state(model)
            d_loss, norm, d_grads = discriminator_grads(model, real, fake, config.eta, config.penalty_mode)
            if not np.isfinite(d_loss):
                raise TrainingError(f"non-finite discriminator loss at epoch {epoch}, batch {b}")
            try:
                d_params, d_opt = nt.adam_step(model.d_opt, model.d_params, d_grads)
            except TrainingError as exc:
                raise TrainingError(f"epoch {epoch}, batch {b}: {exc}") from None
            model = replace(model, d_params=d_params, d_opt=d_opt)

            g = as_tensors(model.g_params, requires_grad=True)
            g_loss = generator_loss_tensor(model, g, latent(len(real), latent_dim, rng))
            if not np.isfinite(g_loss.data):
                raise TrainingError(f"non-finite generator loss at epoch {epoch}, batch {b}")
            names = list(g)
            grads = nt.grad(g_loss, [g[k] for k in names])
            try:
                g_params, g_opt = nt.adam_step(
                    model.g_opt, model.g_params, {k: gr.data for k, gr in zip(names, grads)}
                )
            except TrainingError as exc:
                raise TrainingError(f"epoch {epoch}, batch {b}: {exc}") from None
            model = replace(model, g_params=g_params, g_opt=g_opt)
            log.append(LossRecord(model.epoch, b, d_loss, float(g_loss.data), norm if config.eta > 0 else 0.0))
        model = replace(model, epoch=model.epoch + 1)
        if config.checkpoint_every and config.checkpoint_dir and model.epoch % config.checkpoint_every == 0:
            out = Path(config.checkpoint_dir)
            out.mkdir(parents=True, exist_ok=True)
            save_model(out / f"epoch_{model.epoch:04d}.gpt", model)
        if on_epoch is not None:
            on_epoch(model, epoch)
    return model, log


def write_loss_log(path, log: Sequence[LossRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "batch", "d_loss", "g_loss", "grad_norm_penalty"])
        for r in log:
            w.writerow([r.epoch, r.batch, repr(r.d_loss), repr(r.g_loss), repr(r.grad_norm_penalty)])


# -- checkpoints ------------------------------------------------------------

_FORMAT = 1


def _opt_header(opt: AdamState) -> dict:
    return dict(lr=opt.lr, beta1=opt.beta1, beta2=opt.beta2, eps=opt.eps, step=opt.step)


def save_model(path, model: GanModel) -> None:
    records: dict[str, np.ndarray] = {}
    for k, v in model.g_params.items():
        records[f"g/{k}"] = v
    for k, v in model.d_params.items():
        records[f"d/{k}"] = v
    for k, st in model.sn_state.items():
        records[f"sn/{k}/u"] = st.u
        records[f"sn/{k}/v"] = st.v
    for tag, opt in (("opt_g", model.g_opt), ("opt_d", model.d_opt)):
        for k, v in opt.m.items():
            records[f"{tag}/m/{k}"] = v
        for k, v in opt.v.items():
            records[f"{tag}/v/{k}"] = v
    header = {
        "format": _FORMAT,
        "architecture": model.arch.to_dict(),
        "config": model.config.to_dict() if model.config else None,
        "eta": model.eta,
        "seed": model.seed,
        "epoch": model.epoch,
        "fingerprint": model.fingerprint,
        "normalization_cap": model.normalization.cap if model.normalization else None,
        "opt_g": _opt_header(model.g_opt),
        "opt_d": _opt_header(model.d_opt),
    }
    nt.save_checkpoint(path, records, header)


def load_model(path) -> GanModel:
    header, records = nt.load_checkpoint(path)
    arch = GanArchitecture.from_dict(header["architecture"])
    g, d, sn_parts = {}, {}, {}
    opts: dict[str, dict[str, dict]] = {"opt_g": {"m": {}, "v": {}}, "opt_d": {"m": {}, "v": {}}}
    for name, arr in records.items():
        head, _, rest = name.partition("/")
        if head == "g":
            g[rest] = arr
        elif head == "d":
            d[rest] = arr
        elif head == "sn":
            layer, _, which = rest.rpartition("/")
            sn_parts.setdefault(layer, {})[which] = arr
        elif head in opts:
            which, _, pname = rest.partition("/")
            opts[head][which][pname] = arr
    sn = {k: PowerIterState(v["u"], v["v"]) for k, v in sn_parts.items()}
    g_opt = AdamState(**header["opt_g"], m=opts["opt_g"]["m"], v=opts["opt_g"]["v"])
    d_opt = AdamState(**header["opt_d"], m=opts["opt_d"]["m"], v=opts["opt_d"]["v"])
    cap = header.get("normalization_cap")
    cfg = header.get("config")
    return GanModel(
        arch,
        g,
        d,
        sn,
        g_opt,
        d_opt,
        epoch=header["epoch"],
        fingerprint=header["fingerprint"],
        normalization=NormalizationRecord(cap) if cap is not None else None,
        config=TrainConfig(**cfg) if cfg else None,
        seed=header["seed"],
    )
