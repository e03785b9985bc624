"""Membership-inference attacks against a trained GAN.

The attacker holds five candidate curve sets, one of which trained the
model, and guesses which. Each attack scores every set and picks the best:

* likelihood: mean discriminator output over the set, highest wins;
* gradient norm: mean L2 norm of the discriminator-loss gradient with
  respect to the discriminator parameters, one curve at a time, lowest wins;
* indicators: generate as many curves as the set holds and compare indicator
  distributions (AID), lowest wins. Needs only a generate handle.

Ties go to the lowest set index.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from . import gan
from . import ndtensor as nt
from .curves import N_SUBSETS, Curve
from .errors import DomainError
from .gan import GanModel
from .indicators import average_indicator_distance

PER_SUBSET = "per_subset"
PER_HOUSEHOLD = "per_household"


@dataclass(frozen=True)
class AttackInput:
    candidate_sets: tuple[tuple[Curve, ...], ...]
    seed: int = 0

    def __post_init__(self):
        sets = tuple(tuple(s) for s in self.candidate_sets)
        object.__setattr__(self, "candidate_sets", sets)
        if len(sets) != N_SUBSETS:
            raise DomainError(f"expected {N_SUBSETS} candidate sets, got {len(sets)}")
        for i, s in enumerate(sets):
            if not s:
                raise DomainError(f"candidate set {i} is empty")


@dataclass(frozen=True)
class AttackOutcome:
    attack: str
    variant: str
    guess: int
    scores: tuple[float, ...]
    rule: str  # "max" or "min"


def select(scores: Sequence[float], rule: str) -> int:
    """Index of the best score; lowest index on ties, NaN never wins."""
    s = np.asarray(scores, dtype=np.float64)
    if rule == "max":
        s = np.where(np.isnan(s), -np.inf, s)
        return int(np.argmax(s))
    if rule == "min":
        s = np.where(np.isnan(s), np.inf, s)
        return int(np.argmin(s))
    raise DomainError(f"unknown selection rule {rule!r}")


class Attack:
    """Base class: subclasses set ``name`` and ``rule`` and implement
    :meth:`set_scores`. Attacks whose set score is a mean of per-curve
    scores implement :meth:`curve_scores` instead."""

    name = ""
    rule = ""

    def curve_scores(self, curves: Sequence[Curve], seed: int) -> np.ndarray:
        raise NotImplementedError

    def set_scores(self, sets: Sequence[Sequence[Curve]], seed: int) -> list[float]:
        return [float(np.mean(self.curve_scores(s, seed))) for s in sets]

    @property
    def per_curve(self) -> bool:
        return type(self).curve_scores is not Attack.curve_scores

    def __call__(self, inp: AttackInput, variant: str = PER_SUBSET) -> AttackOutcome:
        scores = tuple(self.set_scores(inp.candidate_sets, inp.seed))
        return AttackOutcome(self.name, variant, select(scores, self.rule), scores, self.rule)


class LikelihoodAttack(Attack):
    """Scores a set by the mean discriminator output.

    ``discriminator`` is a :class:`GanModel` or any callable mapping a list
    of curves to per-curve probabilities.
    """

    name = "likelihood"
    rule = "max"

    def __init__(self, discriminator: GanModel | Callable[[Sequence[Curve]], np.ndarray]):
        if isinstance(discriminator, GanModel):
            model = discriminator
            self._d = lambda curves: gan.discriminate(model, curves)
        else:
            self._d = discriminator

    def curve_scores(self, curves, seed):
        return np.asarray(self._d(list(curves)), dtype=np.float64)


def curve_gradient_norm(
    model: GanModel,
    curve: np.ndarray,
    fake: np.ndarray | None,
    eta: float = 0.0,
) -> float:
    """L2 norm of the discriminator-parameter gradient of the loss on one
    real curve (plus the fake term when ``fake`` is given), including the
    ``-eta * ||grad||`` penalty when ``eta > 0``."""
    names = list(model.d_params)
    d = gan.as_tensors(model.d_params, requires_grad=True)
    params = [d[k] for k in names]
    real_logits, _ = gan.discriminator_logits(model.arch, d, model.sn_state, curve[None, :])
    loss = nt.bce_with_logits(real_logits, 1.0)
    if fake is not None:
        fake_logits, _ = gan.discriminator_logits(model.arch, d, model.sn_state, fake)
        loss = loss + nt.bce_with_logits(fake_logits, 0.0)
    if eta > 0:
        loss = loss - eta * nt.global_norm(nt.grad(loss, params, create_graph=True))
    return float(nt.global_norm(nt.grad(loss, params)).data)


class GradientNormAttack(Attack):
    """Scores a set by the mean per-curve discriminator gradient norm.

    The fake term uses a single generator sample drawn from the attack seed
    and shared by every curve. ``real_only`` drops it. ``eta`` defaults to
    the model's own regularization strength, so the attacker differentiates
    the full training loss.
    """

    name = "gradient_norm"
    rule = "min"

    def __init__(self, model: GanModel, real_only: bool = False, eta: float | None = None):
        self.model = model
        self.real_only = real_only
        self.eta = model.eta if eta is None else eta
        if real_only:
            self.name = "gradient_norm_real_only"

    def fake_sample(self, seed: int) -> np.ndarray:
        z = gan.latent(1, self.model.arch.latent_dim, np.random.default_rng(seed))
        return gan.generate_array(self.model, z)

    def curve_scores(self, curves, seed):
        fake = None if self.real_only else self.fake_sample(seed)
        return np.array([curve_gradient_norm(self.model, c.values, fake, self.eta) for c in curves])


GeneratorHandle = Callable[[int, int], Sequence[Curve]]


def black_box(model: GanModel) -> GeneratorHandle:
    """Generate-only access to a model, returning raw-scale curves."""
    if model.normalization is None:
        raise DomainError("model has no normalization record; cannot denormalize its output")

    def handle(n: int, seed: int) -> list[Curve]:
        return model.normalization.denormalize(gan.generate(model, n, seed))

    return handle


class IndicatorsAttack(Attack):
    """Scores a raw-scale set by its AID against as many generated curves.

    Set ``j`` draws its curves from a seed derived from ``(seed, j)``.
    """

    name = "indicators"
    rule = "min"

    def __init__(self, generator: GeneratorHandle | GanModel):
        self.generator = black_box(generator) if isinstance(generator, GanModel) else generator

    def set_scores(self, sets, seed):
        scores = []
        for j, s in enumerate(sets):
            sub = int(np.random.SeedSequence([seed, j]).generate_state(1)[0])
            fake = self.generator(len(s), sub)
            scores.append(average_indicator_distance(list(s), list(fake)).value)
        return scores


def _household_index(candidate_set: Sequence[Curve]) -> dict[str, list[int]]:
    out: dict[str, list[int]] = {}
    for i, c in enumerate(candidate_set):
        out.setdefault(c.household_id, []).append(i)
    return out


def per_household_variant(
    attack: Attack, inp: AttackInput, n_trials: int, seed: int, workers: int = 1
) -> list[AttackOutcome]:
    """Repeat ``attack`` on one randomly drawn household per candidate set.

    Draws depend only on ``seed``. Per-curve attacks score every curve once
    and reuse the scores across trials. With a single household per set each
    trial reproduces the per-subset outcome.
    """
    if n_trials < 0:
        raise DomainError("n_trials must be nonnegative")
    index = [_household_index(s) for s in inp.candidate_sets]
    households = [sorted(ix) for ix in index]
    rng = np.random.default_rng(seed)
    draws = [[hh[rng.integers(len(hh))] for hh in households] for _ in range(n_trials)]

    if attack.per_curve:
        cached = [attack.curve_scores(s, inp.seed) for s in inp.candidate_sets]
        outcomes = []
        for draw in draws:
            scores = tuple(float(np.mean(cached[j][index[j][h]])) for j, h in enumerate(draw))
            outcomes.append(AttackOutcome(attack.name, PER_HOUSEHOLD, select(scores, attack.rule), scores, attack.rule))
        return outcomes

    def trial(draw):
        sets = [[inp.candidate_sets[j][i] for i in index[j][h]] for j, h in enumerate(draw)]
        return attack(AttackInput(sets, inp.seed), PER_HOUSEHOLD)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(trial, draws))
    return [trial(d) for d in draws]


def accuracy(outcomes: Iterable[AttackOutcome], truth: int) -> float:
    outcomes = list(outcomes)
    if not outcomes:
        return math.nan
    return sum(o.guess == truth for o in outcomes) / len(outcomes)


RESULT_FIELDS = ["run", "attack", "variant", "scenario", "guess", "truth", "correct"] + [
    f"score_{i}" for i in range(N_SUBSETS)
]


def result_row(run: int, scenario: str, outcome: AttackOutcome, truth: int) -> dict:
    row = dict(
        run=run,
        attack=outcome.attack,
        variant=outcome.variant,
        scenario=scenario,
        guess=outcome.guess,
        truth=truth,
        correct=int(outcome.guess == truth),
    )
    row.update({f"score_{i}": repr(float(s)) for i, s in enumerate(outcome.scores)})
    return row


def write_results_csv(path, rows: Iterable[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=RESULT_FIELDS)
        w.writeheader()
        w.writerows(rows)
