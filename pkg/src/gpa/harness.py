"""Repeated train-and-attack experiments with a table-shaped report.

Each run partitions the households afresh, trains one model per scenario on
the member subset, scores generation quality, and runs every attack. Runs are
independent and reproducible from the configuration alone. Every random
decision takes its seed from :func:`derive_seed`.

Output directory layout::

    report.txt     rendered table
    attacks.csv    one row per attack outcome
    quality.csv    one row per (run, scenario)
    seeds.json     config plus every derived seed
    checkpoints/   final models, when enabled
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import attacks, gan
from .curves import SyntheticLoadConfig, ingest_csv, normalize, partition, split_by_partition, synth_load
from .errors import DomainError
from .forecast import ForecasterArchitecture, ForecastTrainConfig, lstm_score
from .indicators import average_indicator_distance
from .ndtensor import TrainingError

logger = logging.getLogger(__name__)

# Training presets applied on top of each scenario. ``lr_scale`` multiplies
# both of the scenario's learning rates, so their ratio is kept.
TRAINING_PRESETS = {
    "standard": {},
    "overfit": dict(epochs=3000, batch_size=10, lr_scale=10.0),
    "untrained": dict(epochs=0),
}

# Synthetic data for attack experiments: every household runs the same load
# process, so a candidate set can only stand out through curves the model has
# memorized, not through household style. Two frames per household keep the
# member set at ten curves.
HOMOGENEOUS_SYNTHETIC = dict(
    n_households=25,
    frames_per_household=2,
    base_level=(0.2, 0.2),
    daily_amplitude=(0.15, 0.15),
    spike_rate=(0.025, 0.025),
    spike_magnitude=(1.0, 1.0),
    noise_sigma=(0.05, 0.05),
    phase=(22.0, 22.0),
)
ATTACK_SEPARATION = dict(synthetic=HOMOGENEOUS_SYNTHETIC)
DEFENSE_RUNS = 10

SCENARIO_COLUMNS = {
    "diff_lr": "i) diff LR",
    "same_lr": "ii) same LR",
    "regularized": "iii) Regularized (same LR)",
}

# (row label, attack name, variant); the metric rows follow
ATTACK_ROWS = (
    ("Per-subset gradient-norm attack", "gradient_norm", attacks.PER_SUBSET),
    ("Per-household gradient-norm attack", "gradient_norm", attacks.PER_HOUSEHOLD),
    ("Per-subset likelihood attack", "likelihood", attacks.PER_SUBSET),
    ("Per-household likelihood attack", "likelihood", attacks.PER_HOUSEHOLD),
    ("Indicators attack", "indicators", attacks.PER_SUBSET),
)
METRIC_ROWS = (("LSTM score", "lstm_score"), ("Average Indicator Distance", "aid"))

# Seed purposes, in counter order. Seeds depend on (master, run, purpose)
# only, so all scenarios of one run share data split, initialization and
# noise: scenario comparisons are paired.
SEED_PURPOSES = ("partition", "init", "train", "attack", "household", "quality", "forecast")


def derive_seed(master: int, run: int, purpose: str) -> int:
    code = SEED_PURPOSES.index(purpose)
    return int(np.random.SeedSequence([master, run, code]).generate_state(1)[0])


@dataclass(frozen=True)
class ExperimentConfig:
    """Experiment settings; mirrors the JSON config file.

    ``csv`` selects ingested data (with ``frame_len``); otherwise
    ``synthetic`` holds :class:`SyntheticLoadConfig` fields. ``preset`` picks
    a :data:`TRAINING_PRESETS` entry and ``train`` overrides individual
    training fields. ``forecast`` overrides forecaster training fields.
    """

    scenarios: tuple[str, ...] = ("diff_lr", "same_lr", "regularized")
    n_runs: int = 20
    per_household_trials: int = 100
    seed: int = 0
    scale: str = "desk"
    preset: str = "standard"
    csv: str | None = None
    frame_len: int | None = None
    synthetic: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    forecast: dict = field(default_factory=dict)
    quality: bool = True
    real_only_gradient_attack: bool = False
    save_checkpoints: bool = False
    workers: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "scenarios", tuple(self.scenarios))
        if self.n_runs < 1:
            raise DomainError("n_runs must be >= 1")
        if not self.scenarios:
            raise DomainError("at least one scenario is required")
        for s in self.scenarios:
            if s not in gan.SCENARIOS:
                raise DomainError(f"unknown scenario {s!r}")
        if len(set(self.scenarios)) != len(self.scenarios):
            raise DomainError("scenarios must be distinct")
        if self.per_household_trials < 0:
            raise DomainError("per_household_trials must be >= 0")
        if self.preset not in TRAINING_PRESETS:
            raise DomainError(f"unknown preset {self.preset!r}")
        if self.scale not in ("desk", "paper"):
            raise DomainError(f"unknown scale {self.scale!r}")
        bad = set(self.train) & {"seed", "scenario", "eta"}
        if bad:
            raise DomainError(f"train overrides may not set {sorted(bad)}")

    @classmethod
    def from_dict(cls, d: dict) -> ExperimentConfig:
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise DomainError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> ExperimentConfig:
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["scenarios"] = list(self.scenarios)
        return d

    def resolved_workers(self) -> int:
        n = self.workers
        if n is None:
            n = int(os.environ.get("GPA_THREADS", "1") or 1)
        return max(1, min(n, self.n_runs))

    def train_config(self, scenario: str, seed: int) -> gan.TrainConfig:
        preset = dict(TRAINING_PRESETS[self.preset])
        scale = preset.pop("lr_scale", 1.0)
        base = gan.TrainConfig.for_scenario(scenario)
        preset.setdefault("lr_generator", base.lr_generator * scale)
        preset.setdefault("lr_discriminator", base.lr_discriminator * scale)
        return gan.TrainConfig.for_scenario(scenario, seed=seed, **{**preset, **self.train})

    def load_data(self):
        if self.csv is not None:
            return ingest_csv(self.csv, self.frame_len or gan.GanArchitecture.preset(self.scale).curve_len)
        syn = dict(self.synthetic)
        syn.setdefault("frame_len", gan.GanArchitecture.preset(self.scale).curve_len)
        return synth_load(SyntheticLoadConfig(**syn))


@dataclass(frozen=True)
class RunResult:
    run: int
    member_index: int
    seeds: dict
    attack_rows: list[dict]
    quality_rows: list[dict]


def _attack_set(model: gan.GanModel, cfg: ExperimentConfig, run: int, scenario: str, truth: int,
                norm_sets, raw_sets, attack_seed: int, household_seed: int) -> list[dict]:
    model_input = attacks.AttackInput(norm_sets, attack_seed)
    raw_input = attacks.AttackInput(raw_sets, attack_seed)
    gradient = [attacks.GradientNormAttack(model)]
    if cfg.real_only_gradient_attack:
        gradient.append(attacks.GradientNormAttack(model, real_only=True))
    rows = []
    for attack in gradient + [attacks.LikelihoodAttack(model)]:
        outcomes = [attack(model_input)]
        outcomes += attacks.per_household_variant(attack, model_input, cfg.per_household_trials, household_seed)
        rows += [attacks.result_row(run, scenario, o, truth) for o in outcomes]
    outcome = attacks.IndicatorsAttack(model)(raw_input)
    rows.append(attacks.result_row(run, scenario, outcome, truth))
    return rows


def run_once(cfg: ExperimentConfig, run: int, curves, checkpoint_dir: Path | None = None) -> RunResult:
    seeds = {p: derive_seed(cfg.seed, run, p) for p in SEED_PURPOSES}
    part = partition({c.household_id for c in curves}, seeds["partition"])
    raw_sets = split_by_partition(curves, part)
    truth = part.member_index
    _, record = normalize(raw_sets[truth])
    norm_sets = [normalize(s, record.cap)[0] for s in raw_sets]
    members = norm_sets[truth]
    test = norm_sets[part.non_members()[0]]
    arch = gan.GanArchitecture.preset(cfg.scale)
    forecast_cfg = ForecastTrainConfig(**{"seed": seeds["forecast"], **cfg.forecast})
    forecast_arch = ForecasterArchitecture.preset(cfg.scale)

    attack_rows, quality_rows = [], []
    for scenario in cfg.scenarios:
        model = gan.init_model(arch, seeds["init"], record)
        try:
            model, _ = gan.train(model, members, cfg.train_config(scenario, seeds["train"]))
        except TrainingError as exc:
            logger.warning("run %d, %s: training failed: %s", run, scenario, exc)
            quality_rows.append(dict(run=run, scenario=scenario, status=f"failed: {exc}", aid="", lstm_score=""))
            continue
        if checkpoint_dir is not None:
            checkpoint_dir.mkdir(parents=True, exist_ok=True)
            gan.save_model(checkpoint_dir / f"run{run:03d}_{scenario}.gpt", model)
        aid = score = math.nan
        if cfg.quality:
            fake = gan.generate(model, len(members), seeds["quality"])
            aid = average_indicator_distance(raw_sets[truth], record.denormalize(fake)).value
            score = lstm_score(members, fake, test, forecast_cfg, forecast_arch)
        quality_rows.append(dict(run=run, scenario=scenario, status="ok", aid=repr(aid), lstm_score=repr(score)))
        attack_rows += _attack_set(model, cfg, run, scenario, truth, norm_sets, raw_sets,
                                   seeds["attack"], seeds["household"])
    return RunResult(run, truth, seeds, attack_rows, quality_rows)


@dataclass(frozen=True)
class ExperimentReport:
    config: ExperimentConfig
    runs: tuple[RunResult, ...]

    @property
    def attack_rows(self) -> list[dict]:
        return [r for run in self.runs for r in run.attack_rows]

    @property
    def quality_rows(self) -> list[dict]:
        return [r for run in self.runs for r in run.quality_rows]

    def seed_ledger(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "scheme": "SeedSequence([master_seed, run, purpose_index]).generate_state(1)[0]",
            "purposes": list(SEED_PURPOSES),
            "runs": [{"run": r.run, "member_index": r.member_index, "seeds": r.seeds} for r in self.runs],
        }


def run_experiment(cfg: ExperimentConfig, out_dir=None) -> ExperimentReport:
    """Run ``cfg.n_runs`` independent runs; with ``out_dir`` also write the
    report files there."""
    curves = cfg.load_data()
    ckpt = Path(out_dir) / "checkpoints" if (out_dir is not None and cfg.save_checkpoints) else None
    workers = cfg.resolved_workers()
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            runs = list(pool.map(lambda r: run_once(cfg, r, curves, ckpt), range(cfg.n_runs)))
    else:
        runs = [run_once(cfg, r, curves, ckpt) for r in range(cfg.n_runs)]
    report = ExperimentReport(cfg, tuple(runs))
    if out_dir is not None:
        write_report(report, out_dir)
    return report


# -- aggregation and rendering ------------------------------------------------


@dataclass(frozen=True)
class Accuracy:
    value: float
    stderr: float
    n: int


def binomial_accuracy(correct: Sequence[int]) -> Accuracy:
    n = len(correct)
    if n == 0:
        return Accuracy(math.nan, math.nan, 0)
    p = sum(correct) / n
    return Accuracy(p, math.sqrt(p * (1 - p) / n), n)


def attack_accuracy(rows: Sequence[dict], scenario: str, attack: str, variant: str) -> Accuracy:
    return binomial_accuracy([
        int(r["correct"]) for r in rows
        if r["scenario"] == scenario and r["attack"] == attack and r["variant"] == variant
    ])


def per_run_accuracy(rows: Sequence[dict], scenario: str, attack: str, variant: str) -> dict[int, float]:
    hits: dict[int, list[int]] = {}
    for r in rows:
        if r["scenario"] == scenario and r["attack"] == attack and r["variant"] == variant:
            hits.setdefault(int(r["run"]), []).append(int(r["correct"]))
    return {run: sum(h) / len(h) for run, h in sorted(hits.items())}


def metric_summary(rows: Sequence[dict], scenario: str, key: str) -> tuple[float, float, int]:
    """Mean and population standard deviation over successful runs."""
    vals = [float(r[key]) for r in rows if r["scenario"] == scenario and r["status"] == "ok"]
    vals = [v for v in vals if not math.isnan(v)]
    if not vals:
        return math.nan, math.nan, 0
    return float(np.mean(vals)), float(np.std(vals)), len(vals)


def _fmt_accuracy(a: Accuracy) -> str:
    if a.n == 0:
        return "-"
    return f"{100 * a.value:.2f}% ± {100 * a.stderr:.2f}"


def _fmt_metric(mean: float, std: float, n: int) -> str:
    if n == 0:
        return "-"
    return f"{mean:.4f} ± {std:.4f}"


def render_table(attack_rows: Sequence[dict], quality_rows: Sequence[dict]) -> str:
    """Rows are attacks and metrics, columns are the scenarios present in the data."""
    present = {r["scenario"] for r in quality_rows} | {r["scenario"] for r in attack_rows}
    scenarios = [s for s in gan.SCENARIOS if s in present]
    header = ["", *(SCENARIO_COLUMNS[s] for s in scenarios)]
    body = []
    for label, attack, variant in ATTACK_ROWS:
        body.append([label, *(_fmt_accuracy(attack_accuracy(attack_rows, s, attack, variant)) for s in scenarios)])
    for label, key in METRIC_ROWS:
        body.append([label, *(_fmt_metric(*metric_summary(quality_rows, s, key)) for s in scenarios)])
    failed = ["Failed runs"]
    for s in scenarios:
        rows = [r for r in quality_rows if r["scenario"] == s]
        failed.append(f"{sum(r['status'] != 'ok' for r in rows)} of {len(rows)}")
    body.append(failed)

    table = [header] + body
    widths = [max(len(row[i]) for row in table) for i in range(len(header))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip() for row in table]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def render_report(attack_rows: Sequence[dict], quality_rows: Sequence[dict], ledger: dict) -> str:
    cfg = ledger.get("config", {})
    runs = len(ledger.get("runs", []))
    head = (
        "Membership attack accuracy and generation quality\n"
        f"runs: {runs}  per-household trials: {cfg.get('per_household_trials')}  "
        f"master seed: {cfg.get('seed')}  scale: {cfg.get('scale')}  preset: {cfg.get('preset')}\n"
        "accuracy: mean ± binomial standard error; metrics: mean ± std over runs\n\n"
    )
    return head + render_table(attack_rows, quality_rows)


QUALITY_FIELDS = ["run", "scenario", "status", "aid", "lstm_score"]


def _write_csv(path: Path, fields, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        w.writerows(rows)


def _read_csv(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_report(report: ExperimentReport, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "attacks.csv", attacks.RESULT_FIELDS, report.attack_rows)
    _write_csv(out / "quality.csv", QUALITY_FIELDS, report.quality_rows)
    with open(out / "seeds.json", "w") as fh:
        json.dump(report.seed_ledger(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return render_directory(out)


def render_directory(out_dir) -> Path:
    """(Re)build ``report.txt`` from the CSVs and seed ledger in ``out_dir``."""
    out = Path(out_dir)
    for name in ("attacks.csv", "quality.csv", "seeds.json"):
        if not (out / name).exists():
            raise FileNotFoundError(out / name)
    with open(out / "seeds.json") as fh:
        ledger = json.load(fh)
    text = render_report(_read_csv(out / "attacks.csv"), _read_csv(out / "quality.csv"), ledger)
    path = out / "report.txt"
    path.write_text(text, encoding="utf-8")
    return path
