"""``gpa`` command line.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import attacks, gan, harness
from .curves import SyntheticLoadConfig, ingest_csv, load_curves, normalize, save_curves, synth_load
from .errors import DataError, DomainError
from .forecast import ForecasterArchitecture, ForecastTrainConfig, lstm_score
from .indicators import average_indicator_distance, write_report_csv
from .ndtensor import CheckpointError, TrainingError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

ATTACK_NAMES = {"likelihood": "likelihood", "gradnorm": "gradient_norm", "indicators": "indicators"}


class UsageError(Exception):
    pass


class _HelpFormatter(argparse.ArgumentDefaultsHelpFormatter):
    """Shows ``(default: X)`` only for flags with a concrete default; flags
    defaulting to None spell out their fallback in the help text."""

    def _get_help_string(self, action):
        if action.default is None or action.default is False:
            return action.help
        return super()._get_help_string(action)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _read_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise DataError(f"{path}: config must be a JSON object")
    return cfg


def _need_out(args) -> Path:
    if args.out is None:
        raise UsageError(f"{args.command}: --out is required")
    return Path(args.out)


def _seed_line(seed: int) -> None:
    print(f"seed: {seed}")


# -- commands -----------------------------------------------------------------


def cmd_synth_data(args) -> int:
    out = _need_out(args)
    cfg = _read_config(args.config)
    cfg.setdefault("frame_len", gan.GanArchitecture.preset(args.scale).curve_len)
    if args.households is not None:
        cfg["n_households"] = args.households
    if args.frames is not None:
        cfg["frames_per_household"] = args.frames
    cfg["seed"] = args.seed
    curves = synth_load(SyntheticLoadConfig(**cfg))
    _seed_line(args.seed)
    save_curves(out, curves)
    print(f"wrote {len(curves)} curves to {out}")
    return EXIT_OK


def cmd_ingest(args) -> int:
    out = _need_out(args)
    frame_len = args.frame_len or gan.GanArchitecture.preset(args.scale).curve_len
    curves = ingest_csv(args.csv, frame_len)
    save_curves(out, curves)
    households = len({c.household_id for c in curves})
    print(f"wrote {len(curves)} curves from {households} households to {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    out = _need_out(args)
    cfg = _read_config(args.config)
    overrides = {k: v for k, v in dict(
        epochs=args.epochs,
        batch_size=args.batch_size,
        lr_generator=args.lr_generator,
        lr_discriminator=args.lr_discriminator,
        eta=args.eta,
        checkpoint_every=args.checkpoint_every,
    ).items() if v is not None}
    cfg.update(overrides)
    cfg["seed"] = args.seed
    cfg["checkpoint_dir"] = str(out)
    config = gan.TrainConfig.for_scenario(args.scenario, **cfg)
    raw = load_curves(args.data)
    arch = gan.GanArchitecture.preset(args.scale)
    curves, record = normalize(raw)
    _seed_line(args.seed)
    model = gan.init_model(arch, args.seed, record)
    model, log = gan.train(model, curves, config)
    out.mkdir(parents=True, exist_ok=True)
    gan.save_model(out / "model.gpt", model)
    gan.write_loss_log(out / "losses.csv", log)
    print(f"scenario {args.scenario}: {config.epochs} epochs, eta {config.eta}; model written to {out / 'model.gpt'}")
    return EXIT_OK


def cmd_generate(args) -> int:
    out = _need_out(args)
    model = gan.load_model(args.model)
    curves = gan.generate(model, args.n, args.seed)
    if not args.normalized:
        if model.normalization is None:
            raise DataError("model carries no normalization cap; use --normalized")
        curves = model.normalization.denormalize(curves)
    _seed_line(args.seed)
    save_curves(out, curves)
    print(f"wrote {len(curves)} curves to {out}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    natural = load_curves(args.natural)
    artificial = load_curves(args.artificial)
    _seed_line(args.seed)
    aid = average_indicator_distance(natural, artificial)
    for r in aid.breakdown:
        print(f"{r.indicator:>16}  {r.emd_normalized:.6f}" + (f"  ({r.flag})" if r.flag else ""))
    print(f"AID: {aid.value:.6f}")
    if args.out is not None:
        write_report_csv(args.out, aid)
    if args.test is not None:
        test = load_curves(args.test)
        nat, record = normalize(natural)
        art = normalize(artificial, record.cap)[0]
        tst = normalize(test, record.cap)[0]
        cfg = ForecastTrainConfig(**{**_read_config(args.config), "seed": args.seed,
                                     **({"epochs": args.forecast_epochs} if args.forecast_epochs is not None else {})})
        score = lstm_score(nat, art, tst, cfg, ForecasterArchitecture.preset(args.scale))
        print(f"LSTM score: {score:.6f}")
    return EXIT_OK


def cmd_attack(args) -> int:
    if len(args.sets) != 5:
        raise UsageError(f"attack: --sets needs exactly 5 curve files, got {len(args.sets)}")
    model = gan.load_model(args.model)
    raw_sets = [load_curves(p) for p in args.sets]
    name = ATTACK_NAMES[args.name]
    if name == "indicators":
        attack = attacks.IndicatorsAttack(model)
        sets = raw_sets
    else:
        if model.normalization is None:
            raise DataError("model carries no normalization cap")
        sets = [normalize(s, model.normalization.cap)[0] for s in raw_sets]
        attack = (attacks.LikelihoodAttack(model) if name == "likelihood"
                  else attacks.GradientNormAttack(model, real_only=args.real_only))
    inp = attacks.AttackInput(sets, args.seed)
    _seed_line(args.seed)
    if args.variant == "subset":
        outcomes = [attack(inp)]
    else:
        outcomes = attacks.per_household_variant(attack, inp, args.trials, args.seed)
    for o in outcomes:
        scores = " ".join(f"{s:.10g}" for s in o.scores)
        print(f"attack={o.attack} variant={o.variant} guess={o.guess} rule={o.rule} scores=[{scores}]")
    return EXIT_OK


def cmd_experiment(args) -> int:
    out = _need_out(args)
    cfg = _read_config(args.config)
    cfg["seed"] = args.seed
    cfg.setdefault("scale", args.scale)
    if args.runs is not None:
        cfg["n_runs"] = args.runs
    if args.scenarios is not None:
        cfg["scenarios"] = args.scenarios
    if args.preset is not None:
        cfg["preset"] = args.preset
    config = harness.ExperimentConfig.from_dict(cfg)
    _seed_line(args.seed)
    harness.run_experiment(config, out)
    sys.stdout.write((out / "report.txt").read_text(encoding="utf-8"))
    return EXIT_OK


def cmd_report(args) -> int:
    out = Path(args.run_dir if args.run_dir is not None else _need_out(args))
    path = harness.render_directory(out)
    sys.stdout.write(path.read_text(encoding="utf-8"))
    return EXIT_OK


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    fmt = _HelpFormatter
    common = _Parser(add_help=False)
    common.add_argument("--config", metavar="PATH", default=None,
                        help="JSON file with command settings (default: none)")
    common.add_argument("--seed", type=int, default=0, help="seed for every random decision")
    common.add_argument("--scale", choices=("desk", "paper"), default="desk", help="model and curve size preset")
    common.add_argument("--out", metavar="PATH", default=None,
                        help="output file or directory (required by commands that write)")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to standard error")

    p = _Parser(prog="gpa", description="Train load-curve GANs, score them and audit membership leakage.",
                formatter_class=fmt)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth-data", parents=[common], formatter_class=fmt, help="simulate household load curves")
    s.add_argument("--households", type=int, default=None, help="number of households (default 25)")
    s.add_argument("--frames", type=int, default=None, help="frames per household (default 10)")
    s.set_defaults(func=cmd_synth_data)

    s = sub.add_parser("ingest", parents=[common], formatter_class=fmt, help="convert a readings CSV to a curve file")
    s.add_argument("csv", help="CSV with header household_id,timestamp,kwh")
    s.add_argument("--frame-len", type=int, default=None, help="samples per frame (default: scale's curve length)")
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("train", parents=[common], formatter_class=fmt, help="train a GAN on member curves")
    s.add_argument("--data", required=True, help="curve file with raw-scale member curves")
    s.add_argument("--scenario", choices=gan.SCENARIOS, default="same_lr", help="training scenario")
    s.add_argument("--epochs", type=int, default=None, help="training epochs (default 140)")
    s.add_argument("--batch-size", type=int, default=None, help="batch size (default 20)")
    s.add_argument("--lr-generator", type=float, default=None, help="generator learning rate (default 1e-4)")
    s.add_argument("--lr-discriminator", type=float, default=None,
                   help="discriminator learning rate (default 1e-4; 1e-5 for diff_lr)")
    s.add_argument("--eta", type=float, default=None,
                   help="gradient-norm penalty (default 1e-2 for regularized, else 0)")
    s.add_argument("--checkpoint-every", type=int, default=None,
                   help="write a checkpoint every k epochs (default: off)")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("generate", parents=[common], formatter_class=fmt, help="sample curves from a trained model")
    s.add_argument("--model", required=True, help="model checkpoint")
    s.add_argument("-n", type=int, default=100, help="number of curves")
    s.add_argument("--normalized", action="store_true", help="keep curves on the [-1, 1] scale")
    s.set_defaults(func=cmd_generate)

    s = sub.add_parser("evaluate", parents=[common], formatter_class=fmt,
                       help="AID and LSTM score of artificial curves")
    s.add_argument("--natural", required=True, help="raw-scale natural curves")
    s.add_argument("--artificial", required=True, help="raw-scale artificial curves")
    s.add_argument("--test", default=None, help="raw-scale test curves; enables the LSTM score")
    s.add_argument("--forecast-epochs", type=int, default=None, help="forecaster epochs (default 40)")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("attack", parents=[common], formatter_class=fmt, help="run a membership-inference attack")
    s.add_argument("--model", required=True, help="model checkpoint")
    s.add_argument("--sets", nargs="+", required=True, metavar="CURVES", help="five raw-scale candidate curve files")
    s.add_argument("--name", choices=tuple(ATTACK_NAMES), default="likelihood", help="attack")
    s.add_argument("--variant", choices=("subset", "household"), default="subset", help="attack variant")
    s.add_argument("--trials", type=int, default=100, help="per-household trials")
    s.add_argument("--real-only", action="store_true", help="gradient-norm attack without the fake term")
    s.set_defaults(func=cmd_attack)

    s = sub.add_parser("experiment", parents=[common], formatter_class=fmt, help="run the full repeated experiment")
    s.add_argument("--runs", type=int, default=None, help="number of runs (default 20)")
    s.add_argument("--scenarios", nargs="+", choices=gan.SCENARIOS, default=None, help="scenarios (default all)")
    s.add_argument("--preset", choices=tuple(harness.TRAINING_PRESETS), default=None,
                   help="training preset (default standard)")
    s.set_defaults(func=cmd_experiment)

    s = sub.add_parser("report", parents=[common], formatter_class=fmt, help="re-render report.txt of a run directory")
    s.add_argument("run_dir", nargs="?", default=None, help="run directory (or --out)")
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (TrainingError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, DomainError, CheckpointError, OSError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
