"""Command-line entry point.

Every experiment is a batch subcommand driven by a JSON config plus dotted
key=value overrides.  Commands that consume randomness require a seed, from
``--seed`` or from the config; there is no hidden entropy.  Exit codes:
0 success, 1 user/config error, 2 data error, 3 numerical/internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import experiments as exp
from .cohort import (
    SyntheticConfig,
    generate_synthetic_cohort,
    load_dataset,
    load_schema,
    save_schema,
    split_dataset,
    write_dataset,
)
from .compare import mix_seed
from .errors import ConfigError, DataError, NonunionError
from .preprocess import fit_transformer, transform, with_class_weights

log = logging.getLogger("nonunion")


class UsageError(ConfigError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would sys.exit(2); we map usage errors to 1
        raise UsageError(message)


def _load_config(args, out_is_dir: bool = True) -> exp.ExperimentConfig:
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as fh:
            doc = json.load(fh)
    else:
        doc = exp.config_to_json(exp.default_config())
    doc = exp.apply_overrides(doc, getattr(args, "set", None) or [])
    config = exp.config_from_json(doc)
    if out_is_dir and getattr(args, "out", None):
        config = replace(config, output_dir=str(args.out))
    if getattr(args, "seed", None) is not None:
        config = replace(
            config,
            split_seed=args.seed,
            source=replace(config.source, seed=args.seed),
            resample=replace(config.resample, master_seed=args.seed),
        )
    elif not getattr(args, "config", None):
        raise UsageError("supply --seed or --config (no hidden entropy)")
    return config


def _require_seed(args) -> int:
    if args.seed is None:
        raise UsageError("supply --seed (no hidden entropy)")
    return args.seed


def _emit(doc) -> None:
    json.dump(exp.jsonable(doc), sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")


def _write_invocation(out_dir: Path, args) -> None:
    resolved = {k: v for k, v in vars(args).items() if k != "func"}
    exp.write_json(Path(out_dir) / "invocation.json", resolved)


# ---------------------------------------------------------------------------
# subcommands

def cmd_synth(args) -> int:
    seed = _require_seed(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    config = SyntheticConfig(target_incidence=args.incidence, missing_rate=args.missing_rate)
    dataset, _ = generate_synthetic_cohort(args.n, seed, config)
    write_dataset(dataset, out / "cohort.csv")
    save_schema(dataset.schema, out / "schema.json")
    _write_invocation(out, args)
    log.info("wrote %s rows to %s", len(dataset), out / "cohort.csv")
    return 0


def cmd_split(args) -> int:
    seed = _require_seed(args)
    dataset = load_dataset(args.data, load_schema(args.schema))
    split = split_dataset(dataset, args.test_fraction, seed, stratified=not args.no_stratify)
    exp.write_json(args.out, {
        "train": split.train,
        "test": split.test,
        "seed": split.seed,
        "stratified": split.stratified,
    })
    return 0


def cmd_train(args) -> int:
    config = _load_config(args, out_is_dir=False)
    dataset = load_dataset(args.data, load_schema(args.schema))
    transformer = fit_transformer(dataset)
    matrix = transform(transformer, dataset)
    if exp.CLASS_WEIGHTED_BY_KIND[args.kind]:
        matrix = with_class_weights(matrix)
    model_config = {"logistic": config.logistic, "svm": config.svm, "gbt": config.gbt}[args.kind]
    model = exp.fit_model_kind(args.kind, matrix, model_config, seed=mix_seed(config.split_seed, 2))
    exp.save_model_artifact(args.out, args.kind, model, transformer)
    log.info("saved %s model to %s", args.kind, args.out)
    return 0


def cmd_evaluate(args) -> int:
    _emit(exp.evaluate_model_file(args.model, args.data, args.threshold))
    return 0


def cmd_sweep(args) -> int:
    rows = exp.sweep_model_file(args.model, args.data)
    header = ("threshold", "upm", "sensitivity", "specificity", "precision", "npv")
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join("" if row[k] is None else repr(float(row[k])) for k in header))
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def cmd_compare(args) -> int:
    config = _load_config(args)
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    exp.write_json(out / "config.json", exp.config_to_json(config))
    dataset = exp.load_source(config)
    split = split_dataset(dataset, config.test_fraction, config.split_seed)
    result = exp.run_comparison(config, dataset.subset(split.train), dataset.subset(split.test), out)
    _emit({k: v for k, v in result.items() if k != "scores"})
    return 0


def cmd_calibrate(args) -> int:
    kind, report = exp.calibrate_model_file(args.model, args.data)
    if args.out:
        exp.write_csv(
            args.out,
            ("predicted", "outcome", "smoothed_raw", "smoothed_clamped"),
            [
                (repr(float(p)), repr(float(y)), repr(float(r)), repr(float(c)))
                for p, y, r, c in zip(report.predicted, report.outcome,
                                      report.smoothed_raw, report.smoothed_clamped)
            ],
        )
    _emit({"kind": kind, "odds_ratio": report.odds_ratio, "n": int(report.predicted.shape[0])})
    return 0


def cmd_ablate(args) -> int:
    config = _load_config(args)
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    exp.write_json(out / "config.json", exp.config_to_json(config))
    dataset = exp.load_source(config)
    split = split_dataset(dataset, config.test_fraction, config.split_seed)
    result = exp.run_ablation(config, dataset.subset(split.train), dataset.subset(split.test), out)
    _emit({"threshold": result["threshold"], "means": result["means"], "skipped": result["skipped"]})
    return 0


def cmd_run_all(args) -> int:
    config = _load_config(args)
    report = exp.run_all(config)
    _emit({
        "output_dir": config.output_dir,
        "models": report["pipeline"]["models"],
        "baseline_majority_upm": report["pipeline"]["baseline_majority_upm"],
        "comparison_tests": report["comparison"]["tests"],
    })
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="nonunion", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_cmd=False):
        p.add_argument("--seed", type=int, default=None)
        if config_cmd:
            p.add_argument("--config", default=None, help="experiment config JSON")
            p.add_argument("--set", action="append", metavar="KEY=VALUE",
                           help="dotted config override, e.g. resample.count=40")
            p.add_argument("--out", default=None, help="output directory")

    p = sub.add_parser("synth", help="generate a synthetic cohort CSV + schema")
    p.add_argument("--n", type=int, default=797)
    p.add_argument("--out", required=True)
    p.add_argument("--incidence", type=float, default=0.3877)
    p.add_argument("--missing-rate", type=float, default=0.166)
    common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("split", help="write train/test indices for a cohort CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--no-stratify", action="store_true")
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="train one model kind on a cohort CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--kind", choices=("logistic", "svm", "gbt"), required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a saved model on a cohort CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=None)  # accepted; evaluation is deterministic
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="UPM and companions over the threshold grid")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("compare", help="300-resample pairwise model comparison")
    common(p, config_cmd=True)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("calibrate", help="LOWESS calibration data + odds ratio")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("ablate", help="learning curve over training fractions")
    common(p, config_cmd=True)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("run-all", help="full pipeline + comparison + ablation")
    common(p, config_cmd=True)
    p.set_defaults(func=cmd_run_all)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(
            stream=sys.stderr,
            level=(logging.WARNING, logging.INFO, logging.DEBUG)[min(args.verbose, 2)],
            format="%(levelname)s %(name)s: %(message)s",
        )
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NonunionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
