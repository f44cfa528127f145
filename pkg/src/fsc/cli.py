"""Command-line entry point.

Subcommands: train, ablate, sweep, export-embeddings, gen-data. Configuration
comes from an optional JSON file (--config) with CLI flags overriding file
values; the fully resolved configuration is always echoed into the run
directory. Exit codes: 0 success, 2 configuration or contract error, 3 I/O
error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace

from .data import MixtureSpec, generate_mixture, load_dataset_csv, save_dataset_csv
from .experiments import (
    DEFAULT_SEEDS,
    ExperimentConfig,
    export_embeddings,
    resolve_data,
    run_ablation,
    run_experiment,
    run_sweep,
    with_seed,
    write_ablation_csv,
    write_sweep_csv,
)
from .numerics import ContractViolation
from .train import load_checkpoint

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3

HEAD_CHOICES = {
    "fsc": "fsc",
    "softmax": "softmax",
    "center-loss": "center_loss",
    "trainable-subcenter": "trainable_subcenter",
}


def _add_common_overrides(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON experiment config file")
    p.add_argument("--seed", type=int, help="master seed (also re-keys synthetic data)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--head", choices=sorted(HEAD_CHOICES), help="head variant")
    p.add_argument("--s", type=int, help="sub-centers per class")
    p.add_argument("--sigma2", type=float, help="sub-center sampling variance")
    p.add_argument("--beta", type=float, help="compactness loss weight")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--label", help="run label")
    p.add_argument("--train-csv", help="external train split (overrides the mixture)")
    p.add_argument("--test-csv", help="external test split")


def _mixture_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--classes", type=int)
    p.add_argument("--modes", type=int, help="modes per class")
    p.add_argument("--dim", type=int, help="input dimension")
    p.add_argument("--samples-per-mode", type=int)
    p.add_argument("--mode-separation", type=float)
    p.add_argument("--class-separation", type=float)
    p.add_argument("--mode-stddev", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fsc",
        description="Fixed sub-center classification: training, ablations, sweeps.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train one model and write run artifacts")
    _add_common_overrides(p_train)
    _mixture_flags(p_train)

    p_ablate = sub.add_parser("ablate", help="run the head-variant ablation grid")
    _add_common_overrides(p_ablate)
    _mixture_flags(p_ablate)
    p_ablate.add_argument("--seeds", type=int, default=5, help="number of paired seeds (>= 1)")

    p_sweep = sub.add_parser("sweep", help="sweep one hyperparameter with paired seeds")
    _add_common_overrides(p_sweep)
    _mixture_flags(p_sweep)
    p_sweep.add_argument("--param", required=True, choices=["sigma2", "beta", "s"])
    p_sweep.add_argument("--values", required=True, help="comma-separated values")
    p_sweep.add_argument("--seeds", type=int, default=5)

    p_export = sub.add_parser(
        "export-embeddings", help="project a checkpoint's test features to 3-D"
    )
    p_export.add_argument("--checkpoint", required=True, help="checkpoint path prefix")
    p_export.add_argument("--out", required=True, help="output CSV path")
    p_export.add_argument("--config", help="JSON experiment config for the dataset")
    p_export.add_argument("--train-csv")
    p_export.add_argument("--test-csv")
    p_export.add_argument("--dims", type=int, default=3)

    p_gen = sub.add_parser("gen-data", help="write a synthetic mixture as train/test CSVs")
    _mixture_flags(p_gen)
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--out", required=True, help="output directory")
    return parser


def _load_config_file(path) -> ExperimentConfig:
    with open(path, "r", encoding="ascii") as fh:
        return ExperimentConfig.from_dict(json.load(fh))


def _apply_mixture_flags(spec: MixtureSpec, args) -> MixtureSpec:
    updates = {}
    for flag, fld in [
        ("classes", "classes"),
        ("modes", "modes_per_class"),
        ("dim", "input_dim"),
        ("samples_per_mode", "samples_per_mode"),
        ("mode_separation", "mode_separation"),
        ("class_separation", "class_separation"),
        ("mode_stddev", "mode_stddev"),
    ]:
        value = getattr(args, flag, None)
        if value is not None:
            updates[fld] = value
    if getattr(args, "seed", None) is not None and not hasattr(args, "head"):
        updates["seed"] = args.seed  # gen-data: seed applies to the mixture directly
    return replace(spec, **updates) if updates else spec


def resolve_experiment_config(args) -> ExperimentConfig:
    """defaults -> config file -> CLI flags, in increasing precedence."""
    config = _load_config_file(args.config) if args.config else ExperimentConfig()
    train = config.train
    for flag, fld in [
        ("s", "s"),
        ("sigma2", "sigma2"),
        ("beta", "beta"),
        ("epochs", "epochs"),
        ("batch_size", "batch_size"),
        ("seed", "seed"),
    ]:
        value = getattr(args, flag, None)
        if value is not None:
            train = replace(train, **{fld: value})
    if getattr(args, "head", None) is not None:
        train = replace(train, head_variant=HEAD_CHOICES[args.head])
    config = replace(config, train=train)
    if getattr(args, "train_csv", None) is not None:
        config = replace(
            config, train_csv=args.train_csv, test_csv=getattr(args, "test_csv", None), mixture=None
        )
    elif config.mixture is not None:
        config = replace(config, mixture=_apply_mixture_flags(config.mixture, args))
    if getattr(args, "label", None) is not None:
        config = replace(config, run_label=args.label)
    if getattr(args, "seed", None) is not None:
        config = with_seed(config, args.seed)
    return config


def _cmd_train(args) -> int:
    config = resolve_experiment_config(args)
    out_dir = args.out or os.path.join("runs", config.run_label)
    outcome = run_experiment(config, out_dir=out_dir)
    print(f"run written to {out_dir}")
    print(f"test top-1: {outcome.report.top1:.4f}")
    return EXIT_OK


def _cmd_ablate(args) -> int:
    config = resolve_experiment_config(args)
    if args.seeds < 1:
        raise ContractViolation(f"--seeds must be >= 1, got {args.seeds}")
    seeds = tuple(range(1, args.seeds + 1))
    out_dir = args.out or "runs/ablation"
    os.makedirs(out_dir, exist_ok=True)
    summaries = run_ablation(config, seeds=seeds)
    path = os.path.join(out_dir, "ablation_summary.csv")
    write_ablation_csv(summaries, path)
    with open(os.path.join(out_dir, "resolved_config.json"), "w", encoding="ascii") as fh:
        json.dump(config.to_dict() | {"seeds": list(seeds)}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    for s in summaries:
        print(f"{s.label}: top-1 {s.mean_top1:.4f} +/- {s.std_top1:.4f}")
    print(f"summary written to {path}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    config = resolve_experiment_config(args)
    if args.seeds < 1:
        raise ContractViolation(f"--seeds must be >= 1, got {args.seeds}")
    values = [v for v in (part.strip() for part in args.values.split(",")) if v]
    if not values:
        raise ContractViolation("--values must contain at least one value")
    seeds = tuple(range(1, args.seeds + 1))
    out_dir = args.out or "runs/sweep"
    os.makedirs(out_dir, exist_ok=True)
    rows = run_sweep(config, args.param, values, seeds=seeds)
    path = os.path.join(out_dir, f"sweep_{args.param}.csv")
    write_sweep_csv(rows, path)
    with open(os.path.join(out_dir, "resolved_config.json"), "w", encoding="ascii") as fh:
        json.dump(
            config.to_dict() | {"seeds": list(seeds), "sweep": {"param": args.param, "values": values}},
            fh,
            indent=2,
            sort_keys=True,
        )
        fh.write("\n")
    for r in rows:
        print(f"{args.param}={r.value:g}: top-1 {r.mean_top1:.4f} +/- {r.std_top1:.4f}")
    print(f"sweep written to {path}")
    return EXIT_OK


def _cmd_export(args) -> int:
    model = load_checkpoint(args.checkpoint)
    if args.train_csv or args.test_csv:
        if not args.test_csv:
            raise ContractViolation("--test-csv is required when exporting from CSV data")
        dataset = load_dataset_csv(args.test_csv, split="test")
    elif args.config:
        config = _load_config_file(args.config)
        _, dataset = resolve_data(config)
    else:
        run_dir = os.path.dirname(os.path.abspath(args.checkpoint))
        config_path = os.path.join(run_dir, "resolved_config.json")
        if not os.path.exists(config_path):
            raise FileNotFoundError(
                f"no dataset given and {config_path} not found next to the checkpoint"
            )
        config = _load_config_file(config_path)
        _, dataset = resolve_data(config)
    if dataset.dim != model.net.in_dim:
        raise ContractViolation(
            f"dataset dimension {dataset.dim} does not match model input {model.net.in_dim}"
        )
    export_embeddings(model, dataset, args.out, dims=args.dims)
    print(f"embeddings written to {args.out}")
    return EXIT_OK


def _cmd_gen_data(args) -> int:
    spec = _apply_mixture_flags(MixtureSpec(seed=args.seed), args)
    spec = replace(spec, seed=args.seed)
    train_ds, test_ds = generate_mixture(spec)
    os.makedirs(args.out, exist_ok=True)
    train_path = os.path.join(args.out, "train.csv")
    test_path = os.path.join(args.out, "test.csv")
    save_dataset_csv(train_ds, train_path)
    save_dataset_csv(test_ds, test_path)
    with open(os.path.join(args.out, "mixture_spec.json"), "w", encoding="ascii") as fh:
        json.dump(spec.__dict__, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {train_path} ({train_ds.n} rows) and {test_path} ({test_ds.n} rows)")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on bad usage, which matches the config-error code
        return int(exc.code) if exc.code else EXIT_OK
    try:
        if args.command == "train":
            return _cmd_train(args)
        if args.command == "ablate":
            return _cmd_ablate(args)
        if args.command == "sweep":
            return _cmd_sweep(args)
        if args.command == "export-embeddings":
            return _cmd_export(args)
        if args.command == "gen-data":
            return _cmd_gen_data(args)
        raise ContractViolation(f"unknown command {args.command!r}")
    except (ContractViolation, ValueError, KeyError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
