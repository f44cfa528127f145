"""Reproducible experiment runs: single runs, the head-variant ablation grid,
and hyperparameter sweeps. All aggregate comparisons are seed-paired: every
cell of a grid or sweep sees exactly the same master seeds, so differences
between cells are attributable to the method, not to sampling.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .data import LabeledDataset, MixtureSpec, generate_mixture, load_dataset_csv
from .metrics import EvalReport, embedding_export
from .numerics import ContractViolation, child_seed, require
from .subcenter import save_bank
from .train import (
    Model,
    TrainConfig,
    TrainResult,
    evaluate,
    save_checkpoint,
    save_loss_csv,
    train_model,
)

DEFAULT_SEEDS = (1, 2, 3, 4, 5)

# (label, head_variant, uses compactness term) -- the five grid cells
ABLATION_CELLS = (
    ("softmax", "softmax", False),
    ("subcenter_trainable", "trainable_subcenter", False),
    ("subcenter_trainable+compact", "trainable_subcenter", True),
    ("subcenter_fixed", "fsc", False),
    ("fsc", "fsc", True),
)

SWEEPABLE = ("sigma2", "beta", "s")


@dataclass
class ExperimentConfig:
    """One training run: hyperparameters plus exactly one data source."""

    train: TrainConfig = field(default_factory=TrainConfig)
    mixture: MixtureSpec | None = field(default_factory=MixtureSpec)
    train_csv: str | None = None
    test_csv: str | None = None
    run_label: str = "run"

    def validate(self) -> None:
        self.train.validate()
        from_csv = self.train_csv is not None
        require(
            from_csv != (self.mixture is not None),
            "exactly one data source required: a mixture spec or a train CSV",
        )
        if from_csv:
            require(self.test_csv is not None, "a test CSV must accompany the train CSV")
        else:
            self.mixture.validate()

    def to_dict(self) -> dict:
        from .train import _config_to_dict

        payload = {
            "run_label": self.run_label,
            "train": _config_to_dict(self.train),
            "mixture": None if self.mixture is None else self.mixture.__dict__ | {},
            "train_csv": self.train_csv,
            "test_csv": self.test_csv,
        }
        return payload

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        from .train import _config_from_dict

        mixture = raw.get("mixture")
        return cls(
            train=_config_from_dict(raw.get("train", {})),
            mixture=None if mixture is None else MixtureSpec(**mixture),
            train_csv=raw.get("train_csv"),
            test_csv=raw.get("test_csv"),
            run_label=raw.get("run_label", "run"),
        )


def resolve_data(config: ExperimentConfig) -> tuple[LabeledDataset, LabeledDataset]:
    config.validate()
    if config.train_csv is not None:
        return (
            load_dataset_csv(config.train_csv, split="train"),
            load_dataset_csv(config.test_csv, split="test"),
        )
    return generate_mixture(config.mixture)


def with_seed(config: ExperimentConfig, seed: int) -> ExperimentConfig:
    """Re-key a run on a master seed: the training seed becomes `seed` and a
    mixture data seed (when the data is synthetic) becomes a child of it."""
    train = replace(config.train, seed=seed)
    mixture = config.mixture
    if mixture is not None:
        from .train import SEED_TAG_DATA

        mixture = replace(mixture, seed=child_seed(seed, SEED_TAG_DATA))
    return replace(config, train=train, mixture=mixture)


@dataclass
class RunOutcome:
    config: ExperimentConfig
    result: TrainResult
    report: EvalReport


def run_experiment(config: ExperimentConfig, out_dir=None) -> RunOutcome:
    """Train once and evaluate on the test split. With `out_dir`, also write
    the artifact set: resolved config, loss CSV, checkpoint, eval report, and
    the bank hash record."""
    config.validate()
    train_ds, test_ds = resolve_data(config)
    result = train_model(config.train, train_ds)
    report = evaluate(result.model, test_ds)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "resolved_config.json"), "w", encoding="ascii") as fh:
            json.dump(config.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        save_loss_csv(result.records, os.path.join(out_dir, "loss_curve.csv"))
        save_checkpoint(result.model, os.path.join(out_dir, "checkpoint"))
        with open(os.path.join(out_dir, "eval_report.json"), "w", encoding="ascii") as fh:
            fh.write(report.to_json())
            fh.write("\n")
        with open(os.path.join(out_dir, "bank_hash.json"), "w", encoding="ascii") as fh:
            json.dump(
                {"initial": result.bank_hash_initial, "final": result.bank_hash_final},
                fh,
                indent=2,
                sort_keys=True,
            )
            fh.write("\n")
        bank = result.model.bank()
        if bank is not None:
            save_bank(bank, os.path.join(out_dir, "bank"))
    return RunOutcome(config=config, result=result, report=report)


# ---------------------------------------------------------------------------
# Ablation grid
# ---------------------------------------------------------------------------


@dataclass
class CellSummary:
    label: str
    seeds: tuple[int, ...]
    top1: list[float]
    within_variance: list[float]
    dispersion: list[float | None]

    @property
    def mean_top1(self) -> float:
        return float(np.mean(self.top1))

    @property
    def std_top1(self) -> float:
        return float(np.std(self.top1))


def _cell_config(base: ExperimentConfig, label: str, variant: str, compact: bool) -> ExperimentConfig:
    beta = base.train.beta if compact else 0.0
    return replace(base, train=replace(base.train, head_variant=variant, beta=beta), run_label=label)


def run_ablation(
    base: ExperimentConfig,
    seeds=DEFAULT_SEEDS,
    cells=ABLATION_CELLS,
) -> list[CellSummary]:
    """Train every grid cell on the same seeds; cells with identical settings
    therefore produce identical numbers."""
    require(len(cells) >= 1, "ablation grid must be non-empty")
    require(len(set(label for label, _, _ in cells)) == len(cells), "cell labels must be unique")
    require(len(seeds) >= 1, "need at least one seed")
    summaries = []
    for label, variant, compact in cells:
        cell = _cell_config(base, label, variant, compact)
        tops, wvars, disps = [], [], []
        for seed in seeds:
            outcome = run_experiment(with_seed(cell, seed))
            tops.append(outcome.report.top1)
            wvars.append(outcome.report.within_subclass_variance)
            d = outcome.report.dispersion
            disps.append(None if d is None else d.mean_pairwise_sq_dist)
        summaries.append(
            CellSummary(
                label=label, seeds=tuple(seeds), top1=tops, within_variance=wvars, dispersion=disps
            )
        )
    return summaries


def write_ablation_csv(summaries: list[CellSummary], path) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("label,seeds,mean_top1,std_top1,mean_within_variance\n")
        for s in summaries:
            fh.write(
                f"{s.label},{len(s.seeds)},{s.mean_top1:.6f},{s.std_top1:.6f},"
                f"{float(np.mean(s.within_variance)):.6f}\n"
            )


# ---------------------------------------------------------------------------
# Hyperparameter sweeps
# ---------------------------------------------------------------------------


@dataclass
class SweepRow:
    parameter: str
    value: float
    top1: list[float]
    dispersion: list[float | None]

    @property
    def mean_top1(self) -> float:
        return float(np.mean(self.top1))

    @property
    def std_top1(self) -> float:
        return float(np.std(self.top1))


def run_sweep(
    base: ExperimentConfig,
    parameter: str,
    values,
    seeds=DEFAULT_SEEDS,
) -> list[SweepRow]:
    require(parameter in SWEEPABLE, f"sweepable parameters are {SWEEPABLE}, got {parameter!r}")
    values = list(values)
    require(len(values) >= 1, "sweep needs a non-empty value list")
    rows = []
    for value in values:
        if parameter == "s":
            value = int(value)
            require(value >= 1, f"s must be >= 1, got {value}")
        else:
            value = float(value)
            require(value >= 0, f"{parameter} must be >= 0, got {value}")
        cfg = replace(base, train=replace(base.train, **{parameter: value}))
        tops, disps = [], []
        for seed in seeds:
            outcome = run_experiment(with_seed(cfg, seed))
            tops.append(outcome.report.top1)
            d = outcome.report.dispersion
            disps.append(None if d is None else d.mean_pairwise_sq_dist)
        rows.append(SweepRow(parameter=parameter, value=value, top1=tops, dispersion=disps))
    return rows


def write_sweep_csv(rows: list[SweepRow], path) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("parameter,value,mean_top1,std_top1,mean_dispersion\n")
        for r in rows:
            disp_vals = [d for d in r.dispersion if d is not None]
            disp = f"{float(np.mean(disp_vals)):.9g}" if disp_vals else ""
            fh.write(f"{r.parameter},{r.value:.9g},{r.mean_top1:.6f},{r.std_top1:.6f},{disp}\n")


# ---------------------------------------------------------------------------
# Embedding export from a finished run
# ---------------------------------------------------------------------------


def export_embeddings(model: Model, dataset: LabeledDataset, path, dims: int = 3) -> None:
    feats = model.features(dataset.inputs)
    assignment = model.head.assignments(feats, dataset.labels)
    embedding_export(feats, dataset.labels, assignment, path, dims=dims)
