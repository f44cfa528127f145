"""Training loop: seeded end to end, single-threaded, deterministic.

Seed derivation from the master seed (all via numerics.child_seed):
  tag 0 -> backbone init, tag 1 -> head init (bank centers/sub-centers or
  baseline weights), tag 2 -> reserved for data when no explicit data seed is
  given, tag 3 -> shuffle root (epoch e shuffles with child_seed(shuffle, e)).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .backbone import MlpBackbone, OptimizerState, cosine_lr, sgd_step
from .data import LabeledDataset
from .heads import HEAD_VARIANTS, CenterLossHead, SoftmaxHead, SubCenterHead, build_head
from .metrics import (
    DEFAULT_RECALL_KS,
    EvalReport,
    per_class_accuracy,
    recall_at_k,
    top1_accuracy,
    within_group_variance,
)
from .numerics import (
    RandomStream,
    child_seed,
    load_matrix_bin,
    require,
    save_matrix_bin,
)
from .subcenter import ASSIGNMENT_RULES, SubCenterBank, dispersion_stats

SEED_TAG_NET = 0
SEED_TAG_HEAD = 1
SEED_TAG_DATA = 2
SEED_TAG_SHUFFLE = 3

CHECKPOINT_FORMAT = 1


@dataclass
class TrainConfig:
    s: int = 4
    sigma2: float = 1e-3
    beta: float = 1e-4
    lr0: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 4e-5
    epochs: int = 50
    batch_size: int = 64
    seed: int = 1
    head_variant: str = "fsc"
    assignment_rule: str = "argmax_logit"
    normalize_features: bool = False
    hidden_dims: tuple[int, ...] = (64, 64)
    feature_dim: int = 16

    def validate(self) -> None:
        require(self.s >= 1, f"s must be >= 1, got {self.s}")
        require(self.sigma2 >= 0, f"sigma2 must be >= 0, got {self.sigma2}")
        require(self.beta >= 0, f"beta must be >= 0, got {self.beta}")
        require(self.lr0 >= 0 and self.momentum >= 0 and self.weight_decay >= 0, "rates must be >= 0")
        require(self.epochs >= 0, f"epochs must be >= 0, got {self.epochs}")
        require(self.batch_size >= 1, f"batch_size must be >= 1, got {self.batch_size}")
        require(self.feature_dim >= 1, f"feature_dim must be >= 1, got {self.feature_dim}")
        require(all(h >= 1 for h in self.hidden_dims), "hidden widths must be >= 1")
        require(self.head_variant in HEAD_VARIANTS, f"unknown head variant {self.head_variant!r}")
        require(
            self.assignment_rule in ASSIGNMENT_RULES,
            f"unknown assignment rule {self.assignment_rule!r}",
        )


@dataclass
class BatchRecord:
    epoch: int
    batch: int
    cross_entropy: float
    compactness: float
    total: float
    lr: float


@dataclass
class Model:
    """A trained (or freshly initialized) backbone plus head."""

    net: MlpBackbone
    head: object  # SubCenterHead | SoftmaxHead | CenterLossHead
    config: TrainConfig
    num_classes: int

    def features(self, inputs: np.ndarray) -> np.ndarray:
        feats = self.net.forward(inputs, cache=False)
        if self.config.normalize_features:
            feats = _normalize_rows(feats)
        return feats

    def bank(self) -> SubCenterBank | None:
        return self.head.bank if isinstance(self.head, SubCenterHead) else None


def _normalize_rows(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    return x / np.maximum(norms, 1e-12)


def _normalize_backward(x_raw: np.ndarray, grad_normed: np.ndarray) -> np.ndarray:
    # d/dx (x/||x||) applied to an incoming gradient
    norms = np.maximum(np.linalg.norm(x_raw, axis=1, keepdims=True), 1e-12)
    xn = x_raw / norms
    return (grad_normed - xn * np.sum(xn * grad_normed, axis=1, keepdims=True)) / norms


def build_model(config: TrainConfig, num_classes: int, input_dim: int) -> Model:
    config.validate()
    require(num_classes >= 1, f"need >= 1 classes, got {num_classes}")
    net_stream = RandomStream(child_seed(config.seed, SEED_TAG_NET))
    head_stream = RandomStream(child_seed(config.seed, SEED_TAG_HEAD))
    dims = [input_dim, *config.hidden_dims, config.feature_dim]
    net = MlpBackbone.build(dims, net_stream)
    head = build_head(
        config.head_variant,
        num_classes,
        config.feature_dim,
        config.s,
        config.sigma2,
        config.beta,
        head_stream,
        config.assignment_rule,
    )
    return Model(net=net, head=head, config=config, num_classes=num_classes)


def train_epoch(
    model: Model,
    dataset: LabeledDataset,
    state: OptimizerState,
    epoch: int,
    batch_size: int,
) -> list[BatchRecord]:
    """One pass over a seeded shuffle of the dataset. Backbone parameters are
    always updated; head parameters only when the head exposes any."""
    require(dataset.n >= 1, "train_epoch requires a non-empty dataset")
    require(batch_size >= 1, f"batch_size must be >= 1, got {batch_size}")
    cfg = model.config
    shuffle_seed = child_seed(child_seed(cfg.seed, SEED_TAG_SHUFFLE), epoch)
    perm = RandomStream(shuffle_seed).permutation(dataset.n)
    records = []
    params = model.net.params() + model.head.params()
    for bi, start in enumerate(range(0, dataset.n, batch_size)):
        idx = perm[start : start + batch_size]
        x_raw = model.net.forward(dataset.inputs[idx])
        x = _normalize_rows(x_raw) if cfg.normalize_features else x_raw
        breakdown, grad_x, head_grads = model.head.loss_and_grads(x, dataset.labels[idx])
        if cfg.normalize_features:
            grad_x = _normalize_backward(x_raw, grad_x)
        net_grads = model.net.backward(grad_x)
        lr = cosine_lr(state.lr0, state.current_step, state.total_steps)
        sgd_step(state, params, net_grads + head_grads)
        records.append(
            BatchRecord(
                epoch=epoch,
                batch=bi,
                cross_entropy=breakdown.cross_entropy,
                compactness=breakdown.compactness,
                total=breakdown.total,
                lr=lr,
            )
        )
    return records


@dataclass
class TrainResult:
    model: Model
    records: list[BatchRecord] = field(default_factory=list)
    bank_hash_initial: str | None = None
    bank_hash_final: str | None = None


def train_model(config: TrainConfig, train_ds: LabeledDataset) -> TrainResult:
    config.validate()
    require(train_ds.n >= 1, "training dataset is empty")
    num_classes = max(train_ds.num_classes, 1)
    model = build_model(config, num_classes, train_ds.dim)
    bank = model.bank()
    result = TrainResult(model=model)
    result.bank_hash_initial = bank.content_hash() if bank is not None else None
    if config.epochs > 0:
        batches_per_epoch = (train_ds.n + config.batch_size - 1) // config.batch_size
        state = OptimizerState.for_params(
            model.net.params() + model.head.params(),
            lr0=config.lr0,
            momentum=config.momentum,
            weight_decay=config.weight_decay,
            total_steps=config.epochs * batches_per_epoch,
        )
        for epoch in range(config.epochs):
            result.records.extend(
                train_epoch(model, train_ds, state, epoch, config.batch_size)
            )
    result.bank_hash_final = bank.content_hash() if bank is not None else None
    return result


def evaluate(model: Model, dataset: LabeledDataset, ks=DEFAULT_RECALL_KS) -> EvalReport:
    require(dataset.n >= 1, "cannot evaluate on an empty dataset")
    feats = model.features(dataset.inputs)
    predictions = model.head.predict(feats)
    assignment = model.head.assignments(feats, dataset.labels)
    ks = tuple(k for k in ks if k <= dataset.n - 1)
    recalls = recall_at_k(feats, dataset.labels, ks) if ks and dataset.n >= 2 else {}
    bank = model.bank()
    disp = dispersion_stats(bank) if bank is not None and bank.s >= 2 else None
    return EvalReport(
        top1=top1_accuracy(predictions, dataset.labels),
        recall_at=recalls,
        dispersion=disp,
        per_class=list(per_class_accuracy(predictions, dataset.labels, model.num_classes)),
        within_subclass_variance=within_group_variance(feats, dataset.labels, assignment),
    )


# ---------------------------------------------------------------------------
# Loss CSV and checkpoints
# ---------------------------------------------------------------------------

LOSS_CSV_HEADER = "epoch,batch,cross_entropy,compactness,total,lr"


def save_loss_csv(records: list[BatchRecord], path) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(LOSS_CSV_HEADER + "\n")
        for r in records:
            fh.write(
                f"{r.epoch},{r.batch},{r.cross_entropy:.17g},"
                f"{r.compactness:.17g},{r.total:.17g},{r.lr:.17g}\n"
            )


def save_checkpoint(model: Model, path_prefix) -> None:
    """<prefix>.json holds structure and config; <prefix>.bin holds every
    tensor as stacked binary matrix records in the documented order."""
    cfg = model.config
    meta = {
        "format": CHECKPOINT_FORMAT,
        "config": _config_to_dict(cfg),
        "num_classes": model.num_classes,
        "input_dim": model.net.in_dim,
        "activations": [layer.activation for layer in model.net.layers],
        "layer_dims": [model.net.in_dim] + [l.weight.shape[1] for l in model.net.layers],
        "tensors": [],
    }
    tensors: list[np.ndarray] = []
    for li, layer in enumerate(model.net.layers):
        meta["tensors"] += [f"layer{li}.weight", f"layer{li}.bias"]
        tensors += [layer.weight, layer.bias.reshape(1, -1)]
    head = model.head
    if isinstance(head, SubCenterHead):
        meta["head"] = {
            "kind": "subcenter",
            "frozen": head.bank.frozen,
            "sigma2": head.bank.sigma2,
            "seed": head.bank.seed,
            "s": head.bank.s,
            "content_hash": head.bank.content_hash(),
        }
        meta["tensors"] += ["bank.w", "bank.mu"]
        tensors += [head.bank.w, head.bank.mu]
    elif isinstance(head, CenterLossHead):
        meta["head"] = {"kind": "center_loss", "alpha": head.alpha}
        meta["tensors"] += ["head.weights", "head.centers"]
        tensors += [head.weights, head.centers]
    else:
        meta["head"] = {"kind": "softmax"}
        meta["tensors"] += ["head.weights"]
        tensors += [head.weights]
    with open(f"{path_prefix}.json", "w", encoding="ascii") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(f"{path_prefix}.bin", "wb") as fh:
        for t in tensors:
            save_matrix_bin(t, fh)


def load_checkpoint(path_prefix) -> Model:
    from .backbone import Layer  # local import to keep module load order simple
    from .subcenter import SubCenterBank

    with open(f"{path_prefix}.json", "r", encoding="ascii") as fh:
        meta = json.load(fh)
    require(meta.get("format") == CHECKPOINT_FORMAT, "unsupported checkpoint format")
    config = _config_from_dict(meta["config"])
    with open(f"{path_prefix}.bin", "rb") as fh:
        tensors = {name: load_matrix_bin(fh) for name in meta["tensors"]}
    layers = []
    for li, act in enumerate(meta["activations"]):
        layers.append(
            Layer(
                weight=tensors[f"layer{li}.weight"],
                bias=tensors[f"layer{li}.bias"].reshape(-1),
                activation=act,
            )
        )
    net = MlpBackbone(layers)
    head_meta = meta["head"]
    if head_meta["kind"] == "subcenter":
        w = tensors["bank.w"]
        mu = tensors["bank.mu"]
        bank = SubCenterBank(
            c=meta["num_classes"],
            s=int(head_meta["s"]),
            d=w.shape[1],
            mu=mu,
            w=w,
            sigma2=float(head_meta["sigma2"]),
            frozen=bool(head_meta["frozen"]),
            seed=int(head_meta["seed"]),
        )
        require(
            bank.content_hash() == head_meta["content_hash"],
            "checkpoint bank does not match its recorded content hash",
        )
        head = SubCenterHead(bank, config.beta, config.assignment_rule)
    elif head_meta["kind"] == "center_loss":
        head = CenterLossHead(tensors["head.weights"], beta=config.beta, alpha=head_meta["alpha"])
        head.centers = tensors["head.centers"]
    else:
        head = SoftmaxHead(tensors["head.weights"])
    return Model(net=net, head=head, config=config, num_classes=int(meta["num_classes"]))


def _config_to_dict(cfg: TrainConfig) -> dict:
    raw = asdict(cfg)
    raw["hidden_dims"] = list(cfg.hidden_dims)
    return raw


def _config_from_dict(raw: dict) -> TrainConfig:
    raw = dict(raw)
    raw["hidden_dims"] = tuple(raw.get("hidden_dims", (64, 64)))
    return TrainConfig(**raw)
