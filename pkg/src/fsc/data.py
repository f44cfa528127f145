"""Synthetic multi-modal classification data and feature-CSV ingestion.

Classes that consist of several well-separated modes are exactly the setting
where one prototype per class is too coarse, so the generator builds each
class as a small constellation of Gaussian modes: class centers sit on a
randomly rotated regular simplex (pairwise distance = class_separation,
guaranteed by construction), and each class's mode centers sit on their own
rotated simplex around the class center (pairwise distance = mode_separation).
Mode identity is recorded for diagnostics but never shown to training.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np

from .numerics import ContractViolation, RandomStream, check_finite, require

SEED_TAG_CLASS_ROTATION = 0
SEED_TAG_MODE_ROTATIONS = 1
SEED_TAG_SAMPLES = 2

TEST_FRACTION = 0.2


@dataclass
class MixtureSpec:
    classes: int = 10
    modes_per_class: int = 4
    input_dim: int = 16
    mode_separation: float = 6.0
    class_separation: float = 3.0
    mode_stddev: float = 0.55
    samples_per_mode: int = 100
    seed: int = 0

    def validate(self) -> None:
        require(self.classes >= 1, f"classes must be >= 1, got {self.classes}")
        require(self.modes_per_class >= 1, f"modes_per_class must be >= 1, got {self.modes_per_class}")
        require(self.input_dim >= 1, f"input_dim must be >= 1, got {self.input_dim}")
        require(self.samples_per_mode >= 1, f"samples_per_mode must be >= 1, got {self.samples_per_mode}")
        require(self.mode_separation > 0, f"mode_separation must be > 0, got {self.mode_separation}")
        require(self.class_separation > 0, f"class_separation must be > 0, got {self.class_separation}")
        require(self.mode_stddev > 0, f"mode_stddev must be > 0, got {self.mode_stddev}")


@dataclass
class LabeledDataset:
    inputs: np.ndarray  # (N, input_dim)
    labels: np.ndarray  # (N,) int
    mode_ids: np.ndarray  # (N,) int, within-class mode index (diagnostics only)
    split: str  # 'train' | 'test'

    def __post_init__(self):
        require(self.inputs.ndim == 2, "inputs must be N x D")
        require(
            self.labels.shape == self.mode_ids.shape == (self.inputs.shape[0],),
            "labels/mode_ids must match inputs rows",
        )
        require(self.split in ("train", "test"), f"bad split tag {self.split!r}")
        check_finite(self.inputs, "dataset inputs")

    @property
    def n(self) -> int:
        return self.inputs.shape[0]

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]

    @property
    def num_classes(self) -> int:
        return int(self.labels.max()) + 1 if self.n else 0


def _centered_simplex(k: int, dim: int, separation: float, stream: RandomStream) -> np.ndarray:
    """k points in R^dim, centered at 0, pairwise distance exactly
    `separation`, in a uniformly random (seeded) orientation.

    Uses the centered-identity construction, which needs k <= dim.
    """
    if k > dim:
        raise ContractViolation(
            f"cannot place {k} points at equal pairwise distance in dimension {dim}: "
            f"this construction needs at least {k} dimensions"
        )
    points = np.zeros((k, dim))
    points[:, :k] = np.eye(k) - 1.0 / k
    points *= separation / np.sqrt(2.0)  # centered identity rows are sqrt(2) apart
    if k == 1:
        return points
    gauss = stream.normal(0.0, 1.0, dim * dim).reshape(dim, dim)
    q, r = np.linalg.qr(gauss)
    q = q * np.where(np.diag(r) >= 0.0, 1.0, -1.0)  # fix QR sign ambiguity, deterministic
    return points @ q.T


def generate_mixture(spec: MixtureSpec) -> tuple[LabeledDataset, LabeledDataset]:
    """Build the mixture and return a stratified-by-mode 80/20 train/test split."""
    spec.validate()
    if spec.samples_per_mode < 2:
        raise ContractViolation(
            "samples_per_mode must be >= 2 so every (class, mode) pair appears "
            "in both the train and the test split"
        )
    root = RandomStream(spec.seed)
    class_centers = _centered_simplex(
        spec.classes, spec.input_dim, spec.class_separation, root.split(SEED_TAG_CLASS_ROTATION)
    )
    mode_rot_root = root.split(SEED_TAG_MODE_ROTATIONS)
    sample_root = root.split(SEED_TAG_SAMPLES)

    n_test = max(1, round(TEST_FRACTION * spec.samples_per_mode))
    n_train = spec.samples_per_mode - n_test

    train_rows, test_rows = [], []
    train_meta, test_meta = [], []  # (label, mode)
    for ci in range(spec.classes):
        mode_centers = class_centers[ci] + _centered_simplex(
            spec.modes_per_class, spec.input_dim, spec.mode_separation, mode_rot_root.split(ci)
        )
        for mi in range(spec.modes_per_class):
            stream = sample_root.split(ci * spec.modes_per_class + mi)
            noise = stream.normal(
                0.0, spec.mode_stddev**2, spec.samples_per_mode * spec.input_dim
            ).reshape(spec.samples_per_mode, spec.input_dim)
            samples = mode_centers[mi] + noise
            train_rows.append(samples[:n_train])
            test_rows.append(samples[n_train:])
            train_meta.extend([(ci, mi)] * n_train)
            test_meta.extend([(ci, mi)] * n_test)

    def assemble(rows, meta, split):
        labels = np.asarray([m[0] for m in meta], dtype=np.int64)
        modes = np.asarray([m[1] for m in meta], dtype=np.int64)
        return LabeledDataset(
            inputs=np.vstack(rows), labels=labels, mode_ids=modes, split=split
        )

    return assemble(train_rows, train_meta, "train"), assemble(test_rows, test_meta, "test")


# ---------------------------------------------------------------------------
# CSV formats
# ---------------------------------------------------------------------------


def save_dataset_csv(ds: LabeledDataset, path, include_mode: bool = True) -> None:
    """Header f0,...,f{D-1},label[,mode]; %.17g keeps values bit-exact."""
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        cols = [f"f{i}" for i in range(ds.dim)] + ["label"] + (["mode"] if include_mode else [])
        fh.write(",".join(cols) + "\n")
        for i in range(ds.n):
            fields = [f"{v:.17g}" for v in ds.inputs[i]] + [str(int(ds.labels[i]))]
            if include_mode:
                fields.append(str(int(ds.mode_ids[i])))
            fh.write(",".join(fields) + "\n")


def load_dataset_csv(path, split: str = "train") -> LabeledDataset:
    """Read a file written by save_dataset_csv (header required)."""
    with open(path, "r", encoding="ascii") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        require(header is not None, f"{path}: empty file")
        has_mode = header[-1] == "mode"
        label_col = len(header) - (2 if has_mode else 1)
        require(header[label_col] == "label", f"{path}: expected a 'label' column in the header")
        inputs, labels, modes = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ContractViolation(
                    f"{path}: line {lineno} has {len(row)} fields, expected {len(header)}"
                )
            inputs.append([float(v) for v in row[:label_col]])
            labels.append(int(row[label_col]))
            modes.append(int(row[label_col + 1]) if has_mode else 0)
    require(len(inputs) > 0, f"{path}: no data rows")
    return LabeledDataset(
        inputs=np.asarray(inputs, dtype=np.float64),
        labels=np.asarray(labels, dtype=np.int64),
        mode_ids=np.asarray(modes, dtype=np.int64),
        split=split,
    )


def load_feature_csv(path, label_column: int = -1, split: str = "train") -> LabeledDataset:
    """Ingest a headerless feature CSV: every row is floats plus one integer
    label column (default: the last). Malformed rows are rejected with their
    1-based line number."""
    inputs, labels = [], []
    width = None
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            fields = line.split(",")
            if width is None:
                width = len(fields)
                require(width >= 2, f"{path}: line {lineno}: need at least one feature and a label")
                lc = label_column if label_column >= 0 else width + label_column
                require(0 <= lc < width, f"{path}: label column {label_column} out of range")
            elif len(fields) != width:
                raise ContractViolation(
                    f"{path}: line {lineno} has {len(fields)} fields, expected {width}"
                )
            try:
                label = int(fields[lc])
            except ValueError as exc:
                raise ContractViolation(
                    f"{path}: line {lineno}: label {fields[lc]!r} is not an integer"
                ) from exc
            if label < 0:
                raise ContractViolation(f"{path}: line {lineno}: label {label} is negative")
            try:
                feats = [float(v) for i, v in enumerate(fields) if i != lc]
            except ValueError as exc:
                raise ContractViolation(f"{path}: line {lineno}: {exc}") from exc
            inputs.append(feats)
            labels.append(label)
    require(len(inputs) > 0, f"{path}: no data rows")
    return LabeledDataset(
        inputs=np.asarray(inputs, dtype=np.float64),
        labels=np.asarray(labels, dtype=np.int64),
        mode_ids=np.zeros(len(labels), dtype=np.int64),
        split=split,
    )
