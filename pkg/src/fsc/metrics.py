"""Evaluation: top-1 accuracy, Recall@k retrieval, and geometric diagnostics."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .numerics import check_finite, pca_project, require
from .subcenter import DispersionStats

DEFAULT_RECALL_KS = (1, 2, 4, 8)


def top1_accuracy(predictions: np.ndarray, labels: np.ndarray) -> float:
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    require(
        predictions.shape == labels.shape and predictions.ndim == 1 and predictions.size >= 1,
        f"predictions {predictions.shape} and labels {labels.shape} must be equal-length vectors",
    )
    return float(np.mean(predictions == labels))


def per_class_accuracy(predictions: np.ndarray, labels: np.ndarray, num_classes: int) -> np.ndarray:
    out = np.zeros(num_classes)
    for c in range(num_classes):
        mask = labels == c
        out[c] = float(np.mean(predictions[mask] == c)) if mask.any() else 0.0
    return out


def _normalize_rows(features: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(features, axis=1, keepdims=True)
    return features / np.maximum(norms, 1e-300)


def recall_at_k(
    features: np.ndarray,
    labels: np.ndarray,
    ks=DEFAULT_RECALL_KS,
    metric: str = "cosine",
) -> dict[int, float]:
    """For each query, success iff any of its k nearest neighbors (self
    excluded) shares the query's label.

    Distance is cosine on L2-normalized features by default (Euclidean behind
    the flag); neighbor ties break to the smaller sample index.
    """
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    require(features.ndim == 2, "features must be N x d")
    n = features.shape[0]
    require(n >= 2, f"retrieval needs >= 2 samples, got {n}")
    require(labels.shape == (n,), "labels must match feature rows")
    check_finite(features, "retrieval features")
    ks = sorted(set(int(k) for k in ks))
    require(len(ks) >= 1, "need at least one k")
    require(ks[0] >= 1 and ks[-1] <= n - 1, f"every k must lie in [1, {n - 1}], got {ks}")
    require(metric in ("cosine", "euclidean"), f"unknown metric {metric!r}")

    if metric == "cosine":
        normed = _normalize_rows(features)
        score = normed @ normed.T  # higher is closer
    else:
        sq = np.sum(features**2, axis=1)
        score = -(sq[:, None] + sq[None, :] - 2.0 * (features @ features.T))
    np.fill_diagonal(score, -np.inf)
    # stable argsort of -score: descending score, ties to the smaller index
    order = np.argsort(-score, axis=1, kind="stable")[:, : ks[-1]]
    same = labels[order] == labels[:, None]
    hit_any = np.cumsum(same, axis=1) > 0
    return {k: float(np.mean(hit_any[:, k - 1])) for k in ks}


def within_group_variance(
    features: np.ndarray, labels: np.ndarray, assignment: np.ndarray
) -> float:
    """Pooled within-(label, assignment) variance: total squared deviation
    from each group's mean, divided by the total sample count."""
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    assignment = np.asarray(assignment)
    require(features.ndim == 2 and features.shape[0] >= 1, "features must be non-empty N x d")
    require(labels.shape == assignment.shape == (features.shape[0],), "group keys must match rows")
    total = 0.0
    keys = labels.astype(np.int64) * (int(assignment.max()) + 1 if assignment.size else 1)
    keys = keys + assignment.astype(np.int64)
    for key in np.unique(keys):
        group = features[keys == key]
        centered = group - group.mean(axis=0)
        total += float(np.sum(centered * centered))
    return total / features.shape[0]


@dataclass
class EvalReport:
    top1: float
    recall_at: dict[int, float]
    dispersion: DispersionStats | None
    per_class: list[float]
    within_subclass_variance: float

    def to_json(self) -> str:
        payload = {
            "top1": self.top1,
            "recall_at": {str(k): v for k, v in self.recall_at.items()},
            "dispersion": None if self.dispersion is None else asdict(self.dispersion),
            "per_class": list(self.per_class),
            "within_subclass_variance": self.within_subclass_variance,
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        raw = json.loads(text)
        disp = raw.get("dispersion")
        return cls(
            top1=raw["top1"],
            recall_at={int(k): v for k, v in raw["recall_at"].items()},
            dispersion=None if disp is None else DispersionStats(**disp),
            per_class=list(raw["per_class"]),
            within_subclass_variance=raw["within_subclass_variance"],
        )


def embedding_export(
    features: np.ndarray,
    labels: np.ndarray,
    assignment: np.ndarray,
    path,
    dims: int = 3,
) -> None:
    """CSV with columns pca_0..pca_{m-1}, label, subclass. The projection is
    the deterministic PCA from numerics; dims defaults to a 3-D view."""
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    assignment = np.asarray(assignment)
    require(
        labels.shape == assignment.shape == (features.shape[0],),
        "labels/assignment must match feature rows",
    )
    dims = min(dims, features.shape[1])
    projected = pca_project(features, dims)
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(",".join([f"pca_{i}" for i in range(dims)] + ["label", "subclass"]) + "\n")
        for i in range(projected.shape[0]):
            row = [f"{v:.17g}" for v in projected[i]]
            row.append(str(int(labels[i])))
            row.append(str(int(assignment[i])))
            fh.write(",".join(row) + "\n")
