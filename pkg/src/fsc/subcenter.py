"""Fixed sub-center classification head.

Each class owns `s` prototype rows. Class centers are drawn once from a
kaiming-uniform distribution, sub-centers from an isotropic normal around
their class center, and the resulting weight bank is frozen: training never
updates it and no gradient is ever computed for it. Intra-class structure is
encouraged by a compactness penalty that pulls each feature toward its
currently most-activated sub-center of its own class.

All losses and gradients here are plain functions of (bank, batch); gradients
flow to the features only (the bank rows are constants), except for the
explicitly trainable bank variant used as a baseline.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np

from .numerics import (
    ContractViolation,
    RandomStream,
    check_finite,
    load_matrix_bin,
    require,
    row_logsumexp,
    save_matrix_bin,
)

ASSIGNMENT_RULES = ("argmax_logit", "nearest_euclidean")


def kaiming_uniform_bound(fan_in: int) -> float:
    """Uniform init bound sqrt(6 / fan_in): gain sqrt(2) times sqrt(3 / fan_in)."""
    require(fan_in >= 1, f"fan_in must be >= 1, got {fan_in}")
    return math.sqrt(6.0 / fan_in)


def init_centers(c: int, d: int, stream: RandomStream) -> np.ndarray:
    """Draw one class center per class, i.i.d. uniform on [-b, b), b = sqrt(6/d)."""
    require(c >= 1, f"class count must be >= 1, got {c}")
    require(d >= 1, f"feature dimension must be >= 1, got {d}")
    bound = kaiming_uniform_bound(d)
    return stream.uniform(-bound, bound, c * d).reshape(c, d)


@dataclass
class SubCenterBank:
    """Prototype bank: `s` sub-center rows per class, sampled around per-class
    centers with variance sigma2 and (by default) frozen thereafter."""

    c: int
    s: int
    d: int
    mu: np.ndarray  # (c, d) class centers, kept for diagnostics only
    w: np.ndarray  # (c*s, d), row i*s+j is sub-center j of class i
    sigma2: float
    frozen: bool
    seed: int  # seed of the stream the sub-centers were drawn from

    def __post_init__(self):
        require(self.c >= 1 and self.s >= 1 and self.d >= 1, "bank dims must be >= 1")
        require(self.sigma2 >= 0.0, f"sigma2 must be >= 0, got {self.sigma2}")
        require(self.mu.shape == (self.c, self.d), "mu shape mismatch")
        require(self.w.shape == (self.c * self.s, self.d), "w shape mismatch")
        if self.frozen:
            self.w.setflags(write=False)
            self.mu.setflags(write=False)

    def class_rows(self, i: int) -> slice:
        return slice(i * self.s, (i + 1) * self.s)

    def content_hash(self) -> str:
        """SHA-256 of the row-major little-endian float64 bytes of w."""
        raw = np.ascontiguousarray(self.w, dtype="<f8").tobytes()
        return hashlib.sha256(raw).hexdigest()


def sample_subcenters(
    mu: np.ndarray,
    s: int,
    sigma2: float,
    stream: RandomStream,
    freeze: bool = True,
) -> SubCenterBank:
    """Sample s sub-centers per class, elementwise N(mu_i, sigma2).

    The bank is frozen immediately unless `freeze=False` (the trainable
    baseline keeps the identical initialization but lets gradients in).
    """
    mu = np.asarray(mu, dtype=np.float64)
    require(mu.ndim == 2, "mu must be a c x d matrix")
    require(s >= 1, f"sub-center count must be >= 1, got {s}")
    require(sigma2 >= 0.0, f"sigma2 must be >= 0, got {sigma2}")
    check_finite(mu, "class centers")
    c, d = mu.shape
    noise = stream.normal(0.0, sigma2, c * s * d).reshape(c, s, d)
    w = (mu[:, None, :] + noise).reshape(c * s, d)
    return SubCenterBank(
        c=c, s=s, d=d, mu=mu.copy(), w=w, sigma2=sigma2, frozen=freeze, seed=stream.seed
    )


def build_bank(
    c: int, d: int, s: int, sigma2: float, stream: RandomStream, freeze: bool = True
) -> SubCenterBank:
    """Centers from child stream 0, sub-centers from child stream 1."""
    mu = init_centers(c, d, stream.split(0))
    return sample_subcenters(mu, s, sigma2, stream.split(1), freeze=freeze)


# ---------------------------------------------------------------------------
# Batches and head outputs
# ---------------------------------------------------------------------------


@dataclass
class FeatureBatch:
    """n feature rows with integer class labels in [0, c)."""

    x: np.ndarray  # (n, d)
    y: np.ndarray  # (n,)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y)
        require(self.x.ndim == 2, "features must be an n x d matrix")
        require(self.y.ndim == 1 and self.y.shape[0] == self.x.shape[0], "labels must match rows")
        require(np.issubdtype(self.y.dtype, np.integer), "labels must be integers")
        check_finite(self.x, "features")

    @property
    def n(self) -> int:
        return self.x.shape[0]


@dataclass
class HeadOutput:
    logits: np.ndarray  # (n, c*s)
    subclass_probs: np.ndarray  # (n, c*s), rows sum to 1
    class_probs: np.ndarray  # (n, c)
    assignment: np.ndarray  # (n,) sub-center index within the true class


@dataclass
class LossBreakdown:
    cross_entropy: float
    compactness: float
    beta: float
    total: float = None  # type: ignore[assignment]

    def __post_init__(self):
        if self.total is None:
            self.total = self.cross_entropy + self.beta * self.compactness


def _check_batch(bank: SubCenterBank, batch: FeatureBatch) -> None:
    require(
        batch.x.shape[1] == bank.d,
        f"feature dimension {batch.x.shape[1]} does not match bank dimension {bank.d}",
    )
    require(batch.n >= 1, "batch must contain at least one sample")
    if batch.n and (batch.y.min() < 0 or batch.y.max() >= bank.c):
        raise ContractViolation(
            f"labels must lie in [0, {bank.c}), got range "
            f"[{int(batch.y.min())}, {int(batch.y.max())}]"
        )


def _true_class_logits(bank: SubCenterBank, logits: np.ndarray, y: np.ndarray) -> np.ndarray:
    cols = y[:, None] * bank.s + np.arange(bank.s)[None, :]
    return np.take_along_axis(logits, cols, axis=1)


def _assign(
    bank: SubCenterBank,
    batch: FeatureBatch,
    true_logits: np.ndarray,
    rule: str,
) -> np.ndarray:
    require(rule in ASSIGNMENT_RULES, f"unknown assignment rule {rule!r}")
    if rule == "argmax_logit":
        # ties resolve to the smallest index (np.argmax picks the first max)
        return np.argmax(true_logits, axis=1)
    w3 = bank.w.reshape(bank.c, bank.s, bank.d)
    diffs = batch.x[:, None, :] - w3[batch.y]  # (n, s, d)
    return np.argmin(np.einsum("nsd,nsd->ns", diffs, diffs), axis=1)


def forward(
    bank: SubCenterBank, batch: FeatureBatch, assignment_rule: str = "argmax_logit"
) -> HeadOutput:
    """Scores against every sub-center, softmax over all c*s of them, class
    probabilities by summing each class's block, and the per-sample
    sub-center assignment within the labeled class."""
    _check_batch(bank, batch)
    logits = batch.x @ bank.w.T
    lse = row_logsumexp(logits)
    subclass_probs = np.exp(logits - lse[:, None])
    class_probs = subclass_probs.reshape(batch.n, bank.c, bank.s).sum(axis=2)
    true_logits = _true_class_logits(bank, logits, batch.y)
    assignment = _assign(bank, batch, true_logits, assignment_rule)
    return HeadOutput(
        logits=logits,
        subclass_probs=subclass_probs,
        class_probs=class_probs,
        assignment=assignment,
    )


def compactness_loss(bank: SubCenterBank, batch: FeatureBatch, assignment: np.ndarray) -> float:
    """0.5 * sum_i ||x_i - w_{y_i, k_i}||^2 over the batch (a sum, not a mean)."""
    _check_batch(bank, batch)
    assignment = np.asarray(assignment)
    require(
        assignment.shape == (batch.n,),
        f"assignment length {assignment.shape} does not match batch size {batch.n}",
    )
    target = bank.w[batch.y * bank.s + assignment]
    delta = batch.x - target
    return 0.5 * float(np.sum(delta * delta))


def fsc_loss(
    bank: SubCenterBank,
    batch: FeatureBatch,
    beta: float,
    assignment_rule: str = "argmax_logit",
) -> LossBreakdown:
    """Cross-entropy of the summed true-class sub-probabilities plus
    beta times the compactness penalty.

    The cross-entropy term is computed as logsumexp(all logits) minus
    logsumexp(true-class logits), which never materializes tiny probabilities.
    """
    require(beta >= 0.0, f"beta must be >= 0, got {beta}")
    _check_batch(bank, batch)
    logits = batch.x @ bank.w.T
    true_logits = _true_class_logits(bank, logits, batch.y)
    ce = float(np.mean(row_logsumexp(logits) - row_logsumexp(true_logits)))
    assignment = _assign(bank, batch, true_logits, assignment_rule)
    comp = compactness_loss(bank, batch, assignment)
    return LossBreakdown(cross_entropy=ce, compactness=comp, beta=beta)


def loss_grad_features(
    bank: SubCenterBank,
    batch: FeatureBatch,
    beta: float,
    assignment_rule: str = "argmax_logit",
) -> np.ndarray:
    """d(total loss)/d(features), with the bank treated as constants.

    Per sample: (1/n) [ sum_{j,m} P_{j,m} w_{j,m} - sum_m q_m w_{y,m} ]
    + beta (x - w_{y,k}), where q renormalizes the true-class block of P and
    the argmax assignment k is locally constant.
    """
    require(beta >= 0.0, f"beta must be >= 0, got {beta}")
    _check_batch(bank, batch)
    n = batch.n
    logits = batch.x @ bank.w.T
    lse = row_logsumexp(logits)
    probs = np.exp(logits - lse[:, None])  # (n, c*s)
    true_logits = _true_class_logits(bank, logits, batch.y)
    q = np.exp(true_logits - row_logsumexp(true_logits)[:, None])  # (n, s)
    w3 = bank.w.reshape(bank.c, bank.s, bank.d)
    pulled = np.einsum("ns,nsd->nd", q, w3[batch.y])
    grad = (probs @ bank.w - pulled) / n
    if beta != 0.0:
        assignment = _assign(bank, batch, true_logits, assignment_rule)
        grad = grad + beta * (batch.x - bank.w[batch.y * bank.s + assignment])
    return grad


def loss_grad_subcenters(
    bank: SubCenterBank,
    batch: FeatureBatch,
    beta: float,
    assignment_rule: str = "argmax_logit",
) -> np.ndarray:
    """d(total loss)/d(bank rows), for the trainable-bank baseline only.

    Refused on frozen banks: freezing means exactly that this gradient is
    never computed.
    """
    require(not bank.frozen, "gradient requested for a frozen sub-center bank")
    require(beta >= 0.0, f"beta must be >= 0, got {beta}")
    _check_batch(bank, batch)
    n = batch.n
    logits = batch.x @ bank.w.T
    lse = row_logsumexp(logits)
    probs = np.exp(logits - lse[:, None])
    true_logits = _true_class_logits(bank, logits, batch.y)
    q = np.exp(true_logits - row_logsumexp(true_logits)[:, None])
    grad = probs.T @ batch.x / n  # (c*s, d)
    rows = batch.y[:, None] * bank.s + np.arange(bank.s)[None, :]  # (n, s)
    np.subtract.at(grad, rows.ravel(), (q[:, :, None] * batch.x[:, None, :] / n).reshape(-1, bank.d))
    if beta != 0.0:
        assignment = _assign(bank, batch, true_logits, assignment_rule)
        hit = batch.y * bank.s + assignment
        np.add.at(grad, hit, beta * (bank.w[hit] - batch.x))
    return grad


@dataclass
class DispersionStats:
    mean_pairwise_sq_dist: float
    mean_pairwise_cosine: float


def dispersion_stats(bank: SubCenterBank) -> DispersionStats:
    """Mean squared distance and mean cosine over all same-class sub-center
    pairs, averaged over classes. Needs s >= 2 (otherwise there are no pairs)."""
    require(bank.s >= 2, f"dispersion needs s >= 2 sub-centers per class, got {bank.s}")
    w3 = bank.w.reshape(bank.c, bank.s, bank.d)
    iu = np.triu_indices(bank.s, k=1)
    sq_means = np.empty(bank.c)
    cos_means = np.empty(bank.c)
    for i in range(bank.c):
        block = w3[i]
        gram = block @ block.T
        sq_norms = np.diag(gram)
        sq = sq_norms[:, None] + sq_norms[None, :] - 2.0 * gram
        norms = np.sqrt(np.maximum(sq_norms, 1e-300))
        cos = gram / (norms[:, None] * norms[None, :])
        sq_means[i] = np.mean(sq[iu])
        cos_means[i] = np.mean(cos[iu])
    return DispersionStats(
        mean_pairwise_sq_dist=float(np.mean(sq_means)),
        mean_pairwise_cosine=float(np.mean(cos_means)),
    )


# ---------------------------------------------------------------------------
# Serialization: JSON header + binary weight dump
# ---------------------------------------------------------------------------


def save_bank(bank: SubCenterBank, path_prefix) -> None:
    """Write <prefix>.json (c, s, d, sigma2, seed, content hash) and
    <prefix>.bin (w then mu in the binary matrix format)."""
    header = {
        "c": bank.c,
        "s": bank.s,
        "d": bank.d,
        "sigma2": bank.sigma2,
        "seed": bank.seed,
        "frozen": bank.frozen,
        "content_hash": bank.content_hash(),
    }
    with open(f"{path_prefix}.json", "w", encoding="ascii") as fh:
        json.dump(header, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(f"{path_prefix}.bin", "wb") as fh:
        save_matrix_bin(bank.w, fh)
        save_matrix_bin(bank.mu, fh)


def load_bank(path_prefix) -> SubCenterBank:
    with open(f"{path_prefix}.json", "r", encoding="ascii") as fh:
        header = json.load(fh)
    with open(f"{path_prefix}.bin", "rb") as fh:
        w = load_matrix_bin(fh)
        mu = load_matrix_bin(fh)
    bank = SubCenterBank(
        c=int(header["c"]),
        s=int(header["s"]),
        d=int(header["d"]),
        mu=mu,
        w=w,
        sigma2=float(header["sigma2"]),
        frozen=bool(header["frozen"]),
        seed=int(header["seed"]),
    )
    if bank.content_hash() != header["content_hash"]:
        raise ContractViolation(f"{path_prefix}.bin does not match its recorded content hash")
    return bank
