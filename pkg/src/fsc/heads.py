"""Classification heads behind a single training-facing interface.

Every head answers loss_and_grads(features, labels): a loss breakdown, the
gradient with respect to the features, and gradients for its own trainable
parameters (empty for the frozen sub-center head). The plain softmax head is
an independent implementation, not the s=1 special case of the sub-center
code, so the two can be checked against each other.
"""

from __future__ import annotations

import numpy as np

from .numerics import ContractViolation, RandomStream, require, row_logsumexp
from .subcenter import (
    FeatureBatch,
    LossBreakdown,
    SubCenterBank,
    build_bank,
    forward,
    fsc_loss,
    init_centers,
    loss_grad_features,
    loss_grad_subcenters,
)

HEAD_VARIANTS = ("fsc", "softmax", "center_loss", "trainable_subcenter")


class SubCenterHead:
    """Sub-center bank head; frozen (the default) or trainable baseline."""

    def __init__(self, bank: SubCenterBank, beta: float, assignment_rule: str = "argmax_logit"):
        require(beta >= 0.0, f"beta must be >= 0, got {beta}")
        self.bank = bank
        self.beta = beta
        self.assignment_rule = assignment_rule

    @property
    def num_classes(self) -> int:
        return self.bank.c

    def params(self) -> list[np.ndarray]:
        return [] if self.bank.frozen else [self.bank.w]

    def loss_and_grads(self, x: np.ndarray, y: np.ndarray):
        batch = FeatureBatch(x=x, y=y)
        breakdown = fsc_loss(self.bank, batch, self.beta, self.assignment_rule)
        grad_x = loss_grad_features(self.bank, batch, self.beta, self.assignment_rule)
        if self.bank.frozen:
            param_grads: list[np.ndarray] = []
        else:
            param_grads = [loss_grad_subcenters(self.bank, batch, self.beta, self.assignment_rule)]
        return breakdown, grad_x, param_grads

    def class_probs(self, x: np.ndarray, y: np.ndarray | None = None) -> np.ndarray:
        if y is None:
            y = np.zeros(x.shape[0], dtype=np.int64)
        return forward(self.bank, FeatureBatch(x=x, y=y), self.assignment_rule).class_probs

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.argmax(self.class_probs(x), axis=1)

    def assignments(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return forward(self.bank, FeatureBatch(x=x, y=y), self.assignment_rule).assignment


class SoftmaxHead:
    """One trainable weight row per class, standard cross-entropy."""

    def __init__(self, weights: np.ndarray):
        weights = np.asarray(weights, dtype=np.float64)
        require(weights.ndim == 2, "softmax weights must be c x d")
        self.weights = weights

    @classmethod
    def build(cls, c: int, d: int, stream: RandomStream) -> "SoftmaxHead":
        return cls(init_centers(c, d, stream))

    @property
    def num_classes(self) -> int:
        return self.weights.shape[0]

    def params(self) -> list[np.ndarray]:
        return [self.weights]

    def _check(self, x: np.ndarray, y: np.ndarray) -> None:
        require(x.shape[1] == self.weights.shape[1], "feature dim does not match head")
        if y.min() < 0 or y.max() >= self.num_classes:
            raise ContractViolation(f"labels outside [0, {self.num_classes})")

    def loss_and_grads(self, x: np.ndarray, y: np.ndarray):
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y)
        self._check(x, y)
        n = x.shape[0]
        logits = x @ self.weights.T
        lse = row_logsumexp(logits)
        ce = float(np.mean(lse - logits[np.arange(n), y]))
        probs = np.exp(logits - lse[:, None])
        resid = probs.copy()
        resid[np.arange(n), y] -= 1.0
        grad_x = resid @ self.weights / n
        grad_w = resid.T @ x / n
        return LossBreakdown(cross_entropy=ce, compactness=0.0, beta=0.0), grad_x, [grad_w]

    def class_probs(self, x: np.ndarray, y=None) -> np.ndarray:
        logits = x @ self.weights.T
        return np.exp(logits - row_logsumexp(logits)[:, None])

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.argmax(x @ self.weights.T, axis=1)

    def assignments(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return np.zeros(x.shape[0], dtype=np.int64)


class CenterLossHead(SoftmaxHead):
    """Softmax head plus a center penalty beta * 0.5 * sum ||x - c_y||^2.

    Centers are not SGD parameters: after every batch they move by the
    classic delta rule c_j -= alpha * sum_{y_i=j}(c_j - x_i) / (1 + count_j).
    """

    def __init__(self, weights: np.ndarray, beta: float, alpha: float = 0.5):
        super().__init__(weights)
        require(beta >= 0.0 and alpha >= 0.0, "beta and alpha must be >= 0")
        self.beta = beta
        self.alpha = alpha
        self.centers = np.zeros_like(self.weights)

    @classmethod
    def build(cls, c: int, d: int, stream: RandomStream, beta: float = 0.0) -> "CenterLossHead":
        return cls(init_centers(c, d, stream), beta=beta)

    def loss_and_grads(self, x: np.ndarray, y: np.ndarray):
        ce_breakdown, grad_x, param_grads = super().loss_and_grads(x, y)
        delta = x - self.centers[y]
        penalty = 0.5 * float(np.sum(delta * delta))
        grad_x = grad_x + self.beta * delta
        breakdown = LossBreakdown(
            cross_entropy=ce_breakdown.cross_entropy, compactness=penalty, beta=self.beta
        )
        self._update_centers(x, y)
        return breakdown, grad_x, param_grads

    def _update_centers(self, x: np.ndarray, y: np.ndarray) -> None:
        counts = np.bincount(y, minlength=self.num_classes).astype(np.float64)
        summed = np.zeros_like(self.centers)
        np.add.at(summed, y, self.centers[y] - x)
        self.centers -= self.alpha * summed / (1.0 + counts)[:, None]


def build_head(
    variant: str,
    c: int,
    d: int,
    s: int,
    sigma2: float,
    beta: float,
    stream: RandomStream,
    assignment_rule: str = "argmax_logit",
):
    """Construct a head by variant name; `stream` seeds all its randomness.

    The trainable-bank baseline ignores sigma2 and samples with variance 2/d
    instead: that reproduces the dispersion of the conventional trainable
    multi-prototype initialization (independent kaiming-uniform rows have
    same-class mean squared distance 2*d*(2/d) = 4), whereas sigma2 is the
    knob of the frozen method.
    """
    require(variant in HEAD_VARIANTS, f"unknown head variant {variant!r}")
    if variant == "fsc":
        return SubCenterHead(build_bank(c, d, s, sigma2, stream, freeze=True), beta, assignment_rule)
    if variant == "trainable_subcenter":
        bank = build_bank(c, d, s, 2.0 / d, stream, freeze=False)
        return SubCenterHead(bank, beta, assignment_rule)
    if variant == "softmax":
        return SoftmaxHead.build(c, d, stream.split(0))
    return CenterLossHead.build(c, d, stream.split(0), beta=beta)
