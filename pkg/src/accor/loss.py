"""Hybrid objective: weighted cross-entropy plus supervised contrastive loss."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .ctensor import Tensor, log_softmax, matmul, sqrt


@dataclass
class LossConfig:
    alpha: float = 0.4
    tau: float = 0.1
    class_weights: Sequence[float] | None = None

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.class_weights is not None:
            w = np.asarray(self.class_weights, dtype=float)
            if w.ndim != 1 or np.any(w <= 0) or not np.all(np.isfinite(w)):
                raise ValueError("class weights must be a vector of positive reals")
            self.class_weights = [float(v) for v in w]

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "tau": self.tau, "class_weights": self.class_weights}


def inverse_frequency_weights(labels, n_classes: int) -> np.ndarray:
    """Class weights ``n / (C * count_c)``; absent classes get weight 1."""
    counts = np.bincount(np.asarray(labels, dtype=int), minlength=n_classes).astype(float)
    w = np.ones(n_classes)
    present = counts > 0
    w[present] = counts.sum() / (n_classes * counts[present])
    return w


def _check_labels(labels, n: int, n_classes: int | None = None) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if len(labels) != n:
        raise ValueError(f"{len(labels)} labels for a batch of {n}")
    if n_classes is not None and (labels.min() < 0 or labels.max() >= n_classes):
        raise ValueError(f"labels must lie in [0, {n_classes})")
    return labels


def cross_entropy(logits: Tensor, labels, weights=None) -> Tensor:
    """Weight-normalised mean of ``-log softmax(logits)[label]``."""
    if logits.ndim != 2 or logits.shape[0] < 1:
        raise ValueError(f"logits must be (batch >= 1, classes), got {logits.shape}")
    n, c = logits.shape
    labels = _check_labels(labels, n, c)
    w = np.ones(c) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != (c,):
        raise ValueError(f"expected {c} class weights, got shape {w.shape}")
    sample_w = w[labels]
    pick = np.zeros((n, c))
    pick[np.arange(n), labels] = sample_w / sample_w.sum()
    return -(log_softmax(logits, axis=1) * pick).sum()


def _similarity_logits(z: Tensor, tau: float) -> Tensor:
    return matmul(z, z.T) * (1.0 / tau)


def l2_normalize(x: Tensor) -> Tensor:
    norms = np.linalg.norm(x.data, axis=1)
    if np.any(norms == 0):
        raise ValueError("cannot normalise a zero-norm embedding")
    return x / sqrt((x * x).sum(axis=1, keepdims=True))


def supervised_contrastive(embeddings: Tensor, labels, tau: float = 0.1) -> Tensor:
    """Supervised contrastive loss over L2-normalised embeddings.

    Anchors with no same-class partner in the batch are skipped; a batch in
    which no anchor has a positive yields 0.
    """
    if embeddings.ndim != 2 or embeddings.shape[0] < 2:
        raise ValueError(f"embeddings must be (batch >= 2, dim), got {embeddings.shape}")
    if not tau > 0:
        raise ValueError("tau must be positive")
    n = embeddings.shape[0]
    labels = _check_labels(labels, n)
    z = l2_normalize(embeddings)
    logits = _similarity_logits(z, tau)
    others = ~np.eye(n, dtype=bool)
    positives = (labels[:, None] == labels[None, :]) & others
    n_pos = positives.sum(axis=1)
    anchors = n_pos > 0
    if not anchors.any():
        return (embeddings * 0.0).sum()
    # the log-softmax subtracts each anchor's max over its candidates
    log_prob = log_softmax(logits, axis=1, mask=others)
    coef = np.zeros((n, n))
    coef[anchors] = positives[anchors] / n_pos[anchors, None]
    coef /= anchors.sum()
    return -(log_prob * coef).sum()


def hybrid_loss(logits: Tensor, embeddings: Tensor, labels, config: LossConfig | None = None) -> Tensor:
    """``(1 - alpha) * cross_entropy + alpha * supervised_contrastive``.

    A term whose coefficient is 0 is not evaluated, so the endpoints reduce
    exactly to the single losses.
    """
    config = config or LossConfig()
    if logits.shape[0] != embeddings.shape[0]:
        raise ValueError("logits and embeddings disagree on batch size")
    a = config.alpha
    if a == 0.0:
        return cross_entropy(logits, labels, config.class_weights)
    if a == 1.0:
        return supervised_contrastive(embeddings, labels, config.tau)
    return (1.0 - a) * cross_entropy(logits, labels, config.class_weights) + a * supervised_contrastive(
        embeddings, labels, config.tau
    )
