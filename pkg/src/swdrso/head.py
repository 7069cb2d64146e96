"""Task heads: softmax classifier and margin-based embedding scorer.

Forward, loss, and analytic gradients; all later checked against finite
differences.
"""

from dataclasses import dataclass

import numpy as np

from .encoder import SetEmbedding
from .rng import child_rng


@dataclass
class ClassifierHead:
    weight: np.ndarray  # (m, C)
    bias: np.ndarray  # (C,)

    def __post_init__(self):
        if self.weight.shape[1] < 2:
            raise ValueError("need at least 2 classes")
        if not (np.all(np.isfinite(self.weight)) and np.all(np.isfinite(self.bias))):
            raise ValueError("non-finite head parameters")

    @property
    def n_classes(self) -> int:
        return self.weight.shape[1]

    def zero_grads(self) -> dict:
        return {"weight": np.zeros_like(self.weight), "bias": np.zeros_like(self.bias)}


def init_classifier(embed_dim: int, n_classes: int, seed: int) -> ClassifierHead:
    rng = child_rng(seed, "head")
    return ClassifierHead(
        weight=rng.standard_normal((embed_dim, n_classes)) / np.sqrt(embed_dim),
        bias=np.zeros(n_classes),
    )


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max()
    exps = np.exp(shifted)
    return exps / exps.sum()


def classify_loss(v, y: int, head: ClassifierHead):
    """Cross-entropy of softmax(W v + b) at class y.

    Accepts a SetEmbedding or a raw vector. Returns
    (loss, grad_v, {'weight': ..., 'bias': ...}).
    """
    vec = v.values if isinstance(v, SetEmbedding) else np.asarray(v, dtype=np.float64)
    if not 0 <= y < head.n_classes:
        raise ValueError(f"class {y} out of range [0, {head.n_classes})")
    logits = vec @ head.weight + head.bias
    shifted = logits - logits.max()
    probs = np.exp(shifted)
    probs /= probs.sum()
    loss = float(np.log(np.sum(np.exp(shifted))) - shifted[y])
    delta = probs.copy()
    delta[y] -= 1.0
    grad_v = head.weight @ delta
    grads = {"weight": np.outer(vec, delta), "bias": delta}
    return loss, grad_v, grads


@dataclass
class RankingHead:
    """Squared-Euclidean triplet scorer; no learnable parameters."""

    margin: float = 1.0

    def __post_init__(self):
        if self.margin <= 0:
            raise ValueError("margin must be positive")


def triplet_loss(anchor, positive, negative, head: RankingHead):
    """Hinge on squared distances: max(0, ||a-p||^2 - ||a-n||^2 + margin).

    Subgradient at the kink is 0. Returns (loss, grad_a, grad_p, grad_n).
    """
    a = anchor.values if isinstance(anchor, SetEmbedding) else np.asarray(anchor, dtype=np.float64)
    p = positive.values if isinstance(positive, SetEmbedding) else np.asarray(positive, dtype=np.float64)
    n = negative.values if isinstance(negative, SetEmbedding) else np.asarray(negative, dtype=np.float64)
    if not (a.shape == p.shape == n.shape):
        raise ValueError("embedding dimensions differ")
    gap = float(np.sum((a - p) ** 2) - np.sum((a - n) ** 2) + head.margin)
    if gap <= 0.0:
        zero = np.zeros_like(a)
        return 0.0, zero, zero.copy(), zero.copy()
    grad_a = 2.0 * (n - p)
    grad_p = 2.0 * (p - a)
    grad_n = 2.0 * (a - n)
    return gap, grad_a, grad_p, grad_n
