"""Barycentric adversary over a local pool of neighbor embeddings.

The inner maximization of the robust objective runs projected gradient ascent
on simplex mixing weights over the convex hull of nearest in-batch neighbor
embeddings. Ablation adversaries (best discrete vertex, random in-batch
embedding, random combinatorial search over corrupted sets) share the same
interface.
"""

from dataclasses import dataclass
from typing import Callable, List, Optional

import numpy as np

from .encoder import SetEmbedding
from .head import ClassifierHead, classify_loss

MODES = ("barycentric", "discrete", "random_inbatch", "rcs")


@dataclass(frozen=True)
class SimplexWeights:
    """A point on the probability simplex."""

    lam: np.ndarray

    def __post_init__(self):
        lam = np.asarray(self.lam, dtype=np.float64)
        if np.any(lam < -1e-12):
            raise ValueError("negative simplex weight")
        lam = np.maximum(lam, 0.0)
        if abs(lam.sum() - 1.0) > 1e-9:
            raise ValueError(f"weights sum to {lam.sum()}, not 1")
        lam.setflags(write=False)
        object.__setattr__(self, "lam", lam)

    @property
    def size(self) -> int:
        return self.lam.size


@dataclass
class NeighborPool:
    """Local pool of embedded neighbors around one anchor."""

    anchor: SetEmbedding
    neighbors: List[SetEmbedding]
    radius: float
    anchor_label: Optional[int] = None
    neighbor_instances: Optional[list] = None  # raw SetInstances, only for rcs

    def __post_init__(self):
        if not self.neighbors:
            raise ValueError("pool must be non-empty")
        for nb in self.neighbors:
            dist = np.linalg.norm(nb.values - self.anchor.values)
            if dist > self.radius + 1e-9:
                raise ValueError(f"neighbor {nb.source_id!r} at distance {dist} exceeds radius {self.radius}")

    @property
    def size(self) -> int:
        return len(self.neighbors)

    def matrix(self) -> np.ndarray:
        """Neighbor embeddings stacked as columns, shape (m, K)."""
        return np.stack([nb.values for nb in self.neighbors], axis=1)


@dataclass
class AdversaryConfig:
    K: int = 4
    rho: float = 0.1
    T: int = 2
    eta: float = 0.1
    mode: str = "barycentric"
    rcs_rounds: int = 5
    rcs_sw_filter: bool = False
    same_label_only: bool = False

    def __post_init__(self):
        if self.K < 1 or self.T < 1 or self.eta <= 0 or self.rho <= 0:
            raise ValueError("require K >= 1, T >= 1, eta > 0, rho > 0")
        if self.mode not in MODES:
            raise ValueError(f"unknown adversary mode {self.mode!r}")


def build_pool(anchor: SetEmbedding, batch_embeddings: List[SetEmbedding],
               config: AdversaryConfig, anchor_label: Optional[int] = None,
               batch_labels: Optional[list] = None) -> NeighborPool:
    """Select up to K nearest in-batch neighbors within radius rho.

    The anchor is excluded; if no other embedding lies within rho the pool
    degenerates to {anchor} and the robust term reduces to the clean loss.
    """
    candidates = []
    for i, emb in enumerate(batch_embeddings):
        if emb is anchor or emb.source_id == anchor.source_id:
            continue
        if config.same_label_only and batch_labels is not None and batch_labels[i] != anchor_label:
            continue
        dist = float(np.linalg.norm(emb.values - anchor.values))
        if dist <= config.rho:
            candidates.append((dist, emb.source_id, emb))
    candidates.sort(key=lambda c: (c[0], c[1]))
    chosen = [c[2] for c in candidates[: config.K]]
    if not chosen:
        chosen = [anchor]
    return NeighborPool(anchor=anchor, neighbors=chosen, radius=config.rho, anchor_label=anchor_label)


def mix(pool: NeighborPool, w: SimplexWeights) -> SetEmbedding:
    """Convex combination of the pool's neighbor embeddings."""
    if w.size != pool.size:
        raise ValueError(f"weight length {w.size} does not match pool size {pool.size}")
    values = pool.matrix() @ w.lam
    return SetEmbedding(values=values, source_id=f"mix({pool.anchor.source_id})")


def project_simplex(v: np.ndarray) -> SimplexWeights:
    """Euclidean projection onto the probability simplex (sort-and-threshold)."""
    v = np.asarray(v, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise ValueError("non-finite input")
    k = v.size
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    idx = np.arange(1, k + 1)
    cond = u + (1.0 - css) / idx > 0.0
    j = int(idx[cond][-1])
    tau = (css[j - 1] - 1.0) / j
    return SimplexWeights(lam=np.maximum(v - tau, 0.0))


def inner_maximize(pool: NeighborPool, head: Optional[ClassifierHead], y: Optional[int],
                   config: AdversaryConfig, loss_fn: Optional[Callable] = None):
    """Projected gradient ascent over the simplex; exactly T steps.

    loss_fn(v) -> (loss, grad_v) defaults to the classifier cross-entropy at
    label y. Returns (SimplexWeights, adversarial SetEmbedding, adversarial
    loss). The returned weights are to be treated as constants by the outer
    backward (stop-gradient): the robust loss differentiates only through the
    neighbor embeddings.
    """
    if config.mode != "barycentric":
        raise ValueError("inner_maximize requires mode 'barycentric'")
    if loss_fn is None:
        loss_fn = lambda v: classify_loss(v, y, head)[:2]
    k = pool.size
    V = pool.matrix()
    lam = np.full(k, 1.0 / k)
    for _ in range(config.T):
        _, grad_v = loss_fn(V @ lam)
        lam = project_simplex(lam + config.eta * (V.T @ grad_v)).lam
    w_star = SimplexWeights(lam=lam)
    adv = mix(pool, w_star)
    adv_loss, _ = loss_fn(adv.values)
    return w_star, adv, adv_loss


def adversary_ablation(pool: NeighborPool, head: Optional[ClassifierHead], y: Optional[int],
                       config: AdversaryConfig, rng: Optional[np.random.Generator] = None,
                       corrupt_sample: Optional[Callable] = None,
                       loss_fn: Optional[Callable] = None):
    """Ablation adversaries sharing inner_maximize's output contract.

    discrete: best-loss pool vertex. random_inbatch: uniformly drawn pool
    member. rcs: corrupt_sample(round_index) must yield a candidate embedding
    (and optionally its raw set for the SW filter); the max-loss candidate
    wins, with the anchor as the m=0 fallback.
    """
    if loss_fn is None:
        loss_fn = lambda v: classify_loss(v, y, head)[:2]
    if config.mode == "discrete":
        best = None
        for nb in pool.neighbors:
            loss, _ = loss_fn(nb.values)
            if best is None or loss > best[0]:
                best = (loss, nb)
        return best[1], best[0]
    if config.mode == "random_inbatch":
        if rng is None:
            raise ValueError("random_inbatch mode needs an rng")
        pick = pool.neighbors[int(rng.integers(pool.size))]
        loss, _ = loss_fn(pick.values)
        return pick, loss
    if config.mode == "rcs":
        if corrupt_sample is None:
            raise ValueError("rcs mode needs a corruption sampler with access to raw sets")
        best_emb = pool.anchor
        best_loss, _ = loss_fn(pool.anchor.values)
        for round_idx in range(config.rcs_rounds):
            emb = corrupt_sample(round_idx)
            if emb is None:  # filtered out (e.g. SW-ball constraint)
                continue
            loss, _ = loss_fn(emb.values)
            if loss > best_loss:
                best_loss, best_emb = loss, emb
        return best_emb, best_loss
    raise ValueError(f"adversary_ablation does not handle mode {config.mode!r}")
