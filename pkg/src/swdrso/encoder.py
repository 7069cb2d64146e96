"""Wasserstein-aware set encoder.

Each set is featurized element-wise (optional small MLP), projected onto R
frozen directions, sorted per slice, and read off at H index-based quantile
positions. The R*H selected scalars are concatenated and scaled by
1/sqrt(R*H). A mean-pooling variant with the same output signature is
provided for ablations.

Gradients are computed manually: the argsort permutation and the selected
indices recorded in the forward pass are held fixed, which is the standard
subgradient of sorting.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .measures import DirectionSet, SetInstance, sample_directions
from .rng import child_rng


@dataclass
class ElementFeaturizer:
    """One-hidden-layer rectifier MLP applied to each element vector."""

    weight1: np.ndarray  # (d_in, d_hid)
    bias1: np.ndarray  # (d_hid,)
    weight2: np.ndarray  # (d_hid, d_out)
    bias2: np.ndarray  # (d_out,)

    @property
    def d_in(self) -> int:
        return self.weight1.shape[0]

    @property
    def d_out(self) -> int:
        return self.weight2.shape[1]

    def forward(self, x: np.ndarray):
        """Returns (output, cache) with the pre-activation needed by backward."""
        pre = x @ self.weight1 + self.bias1
        hidden = np.maximum(pre, 0.0)
        out = hidden @ self.weight2 + self.bias2
        return out, (x, pre, hidden)

    def backward(self, cache, grad_out: np.ndarray):
        """Gradients of a scalar loss wrt parameters and input rows."""
        x, pre, hidden = cache
        grads = {
            "weight2": hidden.T @ grad_out,
            "bias2": grad_out.sum(axis=0),
        }
        grad_hidden = grad_out @ self.weight2.T
        grad_pre = grad_hidden * (pre > 0.0)
        grads["weight1"] = x.T @ grad_pre
        grads["bias1"] = grad_pre.sum(axis=0)
        grad_x = grad_pre @ self.weight1.T
        return grads, grad_x

    def zero_grads(self) -> dict:
        return {
            "weight1": np.zeros_like(self.weight1),
            "bias1": np.zeros_like(self.bias1),
            "weight2": np.zeros_like(self.weight2),
            "bias2": np.zeros_like(self.bias2),
        }


def init_featurizer(d_in: int, d_out: int, seed: int, d_hid: Optional[int] = None) -> ElementFeaturizer:
    rng = child_rng(seed, "featurizer")
    d_hid = d_hid if d_hid is not None else d_in
    return ElementFeaturizer(
        weight1=rng.standard_normal((d_in, d_hid)) / math.sqrt(d_in),
        bias1=np.zeros(d_hid),
        weight2=rng.standard_normal((d_hid, d_out)) / math.sqrt(d_hid),
        bias2=np.zeros(d_out),
    )


@dataclass
class EncoderParams:
    """Learnable reference set, frozen directions, optional featurizer.

    The embedding dimension is R*H. The reference set only enters through the
    per-slice ordering of its projections, so it receives zero gradient and
    acts as a frozen anchor after initialization.
    """

    reference: np.ndarray  # (H, d)
    dirs: DirectionSet
    featurizer: Optional[ElementFeaturizer] = None

    def __post_init__(self):
        if not np.all(np.isfinite(self.reference)):
            raise ValueError("reference vectors must be finite")
        if self.reference.shape[1] != self.dirs.dim:
            raise ValueError("reference dimension does not match direction dimension")

    @property
    def H(self) -> int:
        return self.reference.shape[0]

    @property
    def R(self) -> int:
        return self.dirs.count

    @property
    def embed_dim(self) -> int:
        return self.R * self.H


def init_encoder(d: int, H: int, R: int, seed: int, featurizer: bool = True,
                 d_in: Optional[int] = None, d_hid: Optional[int] = None) -> EncoderParams:
    """Standard-normal reference init plus a fresh direction bank."""
    rng = child_rng(seed, "reference")
    reference = rng.standard_normal((H, d))
    dirs = sample_directions(R, d, seed)
    feat = (init_featurizer(d_in if d_in is not None else d, d, seed, d_hid=d_hid)
            if featurizer else None)
    return EncoderParams(reference=reference, dirs=dirs, featurizer=feat)


@dataclass(frozen=True)
class SetEmbedding:
    values: np.ndarray  # (R*H,)
    source_id: str

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if not np.all(np.isfinite(values)):
            raise ValueError(f"embedding of {self.source_id!r} has non-finite entries")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)


@dataclass
class ForwardRecord:
    """State captured by encode() and consumed by encode_backward()."""

    set_id: str
    selection: np.ndarray  # (R, H) original element indices feeding each slot
    feat_cache: Optional[tuple]
    n_elements: int
    scale: float


def quantile_index(h: int, n: int, H: int) -> int:
    """Index-based quantile position: ceil(n*h/H), clamped to [1, n]. 1-based."""
    if not 1 <= h <= H:
        raise ValueError(f"rank h={h} outside [1, {H}]")
    if n < 1:
        raise ValueError("cardinality must be >= 1")
    return min(max(math.ceil(n * h / H), 1), n)


def _featurize(instance: SetInstance, params: EncoderParams):
    if params.featurizer is None:
        if instance.dim != params.dirs.dim:
            raise ValueError(
                f"element dimension {instance.dim} does not match encoder dimension {params.dirs.dim}"
            )
        return instance.elements, None
    if instance.dim != params.featurizer.d_in:
        raise ValueError(
            f"element dimension {instance.dim} does not match featurizer input {params.featurizer.d_in}"
        )
    return params.featurizer.forward(instance.elements)


def encode(instance: SetInstance, params: EncoderParams, record: bool = False):
    """Encode a set to its R*H-dimensional quantile embedding.

    With record=True, returns (SetEmbedding, ForwardRecord) for a later manual
    backward pass; otherwise returns the SetEmbedding alone.
    """
    if not np.all(np.isfinite(instance.elements)):
        raise ValueError(f"set {instance.id!r} has non-finite element values")
    feats, cache = _featurize(instance, params)
    n, H, R = instance.n, params.H, params.R
    # 1-based quantile ranks shared by every slice.
    q = np.array([quantile_index(h, n, H) for h in range(1, H + 1)], dtype=np.int64) - 1
    proj = feats @ params.dirs.directions.T  # (n, R)
    order = np.argsort(proj, axis=0, kind="stable")  # (n, R)
    selection = order[q, :].T  # (R, H) original element indices
    scale = 1.0 / math.sqrt(R * H)
    values = np.take_along_axis(proj.T, selection, axis=1).reshape(-1) * scale
    embedding = SetEmbedding(values=values, source_id=instance.id)
    if not record:
        return embedding
    return embedding, ForwardRecord(
        set_id=instance.id, selection=selection, feat_cache=cache, n_elements=n, scale=scale
    )


def encode_backward(record: ForwardRecord, params: EncoderParams, upstream: np.ndarray) -> dict:
    """Route an upstream embedding gradient back to featurizer parameters.

    The recorded selection is held constant (sorting subgradient). The
    reference set receives zero gradient: the forward output depends on it
    only through a piecewise-constant ordering. Returns a dict with
    'featurizer' (or None) and 'elements' gradients.
    """
    upstream = np.asarray(upstream, dtype=np.float64).reshape(params.R, params.H)
    grad_feats = np.zeros((record.n_elements, params.dirs.dim))
    for r in range(params.R):
        omega = params.dirs.directions[r]
        np.add.at(grad_feats, record.selection[r], np.outer(upstream[r] * record.scale, omega))
    if params.featurizer is None:
        return {"featurizer": None, "elements": grad_feats}
    if record.feat_cache is None:
        raise ValueError("backward called without a matching forward record")
    feat_grads, grad_elements = params.featurizer.backward(record.feat_cache, grad_feats)
    return {"featurizer": feat_grads, "elements": grad_elements}


def encode_meanpool(instance: SetInstance, params: EncoderParams, record: bool = False):
    """Mean-pool ablation encoder with the same output signature.

    The featurized mean vector is tiled (fixed, non-learned map) out to R*H
    entries and scaled by 1/sqrt(R*H).
    """
    if not np.all(np.isfinite(instance.elements)):
        raise ValueError(f"set {instance.id!r} has non-finite element values")
    feats, cache = _featurize(instance, params)
    # per-coordinate sort fixes the summation order, making the mean
    # bit-exact under element permutations
    mean = np.sort(feats, axis=0).mean(axis=0)
    reps = math.ceil(params.embed_dim / mean.size)
    scale = 1.0 / math.sqrt(params.embed_dim)
    values = np.tile(mean, reps)[: params.embed_dim] * scale
    embedding = SetEmbedding(values=values, source_id=instance.id)
    if not record:
        return embedding
    return embedding, ForwardRecord(
        set_id=instance.id, selection=None, feat_cache=cache, n_elements=instance.n, scale=scale
    )


def meanpool_backward(record: ForwardRecord, params: EncoderParams, upstream: np.ndarray) -> dict:
    """Backward pass matching encode_meanpool's tiling map."""
    upstream = np.asarray(upstream, dtype=np.float64).reshape(-1)
    d = params.dirs.dim
    grad_mean = np.zeros(d)
    for i, g in enumerate(upstream):
        grad_mean[i % d] += g * record.scale
    grad_feats = np.tile(grad_mean / record.n_elements, (record.n_elements, 1))
    if params.featurizer is None:
        return {"featurizer": None, "elements": grad_feats}
    feat_grads, grad_elements = params.featurizer.backward(record.feat_cache, grad_feats)
    return {"featurizer": feat_grads, "elements": grad_elements}
