"""Inference-time element corruption and split assignment.

Corruption applies k = max(1, round(p*n)) elementary steps (delete / add /
replace) to a set, is label-preserving, and only ever touches evaluation
instances. Evaluation ids are deterministically partitioned into
clean/mild/severe at a 50:30:20 ratio.
"""

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .measures import SetInstance
from .rng import child_rng

OPS = ("delete", "add", "replace")


@dataclass
class CorruptionSpec:
    ops: Tuple[str, ...] = OPS
    p: float = 0.1
    bbox_source: str = "per_set"  # or "dataset"
    seed: int = 0
    dataset_bbox: Optional[Tuple[np.ndarray, np.ndarray]] = None

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("p must lie in [0, 1]")
        if self.p > 0 and not self.ops:
            raise ValueError("ops must be non-empty when p > 0")
        for op in self.ops:
            if op not in OPS:
                raise ValueError(f"unknown corruption op {op!r}")
        if self.bbox_source not in ("per_set", "dataset"):
            raise ValueError(f"unknown bbox_source {self.bbox_source!r}")


@dataclass
class SplitPlan:
    ratios: Tuple[float, float, float] = (0.5, 0.3, 0.2)
    seed: int = 0

    def __post_init__(self):
        if abs(sum(self.ratios) - 1.0) > 1e-12:
            raise ValueError("split ratios must sum to 1")


def _bbox(spec: CorruptionSpec, elements: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    if spec.bbox_source == "dataset":
        if spec.dataset_bbox is None:
            raise ValueError("bbox_source='dataset' requires dataset_bbox")
        return spec.dataset_bbox
    return elements.min(axis=0), elements.max(axis=0)


def dataset_bbox(instances: Sequence[SetInstance]) -> Tuple[np.ndarray, np.ndarray]:
    lo = np.min([inst.elements.min(axis=0) for inst in instances], axis=0)
    hi = np.max([inst.elements.max(axis=0) for inst in instances], axis=0)
    return lo, hi


def corrupt(instance: SetInstance, spec: CorruptionSpec, split_tag: Optional[str] = None,
            allow_train: bool = False) -> SetInstance:
    """Apply k = max(1, round(p*n)) random corruption steps; label unchanged.

    Train-tagged instances are rejected unless allow_train is set; the flag
    exists for adversaries that sample throwaway corrupted candidates during
    training and never persist them.
    """
    if not allow_train and (instance.split_tag == "train" or split_tag == "train"):
        raise ValueError(f"instance {instance.id!r} is tagged train; corruption is eval-only")
    if spec.p == 0.0:
        return instance if split_tag is None else SetInstance(
            id=instance.id, elements=instance.elements, label=instance.label, split_tag=split_tag
        )
    rng = child_rng(spec.seed, f"corrupt:{instance.id}")
    k = max(1, int(round(spec.p * instance.n)))
    lo, hi = _bbox(spec, instance.elements)
    elements = [row.copy() for row in instance.elements]
    for _ in range(k):
        op = spec.ops[int(rng.integers(len(spec.ops)))]
        if op == "delete":
            if len(elements) > 1:
                elements.pop(int(rng.integers(len(elements))))
        elif op == "add":
            elements.append(lo + rng.random(lo.shape) * (hi - lo))
        else:  # replace = delete then add
            if len(elements) > 1:
                elements.pop(int(rng.integers(len(elements))))
            elements.append(lo + rng.random(lo.shape) * (hi - lo))
    return SetInstance(
        id=instance.id,
        elements=np.array(elements),
        label=instance.label,
        split_tag=split_tag if split_tag is not None else instance.split_tag,
    )


def assign_splits(eval_ids: Sequence[str], plan: SplitPlan) -> Dict[str, str]:
    """Deterministic clean/mild/severe assignment hitting ratio counts exactly.

    Counts are floored per split with the remainder going to clean.
    """
    ids = list(eval_ids)
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate ids")
    n = len(ids)
    n_mild = int(np.floor(plan.ratios[1] * n))
    n_severe = int(np.floor(plan.ratios[2] * n))
    n_clean = n - n_mild - n_severe
    rng = child_rng(plan.seed, "splits")
    order = list(np.array(sorted(ids), dtype=object)[rng.permutation(n)]) if n else []
    assignment = {}
    for i, sid in enumerate(order):
        if i < n_clean:
            assignment[sid] = "clean"
        elif i < n_clean + n_mild:
            assignment[sid] = "mild"
        else:
            assignment[sid] = "severe"
    return assignment


# Corruption intensity per split: clean 0, mild 0.1, severe 0.4.
SPLIT_P = {"clean": 0.0, "mild": 0.1, "severe": 0.4}


def corrupt_eval_set(instances: Sequence[SetInstance], plan: SplitPlan,
                     spec: CorruptionSpec) -> List[SetInstance]:
    """Assign splits to evaluation instances and corrupt mild/severe ones.

    Training instances are rejected: corruption never touches the train split.
    """
    for inst in instances:
        if inst.split_tag == "train":
            raise ValueError(f"instance {inst.id!r} is tagged train; corruption is eval-only")
    assignment = assign_splits([inst.id for inst in instances], plan)
    out = []
    for inst in instances:
        tag = assignment[inst.id]
        per_inst = CorruptionSpec(
            ops=spec.ops, p=SPLIT_P[tag], bbox_source=spec.bbox_source,
            seed=spec.seed, dataset_bbox=spec.dataset_bbox,
        )
        out.append(corrupt(inst, per_inst, split_tag=tag))
    return out
