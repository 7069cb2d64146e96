"""Synthetic desk-scale datasets and dataset file I/O.

Datasets are line-delimited records: one JSON object per line with fields
id, label (optional), split ("train"/"clean"/"mild"/"severe"), and elements
as an array of fixed-length numeric arrays. Floats are written with 17
significant digits so that read(write(x)) reproduces every value exactly.
"""

import json
from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from .corruption import CorruptionSpec, corrupt
from .measures import SetInstance
from .rng import child_rng


@dataclass
class SyntheticSpec:
    n_sets: int = 300
    n_classes: int = 3
    n_min: int = 5
    n_max: int = 15
    dim: int = 8
    dispersion: float = 3.0  # spread of class-prototype clouds
    noise: float = 0.5  # within-set element noise
    n_prototypes: int = 3  # prototype points per class
    seed: int = 0

    def __post_init__(self):
        if self.n_min < 1 or self.n_max < self.n_min:
            raise ValueError("need 1 <= n_min <= n_max")
        if self.n_classes < 2:
            raise ValueError("need at least 2 classes")


def _class_prototypes(spec: SyntheticSpec) -> np.ndarray:
    rng = child_rng(spec.seed, "prototypes")
    return rng.standard_normal((spec.n_classes, spec.n_prototypes, spec.dim)) * spec.dispersion


def _sample_set(rng: np.random.Generator, protos: np.ndarray, spec: SyntheticSpec) -> np.ndarray:
    n = int(rng.integers(spec.n_min, spec.n_max + 1))
    picks = rng.integers(protos.shape[0], size=n)
    return protos[picks] + rng.standard_normal((n, spec.dim)) * spec.noise


def gen_classification(spec: SyntheticSpec, id_prefix: str = "set") -> List[SetInstance]:
    """Stratified Gaussian-prototype classification sets, deterministic from seed."""
    protos = _class_prototypes(spec)
    rng = child_rng(spec.seed, "classification")
    per_class = spec.n_sets // spec.n_classes
    counts = [per_class + (1 if c < spec.n_sets % spec.n_classes else 0)
              for c in range(spec.n_classes)]
    out = []
    idx = 0
    for c, count in enumerate(counts):
        for _ in range(count):
            out.append(SetInstance(
                id=f"{id_prefix}-{idx:05d}",
                elements=_sample_set(rng, protos[c], spec),
                label=c,
                split_tag="train",
            ))
            idx += 1
    return out


def gen_ranking(spec: SyntheticSpec, n_queries: int = 20, n_relevant: int = 1,
                n_candidates: int = 20):
    """Set-retrieval ranking data.

    Each query's relevant candidates are light corruptions (p=0.05,
    delete/add) of the query itself; the remaining candidates are drawn from
    other prototype clouds. Returns (queries, candidates, relevance map).
    """
    protos = _class_prototypes(spec)
    rng = child_rng(spec.seed, "ranking")
    queries, candidates, relevance = [], [], {}
    cand_idx = 0
    for qi in range(n_queries):
        c = qi % spec.n_classes
        query = SetInstance(
            id=f"query-{qi:05d}",
            elements=_sample_set(rng, protos[c], spec),
            split_tag="clean",
        )
        queries.append(query)
        rel_ids = []
        for ri in range(n_relevant):
            corr = corrupt(query, CorruptionSpec(
                ops=("delete", "add"), p=0.05, seed=spec.seed + 1000 + cand_idx))
            cand = SetInstance(
                id=f"cand-{cand_idx:05d}", elements=corr.elements, split_tag="clean")
            candidates.append(cand)
            rel_ids.append(cand.id)
            cand_idx += 1
        for _ in range(n_candidates - n_relevant):
            other = int(rng.integers(spec.n_classes - 1))
            other = other if other < c else other + 1
            candidates.append(SetInstance(
                id=f"cand-{cand_idx:05d}",
                elements=_sample_set(rng, protos[other], spec),
                split_tag="clean",
            ))
            cand_idx += 1
        relevance[query.id] = rel_ids
    return queries, candidates, relevance


def write_dataset(instances: Sequence[SetInstance], path: str) -> None:
    with open(path, "w") as fh:
        for inst in instances:
            rec = {
                "id": inst.id,
                "label": inst.label,
                "split": inst.split_tag,
                "elements": [[format(v, ".17g") for v in row] for row in inst.elements],
            }
            fh.write(json.dumps(rec) + "\n")


def read_dataset(path: str) -> List[SetInstance]:
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                elements = [[float(v) for v in row] for row in rec["elements"]]
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: malformed record: {exc}") from exc
            widths = {len(row) for row in elements}
            if len(widths) > 1:
                raise ValueError(f"{path}:{lineno}: inconsistent element dimension {sorted(widths)}")
            out.append(SetInstance(
                id=rec["id"],
                elements=np.array(elements, dtype=np.float64),
                label=rec.get("label"),
                split_tag=rec.get("split", "train"),
            ))
    return out
