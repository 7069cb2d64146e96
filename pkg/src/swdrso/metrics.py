"""Evaluation metrics and split-wise reporting.

Accuracy, Recall@k, NDCG@k (binary gains), and ROC-AUC, aggregated per
clean/mild/severe split with an instance-weighted overall value.
"""

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

EVAL_SPLITS = ("clean", "mild", "severe")


@dataclass
class EvalReport:
    metric: str
    per_split: Dict[str, float]  # includes "overall"
    n_instances: Dict[str, int]
    k: Optional[int] = None

    def to_dict(self) -> dict:
        return {
            "metric": self.metric,
            "k": self.k,
            "values": self.per_split,
            "n_instances": self.n_instances,
        }


def recall_at_k(ranked_ids: Sequence[str], relevant_ids: Sequence[str], k: int) -> float:
    if k < 1:
        raise ValueError("k must be >= 1")
    relevant = set(relevant_ids)
    if not relevant:
        raise ValueError("empty relevant set")
    hits = sum(1 for rid in ranked_ids[:k] if rid in relevant)
    return hits / len(relevant)


def ndcg_at_k(ranked_ids: Sequence[str], relevant_ids: Sequence[str], k: int) -> float:
    if k < 1:
        raise ValueError("k must be >= 1")
    relevant = set(relevant_ids)
    if not relevant:
        raise ValueError("empty relevant set")
    dcg = sum(
        1.0 / math.log2(rank + 2)
        for rank, rid in enumerate(ranked_ids[:k])
        if rid in relevant
    )
    ideal = sum(1.0 / math.log2(rank + 2) for rank in range(min(k, len(relevant))))
    return dcg / ideal


def roc_auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Mann-Whitney U formulation; tied scores contribute 0.5 per pair."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    if pos.size == 0 or neg.size == 0:
        raise ValueError("both classes must be present")
    greater = (pos[:, None] > neg[None, :]).sum()
    ties = (pos[:, None] == neg[None, :]).sum()
    return float((greater + 0.5 * ties) / (pos.size * neg.size))


def aggregate_splits(per_split: Dict[str, float], n_instances: Dict[str, int]) -> float:
    """Instance-weighted mean over the clean/mild/severe splits."""
    total = sum(n_instances[s] for s in EVAL_SPLITS)
    return sum(per_split[s] * n_instances[s] for s in EVAL_SPLITS) / total


def classification_report(predictions: Dict[str, int], labels: Dict[str, int],
                          split_of: Dict[str, str]) -> EvalReport:
    """Accuracy per split plus the instance-weighted overall."""
    per_split, counts = {}, {}
    for split in EVAL_SPLITS:
        ids = [sid for sid, s in split_of.items() if s == split]
        if not ids:
            raise ValueError(f"missing split {split!r}")
        correct = sum(1 for sid in ids if predictions[sid] == labels[sid])
        per_split[split] = correct / len(ids)
        counts[split] = len(ids)
    per_split["overall"] = aggregate_splits(per_split, counts)
    counts["overall"] = sum(counts[s] for s in EVAL_SPLITS)
    return EvalReport(metric="accuracy", per_split=per_split, n_instances=counts)


def ranking_report(rankings: Dict[str, List[str]], relevance: Dict[str, List[str]],
                   split_of: Dict[str, str], k: int, metric: str = "recall") -> EvalReport:
    """Recall@k or NDCG@k per query split plus the weighted overall."""
    fn = recall_at_k if metric == "recall" else ndcg_at_k
    per_split, counts = {}, {}
    for split in EVAL_SPLITS:
        ids = [qid for qid, s in split_of.items() if s == split]
        if not ids:
            raise ValueError(f"missing split {split!r}")
        per_split[split] = float(np.mean([fn(rankings[qid], relevance[qid], k) for qid in ids]))
        counts[split] = len(ids)
    per_split["overall"] = aggregate_splits(per_split, counts)
    counts["overall"] = sum(counts[s] for s in EVAL_SPLITS)
    return EvalReport(metric=f"{metric}@{k}", per_split=per_split, n_instances=counts, k=k)


def _embed(model, instance):
    from .encoder import encode, encode_meanpool
    if model.config.encoder_mode == "meanpool":
        return encode_meanpool(instance, model.encoder)
    return encode(instance, model.encoder)


def predict_class(model, instance) -> int:
    emb = _embed(model, instance)
    logits = emb.values @ model.head.weight + model.head.bias
    return int(np.argmax(logits))


def evaluate(model, dataset, task: str = "classification", ks: Sequence[int] = (5,),
             relevance: Optional[Dict[str, List[str]]] = None,
             candidates: Optional[list] = None) -> List[EvalReport]:
    """Split-wise evaluation of a trained model.

    Classification: `dataset` holds labeled, split-tagged (and pre-corrupted)
    instances; reports accuracy. Ranking: `dataset` holds split-tagged query
    sets, `candidates` the clean candidate sets, `relevance` the ground-truth
    map; queries are ranked by Euclidean embedding distance and reported as
    Recall@k and NDCG@k for each k.
    """
    split_of = {inst.id: inst.split_tag for inst in dataset}
    if task == "classification":
        predictions = {inst.id: predict_class(model, inst) for inst in dataset}
        labels = {inst.id: inst.label for inst in dataset}
        return [classification_report(predictions, labels, split_of)]
    if relevance is None or candidates is None:
        raise ValueError("ranking evaluation needs candidates and a relevance map")
    cand_embs = {c.id: _embed(model, c).values for c in candidates}
    cand_ids = sorted(cand_embs)
    cand_matrix = np.stack([cand_embs[cid] for cid in cand_ids])
    rankings = {}
    for query in dataset:
        qv = _embed(model, query).values
        dists = np.linalg.norm(cand_matrix - qv, axis=1)
        order = np.lexsort((cand_ids, dists))
        rankings[query.id] = [cand_ids[i] for i in order]
    reports = []
    for k in ks:
        reports.append(ranking_report(rankings, relevance, split_of, k, metric="recall"))
        reports.append(ranking_report(rankings, relevance, split_of, k, metric="ndcg"))
    return reports
