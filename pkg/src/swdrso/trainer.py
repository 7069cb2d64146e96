"""Outer optimization loop: batching, pools, inner adversary, Adam updates.

Per minibatch the total objective is mean[clean + alpha * robust] with the
inner simplex weights frozen (stop-gradient). Per-anchor work is pure and can
fan out across workers; gradients are merged in a fixed order (sorted by
instance id) so results are bit-identical for any worker count.

Checkpoints are versioned structured text with hexadecimal floats so that a
save/load round trip reproduces every parameter bit-exactly.
"""

import hashlib
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .adversary import AdversaryConfig, adversary_ablation, build_pool, inner_maximize
from .corruption import CorruptionSpec, corrupt
from .encoder import (EncoderParams, encode, encode_backward, encode_meanpool,
                      init_encoder, meanpool_backward)
from .head import ClassifierHead, RankingHead, classify_loss, init_classifier, triplet_loss
from .measures import SetInstance
from .rng import child_rng

CHECKPOINT_MAGIC = "SWDRSO-CKPT"
CHECKPOINT_VERSION = 1


@dataclass
class TrainConfig:
    alpha: float = 0.5
    lr: float = 1e-3
    epochs: int = 10
    batch_size: int = 32
    seed: int = 0
    adversary: AdversaryConfig = field(default_factory=AdversaryConfig)
    d: int = 128
    H: int = 128
    R: int = 32
    d_in: Optional[int] = None  # raw element dim; defaults to d
    d_hid: Optional[int] = None  # featurizer hidden width; defaults to d_in
    task: str = "classification"
    encoder_mode: str = "sw"  # or "meanpool"
    n_classes: int = 2
    margin: float = 1.0
    workers: int = 1

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.task not in ("classification", "ranking"):
            raise ValueError(f"unknown task {self.task!r}")
        if self.encoder_mode not in ("sw", "meanpool"):
            raise ValueError(f"unknown encoder_mode {self.encoder_mode!r}")
        if isinstance(self.adversary, dict):
            self.adversary = AdversaryConfig(**self.adversary)

    def to_dict(self) -> dict:
        d = asdict(self)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)


@dataclass
class Model:
    encoder: EncoderParams
    head: ClassifierHead
    config: TrainConfig

    def named_params(self) -> Dict[str, np.ndarray]:
        params = {"head.weight": self.head.weight, "head.bias": self.head.bias}
        feat = self.encoder.featurizer
        if feat is not None:
            params.update({
                "featurizer.weight1": feat.weight1,
                "featurizer.bias1": feat.bias1,
                "featurizer.weight2": feat.weight2,
                "featurizer.bias2": feat.bias2,
            })
        return params

    def zero_grads(self) -> Dict[str, np.ndarray]:
        return {name: np.zeros_like(arr) for name, arr in self.named_params().items()}


def init_model(config: TrainConfig) -> Model:
    d_in = config.d_in if config.d_in is not None else config.d
    encoder = init_encoder(config.d, config.H, config.R, config.seed,
                           featurizer=True, d_in=d_in, d_hid=config.d_hid)
    head = init_classifier(config.R * config.H, config.n_classes, config.seed)
    return Model(encoder=encoder, head=head, config=config)


@dataclass
class AdamState:
    m: Dict[str, np.ndarray]
    v: Dict[str, np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_model(cls, model: Model) -> "AdamState":
        params = model.named_params()
        return cls(m={k: np.zeros_like(p) for k, p in params.items()},
                   v={k: np.zeros_like(p) for k, p in params.items()})


def adam_step(params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray],
              state: AdamState, lr: float) -> None:
    """Standard bias-corrected Adam update, applied in place."""
    state.step += 1
    for name in sorted(params):
        g = grads[name]
        if g.shape != params[name].shape:
            raise ValueError(f"gradient shape mismatch for {name}")
        state.m[name] = state.beta1 * state.m[name] + (1 - state.beta1) * g
        state.v[name] = state.beta2 * state.v[name] + (1 - state.beta2) * g * g
        mhat = state.m[name] / (1 - state.beta1 ** state.step)
        vhat = state.v[name] / (1 - state.beta2 ** state.step)
        params[name] -= lr * mhat / (np.sqrt(vhat) + state.eps)


def _encode_instance(model: Model, instance: SetInstance):
    if model.config.encoder_mode == "meanpool":
        return encode_meanpool(instance, model.encoder, record=True)
    return encode(instance, model.encoder, record=True)


def _backward_instance(model: Model, record, upstream: np.ndarray) -> dict:
    if model.config.encoder_mode == "meanpool":
        return meanpool_backward(record, model.encoder, upstream)
    return encode_backward(record, model.encoder, upstream)


def _accumulate(total: Dict[str, np.ndarray], head_grads: Optional[dict],
                enc_grads: Optional[dict], scale: float) -> None:
    if head_grads is not None:
        total["head.weight"] += scale * head_grads["weight"]
        total["head.bias"] += scale * head_grads["bias"]
    if enc_grads is not None and enc_grads.get("featurizer") is not None:
        for key in ("weight1", "bias1", "weight2", "bias2"):
            total[f"featurizer.{key}"] += scale * enc_grads["featurizer"][key]


def _ranking_triplets(batch: List[SetInstance]) -> List[Tuple[int, int, int]]:
    """Deterministic in-batch triplets: each anchor pairs with the next
    same-label instance and the next different-label instance."""
    triplets = []
    n = len(batch)
    for i, inst in enumerate(batch):
        pos = neg = None
        for off in range(1, n):
            j = (i + off) % n
            if batch[j].label == inst.label and pos is None:
                pos = j
            elif batch[j].label != inst.label and neg is None:
                neg = j
            if pos is not None and neg is not None:
                break
        if pos is not None and neg is not None:
            triplets.append((i, pos, neg))
    return triplets


def _map_workers(fn, items, workers: int):
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _instance_losses_classification(model: Model, batch, embeddings, records, config,
                                    rcs_rng_seed):
    """Per-anchor clean + robust losses and gradient contributions.

    Returns a list (ordered like `batch`) of dicts with keys 'clean', 'robust'
    and 'contrib' (per-parameter gradient arrays for this anchor, already
    including the alpha weighting of the robust term).
    """
    alpha = config.alpha
    adv_cfg = config.adversary
    batch_labels = [inst.label for inst in batch]

    def work(i):
        inst = batch[i]
        contrib = model.zero_grads()
        loss, grad_v, head_grads = classify_loss(embeddings[i], inst.label, model.head)
        enc_grads = _backward_instance(model, records[i], grad_v)
        _accumulate(contrib, head_grads, enc_grads, 1.0)
        robust = 0.0
        if alpha > 0.0:
            pool = build_pool(embeddings[i], embeddings, adv_cfg,
                              anchor_label=inst.label, batch_labels=batch_labels)
            if adv_cfg.mode == "barycentric":
                w_star, adv_emb, robust = inner_maximize(pool, model.head, inst.label, adv_cfg)
                _, grad_v_adv, head_grads_adv = classify_loss(adv_emb, inst.label, model.head)
                _accumulate(contrib, head_grads_adv, None, alpha)
                for k, nb in enumerate(pool.neighbors):
                    j = next(idx for idx, e in enumerate(embeddings) if e is nb)
                    enc_g = _backward_instance(model, records[j], w_star.lam[k] * grad_v_adv)
                    _accumulate(contrib, None, enc_g, alpha)
            elif adv_cfg.mode in ("discrete", "random_inbatch"):
                rng = child_rng(rcs_rng_seed, f"ablation:{inst.id}")
                adv_emb, robust = adversary_ablation(pool, model.head, inst.label, adv_cfg, rng=rng)
                _, grad_v_adv, head_grads_adv = classify_loss(adv_emb, inst.label, model.head)
                _accumulate(contrib, head_grads_adv, None, alpha)
                j = next(idx for idx, e in enumerate(embeddings) if e is adv_emb)
                enc_g = _backward_instance(model, records[j], grad_v_adv)
                _accumulate(contrib, None, enc_g, alpha)
            else:  # rcs: candidates are fresh corruptions of the anchor set
                rng = child_rng(rcs_rng_seed, f"rcs:{inst.id}")
                candidates = {}

                def sample(round_idx):
                    from .measures import sliced_wasserstein
                    p = float(rng.choice([0.1, 0.4]))
                    cand = corrupt(inst, CorruptionSpec(
                        p=p, seed=int(rng.integers(2**31))), split_tag=inst.split_tag,
                        allow_train=True)
                    if adv_cfg.rcs_sw_filter:
                        if sliced_wasserstein(cand, inst, model.encoder.dirs) > adv_cfg.rho:
                            return None
                    emb, rec = _encode_instance(model, cand)
                    candidates[emb.source_id] = (emb, rec)
                    return emb

                adv_emb, robust = adversary_ablation(
                    pool, model.head, inst.label, adv_cfg, rng=rng, corrupt_sample=sample)
                _, grad_v_adv, head_grads_adv = classify_loss(adv_emb, inst.label, model.head)
                _accumulate(contrib, head_grads_adv, None, alpha)
                if adv_emb.source_id in candidates:
                    enc_g = _backward_instance(model, candidates[adv_emb.source_id][1], grad_v_adv)
                else:  # anchor fallback
                    enc_g = _backward_instance(model, records[i], grad_v_adv)
                _accumulate(contrib, None, enc_g, alpha)
        return {"key": inst.id, "clean": loss, "robust": robust, "contrib": contrib}

    return _map_workers(work, list(range(len(batch))), config.workers)


def _instance_losses_ranking(model: Model, batch, embeddings, records, config):
    head = RankingHead(margin=config.margin)
    adv_cfg = config.adversary
    triplets = _ranking_triplets(batch)
    alpha = config.alpha

    def work(t):
        i, pi, ni = t
        contrib = model.zero_grads()
        loss, ga, gp, gn = triplet_loss(embeddings[i], embeddings[pi], embeddings[ni], head)
        for idx, g in ((i, ga), (pi, gp), (ni, gn)):
            _accumulate(contrib, None, _backward_instance(model, records[idx], g), 1.0)
        robust = 0.0
        if alpha > 0.0:
            pool = build_pool(embeddings[i], embeddings, adv_cfg, anchor_label=batch[i].label)
            p_vals, n_vals = embeddings[pi].values, embeddings[ni].values

            def loss_fn(v):
                l, gaa, _, _ = triplet_loss(v, p_vals, n_vals, head)
                return l, gaa

            w_star, adv_emb, robust = inner_maximize(pool, None, None, adv_cfg, loss_fn=loss_fn)
            _, ga2, gp2, gn2 = triplet_loss(adv_emb.values, p_vals, n_vals, head)
            for k, nb in enumerate(pool.neighbors):
                j = next(idx for idx, e in enumerate(embeddings) if e is nb)
                _accumulate(contrib, None,
                            _backward_instance(model, records[j], w_star.lam[k] * ga2), alpha)
            _accumulate(contrib, None, _backward_instance(model, records[pi], gp2), alpha)
            _accumulate(contrib, None, _backward_instance(model, records[ni], gn2), alpha)
        return {"key": batch[i].id, "clean": loss, "robust": robust, "contrib": contrib}

    return _map_workers(work, triplets, config.workers)


def train_epoch(data: Sequence[SetInstance], model: Model, adam: AdamState,
                config: TrainConfig, epoch: int) -> dict:
    """One pass over the data. Returns epoch metrics."""
    if not data:
        raise ValueError("empty training data")
    for inst in data:
        if inst.split_tag != "train":
            raise ValueError(f"instance {inst.id!r} has split_tag {inst.split_tag!r}; expected 'train'")
    start = time.perf_counter()
    order = child_rng(config.seed, f"batch-order:{epoch}").permutation(len(data))
    clean_losses, robust_losses = [], []
    params = model.named_params()
    for lo in range(0, len(data), config.batch_size):
        batch_idx = order[lo: lo + config.batch_size]
        batch = [data[i] for i in batch_idx]
        enc_out = _map_workers(lambda inst: _encode_instance(model, inst), batch, config.workers)
        embeddings = [e for e, _ in enc_out]
        records = [r for _, r in enc_out]
        if config.task == "classification":
            results = _instance_losses_classification(
                model, batch, embeddings, records, config,
                rcs_rng_seed=config.seed + 7919 * epoch)
            denom = len(batch)
        else:
            results = _instance_losses_ranking(model, batch, embeddings, records, config)
            denom = max(len(results), 1)
        total = model.zero_grads()
        # Fixed reduction order keeps multi-worker runs bit-deterministic.
        for res in sorted(results, key=lambda r: r["key"]):
            for name in total:
                total[name] += res["contrib"][name] / denom
            clean_losses.append(res["clean"])
            robust_losses.append(res["robust"])
        batch_loss = np.mean([r["clean"] + config.alpha * r["robust"] for r in results]) if results else 0.0
        if not np.isfinite(batch_loss):
            raise RuntimeError(
                f"NaN/inf loss at epoch {epoch} batch starting {lo}: "
                f"clean={clean_losses[-len(results):]}, robust={robust_losses[-len(results):]}")
        adam_step(params, total, adam, config.lr)
    mean_clean = float(np.mean(clean_losses)) if clean_losses else 0.0
    mean_robust = float(np.mean(robust_losses)) if robust_losses else 0.0
    return {
        "epoch": epoch,
        "clean_loss": mean_clean,
        "robust_loss": mean_robust,
        "total_loss": mean_clean + config.alpha * mean_robust,
        "wall_time": time.perf_counter() - start,
    }


def train(data: Sequence[SetInstance], config: TrainConfig,
          model: Optional[Model] = None, adam: Optional[AdamState] = None,
          start_epoch: int = 0) -> Tuple[Model, AdamState, List[dict]]:
    model = model if model is not None else init_model(config)
    adam = adam if adam is not None else AdamState.for_model(model)
    history = []
    for epoch in range(start_epoch, config.epochs):
        history.append(train_epoch(data, model, adam, config, epoch))
    return model, adam, history


# ---------------------------------------------------------------------------
# Checkpoint I/O: versioned text, hex floats, sha256 checksum.
# ---------------------------------------------------------------------------

def _array_lines(name: str, arr: np.ndarray) -> List[str]:
    flat = np.asarray(arr, dtype=np.float64).reshape(-1)
    shape = ",".join(str(s) for s in arr.shape) if arr.shape else ""
    return [f"array {name} {shape}", " ".join(float.hex(float(x)) for x in flat)]


def _model_arrays(model: Model, adam: AdamState) -> Dict[str, np.ndarray]:
    arrays = {"encoder.reference": model.encoder.reference,
              "encoder.directions": model.encoder.dirs.directions}
    arrays.update(model.named_params())
    for name, m in adam.m.items():
        arrays[f"adam.m.{name}"] = m
    for name, v in adam.v.items():
        arrays[f"adam.v.{name}"] = v
    return arrays


def save_checkpoint(model: Model, adam: AdamState, path: str, epoch: int = 0) -> None:
    meta = {
        "config": model.config.to_dict(),
        "adam": {"step": adam.step, "beta1": adam.beta1, "beta2": adam.beta2, "eps": adam.eps},
        "dirs_seed": model.encoder.dirs.seed,
        "epoch": epoch,
    }
    lines = [f"{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}", "meta " + json.dumps(meta, sort_keys=True)]
    for name, arr in sorted(_model_arrays(model, adam).items()):
        lines.extend(_array_lines(name, arr))
    body = "\n".join(lines) + "\n"
    digest = hashlib.sha256(body.encode("utf-8")).hexdigest()
    with open(path, "w") as fh:
        fh.write(body)
        fh.write(f"checksum {digest}\n")


def load_checkpoint(path: str) -> Tuple[Model, AdamState, int]:
    with open(path) as fh:
        text = fh.read()
    lines = text.splitlines()
    if not lines or not lines[-1].startswith("checksum "):
        raise ValueError("truncated checkpoint: missing checksum line")
    body = "\n".join(lines[:-1]) + "\n"
    expected = lines[-1].split()[1]
    actual = hashlib.sha256(body.encode("utf-8")).hexdigest()
    if actual != expected:
        raise ValueError("checkpoint checksum mismatch")
    header = lines[0].split()
    if header[0] != CHECKPOINT_MAGIC:
        raise ValueError("not a checkpoint file")
    if int(header[1]) != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {header[1]}")
    meta = json.loads(lines[1][len("meta "):])
    arrays = {}
    i = 2
    while i < len(lines) - 1:
        tag, name, shape = (lines[i].split() + [""])[:3]
        if tag != "array":
            raise ValueError(f"unexpected checkpoint line: {lines[i]!r}")
        values = np.array([float.fromhex(tok) for tok in lines[i + 1].split()])
        if shape:
            values = values.reshape([int(s) for s in shape.split(",")])
        arrays[name] = values
        i += 2
    config = TrainConfig.from_dict(meta["config"])
    model = init_model(config)
    model.encoder.reference = arrays["encoder.reference"]
    from .measures import DirectionSet
    model.encoder.dirs = DirectionSet(directions=arrays["encoder.directions"],
                                      seed=meta["dirs_seed"])
    for name, arr in model.named_params().items():
        arr[...] = arrays[name]
    adam = AdamState.for_model(model)
    adam.step = meta["adam"]["step"]
    adam.beta1, adam.beta2, adam.eps = (meta["adam"]["beta1"], meta["adam"]["beta2"],
                                        meta["adam"]["eps"])
    for name in adam.m:
        adam.m[name] = arrays[f"adam.m.{name}"]
        adam.v[name] = arrays[f"adam.v.{name}"]
    return model, adam, meta.get("epoch", 0)
