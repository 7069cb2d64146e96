"""Command-line entry point: gen-data, corrupt, train, eval, check, bench.

Exit codes: 0 success, 1 validation error, 2 runtime failure. All randomness
derives from a single master seed. Config file precedence:
--config flag > SWDRSO_CONFIG env var > ./swdrso.config.
"""

import argparse
import json
import math
import os
import sys
import time

import numpy as np

from . import checks
from .adversary import AdversaryConfig
from .corruption import CorruptionSpec, SplitPlan, corrupt_eval_set, dataset_bbox
from .data import SyntheticSpec, gen_classification, read_dataset, write_dataset
from .measures import SetInstance
from .metrics import evaluate
from .trainer import (AdamState, TrainConfig, init_model, load_checkpoint,
                      save_checkpoint, train_epoch)


class ValidationError(Exception):
    pass


def _load_config(args) -> dict:
    path = args.config or os.environ.get("SWDRSO_CONFIG")
    if path is None and os.path.exists("./swdrso.config"):
        path = "./swdrso.config"
    if path is None:
        return {}
    if not os.path.exists(path):
        raise ValidationError(f"config file not found: {path}")
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config file {path} is not valid JSON: {exc}")


def _train_config(args) -> TrainConfig:
    raw = _load_config(args)
    if args.seed is not None:
        raw["seed"] = args.seed
    try:
        return TrainConfig.from_dict(raw)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"bad training config: {exc}")


def cmd_gen_data(args) -> int:
    spec = SyntheticSpec(n_sets=args.n_sets, n_classes=args.classes,
                         n_min=args.n_min, n_max=args.n_max, dim=args.dim,
                         dispersion=args.dispersion, noise=args.noise,
                         seed=args.seed if args.seed is not None else 0)
    print(f"resolved spec: {spec}")
    data = gen_classification(spec)
    write_dataset(data, args.output)
    print(f"wrote {len(data)} sets to {args.output}")
    return 0


def cmd_corrupt(args) -> int:
    data = read_dataset(args.input)
    seed = args.seed if args.seed is not None else 0
    eval_insts = [SetInstance(id=i.id, elements=i.elements, label=i.label, split_tag="clean")
                  for i in data]
    spec = CorruptionSpec(seed=seed, bbox_source=args.bbox_source,
                          dataset_bbox=dataset_bbox(eval_insts) if args.bbox_source == "dataset" else None)
    plan = SplitPlan(seed=seed)
    out = corrupt_eval_set(eval_insts, plan, spec)
    write_dataset(out, args.output)
    with open(args.splits_out, "w") as fh:
        json.dump({inst.id: inst.split_tag for inst in out}, fh, indent=0, sort_keys=True)
    print(f"wrote {len(out)} corrupted sets to {args.output}, splits to {args.splits_out}")
    return 0


def cmd_train(args) -> int:
    config = _train_config(args)
    if args.workers is not None:
        config.workers = args.workers
    print(f"resolved config: {json.dumps(config.to_dict(), sort_keys=True)}")
    data = read_dataset(args.input)
    model = init_model(config)
    adam = AdamState.for_model(model)
    with open(args.metrics_out, "w") as fh:
        for epoch in range(config.epochs):
            metrics = train_epoch(data, model, adam, config, epoch)
            fh.write(json.dumps(metrics, sort_keys=True) + "\n")
            if args.verbose:
                print(f"epoch {epoch}: clean={metrics['clean_loss']:.6f} "
                      f"robust={metrics['robust_loss']:.6f}")
    save_checkpoint(model, adam, args.checkpoint, epoch=config.epochs)
    print(f"checkpoint written to {args.checkpoint}")
    return 0


def cmd_eval(args) -> int:
    model, _, _ = load_checkpoint(args.checkpoint)
    data = read_dataset(args.input)
    reports = evaluate(model, data, task=args.task)
    payload = [r.to_dict() for r in reports]
    with open(args.output, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
    print(json.dumps(payload, indent=2, sort_keys=True))
    return 0


def cmd_check(args) -> int:
    seed = args.seed if args.seed is not None else 0
    results = checks.run_all(seed=seed)
    failed = 0
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")
        failed += 0 if ok else 1
    if failed:
        print(f"{failed} invariant suite(s) failed")
        return 2
    print(f"all {len(results)} invariant suites passed")
    return 0


def cmd_bench(args) -> int:
    seed = args.seed if args.seed is not None else 0
    spec = SyntheticSpec(n_sets=args.n_sets, n_classes=4, dim=8, n_min=8, n_max=16, seed=seed)
    data = gen_classification(spec)
    rows = [("T", t, sec) for t, sec in bench_t_sweep(data, seed)]
    for k_pool in (2, 4, 8, 16):
        rows.append(("K", k_pool, _bench_once(data, seed, T=2, K=k_pool)))
    print(f"{'factor':<8}{'value':<8}{'sec/epoch':<12}")
    for factor, value, elapsed in rows:
        print(f"{factor:<8}{value:<8}{elapsed:<12.4f}")
    t_rows = [(v, e) for f, v, e in rows if f == "T"]
    r2 = affine_fit_r2([v for v, _ in t_rows], [e for _, e in t_rows])
    print(f"R^2 of affine fit in T: {r2:.4f}")
    return 0


def bench_t_sweep(data, seed, t_values=(1, 2, 4, 8), passes=8):
    """Per-epoch CPU time for each ascent-step count T, other factors fixed.

    Each pass measures every T back to back so it sees one CPU speed state;
    per-pass profiles are normalized by their own mean before taking the
    median across passes, which cancels multiplicative speed drift between
    passes.
    """
    rows = np.array([[_bench_once(data, seed, T=t, K=4, repeats=1) for t in t_values]
                     for _ in range(passes)])
    scale = rows.mean(axis=1, keepdims=True)
    profile = np.median(rows / scale, axis=0) * np.median(scale)
    return list(zip(t_values, profile.tolist()))


def _bench_once(data, seed, T, K, repeats=5) -> float:
    config = TrainConfig(alpha=0.5, epochs=1, batch_size=64, seed=seed,
                         adversary=AdversaryConfig(K=K, rho=10.0, T=T, eta=0.1),
                         d=8, H=32, R=16, n_classes=4)
    model = init_model(config)
    adam = AdamState.for_model(model)
    # CPU time over min-of-repeats is far less noisy than wall time here
    best = math.inf
    for _ in range(repeats):
        start = time.process_time()
        train_epoch(data, model, adam, config, 0)
        best = min(best, time.process_time() - start)
    return best


def affine_fit_r2(xs, ys) -> float:
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    coeffs = np.polyfit(xs, ys, 1)
    pred = np.polyval(coeffs, xs)
    ss_res = np.sum((ys - pred) ** 2)
    ss_tot = np.sum((ys - ys.mean()) ** 2)
    return float(1.0 - ss_res / ss_tot) if ss_tot > 0 else 1.0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="swdrso")
    parser.add_argument("--config", help="JSON config file path")
    parser.add_argument("--seed", type=int, help="master seed override")
    parser.add_argument("--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic classification dataset")
    p.add_argument("--output", required=True)
    p.add_argument("--n-sets", type=int, default=300)
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--n-min", type=int, default=5)
    p.add_argument("--n-max", type=int, default=15)
    p.add_argument("--dim", type=int, default=8)
    p.add_argument("--dispersion", type=float, default=3.0)
    p.add_argument("--noise", type=float, default=0.5)
    p.set_defaults(fn=cmd_gen_data)

    p = sub.add_parser("corrupt", help="assign eval splits and corrupt mild/severe sets")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--splits-out", required=True)
    p.add_argument("--bbox-source", choices=("per_set", "dataset"), default="per_set")
    p.set_defaults(fn=cmd_corrupt)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--input", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--metrics-out", default="metrics.jsonl")
    p.add_argument("--workers", type=int)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a split-tagged dataset")
    p.add_argument("--input", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--task", choices=("classification",), default="classification")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("check", help="run the oracle invariant suites")
    p.set_defaults(fn=cmd_check)

    p = sub.add_parser("bench", help="inner-loop scaling benchmark over T and K")
    p.add_argument("--n-sets", type=int, default=512)
    p.set_defaults(fn=cmd_bench)
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0
    try:
        return args.fn(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
