"""Command-line surface: train, eval, oracle-check, verify-theorem1, bench, gpr-dump.

Exit codes: 0 success, 1 validation error, 2 numerical-check failure,
3 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from .attention import GateMode
from .checkpoint import load_checkpoint, save_checkpoint
from .checks import oracle_sweep, run_bench
from .config import RunConfig
from .convergence import verify_mixing, verify_sta_sa_ratio
from .data import Dataset, load_dataset, random_connected_graph, synth_sbm
from .errors import (
    CheckpointError,
    ConfigError,
    DataFormatError,
    NumericsError,
    StagnnError,
)
from .graph import SPECTRAL_NODE_LIMIT
from .model import (
    ModelVariant,
    StagnnParams,
    effective_gates,
    evaluate,
    init_stagnn_params,
    make_splits,
    train,
)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERIC = 2
EXIT_IO = 3


def _args_hash(args, fields: tuple[str, ...]) -> str:
    """Reproducibility stamp for commands that run straight from flags."""
    import hashlib
    payload = json.dumps({f: getattr(args, f) for f in fields}, sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def _build_config(args) -> RunConfig:
    cfg = RunConfig.from_ini(args.config) if args.config else RunConfig.defaults()
    if getattr(args, "seed", None) is not None:
        cfg.set("run", "seed", args.seed)
    if getattr(args, "out", None) is not None:
        cfg.set("run", "out_dir", args.out)
    if getattr(args, "lr", None) is not None:
        cfg.set("train", "lr", args.lr)
    if getattr(args, "k", None) is not None:
        cfg.set("model", "hops", args.k)
    if getattr(args, "heads", None) is not None:
        cfg.set("model", "heads", args.heads)
    if getattr(args, "hops", None) is not None:
        cfg.set("model", "ga_hops", args.hops)
    if getattr(args, "dataset", None) is not None:
        _apply_dataset_flag(cfg, args.dataset)
    cfg.validate()
    return cfg


def _apply_dataset_flag(cfg: RunConfig, spec: str) -> None:
    """--dataset sbm  or  --dataset edges.txt,features.csv,labels.txt"""
    if spec == "sbm":
        cfg.set("dataset", "type", "sbm")
        return
    parts = spec.split(",")
    if len(parts) != 3:
        raise ConfigError(
            "--dataset expects 'sbm' or 'EDGES,FEATURES,LABELS' paths")
    cfg.set("dataset", "type", "files")
    for key, value in zip(("edges", "features", "labels"), parts):
        cfg.set("dataset", key, value)


def _load_from_config(cfg: RunConfig) -> Dataset:
    d = cfg.values["dataset"]
    if d["type"] == "sbm":
        return synth_sbm(
            blocks=d["blocks"], per_block=d["per_block"], p_in=d["p_in"],
            p_out=d["p_out"], signal=d["signal"], seed=cfg.get("run", "seed"))
    return load_dataset(d["edges"], d["features"], d["labels"])


def _effective_pe_dims(cfg: RunConfig, num_nodes: int) -> int:
    pe_dims = cfg.get("model", "pe_dims")
    if pe_dims > 0 and num_nodes > SPECTRAL_NODE_LIMIT:
        warnings.warn(
            f"{num_nodes} nodes exceeds the dense-eigensolver limit "
            f"({SPECTRAL_NODE_LIMIT}); skipping positional encoding")
        return 0
    return min(pe_dims, max(num_nodes - 1, 0))


def cmd_train(args) -> int:
    cfg = _build_config(args)
    dataset = _load_from_config(cfg)
    pe_dims = _effective_pe_dims(cfg, dataset.num_nodes)
    tc = cfg.train_config()
    if pe_dims != tc.pe_dims:
        from dataclasses import replace
        tc = replace(tc, pe_dims=pe_dims)

    splits = make_splits(
        dataset.num_nodes, (tc.train_ratio, tc.val_ratio, tc.test_ratio),
        tc.seed)
    report, params = train(dataset.graph, dataset.features, dataset.labels,
                           splits, tc)

    out_dir = Path(cfg.get("run", "out_dir"))
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = report.to_dict()
    payload["config_hash"] = cfg.config_hash()
    report_path = out_dir / "train_report.json"
    report_path.write_text(json.dumps(payload, indent=2))

    meta = {
        "config_ini": cfg.to_ini_text(),
        "config_hash": cfg.config_hash(),
        "seed": tc.seed,
        "num_classes": dataset.num_classes,
        "in_features": dataset.features.shape[1] + pe_dims,
        "feature_dim": dataset.features.shape[1],
        "pe_dims_used": pe_dims,
        "dataset_name": dataset.name,
        "best_epoch": report.best_epoch,
    }
    ckpt_path = out_dir / "model.ckpt"
    save_checkpoint(ckpt_path,
                    {name: p.value for name, p in params.named().items()},
                    meta)
    print(json.dumps({
        "seed": tc.seed,
        "config_hash": cfg.config_hash(),
        "best_epoch": report.best_epoch,
        "best_val_metric": report.best_val_metric,
        "test_metric_at_best": report.test_metric_at_best,
        "epochs_run": report.epochs_run,
        "report": str(report_path),
        "checkpoint": str(ckpt_path),
    }, indent=2))
    return EXIT_OK


def _rebuild_from_checkpoint(path) -> tuple[RunConfig, Dataset, StagnnParams, int]:
    tensors, meta = load_checkpoint(path)
    if "config_ini" not in meta:
        raise CheckpointError(f"{path}: checkpoint missing embedded config")
    cfg = RunConfig.from_ini_text(meta["config_ini"])
    dataset = _load_from_config(cfg)
    tc = cfg.train_config()
    pe_dims = meta.get("pe_dims_used", tc.pe_dims)
    params = init_stagnn_params(
        tc.sta_config(), meta["in_features"], meta["num_classes"],
        np.random.default_rng(meta["seed"]),
        with_teleport=tc.variant is ModelVariant.GA_STA)
    named = params.named()
    missing = set(named) - set(tensors)
    if missing:
        raise CheckpointError(f"{path}: missing tensors {sorted(missing)}")
    for name, p in named.items():
        if tensors[name].shape != p.value.shape:
            raise CheckpointError(
                f"{path}: tensor {name!r} has shape {tensors[name].shape}, "
                f"expected {p.value.shape}")
        p.value[...] = tensors[name]
    return cfg, dataset, params, pe_dims


def cmd_eval(args) -> int:
    cfg, dataset, params, pe_dims = _rebuild_from_checkpoint(args.checkpoint)
    tc = cfg.train_config()
    from . import autodiff as ad
    from .model import augment_with_pe, ga_sta_forward, stagnn_forward

    x = ad.constant(augment_with_pe(dataset.graph, dataset.features, pe_dims))
    if tc.variant is ModelVariant.GA_STA:
        logits = ga_sta_forward(dataset.graph, tc.sta_config(), params, x,
                                tc.ga_hops)
    else:
        logits = stagnn_forward(dataset.graph, tc.sta_config(), params, x)

    splits = make_splits(
        dataset.num_nodes, (tc.train_ratio, tc.val_ratio, tc.test_ratio),
        tc.seed)
    mask = dict(zip(("train", "val", "test"), splits))[args.split]
    score = evaluate(logits.value, dataset.labels, mask, tc.metric)
    print(json.dumps({
        "seed": tc.seed,
        "config_hash": cfg.config_hash(),
        "split": args.split,
        "metric": tc.metric.value,
        "score": score,
    }, indent=2))
    return EXIT_OK


def cmd_oracle_check(args) -> int:
    result = oracle_sweep(num_graphs=args.graphs, max_hops=args.max_hops,
                          hidden=args.hidden, seed=args.seed)
    print(json.dumps({
        "seed": args.seed,
        "config_hash": _args_hash(args, ("graphs", "max_hops", "hidden", "seed")),
        "cases": result.cases,
        "max_deviation": result.max_deviation,
        "worst_case": result.worst_case,
        "tolerance": 1e-8,
        "elapsed_seconds": result.elapsed_seconds,
        "passed": result.passed,
    }, indent=2))
    return EXIT_OK if result.passed else EXIT_NUMERIC


def cmd_verify_theorem1(args) -> int:
    g = random_connected_graph(args.nodes, avg_degree=args.avg_degree,
                               seed=args.seed, require_non_bipartite=True)
    mixing = verify_mixing(g, k_max=args.k_max)
    rng = np.random.default_rng(args.seed)
    queries = rng.normal(size=(args.nodes, 8))
    keys = rng.normal(size=(args.nodes, 8))
    values = np.abs(rng.normal(size=(args.nodes, 4)))
    ratio = verify_sta_sa_ratio(g, queries, keys, values, k_max=args.k_max)

    ok = (mixing.rigorous_violations == 0
          and all(measured is not None and measured <= mixing.k0_predicted[eps]
                  for eps, measured in mixing.k0_measured.items())
          and all(v == 0 for v in ratio.band_violations.values()))

    out = Path(args.out) if args.out else Path("theorem1_report.json")
    out.parent.mkdir(parents=True, exist_ok=True)
    stamp = _args_hash(args, ("nodes", "avg_degree", "k_max", "seed"))
    out.write_text(json.dumps({
        "seed": args.seed,
        "config_hash": stamp,
        "nodes": args.nodes,
        "mixing": mixing.to_dict(),
        "ratio": ratio.to_dict(),
        "passed": ok,
    }, indent=2))
    print(json.dumps({
        "seed": args.seed,
        "config_hash": stamp,
        "spectral_gap": mixing.spectral_gap,
        "rigorous_violations": mixing.rigorous_violations,
        "band_violations": {str(k): v for k, v in ratio.band_violations.items()},
        "report": str(out),
        "passed": ok,
    }, indent=2))
    return EXIT_OK if ok else EXIT_NUMERIC


def cmd_bench(args) -> int:
    rows = run_bench(quick=args.quick, seed=args.seed)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "bench.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.DictWriter(
            fh, fieldnames=["path", "n", "edges", "k", "d", "seconds"])
        writer.writeheader()
        writer.writerows(rows)
    meta_path = out_dir / "bench_meta.json"
    stamp = _args_hash(args, ("quick", "seed"))
    meta_path.write_text(json.dumps(
        {"seed": args.seed, "config_hash": stamp, "quick": args.quick,
         "rows": len(rows)}, indent=2))
    print(json.dumps({"seed": args.seed, "config_hash": stamp,
                      "csv": str(csv_path), "rows": len(rows)}, indent=2))
    return EXIT_OK


def cmd_gpr_dump(args) -> int:
    tensors, meta = load_checkpoint(args.checkpoint)
    if "sta.gpr_weights" not in tensors or "sta.gates" not in tensors:
        raise CheckpointError(
            f"{args.checkpoint}: no hop-weight tensors in checkpoint")
    cfg = RunConfig.from_ini_text(meta["config_ini"])
    gate_mode = GateMode(cfg.get("model", "gate_mode"))

    from . import autodiff as ad
    from .attention import StaParams
    sta = StaParams(
        gates=ad.parameter(tensors["sta.gates"]),
        gpr_weights=ad.parameter(tensors["sta.gpr_weights"]),
        output_projection=ad.parameter(tensors["sta.output_projection"]))
    payload = {
        "seed": meta.get("seed"),
        "config_hash": meta.get("config_hash"),
        "gpr_weights": tensors["sta.gpr_weights"][0].tolist(),
        "gates_raw": tensors["sta.gates"].tolist(),
        "gates_effective": effective_gates(sta, gate_mode).tolist(),
        "gate_mode": gate_mode.value,
    }
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if out.suffix == ".csv":
        with open(out, "w", newline="") as fh:
            writer = csv.writer(fh)
            heads = len(payload["gates_raw"][0])
            writer.writerow(["hop", "gpr_weight"]
                            + [f"gate_head{h}" for h in range(heads)])
            for hop, alpha in enumerate(payload["gpr_weights"]):
                gates = (payload["gates_effective"][hop - 1]
                         if hop >= 1 else [""] * heads)
                writer.writerow([hop, alpha] + list(gates))
    else:
        out.write_text(json.dumps(payload, indent=2))
    print(json.dumps({"out": str(out), "hops": len(payload["gpr_weights"]) - 1,
                      "config_hash": payload["config_hash"]}, indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stagnn",
        description="Linear-time multi-hop subtree attention for node "
                    "classification, with numerical cross-checks.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a model and write report + checkpoint")
    p_train.add_argument("--config", help="run-config file")
    p_train.add_argument("--seed", type=int)
    p_train.add_argument("--out", help="output directory")
    p_train.add_argument("--lr", type=float)
    p_train.add_argument("--k", type=int, help="subtree height (hop count)")
    p_train.add_argument("--heads", type=int)
    p_train.add_argument("--hops", type=int,
                         help="auxiliary subtree hops for the ga_sta variant")
    p_train.add_argument("--dataset",
                         help="'sbm' or EDGES,FEATURES,LABELS paths")
    p_train.set_defaults(fn=cmd_train)

    p_eval = sub.add_parser("eval", help="score a checkpoint on one split")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--split", choices=("train", "val", "test"),
                        default="test")
    p_eval.set_defaults(fn=cmd_eval)

    p_oracle = sub.add_parser(
        "oracle-check",
        help="compare the sparse attention path against the dense reference")
    p_oracle.add_argument("--graphs", type=int, default=50)
    p_oracle.add_argument("--max-hops", type=int, default=5)
    p_oracle.add_argument("--hidden", type=int, default=8)
    p_oracle.add_argument("--seed", type=int, default=0)
    p_oracle.set_defaults(fn=cmd_oracle_check)

    p_thm = sub.add_parser(
        "verify-theorem1",
        help="verify random-walk mixing bounds and the attention ratio band")
    p_thm.add_argument("--nodes", type=int, default=64)
    p_thm.add_argument("--avg-degree", type=float, default=6.0)
    p_thm.add_argument("--k-max", type=int, default=200)
    p_thm.add_argument("--seed", type=int, default=0)
    p_thm.add_argument("--out", help="report path (JSON)")
    p_thm.set_defaults(fn=cmd_verify_theorem1)

    p_bench = sub.add_parser("bench", help="wall-time scaling of both paths")
    p_bench.add_argument("--out", default="bench_out")
    p_bench.add_argument("--quick", action="store_true",
                         help="small sizes for smoke testing")
    p_bench.add_argument("--seed", type=int, default=0)
    p_bench.set_defaults(fn=cmd_bench)

    p_dump = sub.add_parser(
        "gpr-dump", help="extract hop weights and gates from a checkpoint")
    p_dump.add_argument("--checkpoint", required=True)
    p_dump.add_argument("--out", default="gpr_weights.json")
    p_dump.set_defaults(fn=cmd_gpr_dump)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (DataFormatError, CheckpointError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except NumericsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except StagnnError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
