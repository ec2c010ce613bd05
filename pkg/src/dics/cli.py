"""Command-line entry point: ``dics <verb> [--config FILE] [--set key=value ...]``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import TrainConfig, load_config
from .data import dump_csv
from .gradcheck import CHECKS, TOLERANCE, run_suite
from .train import (
    ABLATION_GRID,
    QUEUE_MULTIPLES,
    evaluate,
    format_table,
    load_checkpoint,
    load_dataset,
    results_dir,
    sweep_ablation,
    sweep_queue,
    train_run,
    write_table_csv,
)


def _config(args) -> TrainConfig:
    cfg = load_config(args.config, args.set)
    cfg.validate()
    return cfg


def cmd_generate_data(args) -> int:
    cfg = _config(args)
    ds = load_dataset(cfg)
    sidecar = dump_csv(ds, args.out)
    print(f"wrote {len(ds)} rows to {args.out} (metadata in {sidecar})")
    return 0


def cmd_train(args) -> int:
    cfg = _config(args)
    out = Path(args.out) if args.out else results_dir()
    out.mkdir(parents=True, exist_ok=True)
    stem = f"run-{cfg.digest()}-seed{cfg.seed}"
    log_path = out / f"{stem}.jsonl"
    ckpt = Path(args.checkpoint) if args.checkpoint else out / f"{stem}.npz"
    report, _ = train_run(cfg, log_path=log_path, checkpoint_path=ckpt)
    summary = {
        "source_val_accuracy": report.source_val_accuracy,
        "target_accuracy": report.target_accuracy,
        "best_epoch": report.best_epoch,
        "seed": report.seed,
        "wall_clock": round(report.wall_clock, 3),
        "checkpoint": str(ckpt),
        "log": str(log_path),
    }
    print(json.dumps(summary, indent=2))
    return 0


def cmd_eval(args) -> int:
    state, meta = load_checkpoint(args.checkpoint)
    cfg = TrainConfig.from_dict(meta["config"]) if meta.get("config") else TrainConfig()
    cfg = load_config(args.config, args.set) if (args.config or args.set) else cfg
    ds = load_dataset(cfg)
    domains = [args.domain] if args.domain is not None else sorted(set(ds.domain_ids.tolist()))
    target = cfg.target_domain % ds.num_domains
    for d in domains:
        tag = "target" if d == target else "source"
        print(f"domain {d} ({tag}): accuracy {evaluate(state, ds, d):.4f}")
    return 0


def _emit(rows, name, cfg, out) -> None:
    print(format_table(rows))
    print(f"csv: {write_table_csv(rows, name, cfg, out)}")


def cmd_sweep_ablation(args) -> int:
    cfg = _config(args)
    rows = sweep_ablation(cfg, ABLATION_GRID, seeds=args.seeds, workers=args.workers)
    _emit(rows, "ablation", cfg, args.out)
    return 0


def cmd_sweep_queue(args) -> int:
    cfg = _config(args)
    multiples = [int(m) for m in args.multiples.split(",")] if args.multiples else QUEUE_MULTIPLES
    rows = sweep_queue(cfg, multiples, workers=args.workers)
    _emit(rows, "queue", cfg, args.out)
    return 0


def cmd_gradcheck(args) -> int:
    names = args.only.split(",") if args.only else None
    results = run_suite(args.instances, args.seed, names)
    for r in results:
        print(f"{r.name:7s} instances={r.instances:3d} max_rel_error={r.max_error:.3e} {'ok' if r.passed else 'FAIL'}")
    ok = all(r.passed for r in results)
    print(f"{'all checks passed' if ok else 'gradient check failed'} (tolerance {TOLERANCE:g})")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dics", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="show warnings and progress logging")
    sub = parser.add_subparsers(dest="verb", required=True)

    def add(name, fn, help_):
        p = sub.add_parser(name, help=help_)
        p.set_defaults(fn=fn)
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one config key")
        return p

    p = add("generate-data", cmd_generate_data, "write the configured synthetic dataset as CSV")
    p.add_argument("--out", required=True)
    p = add("train", cmd_train, "one leave-one-domain-out run")
    p.add_argument("--out", help="directory for log and checkpoint (default: results dir)")
    p.add_argument("--checkpoint")
    p = add("eval", cmd_eval, "per-domain accuracy of a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--domain", type=int)
    p = add("sweep-ablation", cmd_sweep_ablation, "8-cell (alpha, beta) grid")
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out")
    p = add("sweep-queue", cmd_sweep_queue, "queue-length sweep under one seed")
    p.add_argument("--multiples", help="comma-separated, default 1,4,8,16")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out")
    p = add("gradcheck", cmd_gradcheck, "finite-difference check of every loss gradient")
    p.add_argument("--instances", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--only", help=f"comma-separated subset of {','.join(CHECKS)}")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(message)s")
    try:
        return args.fn(args)
    except (ValueError, KeyError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
