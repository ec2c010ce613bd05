#!/usr/bin/env python3
"""ERM versus full DICS on many seeds, to see how much the gap depends on the seed set."""
import argparse
import logging

import numpy as np

from dics.config import load_config
from dics.train import sweep_ablation


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config")
    ap.add_argument("--set", action="append", default=[])
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--block", type=int, default=5, help="report the gap per block of this many seeds")
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()
    logging.basicConfig(level=logging.ERROR)

    cfg = load_config(args.config, args.set)
    per_seed = {}
    for k in range(args.seeds):
        rows = sweep_ablation(cfg.replace(seed=cfg.seed + k), [(0, 0), (1, 1)], seeds=1, workers=args.workers)
        per_seed[cfg.seed + k] = (rows[0]["mean"], rows[1]["mean"])
        print(f"seed {cfg.seed + k:3d}  erm {rows[0]['mean']:.3f}  dics {rows[1]['mean']:.3f}", flush=True)
    gaps = np.array([d - e for e, d in per_seed.values()])
    for i in range(0, len(gaps), args.block):
        print(f"seeds {i}-{i + args.block - 1}: mean gap {100 * gaps[i:i + args.block].mean():+.1f} points")
    print(f"all: mean gap {100 * gaps.mean():+.1f} points (std over seeds {100 * gaps.std():.1f})")


if __name__ == "__main__":
    main()
