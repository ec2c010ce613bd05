#!/usr/bin/env python3
"""Eight-cell (alpha, beta) grid on the default synthetic task, averaged over seeds."""
import argparse
import logging

from dics.config import load_config
from dics.train import ABLATION_GRID, format_table, sweep_ablation, write_table_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config")
    ap.add_argument("--set", action="append", default=[])
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()
    logging.basicConfig(level=logging.ERROR)

    cfg = load_config(args.config, args.set)
    rows = sweep_ablation(cfg, ABLATION_GRID, seeds=args.seeds, workers=args.workers)
    print(format_table(rows))
    erm = next(r["mean"] for r in rows if (r["alpha"], r["beta"]) == (0.0, 0.0))
    full = next(r["mean"] for r in rows if (r["alpha"], r["beta"]) == (1.0, 1.0))
    best = max(rows, key=lambda r: r["mean"])
    print(f"\n(1,1) - (0,0) = {100 * (full - erm):+.1f} points; best cell ({best['alpha']}, {best['beta']})")
    print(f"csv: {write_table_csv(rows, 'ablation', cfg)}")


if __name__ == "__main__":
    main()
