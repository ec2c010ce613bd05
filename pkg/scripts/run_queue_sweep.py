#!/usr/bin/env python3
"""Queue-length sweep (1N, 4N, 8N, 16N) under one fixed seed."""
import argparse
import logging

from dics.config import load_config
from dics.train import QUEUE_MULTIPLES, format_table, sweep_queue, write_table_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config")
    ap.add_argument("--set", action="append", default=[])
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()
    logging.basicConfig(level=logging.ERROR)

    cfg = load_config(args.config, args.set)
    rows = sweep_queue(cfg, QUEUE_MULTIPLES, workers=args.workers)
    print(format_table(rows))
    print(f"csv: {write_table_csv(rows, 'queue', cfg)}")


if __name__ == "__main__":
    main()
