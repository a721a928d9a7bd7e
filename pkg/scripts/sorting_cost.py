#!/usr/bin/env python3
"""Tick and message counts of both decentralized sorting modes as N grows.

    python3 scripts/sorting_cost.py --sizes 8 16 32 64 --out runs/sorting.csv
"""

import argparse
import csv
from pathlib import Path

import numpy as np

from growthflow.sorting import SortConfig, message_stats, sort


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[8, 16, 32, 64])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", type=Path, default=Path("runs/sorting.csv"))
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    rows = []
    for n in args.sizes:
        values = rng.permutation(np.linspace(0.0, 1.0, n))
        for mode in ("linear", "constant"):
            res = sort(values, SortConfig(mode=mode))
            assert res.values == sorted(values.tolist())
            stats = message_stats(res.network)
            rows.append((mode, n, res.total_ticks, stats["messages_total"]))
            print(f"{mode:>8}  N={n:<4} ticks={res.total_ticks:<7} messages={stats['messages_total']}")

    args.out.parent.mkdir(parents=True, exist_ok=True)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["mode", "n", "ticks", "messages"])
        w.writerows(rows)


if __name__ == "__main__":
    main()
