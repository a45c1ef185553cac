#!/usr/bin/env python3
"""Per-stage accuracy broken down by the stage at which each class was first learned.

    python scripts/forgetting.py --scheme rr --T 10 --seeds 0 1 2
"""

import argparse
import statistics
from collections import defaultdict

from owdl.questioner import SCHEMES
from owdl.scenario import ScenarioConfig, run_scenario
from owdl.sweep import Cell, cell_config


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--scheme", default="entropy", choices=SCHEMES)
    p.add_argument("--T", type=int, default=10)
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    args = p.parse_args()

    base = ScenarioConfig()
    acc = defaultdict(list)  # (stage, origin) -> accuracies
    for seed in args.seeds:
        for m in run_scenario(cell_config(base, Cell(seed % 6, seed, args.scheme, args.T)), seed):
            for origin, a in m.per_origin_accuracy.items():
                if origin <= m.stage:
                    acc[m.stage, origin].append(a)

    stages = range(base.num_teachers + 1)
    print("stage," + ",".join(f"origin{o}" for o in stages))
    for stage in stages:
        cells = [f"{statistics.fmean(acc[stage, o]):.4f}" if acc[stage, o] else "" for o in stages]
        print(f"{stage}," + ",".join(cells))


if __name__ == "__main__":
    main()
