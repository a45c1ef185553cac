#!/usr/bin/env python3
"""Final-stage top-1 against the per-class budget T, one column per scheme.

    python scripts/scheme_comparison.py --seeds 0 1 2 --T 1 2 5 10
"""

import argparse
import statistics

from owdl.questioner import SCHEMES
from owdl.scenario import ScenarioConfig, run_scenario
from owdl.sweep import Cell, cell_config


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--T", type=int, nargs="+", default=[1, 2, 5, 10, 20, 50])
    p.add_argument("--schemes", nargs="+", default=list(SCHEMES), choices=SCHEMES)
    p.add_argument("--hidden", type=int, default=256)
    args = p.parse_args()

    base = ScenarioConfig(hidden=args.hidden)
    print("T," + ",".join(args.schemes))
    for T in args.T:
        row = []
        for scheme in args.schemes:
            accs = [
                run_scenario(cell_config(base, Cell(seed % 6, seed, scheme, T)), seed)[-1].top1_accuracy
                for seed in args.seeds
            ]
            row.append(f"{statistics.fmean(accs):.4f}")
        print(f"{T}," + ",".join(row), flush=True)


if __name__ == "__main__":
    main()
