#!/usr/bin/env python3
"""Train AV and AO toy twins and sweep corrupted-region MAE over gap durations.

Writes a small CSV and prints the directional comparisons.
"""

import argparse
import csv

from avsi.experiments import SweepConfig, duration_sweep


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--steps", type=int, default=3000)
    parser.add_argument("--train-items", type=int, default=64)
    parser.add_argument("--eval-items", type=int, default=12)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", default="duration_sweep.csv")
    args = parser.parse_args()

    cfg = SweepConfig(
        train_items=args.train_items, eval_items=args.eval_items,
        steps=args.steps, seed=args.seed,
    )
    result = duration_sweep(cfg, progress=500)

    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["setup_ms", "av_mae_corrupted", "ao_mae_corrupted", "ratio"])
        for setup in cfg.setups:
            writer.writerow([setup, f"{result.av_mae[setup]:.6f}",
                             f"{result.ao_mae[setup]:.6f}", f"{result.ratio(setup):.4f}"])

    for setup in cfg.setups:
        print(f"{setup} ms: AV {result.av_mae[setup]:.4f}  AO {result.ao_mae[setup]:.4f}  "
              f"ratio {result.ratio(setup):.3f}")
    print(f"AV relative increase 160->1600: {result.relative_increase('av'):.3f}")
    print(f"AO relative increase 160->1600: {result.relative_increase('ao'):.3f}")
    print(f"report written to {args.out}")


if __name__ == "__main__":
    main()
