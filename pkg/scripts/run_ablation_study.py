#!/usr/bin/env python3
"""Ablation-direction study on synthetic propagation data.

Trains the full model and its ablations per seed and reports median test
MAE per variant plus the persistence baseline.
"""

import argparse
import json

from causalnet.experiments import ablation_study


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=5, help="number of seeds (0..n-1)")
    ap.add_argument("--variants", default="full,NMC,NC")
    ap.add_argument("--epochs", type=int, default=None)
    args = ap.parse_args()

    train_overrides = {} if args.epochs is None else {"epochs": args.epochs}
    out = ablation_study(
        seeds=range(args.seeds),
        variants=tuple(v.strip() for v in args.variants.split(",")),
        train_overrides=train_overrides,
        log=print,
    )
    print("median mean-MAE by variant:", json.dumps(out["median_mean_mae"], sort_keys=True))
    print("median horizon-1 MAE:     ", json.dumps(out["median_h1_mae"], sort_keys=True))
    print(json.dumps(out, sort_keys=True))


if __name__ == "__main__":
    main()
