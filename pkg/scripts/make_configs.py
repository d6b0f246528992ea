#!/usr/bin/env python3
"""Regenerate configs/desk_bench.json: the full strategy grid on desk data.

The grid crosses all four ensemble strategies with both mechanisms and all
four model families at one shared certified budget, which is the sweep the
desk benchmark report is built from.
"""

import argparse
import json
import os

from dpsynth.ensembles import STRATEGIES

MODELS = (
    {"kind": "logistic"},
    {"kind": "random-forest", "trees": 30, "max_depth": 4},
    {"kind": "gbdt", "stages": 40, "max_depth": 3},
    {"kind": "svm-rff", "epochs": 3},
)
MECHANISMS = (
    {"kind": "independent-marginals"},
    {"kind": "mwem", "rounds": 30},
)


def desk_config() -> dict:
    plans = []
    for strategy in STRATEGIES:
        for mechanism in MECHANISMS:
            for model in MODELS:
                plan = {
                    "strategy": strategy,
                    "total_budget": {"epsilon": 3.0, "delta": 3e-06},
                    "mechanism": mechanism,
                    "model": model,
                }
                if strategy != "without-ensemble":
                    plan["k"] = 3
                if strategy == "dp-ensemble-subsampling":
                    plan["p"] = 0.2
                plans.append(plan)
    return {
        "dataset": "../data/desk_truth.json",
        "seed": 0,
        "repeats": 3,
        "ece_bins": 10,
        "test_fraction": 0.2,
        "record_wall_time": True,
        "plans": plans,
    }


def main() -> None:
    default_out = os.path.join(os.path.dirname(os.path.abspath(__file__)),
                               os.pardir, "configs", "desk_bench.json")
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default=default_out)
    args = parser.parse_args()
    with open(args.out, "w") as handle:
        json.dump(desk_config(), handle, indent=2)
        handle.write("\n")
    print(f"wrote {args.out} ({len(desk_config()['plans'])} plans)")


if __name__ == "__main__":
    main()
