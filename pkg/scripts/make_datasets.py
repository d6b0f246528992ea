#!/usr/bin/env python3
"""Regenerate the bundled ground-truth datasets under data/.

The generators are deterministic, so rerunning this script reproduces the
committed files byte for byte.
"""

import argparse
import os

from dpsynth.data import dataset_to_json
from dpsynth.datasets import make_desk_truth, make_smoke_truth


def main() -> None:
    default_out = os.path.join(os.path.dirname(os.path.abspath(__file__)),
                               os.pardir, "data")
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", default=default_out,
                        help="directory for the dataset JSON files")
    args = parser.parse_args()

    os.makedirs(args.out_dir, exist_ok=True)
    outputs = (("smoke_truth.json", make_smoke_truth()),
               ("desk_truth.json", make_desk_truth()))
    for name, dataset in outputs:
        path = os.path.join(args.out_dir, name)
        with open(path, "w") as handle:
            handle.write(dataset_to_json(dataset) + "\n")
        print(f"wrote {path} ({dataset.n} rows, {len(dataset.schema.attributes)} columns)")


if __name__ == "__main__":
    main()
