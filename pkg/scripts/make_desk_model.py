#!/usr/bin/env python3
"""Regenerate the bundled desk-scale model and dataset artifacts.

Everything is seed-fixed, so rerunning this script reproduces the files in
assets/ bit-identically.
"""

import argparse
from pathlib import Path

import numpy as np

from xbar_dse.deskmodel import desk_workload, write_desk_artifacts


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default=Path(__file__).parent.parent / "assets",
                        help="output directory (default: assets/)")
    args = parser.parse_args()
    paths = write_desk_artifacts(args.out)
    model, _, (feat, lab) = desk_workload()
    acc = float(np.mean(np.argmax(model.predict_float(feat), 1) == lab))
    print(f"wrote {paths['model']} and {paths['dataset']}")
    print(f"held-out floating-point accuracy: {acc:.4f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
