"""Peak field-buffer bytes per voxel across grid sizes.

    python scripts/memory_scaling.py --sizes 32,64,128 --problem cahn_hilliard
"""

import argparse
from pathlib import Path

from voxelpde import cli


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="32,64,128")
    ap.add_argument("--problem", default="cahn_hilliard")
    ap.add_argument("--stepper", default="imex")
    ap.add_argument("--steps", type=int, default=3)
    ap.add_argument("--out", type=Path, default=Path("runs/bench"))
    args = ap.parse_args()
    raise SystemExit(cli.main(["bench", "--sizes", args.sizes, "--problem", args.problem, "--stepper", args.stepper,
                               "--steps", str(args.steps), "--out", str(args.out)]))


if __name__ == "__main__":
    main()
