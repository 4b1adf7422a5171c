"""Recover a diffusivity from self-generated snapshots.

Writes observations with the same raw layout the CLI reads, then fits from
a wrong starting guess.

    python scripts/fit_demo.py --truth 1.0 --p0 0.5 --out runs/fit
"""

import argparse
from pathlib import Path

import numpy as np

from voxelpde import BoundarySpec, Diffusion, GridSpec, StepperSpec, VoxelFields, run
from voxelpde.inverse import InverseProblem, Observation, Parameter, fit
from voxelpde.io import write_raw


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=16)
    ap.add_argument("--truth", type=float, default=1.0)
    ap.add_argument("--p0", type=float, default=0.5)
    ap.add_argument("--noise", type=float, default=0.0, help="gaussian noise std added to snapshots")
    ap.add_argument("--out", type=Path, default=Path("runs/fit"))
    args = ap.parse_args()

    grid = GridSpec((args.n,) * 3)
    x, y, z = grid.coords()
    c = args.n / 2
    fields = VoxelFields(grid)
    fields.add_field("c", np.exp(-((x - c) ** 2 + (y - c + 1.5) ** 2 + (z - c - 1) ** 2) / 8.0))
    spec = StepperSpec("imex", 0.5, 50, every=10)

    args.out.mkdir(parents=True, exist_ok=True)
    rng = np.random.Generator(np.random.Philox(0))
    obs = []

    def grab(step, t, state):
        if step == 0:
            return
        data = state["c"] + args.noise * rng.standard_normal(grid.shape)
        snap = VoxelFields(grid)
        snap.add_field("c", data)
        write_raw(snap, "c", args.out / f"obs_{step:06d}.raw", {"t": t})
        obs.append(Observation(t, data))

    run(Diffusion(D0=args.truth), fields.copy(), spec, BoundarySpec.periodic(), callbacks=[grab], track_memory=False)

    inv = InverseProblem(Diffusion(), fields, BoundarySpec.periodic(), spec, [Parameter("D0", 0.01, 10.0)], obs)
    res = fit(inv, [args.p0], callback=lambda it, p, loss: print(f"iter {it:3d}  D0={p[0]:.8f}  loss={loss:.3e}"))
    res.trace_csv(args.out / "fit_trace.csv")
    err = abs(res.params["D0"] - args.truth) / args.truth
    print(f"{res.status}: D0={res.params['D0']:.8f} (truth {args.truth}, rel. error {err:.2e}), "
          f"{inv.evaluations} forward runs")


if __name__ == "__main__":
    main()
