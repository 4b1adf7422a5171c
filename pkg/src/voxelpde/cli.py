"""``voxelpde run|converge|bench|fit`` command-line entry point.

Exit codes: 0 success, 1 configuration or input error, 2 NaN abort during a
run, 3 failed convergence case, 4 fit stopped without converging.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
import time
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, load_config
from .grid import GridSpec, VoxelFields
from .inverse import CONVERGED, InverseProblem, Observation, Parameter, fit
from .io import read_raw_array, read_sidecar, sidecar_path, write_raw, write_vtk
from .timesteppers import NonFiniteError, StepperSpec, run
from .verification import report_csv, run_suite

EXIT_OK, EXIT_CONFIG, EXIT_NAN, EXIT_CONVERGE, EXIT_FIT = 0, 1, 2, 3, 4


def resolve_threads(value: int | None) -> int:
    if value is None:
        env = os.environ.get("VOXELPDE_THREADS")
        if env:
            try:
                value = int(env)
            except ValueError:
                raise ConfigError(f"VOXELPDE_THREADS must be an integer, got {env!r}") from None
    if value is None:
        value = os.cpu_count() or 1
    if value < 1:
        raise ConfigError("--threads must be ≥ 1")
    return value


def _err(msg: str):
    print(f"error: {msg}", file=sys.stderr)


def _out_dir(args, conf: RunConfig | None = None) -> Path:
    if args.out is not None:
        out = Path(args.out)
    elif conf is not None:
        out = Path(conf.output.directory)
    else:
        out = Path("out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _dump(fields, names, out: Path, tag: str, formats, extra=None):
    for name in names:
        if "raw" in formats:
            write_raw(fields, name, out / f"{name}_{tag}.raw", extra)
    if "vtk" in formats:
        write_vtk(fields, out / f"fields_{tag}.vtk", names=list(names))


class _FieldsView:
    """Minimal stand-in so dump writers accept callback state dicts."""

    def __init__(self, grid, state):
        self.grid = grid
        self._state = state
        self.dtype = next(iter(state.values())).dtype

    def __getitem__(self, name):
        return self._state[name]

    def __contains__(self, name):
        return name in self._state

    @property
    def names(self):
        return list(self._state)


# -- commands ------------------------------------------------------------------------


def cmd_run(args) -> int:
    try:
        conf = load_config(args.config, args.set)
        if conf.output.cadence and conf.output.cadence % conf.stepper.every:
            raise ConfigError("output.cadence must be a multiple of stepper.every")
        threads = resolve_threads(args.threads)
    except ConfigError as exc:
        _err(str(exc))
        return EXIT_CONFIG
    if args.print_config:
        sys.stdout.write(conf.to_toml())
        return EXIT_OK
    try:
        fields = conf.build_fields()
    except (FileNotFoundError, ValueError) as exc:
        _err(str(exc))
        return EXIT_CONFIG
    problem = conf.problem.build()
    stepper = conf.stepper.build()
    out = _out_dir(args, conf)
    evolved = list(problem.evolved)
    formats = conf.output.formats
    cadence = conf.output.cadence

    def dump(step, t, state):
        if cadence and step % cadence == 0:
            _dump(_FieldsView(fields.grid, state), evolved, out, f"{step:06d}", formats,
                  {"step": step, "t": t})

    tic = time.perf_counter()
    try:
        _, metrics = run(problem, fields, stepper, conf.bc.spec, callbacks=[dump], threads=threads)
    except NonFiniteError as exc:
        if exc.metrics is not None:
            exc.metrics.to_csv(out / "metrics.csv", wall_time=conf.output.wall_time)
        _err(f"{exc}; partial metrics in {out / 'metrics.csv'}")
        return EXIT_NAN
    elapsed = time.perf_counter() - tic
    metrics.to_csv(out / "metrics.csv", wall_time=conf.output.wall_time)
    _dump(fields, evolved, out, "final", formats, {"step": stepper.steps, "t": metrics.t[-1]})
    first = evolved[0]
    print(
        f"done: {problem.name} steps={stepper.steps} t={metrics.t[-1]:g} "
        f"mass={metrics.mass[first][-1]:.12g} min={metrics.minimum[first][-1]:.6g} "
        f"max={metrics.maximum[first][-1]:.6g} wall={elapsed:.2f}s "
        f"bytes/voxel={metrics.bytes_per_voxel:.1f} out={out}"
    )
    return EXIT_OK


def cmd_converge(args) -> int:
    def progress(res):
        status = "pass" if res.passed else "FAIL"
        errs = " ".join(f"{e:.3e}" for e in res.errors)
        note = f"  ({res.message})" if res.message else ""
        print(f"{res.case.name:<36} {res.case.axis:<8} order={res.order:7.4f} "
              f"nominal={res.case.nominal:.1f} {status}  [{errs}]{note}", flush=True)

    results = run_suite(args.filter, progress=progress)
    if not results:
        _err(f"no convergence case matches {args.filter!r}")
        return EXIT_CONFIG
    if args.out is not None:
        out = _out_dir(args)
        report_csv(results, out / "convergence.csv")
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} cases within tolerance")
    return EXIT_OK if failed == 0 else EXIT_CONVERGE


BENCH_HEADER = ["N", "voxels", "steps", "wall_ms_per_step", "peak_bytes", "bytes_per_voxel",
                "persistent_bytes", "persistent_field_equiv"]


BENCH_DEFAULT = {
    "problem": {"name": "cahn_hilliard"},
    "initial": {"phi": {"preset": "spinodal-noise", "mean": 0.5, "amplitude": 0.05, "seed": 0}},
    "stepper": {"kind": "imex", "dt": 1.0},
}


def bench_size(conf: RunConfig, n: int, steps: int, threads: int | None = None) -> dict:
    """Warm-up step then ``steps`` timed steps of ``conf`` on an ``n³`` grid."""
    grid = GridSpec((n, n, n), conf.grid.spacing, conf.grid.origin)
    problem = conf.problem.build()
    fields = VoxelFields(grid)
    for name in (*problem.evolved, *problem.auxiliary):
        fields.add_field(name, conf.initial[name].evaluate(grid, conf.base_dir))
    spec = conf.stepper.build()
    run(problem, fields, StepperSpec(spec.kind, spec.dt, 1, 1, spec.wavenumbers), conf.bc.spec,
        threads=threads, track_memory=False, diagnostics=False)
    timed = StepperSpec(spec.kind, spec.dt, steps, steps, spec.wavenumbers)
    tic = time.perf_counter()
    _, metrics = run(problem, fields, timed, conf.bc.spec, threads=threads, diagnostics=False)
    wall = (time.perf_counter() - tic) * 1e3 / steps
    field_bytes = grid.n_voxels * np.dtype(np.float64).itemsize
    return {
        "N": n,
        "voxels": grid.n_voxels,
        "steps": steps,
        "wall_ms_per_step": wall,
        "peak_bytes": metrics.peak_bytes,
        "bytes_per_voxel": metrics.bytes_per_voxel,
        "persistent_bytes": metrics.persistent_bytes,
        "persistent_field_equiv": metrics.persistent_bytes / field_bytes,
    }


def cmd_bench(args) -> int:
    base = ["problem.name=" + repr(args.problem)] if args.problem else []
    if args.stepper:
        base.append(f"stepper.kind={args.stepper!r}")
    try:
        conf = load_config(args.config, [*base, *args.set], defaults=BENCH_DEFAULT)
        sizes = [int(s) for s in args.sizes.split(",") if s.strip()]
        if any(n < 2 for n in sizes):
            raise ConfigError("--sizes entries must be ≥ 2")
        threads = resolve_threads(args.threads)
    except ValueError as exc:
        _err(str(exc))
        return EXIT_CONFIG
    out = _out_dir(args)
    path = out / "bench.csv"
    n_fields = len(conf.problem.build().evolved)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=BENCH_HEADER, lineterminator="\n")
        writer.writeheader()
        if args.steps > 0:
            for n in sizes:
                estimate = 6 * n_fields * n**3 * 8
                print(f"N={n}: pre-flight estimate ~{estimate / 2**20:.1f} MiB", flush=True)
                try:
                    row = bench_size(conf, n, args.steps, threads)
                except MemoryError:
                    print(f"warning: N={n} does not fit in memory, skipped", file=sys.stderr)
                    continue
                writer.writerow({k: (f"{v:.4f}" if isinstance(v, float) else v) for k, v in row.items()})
                fh.flush()
                print(f"N={n}: {row['wall_ms_per_step']:.2f} ms/step, {row['bytes_per_voxel']:.2f} bytes/voxel, "
                      f"{row['persistent_field_equiv']:.2f} persistent field-equivalents", flush=True)
    print(f"wrote {path}")
    return EXIT_OK


def _observations(conf: RunConfig, problem) -> list[Observation]:
    obs = []
    grid = conf.grid.build()
    for entry in conf.inverse.observations:
        path = Path(entry["file"])
        if conf.base_dir is not None and not path.is_absolute():
            path = conf.base_dir / path
        if not path.exists():
            raise FileNotFoundError(f"observation file not found: {path}")
        meta = read_sidecar(path) if sidecar_path(path).exists() else {}
        t = entry.get("t", meta.get("t"))
        if t is None:
            raise ConfigError(f"inverse.observations: no time for {path} (set t or sidecar 't')")
        mask = None
        if "mask" in entry:
            mpath = Path(entry["mask"])
            if conf.base_dir is not None and not mpath.is_absolute():
                mpath = conf.base_dir / mpath
            mask = read_raw_array(mpath, grid) != 0
        name = entry.get("field", meta.get("field", problem.evolved[0]))
        obs.append(Observation(float(t), read_raw_array(path, grid), name, mask))
    return obs


def cmd_fit(args) -> int:
    try:
        conf = load_config(args.config, args.set)
        if conf.inverse is None:
            raise ConfigError("inverse: section required for fit")
        threads = resolve_threads(args.threads)
        problem = conf.problem.build()
        observations = _observations(conf, problem)
        fields = conf.build_fields()
        params = [Parameter(k, float(v["lower"]), float(v["upper"]), float(v.get("scale", 1.0)))
                  for k, v in conf.inverse.parameters.items()]
        inv = InverseProblem(problem, fields, conf.bc.spec, conf.stepper.build(), params, observations,
                             threads=threads)
    except (FileNotFoundError, ValueError) as exc:
        _err(str(exc))
        return EXIT_CONFIG
    p0 = [float(v["p0"]) for v in conf.inverse.parameters.values()]
    result = fit(inv, p0, max_iter=conf.inverse.max_iter, rtol=conf.inverse.rtol)
    out = _out_dir(args, conf)
    result.trace_csv(out / conf.inverse.trace)
    shown = " ".join(f"{k}={v:.8g}" for k, v in result.params.items())
    print(f"fit {result.status}: {shown} loss={result.loss:.6e} iterations={result.iterations} "
          f"forward_runs={inv.evaluations}")
    return EXIT_OK if result.status == CONVERGED else EXIT_FIT


# -- parser --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="voxelpde", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="TOML run configuration")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config entry, e.g. stepper.dt=0.5 (repeatable)")
    common.add_argument("--threads", type=int, default=None,
                        help="transform worker threads (default: $VOXELPDE_THREADS or all cores)")
    common.add_argument("--out", type=Path, default=None, help="output directory")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", parents=[common], help="run a simulation from a config")
    p.add_argument("--print-config", action="store_true", help="print the resolved config as TOML and exit")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("converge", parents=[common], help="run the convergence suite")
    p.add_argument("filter", nargs="?", default=None, help="'+'-joined tags, e.g. diffusion+periodic")
    p.set_defaults(func=cmd_converge)

    p = sub.add_parser("bench", parents=[common], help="time and memory per grid size")
    p.add_argument("--sizes", default="32,64", help="comma-separated N values for N³ grids")
    p.add_argument("--problem", default=None)
    p.add_argument("--stepper", default=None)
    p.add_argument("--steps", type=int, default=5)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("fit", parents=[common], help="fit parameters to observations")
    p.set_defaults(func=cmd_fit)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
