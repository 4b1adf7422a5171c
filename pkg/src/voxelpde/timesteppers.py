"""Explicit Euler, semi-implicit (IMEX) and ETD1 stepping plus the run loop.

Both spectral steppers share one update: ``u ← u + F⁻¹{P ⊙ F{rhs(u)}}``
with ``P = dt/(1 − dt·S)`` (IMEX) or ``P = dt·φ1(dt·S)`` (ETD1).  Writing
ETD1 this way is exact algebra: ``e^{dtS}û + dtφ1(dtS)(r̂ − Sû)`` collapses
to ``û + dtφ1(dtS)r̂``.
"""

from __future__ import annotations

import csv
import io
import math
import time
import tracemalloc
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

import numpy as np

from .grid import BoundarySpec, VoxelFields
from .problems import Problem, compute_mass
from .spectral import TransformPlan, build_symbol, etd1_prefactor, imex_prefactor
from .stencils import StencilContext

STEPPERS = ("euler", "imex", "etd1")


class NonFiniteError(FloatingPointError):
    """A field went NaN/Inf; ``metrics`` holds everything sampled before it."""

    def __init__(self, step: int, name: str, metrics: "RunMetrics | None" = None):
        super().__init__(f"non-finite values in field {name!r} at step {step}")
        self.step = step
        self.field = name
        self.metrics = metrics


@dataclass
class StepperSpec:
    kind: str = "imex"
    dt: float = 1.0
    steps: int = 1
    every: int = 1
    wavenumbers: str = "modified"

    def __post_init__(self):
        self.kind = self.kind.lower()
        if self.kind not in STEPPERS:
            raise ValueError(f"stepper.kind must be one of {STEPPERS}")
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError("stepper.dt must be > 0")
        if int(self.steps) != self.steps or self.steps < 0:
            raise ValueError("stepper.steps must be a non-negative integer")
        if int(self.every) != self.every or self.every < 1:
            raise ValueError("stepper.every must be a positive integer")
        self.steps = int(self.steps)
        self.every = int(self.every)

    @property
    def spectral(self) -> bool:
        return self.kind != "euler"


def _assert_finite(u: np.ndarray, name: str, step: int):
    lo, hi = float(u.min()), float(u.max())
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise NonFiniteError(step, name)
    return lo, hi


def euler_step(u: np.ndarray, rhs: np.ndarray, dt: float, consume: bool = False, step: int = 0) -> np.ndarray:
    """``u ← u + dt·rhs`` in place; ``consume`` lets ``rhs`` be scaled in place."""
    if consume:
        rhs *= dt
        u += rhs
    else:
        u += dt * rhs
    _assert_finite(u, "u", step)
    return u


def spectral_update(u: np.ndarray, rhs: np.ndarray, prefactor: np.ndarray, plan: TransformPlan, step: int = 0) -> np.ndarray:
    coeffs = plan.forward(rhs)
    coeffs *= prefactor
    u += plan.inverse(coeffs, overwrite=True)
    _assert_finite(u, "u", step)
    return u


def imex_step(u, rhs, symbol, plan: TransformPlan, dt: float, step: int = 0):
    s = getattr(symbol, "s", symbol)
    return spectral_update(u, rhs, imex_prefactor(s, dt), plan, step)


def etd1_step(u, rhs, symbol, plan: TransformPlan, dt: float, step: int = 0):
    s = getattr(symbol, "s", symbol)
    return spectral_update(u, rhs, etd1_prefactor(s, dt), plan, step)


@dataclass
class RunMetrics:
    fields: tuple[str, ...]
    step: list = field(default_factory=list)
    t: list = field(default_factory=list)
    mass: dict = field(default_factory=dict)
    minimum: dict = field(default_factory=dict)
    maximum: dict = field(default_factory=dict)
    energy: list = field(default_factory=list)
    wall_ms: list = field(default_factory=list)
    peak_bytes: int = 0
    persistent_bytes: int = 0
    n_voxels: int = 0

    def __post_init__(self):
        for name in self.fields:
            self.mass.setdefault(name, [])
            self.minimum.setdefault(name, [])
            self.maximum.setdefault(name, [])

    def record(self, step, t, masses, mins, maxs, energy, wall_ms):
        self.step.append(step)
        self.t.append(t)
        for name in self.fields:
            self.mass[name].append(masses[name])
            self.minimum[name].append(mins[name])
            self.maximum[name].append(maxs[name])
        self.energy.append(energy)
        self.wall_ms.append(wall_ms)

    @property
    def bytes_per_voxel(self) -> float:
        return self.peak_bytes / self.n_voxels if self.n_voxels else float("nan")

    def header(self) -> list[str]:
        if len(self.fields) == 1:
            cols = ["mass", "energy", "min", "max"]
        else:
            cols = [f"mass_{f}" for f in self.fields] + ["energy"]
            cols += [f"min_{f}" for f in self.fields] + [f"max_{f}" for f in self.fields]
        return ["step", "t", *cols, "wall_ms"]

    def rows(self, wall_time: bool = True):
        for i, step in enumerate(self.step):
            e = self.energy[i]
            energy = "" if e is None else repr(e)
            masses = [repr(self.mass[f][i]) for f in self.fields]
            mins = [repr(self.minimum[f][i]) for f in self.fields]
            maxs = [repr(self.maximum[f][i]) for f in self.fields]
            wall = f"{self.wall_ms[i]:.3f}" if wall_time else "0"
            if len(self.fields) == 1:
                yield [step, repr(self.t[i]), masses[0], energy, mins[0], maxs[0], wall]
            else:
                yield [step, repr(self.t[i]), *masses, energy, *mins, *maxs, wall]

    def to_csv(self, path=None, wall_time: bool = True) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.header())
        writer.writerows(self.rows(wall_time))
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


Callback = Callable[[int, float, Mapping[str, np.ndarray]], None]


def _readonly(state: Mapping[str, np.ndarray]) -> dict[str, np.ndarray]:
    views = {}
    for k, v in state.items():
        view = v.view()
        view.flags.writeable = False
        views[k] = view
    return views


def run(
    problem: Problem,
    fields: VoxelFields,
    stepper: StepperSpec,
    bc: BoundarySpec,
    callbacks: Iterable[Callback] = (),
    threads: int | None = None,
    track_memory: bool = True,
    diagnostics: bool = True,
    t0: float = 0.0,
) -> tuple[VoxelFields, RunMetrics]:
    """Advance ``fields`` (in place) by ``stepper.steps`` steps.

    Metrics are sampled at step 0, every ``stepper.every`` steps and at the
    last step; callbacks run at the same cadence with read-only views.
    Raises :class:`NonFiniteError` (carrying partial metrics) on NaN/Inf.
    """
    missing = [k for k in (*problem.evolved, *problem.auxiliary) if k not in fields]
    if missing:
        raise ValueError(f"problem {problem.name!r} needs fields {missing}")
    grid = fields.grid
    callbacks = list(callbacks)
    started = False
    if track_memory:
        if not tracemalloc.is_tracing():
            tracemalloc.start()
            started = True
        base = tracemalloc.get_traced_memory()[0]
        tracemalloc.reset_peak()

    try:
        ctx = StencilContext(grid, bc)
        prefactors: dict[str, np.ndarray] = {}
        plan = None
        if stepper.spectral:
            bc.check_spectral(grid)
            plan = TransformPlan(grid, bc, workers=threads)
            symbols = build_symbol(problem, grid, bc, stepper.wavenumbers, plan)
            make = imex_prefactor if stepper.kind == "imex" else etd1_prefactor
            shared: dict = {}
            stabs = problem.stabilizers()
            for name in problem.evolved:
                key = stabs[name]
                if key not in shared:
                    shared[key] = make(symbols[name].s, stepper.dt)
                prefactors[name] = shared[key]
            del symbols
        else:
            shared = {}

        state = fields.fields
        dtype = np.float64
        rhs = {k: np.empty(grid.shape, dtype=dtype) for k in problem.evolved}
        work = [np.empty(grid.shape, dtype=dtype) for _ in range(problem.n_work)]
        metrics = RunMetrics(tuple(problem.evolved), n_voxels=grid.n_voxels)
        energy_scratch = rhs[problem.evolved[0]]

        def sample(step, t, wall_ms, extrema=None):
            masses, mins, maxs = {}, {}, {}
            for name in problem.evolved:
                u = state[name]
                masses[name] = compute_mass(u, ctx)
                if extrema is None:
                    mins[name], maxs[name] = float(u.min()), float(u.max())
                else:
                    mins[name], maxs[name] = extrema[name]
            energy = problem.energy(state, ctx, energy_scratch) if diagnostics else None
            metrics.record(step, t, masses, mins, maxs, energy, wall_ms)
            if callbacks:
                views = _readonly(state)
                for cb in callbacks:
                    cb(step, t, views)

        sample(0, t0, 0.0)
        dt = stepper.dt
        for n in range(stepper.steps):
            t = t0 + n * dt
            tic = time.perf_counter()
            problem.rhs(state, t, ctx, rhs, work)
            extrema = {}
            for name in problem.evolved:
                u = state[name]
                if plan is None:
                    rhs[name] *= dt
                    u += rhs[name]
                else:
                    coeffs = plan.forward(rhs[name])
                    coeffs *= prefactors[name]
                    u += plan.inverse(coeffs, overwrite=True)
                    del coeffs
                try:
                    extrema[name] = _assert_finite(u, name, n + 1)
                except NonFiniteError as err:
                    err.metrics = metrics
                    raise
            wall = (time.perf_counter() - tic) * 1e3
            step = n + 1
            if step % stepper.every == 0 or step == stepper.steps:
                sample(step, t0 + step * dt, wall, extrema)

        if track_memory:
            peak = tracemalloc.get_traced_memory()[1] - base
            metrics.peak_bytes = int(peak + fields.nbytes)
        metrics.persistent_bytes = int(
            fields.nbytes
            + sum(a.nbytes for a in rhs.values())
            + sum(a.nbytes for a in work)
            + ctx.scratch_bytes
            + sum(a.nbytes for a in shared.values())
        )
        return fields, metrics
    finally:
        if started:
            tracemalloc.stop()
