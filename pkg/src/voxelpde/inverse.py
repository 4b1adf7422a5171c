"""Scalar parameter estimation from field snapshots.

The forward model is any :class:`~voxelpde.problems.Problem`; named scalar
parameters are swapped in with :func:`dataclasses.replace` and the run is
sampled at the observation times.  Gradients are central finite
differences, which keeps the cost at ``2·P`` forward runs per iteration.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from functools import reduce
from typing import Callable, Mapping, Sequence

import numpy as np

from .grid import BoundarySpec, VoxelFields
from .problems import Problem
from .timesteppers import NonFiniteError, StepperSpec, run

CONVERGED = "converged"
MAX_ITER = "max_iter"
NO_DESCENT = "no_descent"


@dataclass(frozen=True)
class Parameter:
    name: str
    lower: float
    upper: float
    scale: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.lower) and math.isfinite(self.upper)):
            raise ValueError(f"bounds of {self.name!r} must be finite")
        if not self.lower < self.upper:
            raise ValueError(f"bounds of {self.name!r} need lower < upper")
        if not self.scale > 0:
            raise ValueError(f"scale of {self.name!r} must be > 0")


@dataclass
class Observation:
    t: float
    data: np.ndarray
    field: str | None = None
    mask: np.ndarray | None = None


@dataclass
class LossEvaluation:
    value: float
    finite: bool = True
    message: str = ""


class InverseProblem:
    """Forward problem + stepper + bounded parameters + observations.

    ``objective`` replaces the forward-model loss entirely; it receives the
    parameter vector and is meant for tests and analytic checks.
    """

    def __init__(
        self,
        problem: Problem,
        initial: VoxelFields,
        bc: BoundarySpec,
        stepper: StepperSpec,
        parameters: Sequence[Parameter],
        observations: Sequence[Observation],
        objective: Callable[[np.ndarray], float] | None = None,
        threads: int | None = None,
    ):
        self.problem = problem
        self.initial = initial
        self.bc = bc
        self.stepper = stepper
        self.parameters = tuple(parameters)
        if not self.parameters:
            raise ValueError("inverse problem needs at least one parameter")
        self.objective = objective
        self.threads = threads
        self.evaluations = 0
        horizon = stepper.steps * stepper.dt
        self.observations = []
        for obs in observations:
            if obs.t < 0 or obs.t > horizon * (1 + 1e-12):
                raise ValueError(f"observation time {obs.t} outside run horizon [0, {horizon}]")
            name = obs.field or problem.evolved[0]
            if name not in problem.evolved:
                raise ValueError(f"observed field {name!r} is not evolved by {problem.name!r}")
            data = np.asarray(obs.data, dtype=np.float64).reshape(initial.grid.shape)
            mask = None if obs.mask is None else np.asarray(obs.mask, dtype=bool).reshape(initial.grid.shape)
            step = int(round(obs.t / stepper.dt))
            self.observations.append((step, name, data, mask))

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(p.name for p in self.parameters)

    @property
    def lower(self) -> np.ndarray:
        return np.array([p.lower for p in self.parameters])

    @property
    def upper(self) -> np.ndarray:
        return np.array([p.upper for p in self.parameters])

    def vector(self, params) -> np.ndarray:
        if isinstance(params, Mapping):
            return np.array([float(params[n]) for n in self.names])
        return np.atleast_1d(np.asarray(params, dtype=np.float64)).copy()

    def as_dict(self, p) -> dict[str, float]:
        return dict(zip(self.names, map(float, self.vector(p))))

    def project(self, p) -> np.ndarray:
        return np.clip(self.vector(p), self.lower, self.upper)

    def steps_of_interest(self) -> set[int]:
        return {step for step, *_ in self.observations}

    def evaluate(self, params) -> LossEvaluation:
        p = self.vector(params)
        if np.any(p < self.lower) or np.any(p > self.upper):
            raise ValueError(f"parameters {self.as_dict(p)} outside bounds")
        self.evaluations += 1
        if self.objective is not None:
            return LossEvaluation(float(self.objective(p)))
        if not self.observations:
            return LossEvaluation(0.0)
        problem = replace(self.problem, **self.as_dict(p))
        fields = self.initial.copy()
        wanted = self.steps_of_interest()
        every = reduce(math.gcd, [s for s in wanted if s > 0], self.stepper.steps) or 1
        stepper = replace(self.stepper, every=max(1, every))
        total = [0.0]

        def accumulate(step, t, state):
            if step not in wanted:
                return
            for s, name, data, mask in self.observations:
                if s != step:
                    continue
                diff = state[name] - data
                if mask is not None:
                    diff = diff[mask]
                total[0] += float(np.dot(diff.ravel(), diff.ravel()))

        try:
            run(problem, fields, stepper, self.bc, callbacks=[accumulate], threads=self.threads,
                track_memory=False, diagnostics=False)
        except NonFiniteError as exc:
            return LossEvaluation(math.inf, False, str(exc))
        return LossEvaluation(total[0])

    def loss(self, params) -> float:
        """Masked sum of squared differences; ``+inf`` if the forward run blew up."""
        return self.evaluate(params).value

    def deltas(self, p) -> np.ndarray:
        p = self.vector(p)
        scale = np.array([q.scale for q in self.parameters])
        return 1e-4 * np.maximum(np.abs(p), scale)

    def gradient(self, params, one_sided_at_bounds: bool = False) -> np.ndarray:
        """Central-difference ``d(loss)/dp`` with ``δ = 1e-4·max(|p|, scale)``."""
        p = self.vector(params)
        delta = self.deltas(p)
        g = np.empty_like(p)
        base = None
        for i in range(p.size):
            up, dn = p.copy(), p.copy()
            up[i] += delta[i]
            dn[i] -= delta[i]
            hi_ok = up[i] <= self.upper[i]
            lo_ok = dn[i] >= self.lower[i]
            if not (hi_ok and lo_ok) and not one_sided_at_bounds:
                raise ValueError(f"parameter {self.names[i]!r} within δ of its bounds")
            if hi_ok and lo_ok:
                f_up, f_dn, span = self.evaluate(up), self.evaluate(dn), 2 * delta[i]
            else:
                if base is None:
                    base = self.evaluate(p)
                if hi_ok:
                    f_up, f_dn, span = self.evaluate(up), base, delta[i]
                else:
                    f_up, f_dn, span = base, self.evaluate(dn), delta[i]
            if not (f_up.finite and f_dn.finite):
                raise FloatingPointError(f"non-finite loss while differentiating {self.names[i]!r}")
            g[i] = (f_up.value - f_dn.value) / span
        return g


@dataclass
class FitResult:
    params: dict[str, float]
    loss: float
    iterations: int
    status: str
    trace: list[tuple] = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.status == CONVERGED

    def trace_csv(self, path=None) -> str:
        names = list(self.params)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iter", *names, "loss", "step_size"])
        for it, p, loss, step in self.trace:
            w.writerow([it, *(repr(float(v)) for v in p), repr(float(loss)), repr(float(step))])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def fit(
    inv: InverseProblem,
    p0,
    max_iter: int = 200,
    rtol: float = 1e-6,
    max_halvings: int = 30,
    callback: Callable[[int, np.ndarray, float], None] | None = None,
) -> FitResult:
    """Projected gradient descent with a Barzilai–Borwein step and backtracking.

    An iterate is accepted only if it lowers the loss, so the trace is
    non-increasing.  Convergence is declared when the accepted (or the
    smallest attempted) step satisfies ``|Δp| ≤ rtol·max(|p|, scale)``.
    """
    p = inv.vector(p0)
    if np.any(p < inv.lower) or np.any(p > inv.upper):
        raise ValueError(f"p0 {inv.as_dict(p)} outside bounds")
    scale = np.array([q.scale for q in inv.parameters])
    f = inv.evaluate(p)
    if not f.finite:
        raise FloatingPointError(f"forward run at p0 failed: {f.message}")
    loss = f.value
    trace = [(0, p.copy(), loss, 0.0)]
    alpha = None
    prev = None
    status = MAX_ITER
    it = 0
    for it in range(1, max_iter + 1):
        g = inv.gradient(p, one_sided_at_bounds=True)
        gnorm = float(np.linalg.norm(g))
        if gnorm == 0.0:
            status = CONVERGED
            it -= 1
            break
        if prev is not None:
            s, y = p - prev[0], g - prev[1]
            sy = float(np.dot(s, y))
            alpha = float(np.dot(s, s)) / sy if sy > 0 else 2.0 * alpha
        if alpha is None:
            alpha = 0.1 * float(np.linalg.norm(np.maximum(np.abs(p), scale))) / gnorm
        tol = rtol * np.maximum(np.abs(p), scale)
        accepted = False
        tiny = False
        step = alpha
        for _ in range(max_halvings + 1):
            trial = inv.project(p - step * g)
            dp = np.abs(trial - p)
            if np.all(dp <= tol):
                tiny = True
                break
            ft = inv.evaluate(trial)
            if ft.finite and ft.value < loss:
                accepted = True
                break
            step *= 0.5
        if tiny:
            status = CONVERGED
            it -= 1
            break
        if not accepted:
            status = NO_DESCENT
            it -= 1
            break
        prev = (p, g)
        p, loss, alpha = trial, ft.value, step
        trace.append((it, p.copy(), loss, step))
        if callback is not None:
            callback(it, p, loss)
        if np.all(dp <= tol):
            status = CONVERGED
            break
    return FitResult(inv.as_dict(p), loss, it, status, trace)
