"""Convergence harness: manufactured solutions, observed orders, dense oracles.

Spatial cases refine the grid with ``dt ∝ h²`` and compare against an
analytic solution at the final time; temporal cases refine ``dt`` on a fixed
grid and compare against the same scheme run with a step 1024× smaller.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .grid import (
    BoundarySpec,
    Dirichlet,
    GridSpec,
    NeumannFlux,
    NeumannZeroFlux,
    Periodic,
    VoxelFields,
)
from .problems import AllenCahn, CahnHilliard, Diffusion, GrayScott, Problem, SmoothedBoundary, rhs_smoothed_boundary
from .stencils import StencilContext
from .timesteppers import StepperSpec, run


class ConvergenceFailure(RuntimeError):
    pass


# -- manufactured solutions ------------------------------------------------------


@dataclass
class ManufacturedSolution:
    """Exact solution with caller-supplied analytic closures.

    ``u(x, y, z, t)`` is the solution, ``dudt`` its time derivative and
    ``operator`` the continuous right-hand side (without forcing) applied
    to it, e.g. ``D∇²u``.
    """

    u: Callable
    dudt: Callable | None = None
    operator: Callable | None = None


def manufactured_forcing(problem: Problem | None, mms: ManufacturedSolution, ctx) -> Callable[[np.ndarray, float], np.ndarray]:
    """Forcing ``f* = ∂u*/∂t − RHS(u*)`` on the cell centers of ``ctx``.

    ``ctx`` is a :class:`StencilContext` or a bare :class:`GridSpec`.  The
    operator closure stands for ``problem``'s continuous RHS; nothing is
    differentiated here.
    """
    if mms.dudt is None or mms.operator is None:
        name = getattr(problem, "name", "problem")
        raise ValueError(f"manufactured forcing for {name!r} needs both dudt and operator closures")
    grid = getattr(ctx, "grid", ctx)
    X = grid.coords()

    def forcing(c, t):
        return np.broadcast_to(mms.dudt(*X, t) - mms.operator(*X, t), grid.shape)

    return forcing


def error_norm(diff: np.ndarray, grid: GridSpec, norm: str = "L2") -> float:
    if norm == "L2":
        return math.sqrt(float(np.sum(diff * diff)) * grid.cell_volume)
    if norm == "Linf":
        return float(np.max(np.abs(diff)))
    raise ValueError(f"unknown norm {norm!r}")


def observed_order(sizes: Sequence[float], errors: Sequence[float]) -> float:
    """Least-squares slope of ``log(error)`` against ``log(size)``."""
    sizes = np.asarray(sizes, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if sizes.size < 3:
        raise ConvergenceFailure("a ladder needs at least 3 entries")
    order = np.argsort(sizes)[::-1]
    if np.any(np.diff(sizes[order]) >= 0):
        raise ConvergenceFailure("ladder sizes must be distinct")
    errs = errors[order]
    if not np.all(np.isfinite(errs)) or np.any(errs <= 0):
        raise ConvergenceFailure(f"errors must be finite and positive, got {errs.tolist()}")
    if np.any(np.diff(errs) >= 0):
        raise ConvergenceFailure(f"errors do not decrease under refinement: {errs.tolist()}")
    slope, _ = np.polyfit(np.log(sizes), np.log(errors), 1)
    return float(slope)


# -- cases -------------------------------------------------------------------------


@dataclass
class ConvergenceCase:
    """One (problem, BC, stepper) convergence study.

    ``level(n)`` runs ladder entry ``n`` and returns ``(size, error)`` where
    size is ``h`` (spatial) or ``dt`` (temporal).
    """

    problem: str
    bc: str
    stepper: str
    axis: str
    ladder: tuple[int, ...]
    level: Callable[[int], tuple[float, float]]
    nominal: float
    tol: float = 0.1
    norm: str = "L2"
    tags: tuple[str, ...] = ()

    def __post_init__(self):
        if len(self.ladder) < 3 or any(b <= a for a, b in zip(self.ladder, self.ladder[1:])):
            raise ValueError("ladder must be strictly increasing with ≥ 3 entries")

    @property
    def name(self) -> str:
        return "+".join((self.problem, self.bc, self.stepper, *self.tags))

    def matches(self, pattern: str | None) -> bool:
        if not pattern:
            return True
        keys = {self.problem, self.bc, self.stepper, self.axis, *self.tags}
        return all(tok in keys for tok in pattern.split("+"))


@dataclass
class CaseResult:
    case: ConvergenceCase
    sizes: list[float] = field(default_factory=list)
    errors: list[float] = field(default_factory=list)
    order: float = float("nan")
    message: str = ""

    @property
    def passed(self) -> bool:
        return math.isfinite(self.order) and abs(self.order - self.case.nominal) <= self.case.tol


def run_case(case: ConvergenceCase) -> CaseResult:
    res = CaseResult(case)
    try:
        for n in case.ladder:
            size, err = case.level(n)
            res.sizes.append(size)
            res.errors.append(err)
        res.order = observed_order(res.sizes, res.errors)
    except ConvergenceFailure as exc:
        res.message = str(exc)
    except FloatingPointError as exc:
        res.message = f"run aborted: {exc}"
    return res


def report_csv(results: Sequence[CaseResult], path=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["case", "axis", "resolutions", "errors", "observed_order", "nominal", "status"])
    for r in results:
        w.writerow([
            r.case.name,
            r.case.axis,
            " ".join(str(n) for n in r.case.ladder),
            " ".join(f"{e:.6e}" for e in r.errors),
            f"{r.order:.4f}",
            r.case.nominal,
            "pass" if r.passed else "fail",
        ])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text


# -- diffusion MMS (unit cube) ------------------------------------------------------

_BCS = {
    "periodic": lambda: BoundarySpec.periodic(),
    "dirichlet": lambda: BoundarySpec.dirichlet(1.0),
    "zeroflux": lambda: BoundarySpec.zero_flux(),
}


def _diffusion_mms(bc: str, D: float) -> ManufacturedSolution:
    pi = np.pi
    if bc == "periodic":
        lam = 12 * pi**2 * D
        shape = lambda x, y, z: np.sin(2 * pi * x) * np.sin(2 * pi * y) * np.sin(2 * pi * z)
        u = lambda x, y, z, t: shape(x, y, z) * np.exp(-lam * t)
        return ManufacturedSolution(u, lambda x, y, z, t: -lam * u(x, y, z, t),
                                    lambda x, y, z, t: -lam * u(x, y, z, t))
    lam = 3 * pi**2 * D
    if bc == "dirichlet":
        shape = lambda x, y, z: np.sin(pi * x) * np.sin(pi * y) * np.sin(pi * z)
        part = lambda x, y, z, t: shape(x, y, z) * np.exp(-lam * t)
        return ManufacturedSolution(lambda x, y, z, t: 1.0 + part(x, y, z, t),
                                    lambda x, y, z, t: -lam * part(x, y, z, t),
                                    lambda x, y, z, t: -lam * part(x, y, z, t))
    # zero flux, with a nonzero manufactured source: u = (1 + t)·cos·cos·cos
    shape = lambda x, y, z: np.cos(pi * x) * np.cos(pi * y) * np.cos(pi * z)
    return ManufacturedSolution(lambda x, y, z, t: (1.0 + t) * shape(x, y, z),
                                lambda x, y, z, t: shape(x, y, z),
                                lambda x, y, z, t: -lam * (1.0 + t) * shape(x, y, z))


def _parabolic_steps(n: int, n0: int, T: float, cfl: float) -> tuple[int, float]:
    """Steps and ``dt = T/steps`` with ``dt/h²`` identical on every level."""
    steps0 = max(1, math.ceil(T * n0 * n0 / cfl))
    steps = steps0 * (n // n0) ** 2
    return steps, T / steps


def diffusion_spatial_case(bc: str, stepper: str, ladder=(8, 16, 32, 64), D=1.0, T=0.01, cfl=0.125,
                           norm="L2") -> ConvergenceCase:
    mms = _diffusion_mms(bc, D)

    def level(n):
        grid = GridSpec((n, n, n), (1.0 / n,) * 3)
        h = 1.0 / n
        steps, dt = _parabolic_steps(n, ladder[0], T, cfl / D)
        problem = Diffusion(D0=D)
        problem.forcing = manufactured_forcing(problem, mms, grid)
        vf = VoxelFields(grid)
        vf.add_field("c", lambda x, y, z: mms.u(x, y, z, 0.0))
        run(problem, vf, StepperSpec(stepper, dt, steps, every=steps), _BCS[bc](),
            track_memory=False, diagnostics=False)
        exact = np.broadcast_to(mms.u(*grid.coords(), T), grid.shape)
        return h, error_norm(vf["c"] - exact, grid, norm)

    return ConvergenceCase("diffusion", bc, stepper, "spatial", tuple(ladder), level, 2.0, norm=norm)


def diffusion_flux_case(ladder=(16, 32, 64, 128), D=1.0, q=0.5, T=0.05, cfl=0.25) -> ConvergenceCase:
    """Prescribed nonzero flux on the high x face (explicit Euler only)."""
    pi = np.pi
    u = lambda x, t: 0.5 * q * x * x + np.cos(pi * x) * np.exp(-pi * pi * D * t)
    bc = BoundarySpec(((NeumannZeroFlux(), NeumannFlux(D * q)), (Periodic(), Periodic()), (Periodic(), Periodic())))

    def level(n):
        grid = GridSpec((n, 1, 1), (1.0 / n, 1.0, 1.0))
        h = 1.0 / n
        steps, dt = _parabolic_steps(n, ladder[0], T, cfl / D)
        vf = VoxelFields(grid)
        vf.add_field("c", lambda x, y, z: u(x, 0.0) + 0 * y + 0 * z)
        problem = Diffusion(D0=D, forcing=-D * q)
        run(problem, vf, StepperSpec("euler", dt, steps, every=steps), bc, track_memory=False, diagnostics=False)
        exact = np.broadcast_to(u(grid.coords()[0], T), grid.shape)
        return h, error_norm(vf["c"] - exact, grid)

    return ConvergenceCase("diffusion", "flux", "euler", "spatial", tuple(ladder), level, 2.0)


def smoothed_boundary_spatial_case(ladder=(16, 32, 64, 128), D=1.0, width=0.05) -> ConvergenceCase:
    """RHS accuracy inside a diffuse slab for a concentration varying along it.

    ψ depends on x only and c on y only, so the continuum RHS for ``z = ψc``
    is ``Dψ·∂²c/∂y²``.  The error is measured where ψ > 0.5.
    """

    def level(n):
        grid = GridSpec((n, n, 1), (1.0 / n, 1.0 / n, 1.0))
        x, y, _ = grid.coords()
        psi = 0.5 * (np.tanh((x - 0.25) / width) - np.tanh((x - 0.75) / width)) + 0.0 * y
        c = np.cos(2 * np.pi * y)
        ctx = StencilContext(grid, BoundarySpec.periodic())
        out = rhs_smoothed_boundary(psi * c, psi, SmoothedBoundary(D0=D), ctx)
        exact = -D * (2 * np.pi) ** 2 * psi * c
        return 1.0 / n, float(np.max(np.abs(out - exact)[psi > 0.5]))

    return ConvergenceCase("smoothed_boundary", "periodic", "rhs", "spatial", tuple(ladder), level, 2.0,
                           norm="Linf")


# -- temporal cases -----------------------------------------------------------------


def _temporal_setup(problem_name: str, n: int = 16):
    grid = GridSpec((n, n, n))
    x, y, z = grid.coords()
    k = 2 * np.pi / n
    vf = VoxelFields(grid)
    if problem_name == "allen_cahn":
        problem = AllenCahn(gamma0=1.0, eps=4.0, M=1.0)
        vf.add_field("phi", 0.5 + 0.3 * np.sin(k * x) * np.cos(k * y) + 0.1 * np.sin(2 * k * z))
        T = 2.0
    elif problem_name == "cahn_hilliard":
        problem = CahnHilliard(gamma0=1.0, eps=2.0, D0=1.0)
        vf.add_field("phi", 0.5 + 0.2 * np.sin(k * x) * np.cos(k * y) + 0.05 * np.sin(2 * k * z))
        T = 2.0
    elif problem_name == "gray_scott":
        problem = GrayScott(DA=0.2, DB=0.1, feed=0.04, kill=0.06)
        vf.add_field("A", 1.0 - 0.5 * np.exp(-((x - n / 2) ** 2 + (y - n / 2) ** 2 + (z - n / 2) ** 2) / 8))
        vf.add_field("B", 0.25 * np.exp(-((x - n / 2) ** 2 + (y - n / 2) ** 2 + (z - n / 2) ** 2) / 8))
        T = 4.0
    else:
        raise ValueError(problem_name)
    return problem, vf, T


def temporal_case(problem_name: str, stepper: str, ladder=(8, 16, 32, 64), refine: int = 1024) -> ConvergenceCase:
    """``ladder`` holds step counts over a fixed horizon."""
    bc = BoundarySpec.periodic()
    cache = {}

    def solve(steps):
        problem, vf, T = _temporal_setup(problem_name)
        run(problem, vf, StepperSpec(stepper, T / steps, steps, every=steps), bc,
            track_memory=False, diagnostics=False)
        return vf, T

    def level(steps):
        if "ref" not in cache:
            cache["ref"] = solve(ladder[0] * refine)[0]
        ref = cache["ref"]
        vf, T = solve(steps)
        err = sum(error_norm(vf[k] - ref[k], vf.grid) for k in vf.names)
        return T / steps, err

    return ConvergenceCase(problem_name, "periodic", stepper, "temporal", tuple(ladder), level, 1.0)


#: (problem, bc, stepper) combinations the library declares verified
VERIFIED_COMBINATIONS = (
    ("diffusion", "periodic", "euler"),
    ("diffusion", "periodic", "imex"),
    ("diffusion", "periodic", "etd1"),
    ("diffusion", "dirichlet", "euler"),
    ("diffusion", "dirichlet", "imex"),
    ("diffusion", "dirichlet", "etd1"),
    ("diffusion", "zeroflux", "euler"),
    ("diffusion", "zeroflux", "imex"),
    ("diffusion", "zeroflux", "etd1"),
    ("diffusion", "flux", "euler"),
    ("allen_cahn", "periodic", "euler"),
    ("allen_cahn", "periodic", "imex"),
    ("allen_cahn", "periodic", "etd1"),
    ("cahn_hilliard", "periodic", "imex"),
    ("gray_scott", "periodic", "imex"),
    ("smoothed_boundary", "periodic", "rhs"),
)


def default_suite() -> list[ConvergenceCase]:
    cases = []
    for bc in ("periodic", "dirichlet", "zeroflux"):
        for stepper in ("euler", "imex", "etd1"):
            cases.append(diffusion_spatial_case(bc, stepper))
    cases.append(diffusion_flux_case())
    for stepper in ("euler", "imex", "etd1"):
        cases.append(temporal_case("allen_cahn", stepper))
    cases.append(temporal_case("cahn_hilliard", "imex"))
    cases.append(temporal_case("gray_scott", "imex"))
    cases.append(smoothed_boundary_spatial_case())
    return cases


def run_suite(pattern: str | None = None, cases=None, progress=None) -> list[CaseResult]:
    cases = default_suite() if cases is None else cases
    results = []
    for case in cases:
        if not case.matches(pattern):
            continue
        res = run_case(case)
        if progress is not None:
            progress(res)
        results.append(res)
    return results


# -- dense oracle --------------------------------------------------------------------

DENSE_LIMIT = 4096


def assemble_laplacian(grid: GridSpec, bc: BoundarySpec) -> tuple[np.ndarray, np.ndarray]:
    """Dense FD laplacian ``L`` and boundary vector ``b`` so that ``∇²u ≈ L·u + b``.

    Built directly from the cell-centered ghost rules (Dirichlet ghost
    ``2g − u``, zero-flux ghost ``u``, flux ghost ``u + j·h``), in C order.
    """
    n = grid.n_voxels
    if n > DENSE_LIMIT:
        raise ValueError(f"dense oracle limited to {DENSE_LIMIT} voxels, grid has {n}")
    dims = grid.dims
    L = np.zeros((n, n))
    b = np.zeros(n)
    idx = np.arange(n).reshape(dims)
    for axis in grid.active_axes:
        h2 = grid.spacing[axis] ** 2
        m = dims[axis]
        lo, hi = bc[axis]
        for cell in np.ndindex(*dims):
            i = idx[cell]
            for step, cond in ((-1, lo), (1, hi)):
                j = cell[axis] + step
                L[i, i] -= 1.0 / h2
                if 0 <= j < m:
                    nb = list(cell)
                    nb[axis] = j
                    L[i, idx[tuple(nb)]] += 1.0 / h2
                elif isinstance(cond, Periodic):
                    nb = list(cell)
                    nb[axis] = j % m
                    L[i, idx[tuple(nb)]] += 1.0 / h2
                elif isinstance(cond, Dirichlet):
                    L[i, i] -= 1.0 / h2
                    b[i] += 2.0 * cond.value / h2
                elif isinstance(cond, NeumannFlux):
                    L[i, i] += 1.0 / h2
                    b[i] += cond.value / grid.spacing[axis]
                else:
                    L[i, i] += 1.0 / h2
    return L, b


def dense_oracle_step(u: np.ndarray, gamma0: float, grid: GridSpec, bc: BoundarySpec, dt: float) -> np.ndarray:
    """One implicit-Euler step of ``∂u/∂t = Γ0∇²u`` with an assembled matrix.

    Returned as ``u + (I − dtΓ0L)⁻¹·dt·Γ0·(Lu + b)``, which equals the
    implicit-Euler solution ``(I − dtΓ0L)u' = u + dtΓ0·b``.
    """
    L, b = assemble_laplacian(grid, bc)
    flat = np.asarray(u, dtype=np.float64).reshape(-1)
    A = np.eye(flat.size) - dt * gamma0 * L
    update = np.linalg.solve(A, dt * gamma0 * (L @ flat + b))
    return (flat + update).reshape(grid.dims)
