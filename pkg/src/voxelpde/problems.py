"""PDE catalog: right-hand sides, stabilizers and diagnostics.

Each problem is a dataclass holding its parameters.  The module-level
``rhs_*`` functions take the same dataclass as ``params`` and write into an
optional ``out`` buffer; the problem's :meth:`Problem.rhs` wires them to the
named fields and preallocated work buffers used by the steppers.

Forcing terms ``f(c, t)`` may be a constant, a per-voxel array or a callable
``f(c, t) -> array``; they are always evaluated explicitly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields as dc_fields
from typing import Callable, ClassVar, Mapping, Optional, Sequence, Union

import numpy as np

from .grid import BoundarySpec, NeumannZeroFlux, Periodic
from .spectral import Stabilizer
from .stencils import StencilContext, div_flux, grad_norm, grad_sq, laplacian, normal_laplacian

Forcing = Union[None, float, np.ndarray, Callable[[np.ndarray, float], np.ndarray]]
Coefficient = Union[None, float, np.ndarray, Callable[[np.ndarray], np.ndarray]]


def _buffer(like: np.ndarray, out):
    return np.empty(like.shape, dtype=np.float64) if out is None else out


def add_forcing(out: np.ndarray, forcing: Forcing, c: np.ndarray, t: float, weight=None) -> None:
    if forcing is None:
        return
    value = forcing(c, t) if callable(forcing) else forcing
    if weight is None:
        out += value
    else:
        out += weight * value


def double_well_poly(phi: np.ndarray, out: np.ndarray) -> np.ndarray:
    """``φ(1−φ)(1−2φ)`` in Horner form, written into ``out``."""
    np.multiply(phi, 2.0, out=out)
    out -= 3.0
    out *= phi
    out += 1.0
    out *= phi
    return out


def diffusion_term(D, c: np.ndarray, ctx: StencilContext, out=None) -> np.ndarray:
    """``∇·(D∇c)`` for scalar, per-voxel or ``D(c)`` coefficients."""
    if D is None or np.isscalar(D):
        D = 1.0 if D is None else float(D)
        if D < 0:
            raise ValueError("diffusivity must be ≥ 0")
        out = laplacian(c, ctx, out)
        out *= D
        return out
    if callable(D):
        def law(v, o):
            np.copyto(o, D(v))
        return div_flux(c, c, ctx, out, gamma_fn=law)
    D = np.asarray(D)
    if np.min(D) < 0:
        raise ValueError("diffusivity must be ≥ 0")
    return div_flux(D, c, ctx, out)


def compute_mass(u: np.ndarray, ctx: StencilContext) -> float:
    return float(np.sum(u, dtype=np.float64)) * ctx.grid.cell_volume


# -- problem base -------------------------------------------------------------


@dataclass
class Problem:
    name: ClassVar[str] = "problem"
    n_work: ClassVar[int] = 0

    @property
    def evolved(self) -> tuple[str, ...]:
        raise NotImplementedError

    @property
    def auxiliary(self) -> tuple[str, ...]:
        return ()

    @property
    def conserved(self) -> tuple[str, ...]:
        return ()

    def rhs(self, state: Mapping[str, np.ndarray], t: float, ctx: StencilContext,
            out: Mapping[str, np.ndarray], work: Sequence[np.ndarray]) -> None:
        raise NotImplementedError

    def stabilizers(self) -> Optional[dict[str, Stabilizer]]:
        return None

    def energy(self, state, ctx, work=None) -> Optional[float]:
        return None

    def evaluate(self, state, ctx, t=0.0) -> dict[str, np.ndarray]:
        """Allocate-and-return convenience wrapper around :meth:`rhs`."""
        like = state[self.evolved[0]]
        out = {k: np.empty_like(like, dtype=np.float64) for k in self.evolved}
        work = [np.empty_like(like, dtype=np.float64) for _ in range(self.n_work)]
        self.rhs(state, t, ctx, out, work)
        return out

    def param_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in dc_fields(self)}


# -- reaction-diffusion -------------------------------------------------------


@dataclass
class Diffusion(Problem):
    """``∂c/∂t = ∇·(D∇c) + f``; ``D`` defaults to the bulk scale ``D0``."""

    name: ClassVar[str] = "diffusion"

    D0: float = 1.0
    D: Coefficient = None
    forcing: Forcing = None
    field: str = "c"

    @property
    def evolved(self):
        return (self.field,)

    @property
    def conserved(self):
        return (self.field,) if self.forcing is None else ()

    def coefficient(self):
        return self.D0 if self.D is None else self.D

    def rhs(self, state, t, ctx, out, work):
        rhs_diffusion(state[self.field], self, ctx, t, out=out[self.field])

    def stabilizers(self):
        return {self.field: Stabilizer(diffusive=self.D0)}


def rhs_diffusion(c, params: Diffusion, ctx, t=0.0, out=None):
    out = diffusion_term(params.coefficient(), c, ctx, out)
    add_forcing(out, params.forcing, c, t)
    return out


@dataclass
class MuDiffusion(Problem):
    """``∂c/∂t = ∇·(M∇μ(c)) + f`` with a user chemical-potential law.

    ``dmu_dc`` (a representative slope of μ) enables spectral stepping with
    stabilizer ``M0·dmu_dc·k²``; leave it ``None`` to restrict to Euler.
    """

    name: ClassVar[str] = "mu_diffusion"
    n_work: ClassVar[int] = 1

    mu: Callable[[np.ndarray], np.ndarray] = None
    M: Coefficient = 1.0
    dmu_dc: Optional[float] = None
    M0: float = 1.0
    forcing: Forcing = None
    field: str = "c"

    def __post_init__(self):
        if self.mu is None:
            raise ValueError("MuDiffusion needs a chemical potential law mu(c)")

    @property
    def evolved(self):
        return (self.field,)

    @property
    def conserved(self):
        return (self.field,) if self.forcing is None else ()

    def rhs(self, state, t, ctx, out, work):
        rhs_mu_diffusion(state[self.field], self, ctx, t, out=out[self.field], work=work[0])

    def stabilizers(self):
        if self.dmu_dc is None:
            return None
        return {self.field: Stabilizer(diffusive=self.M0 * self.dmu_dc)}


def rhs_mu_diffusion(c, params: MuDiffusion, ctx, t=0.0, out=None, work=None):
    mu = _buffer(c, work)
    np.copyto(mu, params.mu(c))
    M = params.M
    if callable(M):
        def law(v, o):
            np.copyto(o, M(v))
        out = div_flux(c, mu, ctx, _buffer(c, out), gamma_fn=law)
    else:
        out = div_flux(M, mu, ctx, _buffer(c, out))
    add_forcing(out, params.forcing, c, t)
    return out


@dataclass
class GrayScott(Problem):
    name: ClassVar[str] = "gray_scott"
    n_work: ClassVar[int] = 1

    DA: float = 0.16
    DB: float = 0.08
    feed: float = 0.04
    kill: float = 0.06
    fields: tuple[str, str] = ("A", "B")

    @property
    def evolved(self):
        return tuple(self.fields)

    def rhs(self, state, t, ctx, out, work):
        a, b = self.fields
        rhs_gray_scott(state[a], state[b], self, ctx, out=(out[a], out[b]), work=work[0])

    def stabilizers(self):
        a, b = self.fields
        return {a: Stabilizer(diffusive=self.DA), b: Stabilizer(diffusive=self.DB)}


def rhs_gray_scott(cA, cB, params: GrayScott, ctx, out=None, work=None):
    dA, dB = (None, None) if out is None else out
    w = _buffer(cA, work)
    dA = laplacian(cA, ctx, dA)
    dA *= params.DA
    dB = laplacian(cB, ctx, dB)
    dB *= params.DB
    np.multiply(cB, cB, out=w)
    w *= cA
    dA -= w
    dB += w
    np.subtract(1.0, cA, out=w)
    w *= params.feed
    dA += w
    np.multiply(cB, params.kill, out=w)
    dB -= w
    return dA, dB


# -- phase field --------------------------------------------------------------


@dataclass
class CahnHilliard(Problem):
    """Conserved phase field with mobility ``D0·clamp(φ(1−φ), 0, ¼)``.

    ``M0`` is the mobility used by the biharmonic stabilizer
    ``2·ε·γ0·M0·k⁴``; by default the largest value the clamped mobility
    can take, ``D0/4``.
    """

    name: ClassVar[str] = "cahn_hilliard"
    n_work: ClassVar[int] = 1

    gamma0: float = 1.0
    eps: float = 1.0
    D0: float = 1.0
    M0: Optional[float] = None
    forcing: Forcing = None
    field: str = "phi"

    def __post_init__(self):
        for key in ("gamma0", "eps", "D0"):
            if not getattr(self, key) > 0:
                raise ValueError(f"{key} must be > 0")

    @property
    def evolved(self):
        return (self.field,)

    @property
    def conserved(self):
        return (self.field,) if self.forcing is None else ()

    @property
    def stabilizer_mobility(self) -> float:
        return self.D0 / 4.0 if self.M0 is None else float(self.M0)

    def mobility_law(self):
        D0 = self.D0

        def law(v, o):
            np.multiply(v, v, out=o)
            np.subtract(v, o, out=o)
            np.clip(o, 0.0, 0.25, out=o)
            o *= D0

        return law

    def rhs(self, state, t, ctx, out, work):
        rhs_cahn_hilliard(state[self.field], self, ctx, t, out=out[self.field], work=work[0])

    def stabilizers(self):
        return {self.field: Stabilizer(biharmonic=2.0 * self.eps * self.gamma0 * self.stabilizer_mobility)}

    def energy(self, state, ctx, work=None):
        return compute_energy(state[self.field], self, ctx, work)


def chemical_potential(phi, params, ctx, out=None, work=None):
    """``μ = γ0·g(φ) − 2·γ0·ε·∇²φ``.  ``work`` holds the polynomial term."""
    out = laplacian(phi, ctx, out)
    out *= -2.0 * params.gamma0 * params.eps
    w = double_well_poly(phi, _buffer(phi, work))
    w *= 18.0 * params.gamma0 / params.eps
    out += w
    return out


def rhs_cahn_hilliard(phi, params: CahnHilliard, ctx, t=0.0, out=None, work=None):
    out = _buffer(phi, out)
    mu = chemical_potential(phi, params, ctx, out=_buffer(phi, work), work=out)
    div_flux(phi, mu, ctx, out, gamma_fn=params.mobility_law())
    add_forcing(out, params.forcing, phi, t)
    return out


@dataclass
class AllenCahn(Problem):
    """Non-conserved relaxation with kinetic coefficient ``M/ε``."""

    name: ClassVar[str] = "allen_cahn"
    n_work: ClassVar[int] = 1

    gamma0: float = 1.0
    eps: float = 1.0
    M: float = 1.0
    field: str = "phi"

    def __post_init__(self):
        for key in ("gamma0", "eps", "M"):
            if not getattr(self, key) > 0:
                raise ValueError(f"{key} must be > 0")

    @property
    def evolved(self):
        return (self.field,)

    def rhs(self, state, t, ctx, out, work):
        rhs_allen_cahn(state[self.field], self, ctx, out=out[self.field], work=work[0])

    def stabilizers(self):
        return {self.field: Stabilizer(diffusive=2.0 * self.M * self.gamma0)}

    def energy(self, state, ctx, work=None):
        return compute_energy(state[self.field], self, ctx, work)


def rhs_allen_cahn(phi, params: AllenCahn, ctx, out=None, work=None):
    g0, eps = params.gamma0, params.eps
    out = laplacian(phi, ctx, out)
    out *= 2.0 * g0 * eps
    w = double_well_poly(phi, _buffer(phi, work))
    w *= 18.0 * g0 / eps
    out -= w
    out *= params.M / eps
    return out


@dataclass
class AllenCahnNoCurvature(AllenCahn):
    """Allen–Cahn with the curvature-driven part of ∇²φ removed."""

    name: ClassVar[str] = "allen_cahn_nocurv"

    eta: Optional[float] = None

    def rhs(self, state, t, ctx, out, work):
        rhs_allen_cahn_nocurv(state[self.field], self, ctx, out=out[self.field], work=work[0])


def rhs_allen_cahn_nocurv(phi, params: AllenCahnNoCurvature, ctx, out=None, work=None):
    g0, eps = params.gamma0, params.eps
    out = normal_laplacian(phi, ctx, getattr(params, "eta", None), out=out)
    out *= 2.0
    w = double_well_poly(phi, _buffer(phi, work))
    w *= 18.0 / (eps * eps)
    out -= w
    out *= params.M * g0
    return out


@dataclass
class MultiPhase(Problem):
    """N coupled phases relaxing through pairwise interactions.

    Only locally present phases interact; a phase is present at a voxel when
    it exceeds ``threshold`` there or at one of its six neighbors.
    """

    name: ClassVar[str] = "multiphase"

    mobility: np.ndarray = None
    gamma0: float = 1.0
    eps: float = 1.0
    threshold: float = 1e-6
    fields: tuple[str, ...] = ()

    def __post_init__(self):
        M = np.asarray(self.mobility, dtype=np.float64)
        if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] < 2:
            raise ValueError("mobility must be an N×N matrix with N ≥ 2")
        if not np.array_equal(M, M.T):
            raise ValueError("mobility matrix must be symmetric")
        if np.any(M < 0):
            raise ValueError("mobilities must be ≥ 0")
        self.mobility = M
        if not self.fields:
            self.fields = tuple(f"phi{i}" for i in range(M.shape[0]))
        if len(self.fields) != M.shape[0]:
            raise ValueError("one field name per phase required")
        self.fields = tuple(self.fields)

    @property
    def n_phases(self) -> int:
        return self.mobility.shape[0]

    @property
    def evolved(self):
        return self.fields

    @property
    def n_work(self):  # type: ignore[override]
        return self.n_phases + 1

    def rhs(self, state, t, ctx, out, work):
        phis = [state[k] for k in self.fields]
        rhs_multiphase(phis, self, ctx, out=[out[k] for k in self.fields], work=work)

    def stabilizers(self):
        # one shared symbol keeps Σφ invariant under the spectral update
        n = self.n_phases
        a = 2.0 * self.gamma0 * float(self.mobility.sum(axis=1).max()) / n
        return {k: Stabilizer(diffusive=a) for k in self.fields}


def local_presence(phi: np.ndarray, threshold: float, ctx: StencilContext) -> np.ndarray:
    """``φ > threshold`` at the voxel or any face neighbor."""
    peak = phi.copy()
    for axis in ctx.grid.active_axes:
        periodic = isinstance(ctx.bc[axis][0], Periodic)
        for shift in (1, -1):
            if periodic:
                np.maximum(peak, np.roll(phi, shift, axis=axis), out=peak)
            else:
                src = [slice(None)] * 3
                dst = [slice(None)] * 3
                if shift == 1:
                    src[axis], dst[axis] = slice(0, -1), slice(1, None)
                else:
                    src[axis], dst[axis] = slice(1, None), slice(0, -1)
                np.maximum(peak[tuple(dst)], phi[tuple(src)], out=peak[tuple(dst)])
    return peak > threshold


def rhs_multiphase(phis, params: MultiPhase, ctx, out=None, work=None):
    n = len(phis)
    if n != params.n_phases:
        raise ValueError("number of fields does not match the mobility matrix")
    like = phis[0]
    out = [np.empty_like(like, dtype=np.float64) for _ in range(n)] if out is None else out
    work = [np.empty_like(like, dtype=np.float64) for _ in range(n + 1)] if work is None else work
    mus = work[:n]
    tmp = work[n]
    for i, p in enumerate(phis):
        chemical_potential(p, params, ctx, out=mus[i], work=tmp)
    present = [local_presence(p, params.threshold, ctx) for p in phis]
    n_local = np.zeros(like.shape, dtype=np.float64)
    for m in present:
        n_local += m
    np.maximum(n_local, 1.0, out=n_local)
    for o in out:
        o[...] = 0.0
    M = params.mobility
    for a in range(n):
        for b in range(a + 1, n):
            if M[a, b] == 0:
                continue
            pair = present[a] & present[b]
            np.subtract(mus[a], mus[b], out=tmp)
            tmp *= pair
            tmp *= M[a, b] / params.eps
            tmp /= n_local
            out[a] -= tmp
            out[b] += tmp
    return out


# -- smoothed boundary ---------------------------------------------------------


@dataclass
class SmoothedBoundary(Problem):
    """Diffusion confined by a static indicator ψ, evolved for ``z = ψ·c``.

    ``j_N`` is the inward normal flux through the diffuse boundary; it may be
    a constant, an array, or a callable ``j_N(t)``.
    """

    name: ClassVar[str] = "smoothed_boundary"
    n_work: ClassVar[int] = 2

    D0: float = 1.0
    D: Coefficient = None
    j_N: Union[float, np.ndarray, Callable[[float], object]] = 0.0
    psi_min: float = 1e-6
    forcing: Forcing = None
    field: str = "z"
    indicator: str = "psi"

    @property
    def evolved(self):
        return (self.field,)

    @property
    def auxiliary(self):
        return (self.indicator,)

    @property
    def conserved(self):
        j = self.j_N
        closed = not callable(j) and np.all(np.asarray(j) == 0)
        return (self.field,) if closed and self.forcing is None else ()

    def coefficient(self):
        return self.D0 if self.D is None else self.D

    def rhs(self, state, t, ctx, out, work):
        rhs_smoothed_boundary(state[self.field], state[self.indicator], self, ctx, t,
                              out=out[self.field], work=work)

    def stabilizers(self):
        return {self.field: Stabilizer(diffusive=self.D0)}


def indicator_context(ctx: StencilContext) -> StencilContext:
    """Context for ψ: periodic axes stay periodic, other faces zero-flux."""
    axes = tuple(
        pair if isinstance(pair[0], Periodic) else (NeumannZeroFlux(), NeumannZeroFlux())
        for pair in ctx.bc.axes
    )
    return StencilContext(ctx.grid, BoundarySpec(axes), ctx.chunks)


def rhs_smoothed_boundary(z, psi, params: SmoothedBoundary, ctx, t=0.0, out=None, work=None):
    if np.min(psi) < 0 or np.max(psi) > 1:
        raise ValueError("indicator psi must lie in [0, 1]")
    work = [None, None] if work is None else work
    out = diffusion_term(params.coefficient(), z, ctx, out)
    pctx = indicator_context(ctx)
    ratio = _buffer(z, work[0])
    np.maximum(psi, params.psi_min, out=ratio)
    np.divide(z, ratio, out=ratio)
    D = params.coefficient()
    if callable(D):
        ratio *= D(ratio)
    else:
        ratio *= D
    out -= div_flux(ratio, psi, pctx, _buffer(z, work[1]), check=False)
    j = params.j_N(t) if callable(params.j_N) else params.j_N
    if np.any(np.asarray(j) != 0):
        out += grad_norm(psi, pctx) * j
    if params.forcing is not None:
        c = z / np.maximum(psi, params.psi_min)
        add_forcing(out, params.forcing, c, t, weight=psi)
    return out


# -- diagnostics ----------------------------------------------------------------


def compute_energy(phi, params, ctx, work=None) -> float:
    """``γ0 ∫ ε|∇φ|² + (9/ε)φ²(1−φ)² dV`` by midpoint quadrature."""
    g0, eps = params.gamma0, params.eps
    gsq = grad_sq(phi, ctx, _buffer(phi, work))
    gradient = float(np.sum(gsq))
    well = 0.0
    step = max(1, phi.shape[0] // 4)
    for i in range(0, phi.shape[0], step):
        blk = phi[i : i + step]
        w = blk * (1.0 - blk)
        well += float(np.sum(w * w))
    return g0 * (eps * gradient + (9.0 / eps) * well) * ctx.grid.cell_volume


PROBLEMS: dict[str, type[Problem]] = {
    cls.name: cls
    for cls in (Diffusion, MuDiffusion, GrayScott, CahnHilliard, AllenCahn,
                AllenCahnNoCurvature, MultiPhase, SmoothedBoundary)
}


def make_problem(name: str, **params) -> Problem:
    try:
        cls = PROBLEMS[name]
    except KeyError:
        raise ValueError(f"unknown problem {name!r}; choose from {sorted(PROBLEMS)}") from None
    return cls(**params)
