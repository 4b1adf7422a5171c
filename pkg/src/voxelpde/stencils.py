"""Second-order finite-difference operators on cell-centered voxel fields.

Face differences are formed block-by-block into buffers owned by the
:class:`StencilContext`, and results go into caller-provided ``out`` arrays,
so an operator call allocates no field-sized temporaries.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from . import grid as _grid
from .grid import (
    BoundarySpec,
    Dirichlet,
    GridSpec,
    NeumannFlux,
    Periodic,
    ghost_plane,
    pad_axis,
)

#: pointwise coefficient law ``fn(values, out)`` writing into ``out``
CoefficientFn = Callable[[np.ndarray, np.ndarray], None]


class StencilContext:
    """Grid + boundary conditions + reusable scratch for the operators."""

    def __init__(self, grid: GridSpec, bc: BoundarySpec, chunks: int = 4):
        self.grid = grid
        self.bc = bc
        self.chunks = max(1, int(chunks))
        self._scratch: dict[str, np.ndarray] = {}

    def scratch(self, key: str, shape) -> np.ndarray:
        size = int(np.prod(shape))
        buf = self._scratch.get(key)
        if buf is None or buf.size < size:
            buf = np.empty(max(size, self._block_capacity()), dtype=np.float64)
            self._scratch[key] = buf
        return buf[:size].reshape(shape)

    def _block_capacity(self) -> int:
        n = self.grid.dims
        return int(np.prod(n) // self.chunks) + max(n[0] * n[1], n[1] * n[2], n[0] * n[2])

    @property
    def scratch_bytes(self) -> int:
        return sum(b.nbytes for b in self._scratch.values())

    @property
    def default_eta(self) -> float:
        return 1e-9 / min(self.grid.spacing)


def _blocks(shape, axis: int, offset: int, chunks: int):
    """Yield ``(lo, hi, block_shape)`` index pairs ``i`` / ``i+offset`` along ``axis``.

    The pairs cover every valid ``i``, split into roughly ``chunks`` slabs
    along the largest other axis.
    """
    n = shape[axis]
    if n <= offset:
        return
    others = [a for a in range(3) if a != axis]
    split = max(others, key=lambda a: shape[a])
    step = max(1, math.ceil(shape[split] / chunks))
    for j0 in range(0, shape[split], step):
        j1 = min(j0 + step, shape[split])
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[axis] = slice(0, n - offset)
        hi[axis] = slice(offset, n)
        lo[split] = hi[split] = slice(j0, j1)
        bshape = list(shape)
        bshape[axis] = n - offset
        bshape[split] = j1 - j0
        yield tuple(lo), tuple(hi), tuple(bshape)


def _plane(axis: int, index: int):
    sl = [slice(None)] * 3
    sl[axis] = slice(index, index + 1)
    return tuple(sl)


def _prepare_out(u: np.ndarray, out):
    if out is None:
        return np.zeros_like(u, dtype=np.float64)
    out[...] = 0.0
    return out


def _face_coefficient(gamma, gamma_fn, lo, hi, ctx, bshape):
    g = ctx.scratch("gamma_face", bshape)
    if gamma_fn is None:
        np.add(gamma[lo], gamma[hi], out=g)
    else:
        tmp = ctx.scratch("gamma_tmp", bshape)
        gamma_fn(gamma[lo], g)
        gamma_fn(gamma[hi], tmp)
        g += tmp
    g *= 0.5
    return g


def _cell_coefficient(gamma, gamma_fn, sl):
    if gamma_fn is None:
        return gamma[sl]
    val = np.empty_like(gamma[sl])
    gamma_fn(gamma[sl], val)
    return val


def div_flux(
    gamma,
    u: np.ndarray,
    ctx: StencilContext,
    out: np.ndarray | None = None,
    gamma_fn: CoefficientFn | None = None,
    check: bool = True,
) -> np.ndarray:
    """Conservative ``∇·(Γ∇u)`` with arithmetic face means of Γ.

    ``gamma`` is a cell field, a scalar, or ``None`` (meaning Γ ≡ 1, the plain
    laplacian).  With ``gamma_fn`` the face coefficient is the mean of
    ``gamma_fn(gamma)`` over the two adjacent cells, which lets a mobility
    law such as ``D0·φ(1−φ)`` be applied without storing it.
    Prescribed-flux faces inject the flux value directly.
    """
    g = ctx.grid
    if gamma is not None and np.isscalar(gamma):
        gamma = np.full(u.shape, float(gamma))
    if check and gamma is not None and gamma_fn is None and np.min(gamma) < 0:
        raise ValueError("div_flux: gamma must be ≥ 0")
    out = _prepare_out(u, out)
    for axis in g.active_axes:
        n = u.shape[axis]
        h = g.spacing[axis]
        inv_h2 = 1.0 / (h * h)
        for lo, hi, bshape in _blocks(u.shape, axis, 1, ctx.chunks):
            flux = ctx.scratch("flux", bshape)
            np.subtract(u[hi], u[lo], out=flux)
            if gamma is not None:
                flux *= _face_coefficient(gamma, gamma_fn, lo, hi, ctx, bshape)
            flux *= inv_h2
            out[lo] += flux
            out[hi] -= flux
        first, last = _plane(axis, 0), _plane(axis, n - 1)
        lo_bc, hi_bc = ctx.bc[axis]
        if isinstance(lo_bc, Periodic):
            flux = u[first] - u[last]
            if gamma is not None:
                flux *= _face_coefficient(gamma, gamma_fn, last, first, ctx, flux.shape)
            flux *= inv_h2
            out[last] += flux
            out[first] -= flux
            continue
        for side, cond, cell in ((0, lo_bc, first), (1, hi_bc, last)):
            if isinstance(cond, Dirichlet):
                ghost = _grid.dirichlet_ghost(u[cell], cond.value)
                flux = (ghost - u[cell]) if side else (u[cell] - ghost)
                if gamma is not None:
                    flux *= _cell_coefficient(gamma, gamma_fn, cell)
                flux *= inv_h2
                if side:
                    out[cell] += flux
                else:
                    out[cell] -= flux
            elif isinstance(cond, NeumannFlux) and cond.value != 0.0:
                out[cell] += cond.value / h
    return out


def laplacian(u: np.ndarray, ctx: StencilContext, out: np.ndarray | None = None) -> np.ndarray:
    """7-point laplacian; identical bit-for-bit to ``div_flux(1, u)``."""
    return div_flux(None, u, ctx, out)


def grad_sq(u: np.ndarray, ctx: StencilContext, out: np.ndarray | None = None) -> np.ndarray:
    """``|∇u|²`` from central differences, boundary cells via ghost values."""
    g = ctx.grid
    out = _prepare_out(u, out)
    for axis in g.active_axes:
        n = u.shape[axis]
        h = g.spacing[axis]
        scale = 1.0 / (2.0 * h)
        for lo, hi, bshape in _blocks(u.shape, axis, 2, ctx.chunks):
            d = ctx.scratch("flux", bshape)
            np.subtract(u[hi], u[lo], out=d)
            d *= scale
            d *= d
            mid = list(lo)
            mid[axis] = slice(1, n - 1)
            out[tuple(mid)] += d
        lo_bc, hi_bc = ctx.bc[axis]
        ghost_lo = ghost_plane(u, axis, 0, lo_bc, h)
        ghost_hi = ghost_plane(u, axis, 1, hi_bc, h)
        nxt = u[_plane(axis, 1)]
        prv = u[_plane(axis, n - 2)]
        out[_plane(axis, 0)] += ((nxt - ghost_lo) * scale) ** 2
        out[_plane(axis, n - 1)] += ((ghost_hi - prv) * scale) ** 2
    return out


def grad_norm(u: np.ndarray, ctx: StencilContext, out: np.ndarray | None = None) -> np.ndarray:
    out = grad_sq(u, ctx, out)
    np.sqrt(out, out=out)
    return out


def central_diff(u: np.ndarray, axis: int, ctx: StencilContext) -> np.ndarray:
    g = ctx.grid
    if u.shape[axis] == 1:
        return np.zeros_like(u)
    p = pad_axis(u, axis, ctx.bc, g)
    n = u.shape[axis]
    hi = [slice(None)] * 3
    lo = [slice(None)] * 3
    hi[axis] = slice(2, n + 2)
    lo[axis] = slice(0, n)
    return (p[tuple(hi)] - p[tuple(lo)]) / (2.0 * g.spacing[axis])


def normal_laplacian(
    phi: np.ndarray,
    ctx: StencilContext,
    eta: float | None = None,
    out: np.ndarray | None = None,
) -> np.ndarray:
    """Normal part of the laplacian, ``∇|∇φ| · ∇φ/|∇φ|``.

    ``|∇φ|`` is evaluated on cell faces (normal difference across the face,
    transverse central differences averaged onto it) and differenced back to
    the cells, so a profile varying along one axis only reproduces the
    compact 3-point second derivative.  The cell normal uses central
    differences with ``max(|∇φ|, eta)`` in the denominator.
    """
    g = ctx.grid
    bc = ctx.bc
    eta = ctx.default_eta if eta is None else float(eta)
    if eta <= 0:
        raise ValueError("eta must be > 0")
    active = g.active_axes
    cdiff = {a: central_diff(phi, a, ctx) for a in active}
    numer = np.zeros_like(phi, dtype=np.float64)
    for a in active:
        h = g.spacing[a]
        p = pad_axis(phi, a, bc, g)
        dn = np.diff(p, axis=a) / h
        mag = dn * dn
        for b in active:
            if b == a:
                continue
            cb = pad_axis(cdiff[b], a, bc, g, homogeneous=True)
            sl0 = [slice(None)] * 3
            sl1 = [slice(None)] * 3
            sl0[a] = slice(0, -1)
            sl1[a] = slice(1, None)
            avg = 0.5 * (cb[tuple(sl0)] + cb[tuple(sl1)])
            mag += avg * avg
        np.sqrt(mag, out=mag)
        numer += (np.diff(mag, axis=a) / h) * cdiff[a]
    norm = np.zeros_like(numer)
    for a in active:
        norm += cdiff[a] ** 2
    np.sqrt(norm, out=norm)
    np.maximum(norm, eta, out=norm)
    if out is None:
        out = numer
    else:
        out[...] = numer
    out /= norm
    return out
