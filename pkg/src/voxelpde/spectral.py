"""Boundary-matched fast transforms, wavenumbers and stabilizing symbols.

Periodic axes use a real-to-complex DFT (the last periodic axis is halved),
Dirichlet pairs a DST-II and zero-flux pairs a DCT-II.  On the cell-centered
grid these diagonalize the 3-point second difference with homogeneous
ghost rules, which is what a timestep update satisfies.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft

from .grid import BoundarySpec, GridSpec

WAVENUMBER_MODES = ("modified", "continuous")


class TransformPlan:
    """Axis-separable forward/inverse transform for one grid and BC set.

    ``norm`` follows :mod:`scipy.fft`: ``"ortho"`` (default) makes every
    axis transform unitary; with ``"backward"`` the DFT mode 0 of a field
    holds ``N · mean``.
    """

    def __init__(self, grid: GridSpec, bc: BoundarySpec, norm: str = "ortho", workers: int | None = None):
        self.grid = grid
        self.bc = bc
        self.norm = norm
        self.workers = workers
        self.kinds = {}
        for a in grid.active_axes:
            self.kinds[a] = bc.transform_kind(a)
        self.dft_axes = tuple(a for a, k in self.kinds.items() if k == "dft")
        self.dst_axes = tuple(a for a, k in self.kinds.items() if k == "dst")
        self.dct_axes = tuple(a for a, k in self.kinds.items() if k == "dct")
        shape = list(grid.dims)
        if self.dft_axes:
            shape[self.dft_axes[-1]] = grid.dims[self.dft_axes[-1]] // 2 + 1
        self.mode_shape = tuple(shape)
        self.complex = bool(self.dft_axes)

    def _check(self, arr, shape):
        if tuple(arr.shape) != tuple(shape):
            raise ValueError(f"shape mismatch: got {arr.shape}, plan expects {tuple(shape)}")

    def forward(self, u: np.ndarray) -> np.ndarray:
        self._check(u, self.grid.dims)
        x = u
        kw = dict(norm=self.norm, workers=self.workers)
        if self.dst_axes:
            x = sfft.dstn(x, type=2, axes=self.dst_axes, **kw)
        if self.dct_axes:
            x = sfft.dctn(x, type=2, axes=self.dct_axes, overwrite_x=x is not u, **kw)
        if self.dft_axes:
            x = sfft.rfftn(x, axes=self.dft_axes, overwrite_x=x is not u, **kw)
        elif x is u:
            x = np.array(u, dtype=np.float64)
        return x

    def inverse(self, c: np.ndarray, overwrite: bool = False) -> np.ndarray:
        self._check(c, self.mode_shape)
        x = c
        kw = dict(norm=self.norm, workers=self.workers)
        if self.dft_axes:
            s = [self.grid.dims[a] for a in self.dft_axes]
            x = sfft.irfftn(x, s=s, axes=self.dft_axes, overwrite_x=overwrite, **kw)
            overwrite = True
        if self.dct_axes:
            x = sfft.idctn(x, type=2, axes=self.dct_axes, overwrite_x=overwrite, **kw)
            overwrite = True
        if self.dst_axes:
            x = sfft.idstn(x, type=2, axes=self.dst_axes, overwrite_x=overwrite, **kw)
        if x is c:
            x = np.array(c, dtype=np.float64)
        return x

    def coefficient_norm_sq(self, c: np.ndarray) -> float:
        """``Σ|c|²`` over the full (unhalved) spectrum; equals ``‖u‖²`` for ``norm="ortho"``."""
        w = np.abs(c) ** 2
        if self.dft_axes:
            a = self.dft_axes[-1]
            n = self.grid.dims[a]
            weights = np.full(self.mode_shape[a], 2.0)
            weights[0] = 1.0
            if n % 2 == 0:
                weights[-1] = 1.0
            shape = [1, 1, 1]
            shape[a] = -1
            w = w * weights.reshape(shape)
        return float(w.sum())


def _axis_eigen(n: int, h: float, kind: str, mode: str, halved: bool) -> np.ndarray:
    if mode not in WAVENUMBER_MODES:
        raise ValueError(f"wavenumber mode must be one of {WAVENUMBER_MODES}")
    L = n * h
    if kind == "dft":
        m = np.arange(n // 2 + 1) if halved else np.fft.fftfreq(n) * n
        theta = 2.0 * np.pi * m / n
        k = 2.0 * np.pi * m / L
    elif kind == "dst":
        m = np.arange(1, n + 1)
        theta = np.pi * m / n
        k = np.pi * m / L
    else:
        m = np.arange(n)
        theta = np.pi * m / n
        k = np.pi * m / L
    if mode == "modified":
        return 2.0 * (1.0 - np.cos(theta)) / (h * h)
    return k * k


def wavenumbers_sq(grid: GridSpec, bc: BoundarySpec, mode: str = "modified", plan: TransformPlan | None = None) -> np.ndarray:
    """``k²`` on the plan's mode layout, summed over axes (always ≥ 0)."""
    plan = plan or TransformPlan(grid, bc)
    k2 = np.zeros(plan.mode_shape)
    last_dft = plan.dft_axes[-1] if plan.dft_axes else None
    for a, kind in plan.kinds.items():
        lam = _axis_eigen(grid.dims[a], grid.spacing[a], kind, mode, halved=(a == last_dft))
        shape = [1, 1, 1]
        shape[a] = -1
        k2 = k2 + lam.reshape(shape)
    return k2


@dataclass(frozen=True)
class Stabilizer:
    """Constant-coefficient linear operator ``S = −diffusive·k² − biharmonic·k⁴``."""

    diffusive: float = 0.0
    biharmonic: float = 0.0

    def __post_init__(self):
        if self.diffusive < 0 or self.biharmonic < 0:
            raise ValueError("stabilizer coefficients must be ≥ 0 (dissipative)")

    def __call__(self, k2):
        return -self.diffusive * k2 - self.biharmonic * k2 * k2


@dataclass
class SpectralSymbol:
    s: np.ndarray
    mode: str = "modified"

    def __post_init__(self):
        if np.any(self.s > 0):
            raise ValueError("symbol must be ≤ 0 for every mode")


def build_symbol(problem, grid: GridSpec, bc: BoundarySpec, mode: str = "modified", plan=None) -> dict[str, SpectralSymbol]:
    """Symbol per evolved field of ``problem`` (its declared stabilizers)."""
    stabs = problem.stabilizers()
    if stabs is None:
        raise ValueError(
            f"problem {problem.name!r} declares no spectral symbol; use the explicit Euler stepper"
        )
    k2 = wavenumbers_sq(grid, bc, mode, plan)
    return {name: SpectralSymbol(stab(k2), mode) for name, stab in stabs.items()}


def imex_prefactor(s: np.ndarray, dt: float) -> np.ndarray:
    return dt / (1.0 - dt * s)


def phi1(z: np.ndarray) -> np.ndarray:
    """``(eᶻ − 1)/z`` with a series branch near 0."""
    z = np.asarray(z, dtype=np.float64)
    small = np.abs(z) < 1e-4
    out = np.empty_like(z)
    zb = z[~small]
    out[~small] = np.expm1(zb) / zb
    zs = z[small]
    out[small] = 1.0 + zs * (0.5 + zs * (1.0 / 6.0 + zs / 24.0))
    return out


def etd1_prefactor(s: np.ndarray, dt: float) -> np.ndarray:
    return dt * phi1(dt * s)
