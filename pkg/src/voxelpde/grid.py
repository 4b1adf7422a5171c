"""Voxel grid data model and boundary-condition ghost handling.

Arrays are stored with shape ``(nx, ny, nz)``; axis 0 is x.  The grid is
cell-centered: the first cell center sits at ``origin + h/2`` and boundary
conditions live on the cell faces.  An axis with a single cell is inactive
(no derivatives are taken along it).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence, Union

import numpy as np

AXIS_NAMES = ("x", "y", "z")


@dataclass(frozen=True)
class GridSpec:
    dims: tuple[int, int, int]
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        dims = tuple(int(n) for n in self.dims)
        spacing = tuple(float(h) for h in self.spacing)
        origin = tuple(float(o) for o in self.origin)
        if len(dims) != 3 or len(spacing) != 3 or len(origin) != 3:
            raise ValueError("dims, spacing and origin need three entries")
        if any(n < 1 for n in dims):
            raise ValueError(f"dims must be ≥ 2 (1 marks an inactive axis), got {dims}")
        if not all(np.isfinite(h) and h > 0 for h in spacing):
            raise ValueError(f"spacing must be > 0, got {spacing}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", origin)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.dims

    @property
    def n_voxels(self) -> int:
        return int(np.prod(self.dims))

    @property
    def extent(self) -> tuple[float, float, float]:
        return tuple(n * h for n, h in zip(self.dims, self.spacing))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def active_axes(self) -> tuple[int, ...]:
        return tuple(a for a, n in enumerate(self.dims) if n > 1)

    def centers(self, axis: int) -> np.ndarray:
        n, h, o = self.dims[axis], self.spacing[axis], self.origin[axis]
        return o + h * (np.arange(n) + 0.5)

    def coords(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Broadcastable cell-center coordinate arrays (sparse meshgrid)."""
        return tuple(np.meshgrid(*(self.centers(a) for a in range(3)), indexing="ij", sparse=True))


# -- boundary conditions ----------------------------------------------------


@dataclass(frozen=True)
class Periodic:
    pass


@dataclass(frozen=True)
class Dirichlet:
    value: float = 0.0


@dataclass(frozen=True)
class NeumannZeroFlux:
    pass


@dataclass(frozen=True)
class NeumannFlux:
    """Prescribed inward flux ``value`` (amount per area per time) through the face."""

    value: float = 0.0


Condition = Union[Periodic, Dirichlet, NeumannZeroFlux, NeumannFlux]

_BC_NAMES = {
    "periodic": Periodic,
    "dirichlet": Dirichlet,
    "zero_flux": NeumannZeroFlux,
    "zeroflux": NeumannZeroFlux,
    "neumann": NeumannZeroFlux,
    "flux": NeumannFlux,
}


def parse_condition(spec) -> Condition:
    """Build a condition from ``"periodic"``, ``{"type": "dirichlet", "value": 1}`` or ``{"dirichlet": 1}``."""
    if isinstance(spec, (Periodic, Dirichlet, NeumannZeroFlux, NeumannFlux)):
        return spec
    if isinstance(spec, str):
        spec = {"type": spec}
    if isinstance(spec, Mapping) and len(spec) == 1 and "type" not in spec:
        # {"dirichlet": 1.0} shorthand
        (kind, value), = spec.items()
        spec = {"type": kind, "value": value}
    if not isinstance(spec, Mapping) or "type" not in spec:
        raise ValueError(f"cannot interpret boundary condition {spec!r}")
    kind = _BC_NAMES.get(str(spec["type"]).lower())
    if kind is None:
        raise ValueError(f"unknown boundary condition type {spec['type']!r}")
    extra = set(spec) - {"type", "value"}
    if extra:
        raise ValueError(f"unknown boundary condition keys {sorted(extra)}")
    if kind in (Dirichlet, NeumannFlux):
        return kind(float(spec.get("value", 0.0)))
    if "value" in spec:
        raise ValueError(f"{spec['type']} takes no value")
    return kind()


def condition_to_dict(cond: Condition) -> dict:
    if isinstance(cond, Periodic):
        return {"type": "periodic"}
    if isinstance(cond, Dirichlet):
        return {"type": "dirichlet", "value": cond.value}
    if isinstance(cond, NeumannZeroFlux):
        return {"type": "zero_flux"}
    return {"type": "flux", "value": cond.value}


@dataclass(frozen=True)
class BoundarySpec:
    """Per-axis ``(low, high)`` boundary conditions."""

    axes: tuple[tuple[Condition, Condition], ...] = field(
        default_factory=lambda: ((Periodic(), Periodic()),) * 3
    )

    def __post_init__(self):
        axes = []
        for pair in self.axes:
            if not isinstance(pair, (tuple, list)):
                pair = (pair, pair)
            lo, hi = (parse_condition(c) for c in pair)
            if isinstance(lo, Periodic) != isinstance(hi, Periodic):
                raise ValueError("Periodic must be set on both sides of an axis or neither")
            axes.append((lo, hi))
        if len(axes) != 3:
            raise ValueError("BoundarySpec needs exactly three axes")
        object.__setattr__(self, "axes", tuple(axes))

    @classmethod
    def uniform(cls, cond) -> "BoundarySpec":
        return cls(((cond, cond),) * 3)

    @classmethod
    def periodic(cls) -> "BoundarySpec":
        return cls.uniform(Periodic())

    @classmethod
    def dirichlet(cls, value: float = 0.0) -> "BoundarySpec":
        return cls.uniform(Dirichlet(value))

    @classmethod
    def zero_flux(cls) -> "BoundarySpec":
        return cls.uniform(NeumannZeroFlux())

    def __getitem__(self, axis: int) -> tuple[Condition, Condition]:
        return self.axes[axis]

    def transform_kind(self, axis: int) -> str:
        """Spectral transform for an axis: ``"dft"``, ``"dst"`` or ``"dct"``.

        Raises ``ValueError`` for combinations that no single real transform
        diagonalizes (mixed sides, prescribed nonzero flux).
        """
        lo, hi = self.axes[axis]
        if isinstance(lo, Periodic):
            return "dft"
        if isinstance(lo, Dirichlet) and isinstance(hi, Dirichlet):
            return "dst"
        if isinstance(lo, NeumannZeroFlux) and isinstance(hi, NeumannZeroFlux):
            return "dct"
        raise ValueError(
            f"boundary pair {type(lo).__name__}/{type(hi).__name__} on axis "
            f"{AXIS_NAMES[axis]} is not supported by spectral steppers; use explicit Euler"
        )

    def check_spectral(self, grid: GridSpec | None = None) -> None:
        axes = range(3) if grid is None else grid.active_axes
        for a in axes:
            self.transform_kind(a)

    def conserves_mass(self) -> bool:
        """True if no face can exchange mass (periodic / zero-flux everywhere)."""
        return all(isinstance(c, (Periodic, NeumannZeroFlux)) for pair in self.axes for c in pair)

    def to_dict(self) -> dict:
        return {
            AXIS_NAMES[a]: {"low": condition_to_dict(lo), "high": condition_to_dict(hi)}
            for a, (lo, hi) in enumerate(self.axes)
        }


# -- ghost cells ------------------------------------------------------------


def _take(u: np.ndarray, axis: int, index: int) -> np.ndarray:
    sl = [slice(None)] * u.ndim
    sl[axis] = slice(index, index + 1) if index != -1 else slice(-1, None)
    return u[tuple(sl)]


def dirichlet_ghost(edge, value):
    # linear extrapolation through the face value
    return 2.0 * value - edge


def ghost_plane(
    u: np.ndarray,
    axis: int,
    side: int,
    cond: Condition,
    h: float,
    gamma_face=1.0,
    homogeneous: bool = False,
) -> np.ndarray:
    """Ghost layer (keepdims) next to the ``side`` (0 low, 1 high) face of ``axis``.

    ``homogeneous`` drops the boundary data (Dirichlet value, flux), which is
    the rule applied to derived quantities and to timestep updates.
    """
    n = u.shape[axis]
    edge = _take(u, axis, 0 if side == 0 else n - 1)
    if n == 1:
        return edge.copy()
    if isinstance(cond, Periodic):
        return _take(u, axis, n - 1 if side == 0 else 0).copy()
    if isinstance(cond, Dirichlet):
        return -edge if homogeneous else dirichlet_ghost(edge, cond.value)
    if isinstance(cond, NeumannFlux) and not homogeneous:
        return edge + cond.value * h / gamma_face
    return edge.copy()


def pad_axis(u: np.ndarray, axis: int, bc: BoundarySpec, grid: GridSpec, homogeneous=False) -> np.ndarray:
    """Pad one ghost layer on both sides of a single axis."""
    lo, hi = bc[axis]
    h = grid.spacing[axis]
    return np.concatenate(
        [
            ghost_plane(u, axis, 0, lo, h, homogeneous=homogeneous),
            u,
            ghost_plane(u, axis, 1, hi, h, homogeneous=homogeneous),
        ],
        axis=axis,
    )


def fill_ghosts(u: np.ndarray, bc: BoundarySpec, grid: GridSpec | None = None, homogeneous=False) -> np.ndarray:
    """Return a padded copy of ``u`` with one ghost layer per side on every axis.

    Works on arrays of any dimension up to three; axes beyond ``u.ndim`` are
    ignored.  Edge and corner ghosts come from applying the axis rules in
    sequence and are not used by the 7-point stencils.
    """
    if grid is None:
        grid = GridSpec(tuple(u.shape) + (1,) * (3 - u.ndim))
    padded = u
    for axis in range(u.ndim):
        padded = pad_axis(padded, axis, bc, grid, homogeneous=homogeneous)
    return padded


def interior(padded: np.ndarray) -> np.ndarray:
    return padded[(slice(1, -1),) * padded.ndim]


# -- field container ----------------------------------------------------------

Init = Union[float, int, np.ndarray, Callable[..., np.ndarray]]


class VoxelFields:
    """Named scalar fields sharing one uniform grid."""

    def __init__(self, grid: GridSpec, dtype=np.float64):
        dtype = np.dtype(dtype)
        if dtype not in (np.dtype(np.float64), np.dtype(np.float32)):
            raise ValueError("dtype must be float64 or float32")
        self.grid = grid
        self.dtype = dtype
        self.fields: dict[str, np.ndarray] = {}

    def add_field(self, name: str, init: Init = 0.0) -> np.ndarray:
        if not name or not isinstance(name, str):
            raise ValueError("field name must be a nonempty string")
        if name in self.fields:
            raise ValueError(f"field {name!r} already exists")
        shape = self.grid.shape
        if callable(init):
            values = np.broadcast_to(np.asarray(init(*self.grid.coords()), dtype=self.dtype), shape)
            arr = np.array(values, dtype=self.dtype, order="C")
        elif np.isscalar(init):
            arr = np.full(shape, init, dtype=self.dtype)
        else:
            init = np.asarray(init)
            if init.size != self.grid.n_voxels:
                raise ValueError(
                    f"field {name!r} has {init.size} values, grid needs {self.grid.n_voxels}"
                )
            arr = np.array(init.reshape(shape), dtype=self.dtype, order="C")
        if not np.isfinite(arr).all():
            raise ValueError(f"field {name!r} contains non-finite values")
        self.fields[name] = arr
        return arr

    def __getitem__(self, name: str) -> np.ndarray:
        return self.fields[name]

    def __contains__(self, name: str) -> bool:
        return name in self.fields

    def __iter__(self):
        return iter(self.fields)

    @property
    def names(self) -> list[str]:
        return list(self.fields)

    @property
    def nbytes(self) -> int:
        return sum(a.nbytes for a in self.fields.values())

    def copy(self) -> "VoxelFields":
        out = VoxelFields(self.grid, self.dtype)
        out.fields = {k: v.copy() for k, v in self.fields.items()}
        return out


def create(grid: GridSpec, dtype=np.float64) -> VoxelFields:
    return VoxelFields(grid, dtype)


def as_grid(dims: Sequence[int], spacing=None, origin=None) -> GridSpec:
    dims = tuple(dims) + (1,) * (3 - len(dims))
    spacing = (1.0,) * 3 if spacing is None else tuple(spacing) + (1.0,) * (3 - len(spacing))
    origin = (0.0,) * 3 if origin is None else tuple(origin) + (0.0,) * (3 - len(origin))
    return GridSpec(dims, spacing, origin)
