"""Field I/O: VTK legacy STRUCTURED_POINTS and raw arrays with JSON sidecars.

Both formats store values x-fastest (Fortran order of the ``(nx, ny, nz)``
array), matching how image stacks and VTK readers lay out voxels.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .grid import GridSpec, VoxelFields

_VTK_TYPES = {np.dtype(np.float64): "double", np.dtype(np.float32): "float"}


def write_vtk(vf: VoxelFields, path, names=None) -> Path:
    """Write fields as ASCII VTK legacy STRUCTURED_POINTS point data."""
    path = Path(path)
    names = vf.names if names is None else list(names)
    g = vf.grid
    origin = [o + 0.5 * h for o, h in zip(g.origin, g.spacing)]
    lines = [
        "# vtk DataFile Version 3.0",
        "voxelpde fields",
        "ASCII",
        "DATASET STRUCTURED_POINTS",
        "DIMENSIONS {} {} {}".format(*g.dims),
        "ORIGIN {!r} {!r} {!r}".format(*origin),
        "SPACING {!r} {!r} {!r}".format(*g.spacing),
        f"POINT_DATA {g.n_voxels}",
    ]
    for name in names:
        arr = vf[name]
        lines.append(f"SCALARS {name} {_VTK_TYPES[arr.dtype]} 1")
        lines.append("LOOKUP_TABLE default")
        flat = arr.ravel(order="F")
        fmt = "%.17g" if arr.dtype == np.float64 else "%.9g"
        lines.append("\n".join(fmt % v for v in flat))
    path.write_text("\n".join(lines) + "\n")
    return path


def read_vtk(path) -> VoxelFields:
    """Parse what :func:`write_vtk` emits (ASCII STRUCTURED_POINTS, scalar point data)."""
    tokens = Path(path).read_text().split("\n")
    if not tokens[0].startswith("# vtk DataFile Version"):
        raise ValueError("not a VTK legacy file")
    if tokens[2].strip() != "ASCII" or tokens[3].split() != ["DATASET", "STRUCTURED_POINTS"]:
        raise ValueError("only ASCII STRUCTURED_POINTS is supported")
    header = {}
    i = 4
    while not tokens[i].startswith("POINT_DATA"):
        key, *vals = tokens[i].split()
        header[key] = vals
        i += 1
    npts = int(tokens[i].split()[1])
    dims = tuple(int(v) for v in header["DIMENSIONS"])
    spacing = tuple(float(v) for v in header["SPACING"])
    origin = tuple(float(o) - 0.5 * h for o, h in zip(header["ORIGIN"], spacing))
    if int(np.prod(dims)) != npts:
        raise ValueError("POINT_DATA count does not match DIMENSIONS")
    words = " ".join(tokens[i + 1 :]).split()
    vf = None
    j = 0
    while j < len(words):
        if words[j] != "SCALARS":
            raise ValueError(f"unexpected token {words[j]!r}")
        name, vtype = words[j + 1], words[j + 2]
        j += 4 if words[j + 3] == "1" else 3
        if words[j] != "LOOKUP_TABLE":
            raise ValueError("missing LOOKUP_TABLE")
        j += 2
        dtype = np.float64 if vtype == "double" else np.float32
        values = np.array(words[j : j + npts], dtype=dtype)
        if values.size != npts:
            raise ValueError(f"field {name!r} has {values.size} values, expected {npts}")
        j += npts
        if vf is None:
            vf = VoxelFields(GridSpec(dims, spacing, origin), dtype)
        vf.add_field(name, values.reshape(dims, order="F"))
    return vf


def sidecar_path(path) -> Path:
    return Path(path).with_suffix(".json")


def write_raw(vf: VoxelFields, name: str, path, extra: dict | None = None) -> Path:
    """Write one field as bare little-endian values plus a JSON sidecar."""
    path = Path(path)
    arr = vf[name]
    le = arr.dtype.newbyteorder("<")
    path.write_bytes(np.asarray(arr, dtype=le).ravel(order="F").tobytes())
    meta = {
        "dims": list(vf.grid.dims),
        "spacing": list(vf.grid.spacing),
        "origin": list(vf.grid.origin),
        "dtype": arr.dtype.name,
        "field": name,
    }
    if extra:
        meta.update(extra)
    sidecar_path(path).write_text(json.dumps(meta, indent=2) + "\n")
    return path


def read_sidecar(path) -> dict:
    return json.loads(sidecar_path(path).read_text())


def read_raw(path, grid: GridSpec | None = None, dtype=None, name: str | None = None) -> VoxelFields:
    """Read a raw array.  Missing ``grid``/``dtype``/``name`` come from the sidecar."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"raw file not found: {path}")
    if grid is None or dtype is None or name is None:
        if grid is not None and not sidecar_path(path).exists():
            meta = {"dtype": "float64", "field": "field"}
        else:
            meta = read_sidecar(path)
        grid = grid or GridSpec(tuple(meta["dims"]), tuple(meta["spacing"]), tuple(meta["origin"]))
        dtype = dtype or meta["dtype"]
        name = name or meta["field"]
    dtype = np.dtype(dtype).newbyteorder("<")
    data = path.read_bytes()
    expected = grid.n_voxels * dtype.itemsize
    if len(data) != expected:
        raise ValueError(
            f"{path}: size mismatch, {len(data)} bytes on disk, grid {grid.dims} needs {expected}"
        )
    values = np.frombuffer(data, dtype=dtype).reshape(grid.dims, order="F")
    vf = VoxelFields(grid, dtype.newbyteorder("="))
    vf.add_field(name, values)
    return vf


def read_raw_array(path, grid: GridSpec | None = None) -> np.ndarray:
    """The single field of a raw file as an ``(nx, ny, nz)`` float64 array."""
    vf = read_raw(path, grid=grid)
    return np.asarray(vf[vf.names[0]], dtype=np.float64)
