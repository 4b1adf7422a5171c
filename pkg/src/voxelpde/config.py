"""TOML run configuration: schema, presets and ``--set`` overrides.

Everything is validated before any field buffer is allocated.  Unknown keys
are rejected and messages name the dotted path of the offending entry, e.g.
``stepper.dt must be > 0``.

Seeded noise uses numpy's counter-based Philox generator keyed by the
integer seed, drawn in C order over the grid, so a given seed reproduces on
every platform.
"""

from __future__ import annotations

import ast
import copy
import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np
import tomli
import tomli_w

from .grid import BoundarySpec, GridSpec, VoxelFields, condition_to_dict, parse_condition
from .problems import PROBLEMS, Problem, make_problem
from .timesteppers import StepperSpec

FORMATS = ("raw", "vtk")
AXES = ("x", "y", "z")


class ConfigError(ValueError):
    pass


def _check_keys(section: Mapping, allowed, path: str):
    for key in section:
        if key not in allowed:
            raise ConfigError(f"{path}.{key}: unknown key" if path else f"{key}: unknown key")


def _table(data: Mapping, key: str, path: str) -> dict:
    value = data.get(key, {})
    if not isinstance(value, Mapping):
        raise ConfigError(f"{path + '.' if path else ''}{key} must be a table")
    return dict(value)


def _triple(value, path: str, cast=float) -> tuple:
    if isinstance(value, (int, float)):
        value = [value] * 3
    if not isinstance(value, (list, tuple)) or len(value) != 3:
        raise ConfigError(f"{path} must be a list of 3 numbers")
    try:
        return tuple(cast(v) for v in value)
    except (TypeError, ValueError):
        raise ConfigError(f"{path} must be a list of 3 numbers") from None


# -- sections ------------------------------------------------------------------------


@dataclass
class GridConfig:
    dims: tuple[int, int, int] = (32, 32, 32)
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)

    @classmethod
    def from_dict(cls, d: Mapping) -> "GridConfig":
        _check_keys(d, ("dims", "spacing", "origin"), "grid")
        dims = _triple(d.get("dims", cls.dims), "grid.dims", int)
        spacing = _triple(d.get("spacing", cls.spacing), "grid.spacing")
        origin = _triple(d.get("origin", cls.origin), "grid.origin")
        try:
            GridSpec(dims, spacing, origin)
        except ValueError as exc:
            raise ConfigError(f"grid.{exc}") from None
        return cls(dims, spacing, origin)

    def build(self) -> GridSpec:
        return GridSpec(self.dims, self.spacing, self.origin)

    def to_dict(self) -> dict:
        return {"dims": list(self.dims), "spacing": list(self.spacing), "origin": list(self.origin)}


@dataclass
class BCConfig:
    spec: BoundarySpec = field(default_factory=BoundarySpec.periodic)

    @classmethod
    def from_dict(cls, d: Mapping) -> "BCConfig":
        _check_keys(d, ("default", *AXES), "bc")
        default = d.get("default", "periodic")
        pairs = []
        for axis in AXES:
            entry = d.get(axis, default)
            path = f"bc.{axis}" if axis in d else "bc.default"
            if isinstance(entry, Mapping) and set(entry) <= {"low", "high"} and entry:
                lo, hi = entry.get("low", default), entry.get("high", default)
            elif isinstance(entry, list):
                if len(entry) != 2:
                    raise ConfigError(f"{path} must be one condition or a [low, high] pair")
                lo, hi = entry
            else:
                lo = hi = entry
            try:
                pairs.append((parse_condition(lo), parse_condition(hi)))
            except (ValueError, TypeError, KeyError) as exc:
                raise ConfigError(f"{path}: {exc}") from None
        try:
            return cls(BoundarySpec(tuple(pairs)))
        except ValueError as exc:
            raise ConfigError(f"bc: {exc}") from None

    def to_dict(self) -> dict:
        return {axis: [condition_to_dict(c) for c in pair] for axis, pair in zip(AXES, self.spec.axes)}


def _plain(value):
    if isinstance(value, tuple):
        return [_plain(v) for v in value]
    if isinstance(value, list):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return value.tolist()
    return value


@dataclass
class ProblemConfig:
    name: str = "cahn_hilliard"
    params: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: Mapping) -> "ProblemConfig":
        _check_keys(d, ("name", "params"), "problem")
        name = d.get("name", cls.name)
        if name not in PROBLEMS:
            raise ConfigError(f"problem.name: unknown problem {name!r}; choose from {sorted(PROBLEMS)}")
        params = _table(d, "params", "problem")
        known = {f.name for f in dataclasses.fields(PROBLEMS[name])}
        for key, value in params.items():
            if key not in known:
                raise ConfigError(f"problem.params.{key}: unknown key")
            if callable(value):
                raise ConfigError(f"problem.params.{key}: laws are not configurable from TOML")
        conf = cls(name, params)
        conf.build()
        return conf

    def build(self) -> Problem:
        params = {k: tuple(v) if k == "fields" else (np.asarray(v, float) if isinstance(v, list) else v)
                  for k, v in self.params.items()}
        try:
            return make_problem(self.name, **params)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"problem.params: {exc}") from None

    def to_dict(self) -> dict:
        return {"name": self.name, "params": {k: _plain(v) for k, v in self.params.items()}}


@dataclass
class StepperConfig:
    kind: str = "imex"
    dt: float = 1.0
    steps: int = 100
    every: int = 1
    wavenumbers: str = "modified"

    @classmethod
    def from_dict(cls, d: Mapping) -> "StepperConfig":
        names = [f.name for f in dataclasses.fields(cls)]
        _check_keys(d, names, "stepper")
        conf = cls(**{k: d[k] for k in names if k in d})
        try:
            conf.build()
        except (ValueError, TypeError) as exc:
            msg = str(exc)
            raise ConfigError(msg if msg.startswith("stepper.") else f"stepper: {msg}") from None
        if conf.wavenumbers not in ("modified", "continuous"):
            raise ConfigError("stepper.wavenumbers must be 'modified' or 'continuous'")
        return conf

    def build(self) -> StepperSpec:
        return StepperSpec(self.kind, self.dt, self.steps, self.every, self.wavenumbers)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class OutputConfig:
    """``cadence`` is the field-dump interval in steps; 0 dumps the final state only."""

    directory: str = "out"
    cadence: int = 0
    formats: tuple[str, ...] = ("raw",)
    wall_time: bool = True

    @classmethod
    def from_dict(cls, d: Mapping) -> "OutputConfig":
        names = [f.name for f in dataclasses.fields(cls)]
        _check_keys(d, names, "output")
        conf = cls(**{k: d[k] for k in names if k in d})
        if isinstance(conf.formats, str):
            conf.formats = (conf.formats,)
        conf.formats = tuple(conf.formats)
        for fmt in conf.formats:
            if fmt not in FORMATS:
                raise ConfigError(f"output.formats: unknown format {fmt!r}; choose from {FORMATS}")
        if not isinstance(conf.cadence, int) or conf.cadence < 0:
            raise ConfigError("output.cadence must be a non-negative integer")
        if not isinstance(conf.wall_time, bool):
            raise ConfigError("output.wall_time must be true or false")
        return conf

    def to_dict(self) -> dict:
        return {"directory": self.directory, "cadence": self.cadence, "formats": list(self.formats),
                "wall_time": self.wall_time}


# -- initial conditions -------------------------------------------------------------

PRESETS = {
    "spinodal-noise": ("mean", "amplitude", "seed"),
    "sphere": ("center", "radius", "eps", "inside", "outside"),
    "slab": ("normal", "position", "eps", "inside", "outside"),
}
_INITIAL_KEYS = {"value", "raw", "preset"} | {k for ks in PRESETS.values() for k in ks}


def parse_preset_call(text: str) -> dict:
    """``"sphere([8, 8, 8], 5, eps=2)"`` → ``{"preset": "sphere", "center": ..., ...}``."""
    text = text.strip()
    name, _, rest = text.partition("(")
    name = name.strip()
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    out = {"preset": name}
    if not rest:
        return out
    try:
        call = ast.parse(f"f({rest}", mode="eval").body
        args = [ast.literal_eval(a) for a in call.args]
        kwargs = {k.arg: ast.literal_eval(k.value) for k in call.keywords}
    except (SyntaxError, ValueError):
        raise ValueError(f"cannot parse preset arguments in {text!r}") from None
    names = PRESETS[name]
    if len(args) > len(names):
        raise ValueError(f"preset {name!r} takes at most {len(names)} arguments")
    out.update(zip(names, args))
    out.update(kwargs)
    return out


def _unit_normal(normal, path):
    if isinstance(normal, str):
        if normal not in AXES:
            raise ConfigError(f"{path}.normal must be one of {AXES} or a 3-vector")
        vec = np.zeros(3)
        vec[AXES.index(normal)] = 1.0
        return vec
    vec = np.array(_triple(normal, f"{path}.normal"))
    norm = np.linalg.norm(vec)
    if norm == 0:
        raise ConfigError(f"{path}.normal must be nonzero")
    return vec / norm


def interface_profile(d, eps: float, inside: float = 1.0, outside: float = 0.0):
    """Equilibrium profile ``½(1 − tanh(3d/(2ε)))`` mapped onto [outside, inside]."""
    s = 0.5 * (1.0 - np.tanh(1.5 * d / eps))
    return outside + (inside - outside) * s


@dataclass
class InitialSpec:
    kind: str
    params: dict

    @classmethod
    def from_value(cls, entry, path: str) -> "InitialSpec":
        if isinstance(entry, (int, float)) and not isinstance(entry, bool):
            return cls("value", {"value": float(entry)})
        if isinstance(entry, str):
            try:
                entry = parse_preset_call(entry)
            except ValueError as exc:
                raise ConfigError(f"{path}: {exc}") from None
        if not isinstance(entry, Mapping):
            raise ConfigError(f"{path} must be a number, a preset string or a table")
        entry = dict(entry)
        _check_keys(entry, _INITIAL_KEYS, path)
        modes = [k for k in ("value", "raw", "preset") if k in entry]
        if len(modes) != 1:
            raise ConfigError(f"{path} needs exactly one of value, raw or preset")
        mode = modes[0]
        if mode == "preset":
            name = entry["preset"]
            if isinstance(name, str) and "(" in name:
                entry.update(parse_preset_call(name))
                name = entry["preset"]
            if name not in PRESETS:
                raise ConfigError(f"{path}.preset: unknown preset {name!r}; choose from {sorted(PRESETS)}")
            _check_keys({k: v for k, v in entry.items() if k != "preset"}, PRESETS[name], path)
            spec = cls(name, {k: v for k, v in entry.items() if k != "preset"})
        else:
            extra = [k for k in entry if k != mode]
            if extra:
                raise ConfigError(f"{path}.{extra[0]}: unknown key")
            spec = cls(mode, {mode: entry[mode]})
        spec.validate(path)
        return spec

    def validate(self, path: str):
        p = self.params
        if self.kind == "value":
            if not math.isfinite(p["value"]):
                raise ConfigError(f"{path}.value must be finite")
        elif self.kind == "raw":
            if not isinstance(p["raw"], str):
                raise ConfigError(f"{path}.raw must be a path")
        elif self.kind == "spinodal-noise":
            if "mean" not in p or "amplitude" not in p:
                raise ConfigError(f"{path}: spinodal-noise needs mean and amplitude")
            if p["amplitude"] < 0:
                raise ConfigError(f"{path}.amplitude must be ≥ 0")
            if int(p.get("seed", 0)) != p.get("seed", 0) or p.get("seed", 0) < 0:
                raise ConfigError(f"{path}.seed must be a non-negative integer")
        else:
            need = ("center", "radius", "eps") if self.kind == "sphere" else ("normal", "position", "eps")
            for key in need:
                if key not in p:
                    raise ConfigError(f"{path}: {self.kind} needs {key}")
            if not p["eps"] > 0:
                raise ConfigError(f"{path}.eps must be > 0")
            if self.kind == "sphere":
                _triple(p["center"], f"{path}.center")
                if not p["radius"] > 0:
                    raise ConfigError(f"{path}.radius must be > 0")
            else:
                _unit_normal(p["normal"], path)

    def evaluate(self, grid: GridSpec, base: Path | None = None) -> np.ndarray:
        p = self.params
        if self.kind == "value":
            return np.full(grid.shape, float(p["value"]))
        if self.kind == "raw":
            from .io import read_raw_array

            path = Path(p["raw"])
            if base is not None and not path.is_absolute():
                path = base / path
            return read_raw_array(path, grid)
        if self.kind == "spinodal-noise":
            rng = np.random.Generator(np.random.Philox(int(p.get("seed", 0))))
            noise = rng.random(grid.shape)
            return float(p["mean"]) + float(p["amplitude"]) * (2.0 * noise - 1.0)
        x, y, z = grid.coords()
        inside, outside = float(p.get("inside", 1.0)), float(p.get("outside", 0.0))
        if self.kind == "sphere":
            cx, cy, cz = _triple(p["center"], "center")
            d = np.sqrt((x - cx) ** 2 + (y - cy) ** 2 + (z - cz) ** 2) - float(p["radius"])
        else:
            n = _unit_normal(p["normal"], "normal")
            d = n[0] * x + n[1] * y + n[2] * z - float(p["position"])
        return np.broadcast_to(interface_profile(d, float(p["eps"]), inside, outside), grid.shape).copy()

    def to_value(self):
        if self.kind in ("value", "raw"):
            return {self.kind: _plain(self.params[self.kind])}
        return {"preset": self.kind, **{k: _plain(v) for k, v in self.params.items()}}


# -- inverse section ----------------------------------------------------------------


@dataclass
class InverseConfig:
    parameters: dict = field(default_factory=dict)
    observations: list = field(default_factory=list)
    max_iter: int = 200
    rtol: float = 1e-6
    trace: str = "fit_trace.csv"

    @classmethod
    def from_dict(cls, d: Mapping) -> "InverseConfig":
        names = [f.name for f in dataclasses.fields(cls)]
        _check_keys(d, names, "inverse")
        conf = cls(**{k: copy.deepcopy(d[k]) for k in names if k in d})
        if not conf.parameters:
            raise ConfigError("inverse.parameters must name at least one parameter")
        for name, spec in conf.parameters.items():
            path = f"inverse.parameters.{name}"
            if not isinstance(spec, Mapping):
                raise ConfigError(f"{path} must be a table")
            _check_keys(spec, ("p0", "lower", "upper", "scale"), path)
            for key in ("p0", "lower", "upper"):
                if key not in spec:
                    raise ConfigError(f"{path}.{key} is required")
            if not (math.isfinite(spec["lower"]) and math.isfinite(spec["upper"])):
                raise ConfigError(f"{path} bounds must be finite")
            if not spec["lower"] < spec["upper"]:
                raise ConfigError(f"{path} needs lower < upper")
            if not spec["lower"] <= spec["p0"] <= spec["upper"]:
                raise ConfigError(f"{path}.p0 must lie within bounds")
        for i, obs in enumerate(conf.observations):
            path = f"inverse.observations[{i}]"
            if not isinstance(obs, Mapping):
                raise ConfigError(f"{path} must be a table")
            _check_keys(obs, ("file", "t", "field", "mask"), path)
            if "file" not in obs:
                raise ConfigError(f"{path}.file is required")
        if not (isinstance(conf.max_iter, int) and conf.max_iter >= 1):
            raise ConfigError("inverse.max_iter must be a positive integer")
        if not conf.rtol > 0:
            raise ConfigError("inverse.rtol must be > 0")
        return conf

    def to_dict(self) -> dict:
        return {"parameters": copy.deepcopy(self.parameters), "observations": copy.deepcopy(self.observations),
                "max_iter": self.max_iter, "rtol": self.rtol, "trace": self.trace}


# -- top level ----------------------------------------------------------------------

SECTIONS = ("grid", "bc", "problem", "initial", "stepper", "output", "inverse")


@dataclass
class RunConfig:
    grid: GridConfig = field(default_factory=GridConfig)
    bc: BCConfig = field(default_factory=BCConfig)
    problem: ProblemConfig = field(default_factory=ProblemConfig)
    initial: dict = field(default_factory=dict)
    stepper: StepperConfig = field(default_factory=StepperConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    inverse: InverseConfig | None = None
    base_dir: Path | None = None

    @classmethod
    def from_dict(cls, data: Mapping, base_dir=None) -> "RunConfig":
        _check_keys(data, SECTIONS, "")
        grid = GridConfig.from_dict(_table(data, "grid", ""))
        bc = BCConfig.from_dict(_table(data, "bc", ""))
        problem_conf = ProblemConfig.from_dict(_table(data, "problem", ""))
        problem = problem_conf.build()
        stepper = StepperConfig.from_dict(_table(data, "stepper", ""))
        if stepper.kind != "euler":
            if problem.stabilizers() is None:
                raise ConfigError(f"stepper.kind: problem {problem.name!r} has no spectral symbol; use 'euler'")
            try:
                bc.spec.check_spectral(grid.build())
            except ValueError as exc:
                raise ConfigError(f"bc: {exc}") from None
        raw_initial = _table(data, "initial", "")
        needed = (*problem.evolved, *problem.auxiliary)
        initial = {}
        for key, entry in raw_initial.items():
            if key not in needed:
                raise ConfigError(f"initial.{key}: unknown key (fields are {list(needed)})")
            initial[key] = InitialSpec.from_value(entry, f"initial.{key}")
        missing = [k for k in needed if k not in initial]
        if missing:
            raise ConfigError(f"initial.{missing[0]} is required")
        output = OutputConfig.from_dict(_table(data, "output", ""))
        inverse = None
        if "inverse" in data:
            inverse = InverseConfig.from_dict(_table(data, "inverse", ""))
            for name in inverse.parameters:
                if name not in {f.name for f in dataclasses.fields(type(problem))}:
                    raise ConfigError(f"inverse.parameters.{name}: not a parameter of {problem.name!r}")
        return cls(grid, bc, problem_conf, initial, stepper, output, inverse,
                   None if base_dir is None else Path(base_dir))

    def to_dict(self) -> dict:
        out = {
            "grid": self.grid.to_dict(),
            "bc": self.bc.to_dict(),
            "problem": self.problem.to_dict(),
            "initial": {k: v.to_value() for k, v in self.initial.items()},
            "stepper": self.stepper.to_dict(),
            "output": self.output.to_dict(),
        }
        if self.inverse is not None:
            out["inverse"] = self.inverse.to_dict()
        return out

    def to_toml(self) -> str:
        return tomli_w.dumps(self.to_dict())

    def build_fields(self) -> VoxelFields:
        grid = self.grid.build()
        vf = VoxelFields(grid)
        problem = self.problem.build()
        for name in (*problem.evolved, *problem.auxiliary):
            vf.add_field(name, self.initial[name].evaluate(grid, self.base_dir))
        return vf


def parse_override(text: str) -> tuple[list[str], Any]:
    """``"stepper.dt=0.5"`` → ``(["stepper", "dt"], 0.5)``; values parse as TOML."""
    key, sep, raw = text.partition("=")
    if not sep or not key.strip():
        raise ConfigError(f"--set expects key=value, got {text!r}")
    path = [p.strip() for p in key.strip().split(".")]
    try:
        value = tomli.loads(f"v = {raw.strip()}")["v"]
    except tomli.TOMLDecodeError:
        value = raw.strip()
    return path, value


def apply_overrides(data: dict, overrides) -> dict:
    data = copy.deepcopy(data)
    for text in overrides:
        path, value = parse_override(text)
        node = data
        for part in path[:-1]:
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise ConfigError(f"--set {'.'.join(path)}: {part} is not a table")
            node = child
        node[path[-1]] = value
    return data


def load_config(path=None, overrides=(), defaults: Mapping | None = None) -> RunConfig:
    """Read ``path`` (or start from ``defaults``), apply ``--set`` overrides, validate."""
    data: dict = copy.deepcopy(dict(defaults)) if defaults else {}
    base = None
    if path is not None:
        path = Path(path)
        try:
            with open(path, "rb") as fh:
                data = tomli.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except tomli.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        base = path.parent
    data = apply_overrides(data, overrides)
    return RunConfig.from_dict(data, base_dir=base)
