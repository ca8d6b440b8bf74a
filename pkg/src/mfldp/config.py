"""Experiment configuration: JSON file, versioned schema, unknown keys rejected."""

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from ._occupation import basis_dimension
from .errors import ConfigError
from .lattice import Lattice, Observable, PairPotential, WaveFunction

SCHEMA_VERSION = 1
NBODY_CAP = 10_000
FOCK_CAP = 5_000

# kind -> {parameter: default}; shared by the config file and CLI flags
POTENTIALS = {
    "gaussian": {"strength": 1.0, "width": 1.0},
    "constant": {"value": 1.0},
    "zero": {},
}
INITIAL_STATES = {
    "gaussian": {"width": 1.0, "center": 0.0, "momentum": 0.0},
    "plane_wave": {"mode": 1},
}
OBSERVABLES = {
    "cosine": {"mode": 1, "axis": 0},
    "position": {"axis": 0},
    "projector": {"mode": 1},
    "gaussian_projector": {"width": 1.0, "center": 0.0},
}

_number = {"type": "number"}
_kinded = {"type": "object", "required": ["kind"], "properties": {"kind": {"type": "string"}},
           "additionalProperties": _number}
_grid = {"type": "array", "items": _number, "minItems": 1}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["lattice", "potential", "phi0", "observable", "t", "dt", "N_list",
                 "lambda_grid", "x_grid"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "lattice": {
            "type": "object", "additionalProperties": False, "required": ["d", "L", "M"],
            "properties": {"d": {"type": "integer", "minimum": 1, "maximum": 3},
                           "L": {"type": "number", "exclusiveMinimum": 0},
                           "M": {"type": "integer", "minimum": 2}},
        },
        "potential": _kinded,
        "phi0": _kinded,
        "observable": _kinded,
        "t": {"type": "number", "minimum": 0},
        "dt": {"type": "number", "exclusiveMinimum": 0},
        "N_list": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
        "lambda_grid": _grid,
        "x_grid": _grid,
        "seed": {"type": "integer", "minimum": 0},
        "output_dir": {"type": "string"},
        "variance_samples": {"type": "integer", "minimum": 1},
        "fock": {
            "type": "object", "additionalProperties": False,
            "properties": {"M": {"type": "integer", "minimum": 1},
                           "N": {"type": "integer", "minimum": 1},
                           "n_cut": {"type": "integer", "minimum": 0}},
        },
        "ldp": {
            "type": "object", "additionalProperties": False,
            "properties": {"beta": {"type": ["number", "null"], "minimum": 0},
                           "lambda_max": {"type": ["number", "null"], "exclusiveMinimum": 0},
                           "fit": {"enum": ["lsq", "envelope"]}},
        },
        "nbody": {
            "type": "object", "additionalProperties": False,
            "properties": {"method": {"enum": ["auto", "dense", "krylov"]},
                           "krylov_dim": {"type": "integer", "minimum": 2},
                           "dt": {"type": "number", "exclusiveMinimum": 0}},
        },
        "caps": {
            "type": "object", "additionalProperties": False,
            "properties": {"nbody_dim": {"type": "integer", "minimum": 1},
                           "fock_dim": {"type": "integer", "minimum": 1}},
        },
    },
}


def kind_params(table: dict, spec: dict, what: str) -> tuple:
    """``(kind, params)`` with defaults filled; unknown kinds or parameters raise."""
    spec = dict(spec)
    kind = spec.pop("kind", None)
    if kind not in table:
        raise ConfigError(f"{what}: unknown kind {kind!r} (choose from {sorted(table)})")
    extra = set(spec) - set(table[kind])
    if extra:
        raise ConfigError(f"{what} kind {kind!r}: unknown parameter(s) {sorted(extra)}")
    params = {**table[kind], **spec}
    for k, val in params.items():
        if not (isinstance(val, (int, float)) and math.isfinite(val)):
            raise ConfigError(f"{what}: parameter {k} must be a finite number")
    return kind, params


def build_potential(lat: Lattice, spec: dict) -> PairPotential:
    kind, p = kind_params(POTENTIALS, spec, "potential")
    if kind == "gaussian":
        if p["width"] <= 0:
            raise ConfigError("potential width must be positive")
        return PairPotential.gaussian(lat, p["strength"], p["width"])
    if kind == "constant":
        return PairPotential.constant(lat, p["value"])
    return PairPotential.zero(lat)


def build_phi0(lat: Lattice, spec: dict) -> WaveFunction:
    kind, p = kind_params(INITIAL_STATES, spec, "phi0")
    if kind == "gaussian":
        if p["width"] <= 0:
            raise ConfigError("phi0 width must be positive")
        return WaveFunction.gaussian(lat, p["width"], p["center"], p["momentum"])
    return WaveFunction.plane_wave(lat, int(p["mode"]))


def build_observable(lat: Lattice, spec: dict) -> Observable:
    kind, p = kind_params(OBSERVABLES, spec, "observable")
    if "axis" in p and not 0 <= int(p["axis"]) < lat.d:
        raise ConfigError(f"observable axis {p['axis']} out of range for d = {lat.d}")
    if kind == "cosine":
        return Observable.cosine(lat, p["mode"], int(p["axis"]))
    if kind == "position":
        return Observable.position(lat, int(p["axis"]))
    if kind == "projector":
        return Observable.finite_rank(lat, WaveFunction.plane_wave(lat, int(p["mode"])))
    if p["width"] <= 0:
        raise ConfigError("observable width must be positive")
    return Observable.finite_rank(lat, WaveFunction.gaussian(lat, p["width"], p["center"]))


@dataclass(frozen=True)
class ExperimentConfig:
    lattice: dict
    potential: dict
    phi0: dict
    observable: dict
    t: float
    dt: float
    N_list: tuple
    lambda_grid: tuple
    x_grid: tuple
    seed: int = 0
    output_dir: str = None
    variance_samples: int = 11
    fock: dict = field(default_factory=dict)
    ldp: dict = field(default_factory=dict)
    nbody: dict = field(default_factory=dict)
    caps: dict = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    def build_lattice(self) -> Lattice:
        return Lattice(**self.lattice)

    @property
    def nbody_cap(self) -> int:
        return self.caps.get("nbody_dim", NBODY_CAP)

    @property
    def fock_cap(self) -> int:
        return self.caps.get("fock_dim", FOCK_CAP)

    def fock_params(self) -> dict:
        """Fock battery size; defaults to 3 modes and the largest ``N`` capped at 6."""
        n_sites = self.build_lattice().n_sites
        M = self.fock.get("M", max(1, min(3, n_sites - 1)))
        N = self.fock.get("N", min(max(self.N_list), 6))
        return {"M": M, "N": N, "n_cut": self.fock.get("n_cut", N)}

    def as_dict(self) -> dict:
        out = {k: getattr(self, k) for k in self.__dataclass_fields__}
        for k in ("N_list", "lambda_grid", "x_grid"):
            out[k] = list(out[k])
        return {k: v for k, v in out.items() if v is not None}


def _check_grid(name, values, positive=False):
    arr = np.asarray(values, float)
    if not np.all(np.isfinite(arr)):
        raise ConfigError(f"{name}: values must be finite")
    if np.any(np.diff(arr) <= 0):
        raise ConfigError(f"{name}: values must be strictly increasing")
    if positive and np.any(arr <= 0):
        raise ConfigError(f"{name}: values must be positive")


def from_dict(raw: dict) -> ExperimentConfig:
    try:
        jsonschema.validate(raw, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config error at {where}: {exc.message}") from None
    _check_grid("N_list", raw["N_list"])
    _check_grid("lambda_grid", raw["lambda_grid"])
    _check_grid("x_grid", raw["x_grid"], positive=True)
    if raw.get("fock", {}).get("n_cut", 0) > raw.get("fock", {}).get("N", math.inf):
        raise ConfigError("fock: n_cut must not exceed N")
    cfg = ExperimentConfig(**{**raw, **{k: tuple(raw[k]) for k in ("N_list", "lambda_grid", "x_grid")}})
    lat = cfg.build_lattice()
    build_potential(lat, cfg.potential)
    build_phi0(lat, cfg.phi0)
    build_observable(lat, cfg.observable)
    return cfg


def load(path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return from_dict(raw)


def validate(cfg: ExperimentConfig) -> dict:
    """Dimension caps plus rough runtime and memory estimates; ``ok`` is False on violation."""
    lat = cfg.build_lattice()
    S = lat.n_sites
    problems = []
    dims = {N: basis_dimension(S, N) for N in cfg.N_list}
    for N, dim in dims.items():
        if dim > cfg.nbody_cap:
            problems.append(f"nbody dim C({S}+{N}-1,{N}) = {dim} exceeds cap {cfg.nbody_cap}")
    fp = cfg.fock_params()
    fock_dim = sum(basis_dimension(fp["M"], n) for n in range(fp["n_cut"] + 1))
    if fp["n_cut"] > fp["N"]:
        problems.append("fock n_cut exceeds N")
    if fock_dim > cfg.fock_cap:
        problems.append(f"fock dim {fock_dim} exceeds cap {cfg.fock_cap}")
    n_steps = math.ceil(cfg.t / cfg.dt) if cfg.t > 0 else 0
    biggest = max(dims.values())
    dense = biggest <= 4000
    # float64 complex: dense eigendecomposition or Krylov basis, plus the hopping matrix
    mem = 16 * (biggest**2 * 2 if dense else biggest * 40) + 16 * biggest * S * S
    flops = (biggest**3 if dense else 30 * n_steps * biggest * S * S) * len(cfg.N_list)
    flops += n_steps * S * np.log2(max(S, 2)) * 200 * max(1, cfg.variance_samples)
    return {
        "ok": not problems,
        "problems": problems,
        "nbody_dims": {str(k): v for k, v in dims.items()},
        "fock_dim": fock_dim,
        "hartree_steps": n_steps,
        "estimated_memory_bytes": int(mem + 16 * S * (n_steps + 1)),
        "estimated_runtime_s": float(flops / 1e9 + 0.5),
    }
