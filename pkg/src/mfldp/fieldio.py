"""Serialization of lattice fields and Hartree trajectories.

A field is a JSON descriptor (lattice ``d, L, M`` plus layout) next to a data
file holding the complex values row-major with real and imaginary parts
interleaved, either as little-endian float64 (``.bin``) or one ``re,im`` pair
per line (``.csv``).  Floats in text outputs carry 17 significant digits.
"""

import json
import math
import re
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .hartree import HartreeTrajectory
from .lattice import Lattice, PairPotential

FORMATS = ("bin", "csv")
_LAYOUT = "complex128, row-major, interleaved re/im"
_PLACEHOLDER = re.compile(r'"\\u0000(\d+)\\u0000"')


def fmt(x) -> str:
    """Float with 17 significant digits (round-trip exact)."""
    return format(float(x), ".17g")


def dumps(obj, indent=2) -> str:
    """``json.dumps`` with every float written to 17 significant digits; non-finite floats become null."""
    floats = []

    def walk(o):
        if isinstance(o, dict):
            return {k: walk(v) for k, v in o.items()}
        if isinstance(o, (list, tuple)):
            return [walk(v) for v in o]
        if isinstance(o, np.ndarray):
            return [walk(v) for v in o.tolist()]
        if isinstance(o, (bool, np.bool_)):
            return bool(o)
        if isinstance(o, (int, np.integer)):
            return int(o)
        if isinstance(o, (float, np.floating)):
            floats.append(float(o))
            return f"\x00{len(floats) - 1}\x00"
        return o

    def token(match):
        x = floats[int(match.group(1))]
        return fmt(x) if math.isfinite(x) else "null"

    text = json.dumps(walk(obj), indent=indent)
    return _PLACEHOLDER.sub(token, text) + "\n"


def lattice_descriptor(lat: Lattice) -> dict:
    return {"d": lat.d, "L": float(lat.L), "M": lat.M}


def lattice_from_descriptor(desc: dict) -> Lattice:
    try:
        return Lattice(int(desc["d"]), float(desc["L"]), int(desc["M"]))
    except KeyError as exc:
        raise ConfigError(f"lattice descriptor missing {exc}") from None


def _write_data(path: Path, values, fmt_: str):
    flat = np.asarray(values, dtype=np.complex128).reshape(-1)
    inter = np.empty(2 * flat.size)
    inter[0::2], inter[1::2] = flat.real, flat.imag
    if fmt_ == "bin":
        path.write_bytes(inter.astype("<f8").tobytes())
    else:
        path.write_text("".join(f"{fmt(r)},{fmt(i)}\n" for r, i in zip(inter[0::2], inter[1::2])))


def _read_data(path: Path, fmt_: str, shape) -> np.ndarray:
    if fmt_ == "bin":
        inter = np.frombuffer(path.read_bytes(), dtype="<f8")
    else:
        inter = np.loadtxt(path, delimiter=",", ndmin=2).reshape(-1)
    if inter.size != 2 * int(np.prod(shape)):
        raise ConfigError(f"{path}: expected {int(np.prod(shape))} complex values, found {inter.size / 2:g}")
    return (inter[0::2] + 1j * inter[1::2]).reshape(shape)


def save_field(base, lattice: Lattice, values, fmt_: str = "bin") -> Path:
    """Write ``base.json`` and ``base.bin`` (or ``base.csv``); returns the descriptor path."""
    if fmt_ not in FORMATS:
        raise ValueError(f"format must be one of {FORMATS}")
    base = Path(base)
    data = base.with_suffix("." + fmt_)
    _write_data(data, np.asarray(values).reshape(lattice.shape), fmt_)
    desc = {"lattice": lattice_descriptor(lattice), "layout": _LAYOUT, "format": fmt_, "data": data.name}
    path = base.with_suffix(".json")
    path.write_text(dumps(desc))
    return path


def load_field(descriptor) -> tuple:
    """``(lattice, values)`` from a field descriptor."""
    path = Path(descriptor)
    desc = json.loads(path.read_text())
    lat = lattice_from_descriptor(desc["lattice"])
    return lat, _read_data(path.parent / desc["data"], desc["format"], lat.shape)


def save_trajectory(directory, traj: HartreeTrajectory, meta=None, fmt_: str = "bin") -> Path:
    """JSON manifest ``trajectory.json`` plus one data file per stored instant."""
    if fmt_ not in FORMATS:
        raise ValueError(f"format must be one of {FORMATS}")
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    lat = traj.lattice
    _write_data(d / f"potential.{fmt_}", traj.v.values, fmt_)
    names = []
    width = len(str(len(traj) - 1))
    for k, state in enumerate(traj.states):
        name = f"phi_{k:0{width}d}.{fmt_}"
        _write_data(d / name, state, fmt_)
        names.append(name)
    manifest = {
        "lattice": lattice_descriptor(lat),
        "layout": _LAYOUT,
        "format": fmt_,
        "dt": float(traj.dt),
        "times": traj.times,
        "potential": {"kind": traj.v.kind, "data": f"potential.{fmt_}"},
        "states": names,
        "norms": traj.norms,
        "energies": traj.energies,
        "h4_norms": traj.h4_norms,
        "meta": meta or {},
    }
    path = d / "trajectory.json"
    path.write_text(dumps(manifest))
    return path


def load_trajectory(path) -> tuple:
    """``(trajectory, meta)`` from a trajectory directory or its ``trajectory.json``."""
    path = Path(path)
    if path.is_dir():
        path = path / "trajectory.json"
    if not path.exists():
        raise ConfigError(f"no trajectory manifest at {path}")
    m = json.loads(path.read_text())
    lat = lattice_from_descriptor(m["lattice"])
    root = path.parent
    v_vals = _read_data(root / m["potential"]["data"], m["format"], lat.shape)
    v = PairPotential(lat, v_vals.real, m["potential"]["kind"])
    states = np.stack([_read_data(root / n, m["format"], lat.shape) for n in m["states"]])
    opt = lambda key: None if m.get(key) is None else np.asarray(m[key], float)
    traj = HartreeTrajectory(np.asarray(m["times"], float), states, v, float(m["dt"]),
                             opt("norms"), opt("energies"), opt("h4_norms"))
    return traj, m.get("meta", {})
