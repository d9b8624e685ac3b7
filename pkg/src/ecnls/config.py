"""Run configuration: one JSON document, validated before anything is allocated."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from . import schema
from .ensembles import ModeEnsemble, sample_gaussian
from .equilibria import EquilibriumSpec
from .spectral import GridError, TorusGrid, backward

EXPERIMENTS = (
    "simulate", "equilibrium-check", "perturbed", "blowup",
    "sphere-lemma", "operator-compare", "scattering-probe",
)


class ConfigError(ValueError):
    """Invalid run configuration (CLI exit status 2)."""


_lattice = {"type": "array", "items": {"type": "array", "items": {"type": "integer"}}}
_numbers = {"type": "array", "items": {"type": "number"}}

INITIAL_SCHEMA = {
    "oneOf": [
        {
            "type": "object",
            "required": ["type", "lattice", "coefficients"],
            "properties": {"type": {"const": "equilibrium"}, "lattice": _lattice, "coefficients": _numbers},
            "additionalProperties": False,
        },
        {
            "type": "object",
            "required": ["type", "weights", "modes"],
            "properties": {
                "type": {"const": "modes"},
                "weights": {"type": "array", "items": {"type": "number", "minimum": 0}},
                "modes": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["lattice", "coefficients"],
                        "properties": {"lattice": _lattice, "coefficients": _numbers},
                    },
                },
            },
            "additionalProperties": False,
        },
        {
            "type": "object",
            "required": ["type", "amplitude", "width"],
            "properties": {
                "type": {"const": "bump"},
                "amplitude": {"type": "number"},
                "width": {"type": "number", "exclusiveMinimum": 0},
                "center": _numbers,
                "momentum": _numbers,
            },
            "additionalProperties": False,
        },
        {
            "type": "object",
            "required": ["type", "path"],
            "properties": {"type": {"const": "file"}, "path": {"type": "string"}},
            "additionalProperties": False,
        },
    ]
}

RUN_SCHEMA = {
    "type": "object",
    "required": ["experiment"],
    "properties": {
        "experiment": {"enum": list(EXPERIMENTS)},
        "grid": schema.GRID_SCHEMA,
        "initial": INITIAL_SCHEMA,
        "evolution": {
            "type": "object",
            "properties": {
                "sign": {"enum": [1, -1]},
                "dt": {"type": "number", "exclusiveMinimum": 0},
                "t_end": {"type": "number", "minimum": 0},
                "dt_min": {"type": "number", "exclusiveMinimum": 0},
                "h1_ceiling": {"type": "number", "exclusiveMinimum": 0},
                "h1_ceiling_factor": {"type": "number", "exclusiveMinimum": 1},
                "record_every": {"type": "integer", "minimum": 1},
                "energy_tol": {"type": "number", "exclusiveMinimum": 0},
                "dealias": {"type": "boolean"},
            },
            "additionalProperties": False,
        },
        "ensemble": {
            "type": "object",
            "properties": {
                "method": {"enum": ["modes", "monte-carlo"]},
                "J": {"type": "integer", "minimum": 1},
            },
            "additionalProperties": False,
        },
        "seed": {"type": "integer", "minimum": 0},
        "stream_id": {"type": "integer", "minimum": 0},
        "output_dir": {"type": "string"},
        "snapshots": {"type": "boolean"},
        "plots": {"type": "boolean"},
        "k_cut": {"type": "integer", "minimum": 0},
        "nmax": {"type": "integer", "minimum": 0, "maximum": 32},
        "dt_levels": {"type": "integer", "minimum": 2},
        "perturbation": {
            "type": "object",
            "properties": {
                "epsilon": {"type": "number", "minimum": 0},
                "extra": {"type": "integer", "minimum": 0},
                "k_max": {"type": "integer", "minimum": 0},
            },
            "additionalProperties": False,
        },
        "operator_dt": {"type": "number", "exclusiveMinimum": 0},
        "operator_k_cut": {"type": "integer", "minimum": 1},
        "probe_times": _numbers,
    },
    "additionalProperties": False,
}

_NEEDS_GRID = {"simulate", "equilibrium-check", "perturbed", "blowup", "operator-compare", "scattering-probe"}


@dataclass
class RunConfig:
    raw: dict
    experiment: str
    grid: TorusGrid | None
    seed: int = 0
    stream_id: int = 0
    output_dir: Path = Path("out")
    evolution: dict = field(default_factory=dict)
    base_dir: Path = Path(".")

    def get(self, key, default=None):
        return self.raw.get(key, default)


def parse_config(raw: dict, base_dir: Path | str = ".") -> RunConfig:
    try:
        jsonschema.validate(raw, RUN_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"invalid configuration: {exc.message}") from None
    exp = raw["experiment"]
    grid = None
    if "grid" in raw:
        try:
            grid = TorusGrid.from_dict(raw["grid"])
        except GridError as exc:
            raise ConfigError(str(exc)) from None
    if exp in _NEEDS_GRID and grid is None:
        raise ConfigError(f"experiment {exp!r} needs a grid")
    if exp in _NEEDS_GRID and "initial" not in raw:
        raise ConfigError(f"experiment {exp!r} needs initial data")
    if exp == "equilibrium-check" and raw["initial"]["type"] != "equilibrium":
        raise ConfigError("equilibrium-check needs equilibrium initial data")
    if exp == "perturbed" and raw["initial"]["type"] != "equilibrium":
        raise ConfigError("perturbed needs an equilibrium as background")
    ev = dict(raw.get("evolution", {}))
    if "h1_ceiling" in ev and "h1_ceiling_factor" in ev:
        raise ConfigError("give either h1_ceiling or h1_ceiling_factor, not both")
    if ev.get("dt_min", 0) >= ev.get("dt", math.inf):
        raise ConfigError("dt_min must be smaller than dt")
    return RunConfig(
        raw=raw,
        experiment=exp,
        grid=grid,
        seed=int(raw.get("seed", 0)),
        stream_id=int(raw.get("stream_id", 0)),
        output_dir=Path(raw.get("output_dir", "out")),
        evolution=ev,
        base_dir=Path(base_dir),
    )


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    return parse_config(raw, path.parent)


# --- initial data ---------------------------------------------------------

def _fourier_sum(grid: TorusGrid, lattice, coefficients) -> np.ndarray:
    """Field with coefficient c_n on e^{ikx}/sqrt(vol) for each lattice vector n."""
    lat = np.asarray(lattice, dtype=int).reshape(-1, grid.dim)
    c = schema.deinterleave(coefficients)
    if c.size != lat.shape[0]:
        raise ConfigError("lattice and coefficients differ in length")
    if lat.size and np.abs(lat).max() >= grid.nyquist:
        raise ConfigError("mode lattice reaches the Nyquist row")
    coeffs = np.zeros(grid.shape, dtype=complex)
    for n, cn in zip(lat, c):
        coeffs[grid.lattice_slot(n)] += cn
    return backward(grid, coeffs)


def equilibrium_spec(cfg: RunConfig) -> EquilibriumSpec:
    init = cfg.raw["initial"]
    lat = np.asarray(init["lattice"], dtype=int).reshape(-1, cfg.grid.dim)
    try:
        return EquilibriumSpec(cfg.grid, lat, schema.deinterleave(init["coefficients"]))
    except (GridError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def bump(grid: TorusGrid, amplitude: float, width: float, center=None, momentum=None) -> np.ndarray:
    """amplitude * exp(-|x-c|^2 / (2 width^2)) * exp(i p.x), periodically wrapped."""
    from .diagnostics import displacement

    d = displacement(grid, center)
    r2 = sum(di**2 for di in d)
    u = amplitude * np.exp(-r2 / (2 * width**2)) * np.ones(grid.shape)
    if momentum is not None:
        u = u * np.exp(1j * sum(p * di for p, di in zip(momentum, d)))
    return u.astype(complex)


def initial_modes(cfg: RunConfig) -> ModeEnsemble:
    from .equilibria import build_equilibrium

    init = cfg.raw["initial"]
    kind = init["type"]
    grid = cfg.grid
    try:
        if kind == "equilibrium":
            return build_equilibrium(equilibrium_spec(cfg))
        if kind == "modes":
            if len(init["weights"]) != len(init["modes"]):
                raise ConfigError("weights and modes differ in length")
            modes = np.array([_fourier_sum(grid, m["lattice"], m["coefficients"]) for m in init["modes"]])
            return ModeEnsemble(grid, init["weights"], modes.reshape((-1,) + grid.shape))
        if kind == "bump":
            u = bump(grid, init["amplitude"], init["width"], init.get("center"), init.get("momentum"))
            return ModeEnsemble(grid, [1.0], u[None])
        path = Path(init["path"])
        if not path.is_absolute():
            path = cfg.base_dir / path
        if not path.exists():
            raise ConfigError(f"initial data file {path} does not exist")
        ens = schema.load(path)
        if not isinstance(ens, ModeEnsemble):
            raise ConfigError("initial data file must hold a mode ensemble")
        if ens.grid != grid:
            raise ConfigError(f"initial data grid {ens.grid.describe()} does not match run grid {grid.describe()}")
        return ens
    except GridError as exc:
        raise ConfigError(str(exc)) from None


def initial_state(cfg: RunConfig):
    modes = initial_modes(cfg)
    ens = cfg.raw.get("ensemble", {})
    if ens.get("method", "modes") == "monte-carlo":
        return sample_gaussian(modes, int(ens.get("J", 1000)), cfg.seed, cfg.stream_id)
    return modes
