"""JSON documents for mode ensembles, covariance matrices and equilibria.

Complex arrays are stored as flat interleaved ``[re0, im0, re1, im1, ...]``
lists; mode coefficients are spectral (fft order, unitary normalization).
Python's float repr round-trips doubles exactly, so save/load is lossless.
"""
from __future__ import annotations

import json
from pathlib import Path

import jsonschema
import numpy as np

from .ensembles import CovarianceMatrix, ModeEnsemble
from .equilibria import EquilibriumSpec
from .spectral import TorusGrid

GRID_SCHEMA = {
    "type": "object",
    "required": ["dim", "points_per_dim"],
    "properties": {
        "dim": {"type": "integer", "enum": [1, 2, 3]},
        "points_per_dim": {"type": "integer", "minimum": 8},
        "period": {"type": "number", "exclusiveMinimum": 0},
    },
}

_interleaved = {"type": "array", "items": {"type": "number"}}

MODE_ENSEMBLE_SCHEMA = {
    "type": "object",
    "required": ["kind", "grid", "weights", "modes"],
    "properties": {
        "kind": {"const": "mode_ensemble"},
        "grid": GRID_SCHEMA,
        "weights": {"type": "array", "items": {"type": "number", "minimum": 0}},
        "modes": {"type": "array", "items": _interleaved},
    },
}

COVARIANCE_SCHEMA = {
    "type": "object",
    "required": ["kind", "grid", "basis", "entries"],
    "properties": {
        "kind": {"const": "covariance"},
        "grid": GRID_SCHEMA,
        "basis": {"type": "array", "items": {"type": "array", "items": {"type": "integer"}}},
        "entries": _interleaved,
    },
}

EQUILIBRIUM_SCHEMA = {
    "type": "object",
    "required": ["kind", "grid", "lattice", "coefficients"],
    "properties": {
        "kind": {"const": "equilibrium"},
        "grid": GRID_SCHEMA,
        "lattice": {"type": "array", "items": {"type": "array", "items": {"type": "integer"}}},
        "coefficients": _interleaved,
        "m": {"type": "number"},
        "m2": {"type": "number"},
    },
}


def interleave(a: np.ndarray) -> list[float]:
    a = np.asarray(a, dtype=complex).ravel()
    out = np.empty(2 * a.size)
    out[0::2], out[1::2] = a.real, a.imag
    return out.tolist()


def deinterleave(v, shape=None) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.size % 2:
        raise ValueError("interleaved complex array has odd length")
    a = v[0::2] + 1j * v[1::2]
    return a if shape is None else a.reshape(shape)


def mode_ensemble_to_dict(e: ModeEnsemble) -> dict:
    c = e.coefficients()
    return {
        "kind": "mode_ensemble",
        "grid": e.grid.describe(),
        "weights": e.weights.tolist(),
        "modes": [interleave(ci) for ci in c],
    }


def mode_ensemble_from_dict(d: dict) -> ModeEnsemble:
    jsonschema.validate(d, MODE_ENSEMBLE_SCHEMA)
    grid = TorusGrid.from_dict(d["grid"])
    coeffs = np.array([deinterleave(m, grid.shape) for m in d["modes"]]).reshape((-1,) + grid.shape)
    return ModeEnsemble.from_coefficients(grid, d["weights"], coeffs)


def covariance_to_dict(c: CovarianceMatrix) -> dict:
    return {
        "kind": "covariance",
        "grid": c.grid.describe(),
        "basis": c.basis.tolist(),
        "entries": interleave(c.entries),
    }


def covariance_from_dict(d: dict) -> CovarianceMatrix:
    jsonschema.validate(d, COVARIANCE_SCHEMA)
    grid = TorusGrid.from_dict(d["grid"])
    K = len(d["basis"])
    return CovarianceMatrix(grid, np.array(d["basis"], dtype=int), deinterleave(d["entries"], (K, K)))


def equilibrium_to_dict(s: EquilibriumSpec) -> dict:
    return {
        "kind": "equilibrium",
        "grid": s.grid.describe(),
        "lattice": s.lattice.tolist(),
        "coefficients": interleave(s.coefficients),
        "m": s.m,
        "m2": s.m2,
    }


def equilibrium_from_dict(d: dict) -> EquilibriumSpec:
    jsonschema.validate(d, EQUILIBRIUM_SCHEMA)
    grid = TorusGrid.from_dict(d["grid"])
    lattice = np.array(d["lattice"], dtype=int).reshape(-1, grid.dim)
    return EquilibriumSpec(grid, lattice, deinterleave(d["coefficients"]), d.get("m"), d.get("m2"))


_LOADERS = {
    "mode_ensemble": mode_ensemble_from_dict,
    "covariance": covariance_from_dict,
    "equilibrium": equilibrium_from_dict,
}


def dump(obj, path) -> None:
    if isinstance(obj, ModeEnsemble):
        d = mode_ensemble_to_dict(obj)
    elif isinstance(obj, CovarianceMatrix):
        d = covariance_to_dict(obj)
    elif isinstance(obj, EquilibriumSpec):
        d = equilibrium_to_dict(obj)
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")
    Path(path).write_text(json.dumps(d))


def load(path):
    d = json.loads(Path(path).read_text())
    try:
        return _LOADERS[d.get("kind")](d)
    except KeyError:
        raise ValueError(f"unknown document kind {d.get('kind')!r}") from None
