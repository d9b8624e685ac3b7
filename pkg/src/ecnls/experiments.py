"""One orchestration function per experiment kind.

Each ``run_*`` function fills a :class:`RunResult` in place, so whatever was
computed before a numerical failure can still be written out by the caller.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import diagnostics as diag
from .config import ConfigError, RunConfig, equilibrium_spec, initial_modes, initial_state
from .dynamics import EvolutionConfig, evolve, evolve_perturbed, strang_step
from .ensembles import (
    ModeEnsemble,
    complex_normal,
    covariance_from_modes,
    default_k_cut,
    density,
    lattice_basis,
    make_rng,
)
from .equilibria import build_equilibrium, support_limit
from .operator import OperatorState, bures_wasserstein, evolve_operator, frobenius
from .spectral import backward
from .sphere import fibonacci_sample, lemma_report


# mass fraction allowed outside the ball where the virial weight is exactly |x|^2 (99.9% inside)
SUPPORT_TOL = 1e-3


@dataclass
class RunResult:
    records: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    reports: dict = field(default_factory=dict)  # file name -> JSON-able payload
    snapshots: list = field(default_factory=list)  # (label, ModeEnsemble)


def evolution_config(cfg: RunConfig, state=None, **overrides) -> EvolutionConfig:
    ev = {**cfg.evolution, **overrides}
    factor = ev.pop("h1_ceiling_factor", None)
    if factor is not None:
        if state is None:
            raise ConfigError("h1_ceiling_factor needs an initial state")
        ev["h1_ceiling"] = factor * math.sqrt(diag.h1_sq(state))
    out = EvolutionConfig(**ev)
    try:
        out.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if state is not None and math.isfinite(out.h1_ceiling) and not out.h1_ceiling > math.sqrt(diag.h1_sq(state)):
        raise ConfigError("h1_ceiling must exceed the initial H^1 norm")
    return out


def _rel_drift(values) -> float:
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return 0.0
    return float(np.max(np.abs(v - v[0])) / max(abs(v[0]), 1e-300))


def _fit_slope(x, y) -> float:
    x, y = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    return float(np.polyfit(x, y, 1)[0])


def _trajectory_summary(traj) -> dict:
    return {
        "termination": traj.termination,
        "t_stop": traj.t_stop,
        "steps": traj.steps,
        "dt_final": traj.dt_final,
        "mass_drift": _rel_drift(traj.column("mass")),
        "energy_drift": _rel_drift(traj.column("energy")),
    }


def _virial_hook(sign: int):
    def hook(t, state):
        return {
            "virial": diag.virial(state),
            "virial_rate": diag.virial_rate(state),
            "kinetic": diag.kinetic(state),
            "support_ok": diag.support_fraction(state) > 1 - SUPPORT_TOL,
        }
    return hook


def _keep_final(result: RunResult, cfg: RunConfig, traj, label="final") -> None:
    if cfg.get("snapshots", False) and isinstance(traj.final, ModeEnsemble):
        result.snapshots.append((label, traj.final))


# --- simulate -------------------------------------------------------------

def run_simulate(cfg: RunConfig, result: RunResult) -> None:
    state = initial_state(cfg)
    ecfg = evolution_config(cfg, state)
    result.summary["initial_energy"] = diag.energy(state, ecfg.sign, ecfg.dealias)
    traj = evolve(state, ecfg, hooks=[_virial_hook(ecfg.sign)])
    result.records = traj.records
    s = _trajectory_summary(traj)
    result.summary.update(s)
    result.summary["invariants"] = {
        "mass_conserved": s["mass_drift"] < 1e-10,
        "energy_conserved": s["energy_drift"] < 1e-6,
    }
    _keep_final(result, cfg, traj)
    if traj.termination == "dt_underflow":
        raise_numerical(traj, 0.0)


# --- equilibrium-check ----------------------------------------------------

def phase_error(spec, members: np.ndarray, initial: np.ndarray, t: float) -> float:
    """max over modes of ||u_n(t) - u_n(0) e^{-it(|k|^2+m)}|| / ||u_n(0)||."""
    expect = initial * np.exp(-1j * t * (spec.k2 + spec.m)).reshape((-1,) + (1,) * spec.grid.dim)
    axes = tuple(range(1, members.ndim))
    num = np.sqrt(np.sum(np.abs(members - expect) ** 2, axis=axes))
    den = np.sqrt(np.sum(np.abs(initial) ** 2, axis=axes))
    return float(np.max(num / den))


def run_equilibrium_check(cfg: RunConfig, result: RunResult) -> None:
    spec = equilibrium_spec(cfg)
    ens = build_equilibrium(spec)
    base = evolution_config(cfg, ens, sign=1)
    m = spec.m

    def density_hook(t, state):
        rho = density(state)
        return {"density_drift": float(np.max(np.abs(rho - m)) / max(m, 1e-300))}

    levels = int(cfg.get("dt_levels", 4))
    dts, errors, drifts = [], [], []
    for i in range(levels):
        ecfg = EvolutionConfig(**{**base.__dict__, "dt": base.dt / 2**i,
                                  "record_every": base.record_every * 2**i})
        traj = evolve(ens, ecfg, hooks=[density_hook])
        if i == 0:
            result.records = traj.records
            result.summary.update(_trajectory_summary(traj))
            _keep_final(result, cfg, traj)
        dts.append(ecfg.dt)
        errors.append(phase_error(spec, traj.final.members, ens.members, traj.t_stop))
        drifts.append(max(r.density_drift for r in traj.records))
    positive = all(e > 0 for e in errors)
    slope = _fit_slope(dts, errors) if positive else float("nan")
    result.summary.update({
        "m": m,
        "m2": spec.m2,
        "dt_levels": dts,
        "phase_errors": errors,
        "phase_error_slope": slope,
        "density_drift": max(drifts),
    })
    result.summary["invariants"] = {
        "density_constant": max(drifts) < 1e-6,
        "phase_slope_2": bool(abs(slope - 2.0) <= 0.1),
    }


# --- perturbed ------------------------------------------------------------

def random_perturbation(spec, n_columns: int, epsilon: float, k_max: int, rng) -> np.ndarray:
    """Smooth random columns with coefficients on max|n_i| <= k_max, total H^0 size ~ epsilon."""
    grid = spec.grid
    lat = lattice_basis(grid.dim, k_max)
    c = complex_normal(rng, (n_columns, lat.shape[0])) * epsilon / math.sqrt(n_columns * lat.shape[0])
    coeffs = np.zeros((n_columns,) + grid.shape, dtype=complex)
    slots = tuple(lat[:, ax] % grid.points_per_dim for ax in range(grid.dim))
    coeffs[(slice(None),) + slots] = c
    return backward(grid, coeffs)


def perturbed_checks(records, m: float) -> dict:
    """Pointwise-in-time checks of the D bound and the modified-energy lower bound."""
    A = np.array([r.A for r in records])
    B = np.array([r.B for r in records])
    D = np.array([r.D for r in records])
    E = np.array([r.E for r in records])
    modE = np.array([r.modE for r in records])
    bound = math.sqrt(m) * np.sqrt(B) * np.sqrt(E)
    lower = A + 0.5 * B
    return {
        "d_bound_ratio_max": float(np.max(np.abs(D) / np.maximum(bound, 1e-300))),
        "d_bound_literal": bool(np.all(np.abs(D) <= bound)),
        "d_bound_cauchy_schwarz": bool(np.all(np.abs(D) <= 2 * math.sqrt(2) * bound)),
        "modE_lower_bound": bool(np.all(modE >= lower)),
        "modE_margin_min": float(np.min(modE - lower)),
    }


def run_perturbed(cfg: RunConfig, result: RunResult) -> None:
    spec = equilibrium_spec(cfg)
    pert = cfg.get("perturbation", {})
    eps = float(pert.get("epsilon", 1e-2))
    extra = int(pert.get("extra", 2))
    k_max = int(pert.get("k_max", min(2, support_limit(spec.grid))))
    rng = make_rng(cfg.seed, cfg.stream_id)
    Z0 = random_perturbation(spec, spec.size + extra, eps, k_max, rng)
    ecfg = evolution_config(cfg, None, sign=1)
    traj = evolve_perturbed(Z0, spec, ecfg)
    result.records = traj.records
    result.summary.update(_trajectory_summary(traj))
    result.summary["energy_drift"] = _rel_drift(traj.column("energy"))
    z_norm = np.sqrt(traj.column("mass"))
    result.summary.update({
        "m": spec.m,
        "epsilon": eps,
        "z_norm_initial": float(z_norm[0]),
        "z_norm_max": float(z_norm.max()),
    })
    checks = perturbed_checks(traj.records, spec.m)
    result.summary.update(checks)
    result.summary["invariants"] = {
        "d_bound": checks["d_bound_literal"],
        "modE_lower_bound": checks["modE_lower_bound"],
    }
    _keep_final(result, cfg, traj, "final_Z")


# --- blowup ---------------------------------------------------------------

def virial_majorant_time(V0: float, V1: float, energy0: float) -> float | None:
    """First positive zero of V0 + V1 t + 8 E0 t^2, or None when E0 >= 0."""
    if energy0 >= 0:
        return None
    roots = np.roots([8 * energy0, V1, V0])
    pos = [r.real for r in roots if abs(r.imag) < 1e-14 and r.real > 0]
    return float(min(pos)) if pos else 0.0


def uniform_prefix(times, tol: float = 1e-9) -> int:
    """Length of the leading run of equally spaced times."""
    t = np.asarray(times, dtype=float)
    if t.size < 3:
        return t.size
    h = np.diff(t)
    ok = np.abs(h - h[0]) <= tol * h[0]
    return int(np.argmin(ok)) + 1 if not ok.all() else t.size


def run_blowup(cfg: RunConfig, result: RunResult) -> None:
    state = initial_state(cfg)
    overrides = {"sign": cfg.evolution.get("sign", -1)}
    if "h1_ceiling" not in cfg.evolution and "h1_ceiling_factor" not in cfg.evolution:
        overrides["h1_ceiling_factor"] = 10.0
    ecfg = evolution_config(cfg, state, **overrides)
    E0 = diag.energy(state, ecfg.sign, ecfg.dealias)
    V0, V1 = diag.virial(state), diag.virial_rate(state)
    T_star = virial_majorant_time(V0, V1, E0) if ecfg.sign < 0 else None
    result.summary.update({"energy0": E0, "V0": V0, "V1": V1, "T_majorant": T_star,
                           "h1_ceiling": ecfg.h1_ceiling})
    traj = evolve(state, ecfg, hooks=[_virial_hook(ecfg.sign)])
    result.records = traj.records
    result.summary.update(_trajectory_summary(traj))
    # early, uniformly sampled window with the density inside the virial ball
    recs = traj.records[:uniform_prefix(traj.times)]
    recs = [r for r in recs if r.t <= 0.5 * traj.t_stop]
    cut = next((i for i, r in enumerate(recs) if not r.support_ok), len(recs))
    recs = recs[:cut]
    if len(recs) >= 5:
        chk = diag.virial_second_derivative_check(
            [r.t for r in recs], [r.virial for r in recs],
            [diag_closed(r, ecfg.sign, state.grid.dim) for r in recs],
            E0, [r.support_ok for r in recs], ecfg.sign,
        )
        result.summary["virial_check"] = {
            "samples": len(recs), "residual": chk.residual, "max_excess": chk.max_excess,
            "bound_ok": chk.bound_ok, "support_ok": chk.support_ok,
        }
    if ecfg.sign < 0 and E0 < 0:
        ok = traj.blew_up and traj.t_stop < T_star
        result.summary["invariants"] = {"blow_up_before_majorant": bool(ok)}
    else:
        result.summary["invariants"] = {"criterion_applicable": False}
        result.summary["note"] = "negative-energy criterion not triggered; completion does not imply global existence"


def diag_closed(rec, sign: int, dim: int) -> float:
    """Closed-form V'' from a record carrying kinetic and density_L4."""
    return 8 * rec.kinetic + sign * 2 * dim * rec.density_L4


# --- sphere-lemma ---------------------------------------------------------

def run_sphere_lemma(cfg: RunConfig, result: RunResult) -> None:
    n_max = int(cfg.get("nmax", 8))
    rep = lemma_report(n_max, fibonacci_sample(600))
    result.reports["sphere_report.json"] = rep
    spread = max(r["spread_rel"] for r in rep["degrees"])
    mean_err = max(r["mean_rel_err"] for r in rep["degrees"])
    result.summary.update({
        "termination": "completed", "n_max": n_max, "max_spread": spread,
        "max_mean_err": mean_err, "gram_max_dev": rep["gram_max_dev"],
    })
    result.summary["invariants"] = {"constant_kernel": spread < 1e-9 and mean_err < 1e-9}


# --- operator-compare -----------------------------------------------------

def run_operator_compare(cfg: RunConfig, result: RunResult) -> None:
    modes = initial_modes(cfg)
    grid = modes.grid
    k_cut = int(cfg.get("k_cut", min(default_k_cut(grid), 5)))
    if k_cut > 8:
        raise ConfigError("operator-compare is limited to k_cut <= 8")
    k_op = int(cfg.get("operator_k_cut", default_k_cut(grid)))
    if not k_cut <= k_op < grid.nyquist:
        raise ConfigError(f"operator_k_cut must lie in [{k_cut}, {grid.nyquist - 1}]")
    ecfg = evolution_config(cfg, modes)
    dt_op = float(cfg.get("operator_dt", ecfg.dt))
    n_rec = max(int(round(ecfg.t_end / (ecfg.dt * ecfg.record_every))), 1)
    t_rec = ecfg.t_end / n_rec
    steps_ens = max(int(round(t_rec / ecfg.dt)), 1)
    steps_op = max(int(round(t_rec / dt_op)), 1)

    op = OperatorState(covariance_from_modes(modes, k_op))
    ens = modes
    curve = []

    def compare(t):
        c_ens = covariance_from_modes(ens, k_cut)
        c_op = op.cov.restrict(k_cut)
        curve.append({"t": t, "frobenius": frobenius(c_ens, c_op), "bures": bures_wasserstein(c_ens, c_op)})
        result.records.append(diag.DiagnosticsRecord(
            t=t, mass=diag.mass(ens), energy=diag.energy(ens, ecfg.sign, ecfg.dealias),
            h1_sq=diag.h1_sq(ens), density_L4=diag.density_L4(ens, ecfg.dealias),
        ))

    report = {"k_cut": k_cut, "operator_k_cut": k_op, "curve": curve}
    result.reports["compare.json"] = report
    compare(0.0)
    for i in range(1, n_rec + 1):
        for _ in range(steps_ens):
            ens = strang_step(ens, t_rec / steps_ens, ecfg.sign, ecfg.dealias)
        op = evolve_operator(op, t_rec / steps_op, steps_op, ecfg.sign)
        compare(i * t_rec)
    fro = [c["frobenius"] for c in curve]
    result.summary.update({
        "termination": "completed", "t_stop": curve[-1]["t"], "k_cut": k_cut,
        "operator_k_cut": k_op, "frobenius_max": max(fro), "frobenius_final": fro[-1],
        "bures_final": curve[-1]["bures"],
    })
    result.summary["invariants"] = {"paths_agree": fro[-1] < 1e-5}


# --- scattering-probe -----------------------------------------------------

def _march(state, ecfg: EvolutionConfig, checkpoints, hooks=None):
    """Evolve through sorted checkpoints, returning records and the states there."""
    records, states, t0 = [], {}, 0.0
    for tc in checkpoints:
        seg = EvolutionConfig(**{**ecfg.__dict__, "t_end": tc - t0})
        traj = evolve(state, seg, hooks)
        for r in traj.records[(1 if records else 0):]:
            r.t += t0
            records.append(r)
        if traj.termination != "completed":
            raise_numerical(traj, t0)
        state, t0 = traj.final, tc
        states[tc] = state
    return records, states


def raise_numerical(traj, t0: float):
    from .dynamics import IntegrationError

    raise IntegrationError(f"evolution stopped with {traj.termination}", t0 + (traj.t_stop or 0.0))


def run_scattering_probe(cfg: RunConfig, result: RunResult) -> None:
    state = initial_state(cfg)
    ecfg = evolution_config(cfg, state, sign=1)
    is_eq = cfg.raw["initial"]["type"] == "equilibrium"
    if is_eq:
        traj = evolve(state, ecfg)
        result.records = traj.records
        result.summary.update(_trajectory_summary(traj))
        t = traj.column("t")
        acc = diag.morawetz_accumulator(t, traj.column("density_L4"))
        rate = float(np.polyfit(t, acc, 1)[0]) if t.size > 1 else float("nan")
        m = equilibrium_spec(cfg).m
        target = m**2 * state.grid.volume
        result.summary.update({"morawetz_rate": rate, "morawetz_target": target,
                               "morawetz_final": float(acc[-1])})
        result.summary["invariants"] = {"linear_growth": bool(abs(rate - target) <= 0.01 * target)}
        return
    probes = sorted(cfg.get("probe_times", [1.0, 2.0, 4.0]))
    checkpoints = sorted({p for p in probes} | {2 * p for p in probes})
    records, states = _march(state, ecfg, checkpoints)
    values = []
    for p in probes:
        d = diag.h1_distance(diag.scattering_profile(states[p], p), diag.scattering_profile(states[2 * p], 2 * p))
        values.append(d)
        for r in records:
            if abs(r.t - 2 * p) < 1e-9 * max(1.0, p):
                r.scatter_cauchy = d
    result.records = records
    t = np.array([r.t for r in records])
    acc = diag.morawetz_accumulator(t, [r.density_L4 for r in records])
    result.summary.update({
        "termination": "completed", "t_stop": float(t[-1]),
        "mass_drift": _rel_drift([r.mass for r in records]),
        "energy_drift": _rel_drift([r.energy for r in records]),
        "probe_times": probes, "scatter_cauchy": values, "morawetz_final": float(acc[-1]),
    })
    result.summary["invariants"] = {"cauchy_decreasing": bool(np.all(np.diff(values) < 0))}


RUNNERS = {
    "simulate": run_simulate,
    "equilibrium-check": run_equilibrium_check,
    "perturbed": run_perturbed,
    "blowup": run_blowup,
    "sphere-lemma": run_sphere_lemma,
    "operator-compare": run_operator_compare,
    "scattering-probe": run_scattering_probe,
}


def run_experiment(cfg: RunConfig, result: RunResult | None = None) -> RunResult:
    result = RunResult() if result is None else result
    result.summary["experiment"] = cfg.experiment
    RUNNERS[cfg.experiment](cfg, result)
    return result
