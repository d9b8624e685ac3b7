"""Strang-split time integration of  i dX/dt = -Lap X + sign * E(|X|^2) X.

During the potential substep every member is multiplied by the same real
phase exp(-i sign rho tau), so |X|^2, and with it the density, is frozen:
the substep is solved exactly.  The linear substep is an exact Fourier
multiplier.  Both are unitary member by member.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import diagnostics as diag
from .ensembles import ModeEnsemble
from .equilibria import EquilibriumSpec, equilibrium_members
from .spectral import GridError, backward, forward, semigroup_symbol

log = logging.getLogger(__name__)


class IntegrationError(RuntimeError):
    def __init__(self, msg: str, t: float | None = None):
        super().__init__(msg if t is None else f"{msg} (t={t:.6g})")
        self.t = t
        self.trajectory = None  # partial Trajectory, when raised from evolve


@dataclass
class EvolutionConfig:
    sign: int = 1
    dt: float = 1e-3
    t_end: float = 1.0
    dt_min: float = 1e-7
    h1_ceiling: float = math.inf
    record_every: int = 1
    energy_tol: float | None = None  # per-step relative energy drift that triggers halving
    dealias: bool = True
    keep_snapshots: bool = False

    def validate(self) -> None:
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 (defocusing) or -1 (focusing)")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.t_end < 0:
            raise ValueError("t_end must be nonnegative")
        if not 0 < self.dt_min < self.dt:
            raise ValueError("need 0 < dt_min < dt")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")
        if not self.h1_ceiling > 0:
            raise ValueError("h1_ceiling must be positive")


@dataclass
class Trajectory:
    times: list = field(default_factory=list)
    records: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    termination: str = "completed"
    t_stop: float | None = None
    steps: int = 0
    dt_final: float | None = None
    final: object = field(default=None, repr=False)  # state at t_stop

    def snapshot_at(self, t: float, tol: float = 1e-9):
        if not self.snapshots:
            raise ValueError("trajectory holds no snapshots")
        i = int(np.argmin(np.abs(np.asarray(self.times) - t)))
        if abs(self.times[i] - t) > tol * max(1.0, abs(t)):
            raise ValueError(f"no snapshot recorded at t={t}")
        return self.snapshots[i]

    def column(self, name: str) -> np.ndarray:
        return np.array([np.nan if getattr(r, name) is None else getattr(r, name) for r in self.records])

    @property
    def blew_up(self) -> bool:
        return self.termination == "blow_up"


def _check_finite(members: np.ndarray, t: float | None) -> None:
    if not np.all(np.isfinite(members)):
        raise IntegrationError("non-finite values in state", t)


def _potential_phase(state, members: np.ndarray, tau: float, sign: int, dealias: bool) -> np.ndarray:
    rho = diag.potential_density(state.with_members(members), dealias)
    return members * np.exp(-1j * sign * tau * rho)


def strang_step(state, dt: float, sign: int = 1, dealias: bool = True, t: float | None = None):
    """One second-order step: half potential, full free flow, half potential."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    grid = state.grid
    u = state.members
    _check_finite(u, t)
    u = _potential_phase(state, u, dt / 2, sign, dealias)
    u = backward(grid, forward(grid, u) * semigroup_symbol(grid, dt))
    u = _potential_phase(state, u, dt / 2, sign, dealias)
    _check_finite(u, t)
    return state.with_members(u)


Hook = Callable[[float, object], dict]


def _record(t: float, state, cfg: EvolutionConfig, hooks) -> diag.DiagnosticsRecord:
    rec = diag.DiagnosticsRecord(
        t=t,
        mass=diag.mass(state),
        energy=diag.energy(state, cfg.sign, cfg.dealias),
        h1_sq=diag.h1_sq(state),
        density_L4=diag.density_L4(state, cfg.dealias),
    )
    for hook in hooks or ():
        for k, v in hook(t, state).items():
            setattr(rec, k, v)
    return rec


def _energy_scale(state, dealias: bool) -> float:
    return 0.5 * diag.h1_sq(state) + 0.25 * diag.density_L4(state, dealias)


def evolve(state, cfg: EvolutionConfig, hooks=None) -> Trajectory:
    """Integrate to ``cfg.t_end`` or stop on blow-up / step-size underflow.

    Blow-up is declared once the ensemble H^1 norm reaches ``h1_ceiling``.
    With ``energy_tol`` set, a step whose relative energy change exceeds the
    tolerance is retried with half the step; falling below ``dt_min``
    terminates with ``dt_underflow``.
    """
    cfg.validate()
    h1_0 = math.sqrt(diag.h1_sq(state))
    if math.isfinite(cfg.h1_ceiling) and not cfg.h1_ceiling > h1_0:
        raise ValueError(f"h1_ceiling {cfg.h1_ceiling} must exceed the initial H^1 norm {h1_0}")

    traj = Trajectory()
    t, n_acc, dt = 0.0, 0, cfg.dt

    def push(t, state):
        traj.times.append(t)
        traj.records.append(_record(t, state, cfg, hooks))
        if cfg.keep_snapshots:
            traj.snapshots.append(state)

    push(t, state)
    e_prev = diag.energy(state, cfg.sign, cfg.dealias) if cfg.energy_tol is not None else None
    eps = 1e-12 * max(1.0, cfg.t_end)
    while t < cfg.t_end - eps:
        h = min(dt, cfg.t_end - t)
        try:
            new = strang_step(state, h, cfg.sign, cfg.dealias, t)
        except IntegrationError as exc:
            # hand the records gathered so far to the caller
            traj.termination, traj.t_stop, traj.final = "numerical_failure", t, state
            exc.trajectory = traj
            raise
        if cfg.energy_tol is not None:
            e_new = diag.energy(new, cfg.sign, cfg.dealias)
            drift = abs(e_new - e_prev) / max(_energy_scale(new, cfg.dealias), 1e-300)
            if drift > cfg.energy_tol:
                dt = dt / 2
                if dt < cfg.dt_min:
                    traj.termination, traj.t_stop = "dt_underflow", t
                    log.info("dt underflow at t=%.6g", t)
                    break
                continue
            e_prev = e_new
        state, t, n_acc = new, t + h, n_acc + 1
        if math.isfinite(cfg.h1_ceiling) and math.sqrt(diag.h1_sq(state)) >= cfg.h1_ceiling:
            traj.termination, traj.t_stop = "blow_up", t
            push(t, state)
            log.info("H1 ceiling reached at t=%.6g", t)
            break
        if n_acc % cfg.record_every == 0 or t >= cfg.t_end - eps:
            push(t, state)
    traj.steps, traj.dt_final, traj.final = n_acc, dt, state
    if traj.termination == "completed":
        traj.t_stop = t
    return traj


# --- perturbation around an equilibrium -----------------------------------

def perturbed_members(Z0: np.ndarray, equilibrium: EquilibriumSpec) -> np.ndarray:
    """Stack Y(0) columns on top of zero rows for the extra coordinates and add Z0."""
    grid = equilibrium.grid
    Z0 = np.asarray(Z0, dtype=complex)
    if Z0.ndim == grid.dim:
        Z0 = Z0[None]
    if Z0.shape[1:] != grid.shape:
        raise GridError("Z0 columns do not fit the equilibrium grid")
    if Z0.shape[0] < equilibrium.size:
        raise GridError(
            f"Z0 has {Z0.shape[0]} noise coordinates, the equilibrium needs at least {equilibrium.size}"
        )
    y = np.zeros_like(Z0)
    y[: equilibrium.size] = equilibrium_members(equilibrium, 0.0)
    return y + Z0


def _y_columns(equilibrium: EquilibriumSpec, n: int, t: float) -> np.ndarray:
    y = np.zeros((n,) + equilibrium.grid.shape, dtype=complex)
    y[: equilibrium.size] = equilibrium_members(equilibrium, t)
    return y


def evolve_perturbed(Z0: np.ndarray, equilibrium: EquilibriumSpec, cfg: EvolutionConfig) -> Trajectory:
    """Evolve X = Y + Z through the noise-linear system and return the Z part.

    X = sum_j c_j g_j with unit-weight columns c_j; the combined system is
    stepped with ``strang_step`` and Z(t) = c(t) - y(t) uses the closed-form
    equilibrium columns.  Records carry the modified-energy terms.
    """
    cfg.validate()
    grid = equilibrium.grid
    c0 = perturbed_members(Z0, equilibrium)
    n = c0.shape[0]
    state = ModeEnsemble(grid, np.ones(n), c0)
    m = equilibrium.m

    def z_state(t, st):
        return st.with_members(st.members - _y_columns(equilibrium, n, t))

    traj = Trajectory()

    def push(t, st):
        zs = z_state(t, st)
        me = diag.modified_energy(grid, zs.members, _y_columns(equilibrium, n, t), m)
        rec = diag.DiagnosticsRecord(
            t=t, mass=diag.mass(zs), energy=diag.energy(st, cfg.sign, cfg.dealias),
            h1_sq=diag.h1_sq(zs), density_L4=diag.density_L4(zs, cfg.dealias),
            A=me.A, B=me.B, D=me.D, E=me.E, modE=me.total,
        )
        traj.times.append(t)
        traj.records.append(rec)
        if cfg.keep_snapshots:
            traj.snapshots.append(zs)

    t, k = 0.0, 0
    push(t, state)
    eps = 1e-12 * max(1.0, cfg.t_end)
    while t < cfg.t_end - eps:
        h = min(cfg.dt, cfg.t_end - t)
        state = strang_step(state, h, cfg.sign, cfg.dealias, t)
        t, k = t + h, k + 1
        if k % cfg.record_every == 0 or t >= cfg.t_end - eps:
            push(t, state)
    traj.steps, traj.t_stop, traj.dt_final = k, t, cfg.dt
    traj.final = z_state(t, state)
    return traj

