"""Stabilised linearly implicit time stepping for the local tumour model.

One step of size ``dt`` with stabilisation ``S``:

1. ``(I + dt*Lap^2 - dt*S*Lap) phi+ = phi + dt*Lap(Psi'(phi) - S*phi) + dt*(P*sigma - A)*h(phi)``
2. ``mu+ = -Lap phi+ + Psi'(phi) + S*(phi+ - phi)``
3. ``(I + dt*B - dt*Lap) sigma+ = sigma + dt*B*sigma_s - dt*C*sigma*h(phi)``

All solves are diagonal in the cosine basis. With ``S >= max Psi''/2`` on the
range of ``phi`` the scheme is energy stable for the pure Cahn-Hilliard flow,
and with ``dt*C <= 1`` the nutrient stays in ``[0, 1]``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError, SolverAbort
from .grid import Field, Grid, SpectralPlan, check_same_grid, grad_norm_sq_array, spectral_plan
from .physics import ModelParams, reaction_phi_array

log = logging.getLogger(__name__)

SIGMA_TOL = 1e-6


@dataclass(frozen=True)
class SolverConfig:
    """Time stepping controls.

    Attributes:
        dt: step size; ``t_end / dt`` must be (numerically) an integer.
        t_end: final time.
        stabilization: ``S``; ``None`` picks the scheme's default.
        snapshot_stride: steps between stored snapshots.
        scheme: nonlocal scheme, ``"implicit"`` or ``"stabilized"`` (ignored by the local solver).
        cg_tol: relative tolerance of the inner solve of the implicit nonlocal scheme.
    """

    dt: float
    t_end: float
    stabilization: Optional[float] = None
    snapshot_stride: int = 1
    scheme: str = "implicit"
    cg_tol: float = 1e-10

    def __post_init__(self):
        if not (self.dt > 0 and np.isfinite(self.dt)):
            raise ConfigError(f"dt must be positive, got {self.dt}", field="dt")
        if not (self.t_end > 0 and np.isfinite(self.t_end)):
            raise ConfigError(f"t_end must be positive, got {self.t_end}", field="t_end")
        if int(self.snapshot_stride) != self.snapshot_stride or self.snapshot_stride < 1:
            raise ConfigError("snapshot_stride must be an integer >= 1", field="snapshot_stride")
        if self.scheme not in ("implicit", "stabilized"):
            raise ConfigError(f"unknown scheme {self.scheme!r}", field="scheme")
        n = round(self.t_end / self.dt)
        if n < 1 or abs(n * self.dt - self.t_end) > 1e-9 * self.t_end:
            raise ConfigError(f"t_end={self.t_end} is not a multiple of dt={self.dt}", field="dt")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))

    def time_at(self, step: int) -> float:
        # identical float for every run that hits the same fraction of t_end
        return self.t_end * (step / self.n_steps)

    def snapshot_steps(self) -> list[int]:
        steps = list(range(0, self.n_steps + 1, int(self.snapshot_stride)))
        if steps[-1] != self.n_steps:
            steps.append(self.n_steps)
        return steps


def check_positivity_gate(cfg: SolverConfig, params: ModelParams):
    if cfg.dt * params.C > 1.0:
        raise ConfigError(
            f"positivity gate violated: dt*C = {cfg.dt * params.C:g} > 1 "
            "(explicit consumption term would drive sigma negative)",
            field="dt",
        )


@dataclass(frozen=True)
class LocalState:
    t: float
    phi: Field
    mu: Field
    sigma: Field

    def check_invariants(self, tol: float = SIGMA_TOL):
        check_same_grid(self.phi, self.mu, self.sigma)
        s = self.sigma.values
        if s.min() < -tol or s.max() > 1.0 + tol:
            raise SolverAbort(
                f"nutrient left [0, 1]: range [{s.min():.3e}, {s.max():.3e}]",
                time=self.t,
                max_phi=float(np.abs(self.phi.values).max()),
            )


@dataclass
class Trajectory:
    """Snapshots of a run in time order."""

    states: list = field(default_factory=list)
    info: dict = field(default_factory=dict)

    @property
    def times(self) -> list[float]:
        return [s.t for s in self.states]

    def __len__(self):
        return len(self.states)

    def __getitem__(self, i):
        return self.states[i]

    def __iter__(self):
        return iter(self.states)


def initial_chemical_potential(phi: Field, params: ModelParams) -> Field:
    plan = spectral_plan(phi.grid)
    return Field(phi.grid, -plan.laplacian(phi.values) + params.potential.dpsi(phi.values))


def sigma_update(plan: SpectralPlan, phi, sigma, sigma_s, params: ModelParams, dt: float) -> np.ndarray:
    rhs = sigma + dt * params.B * sigma_s - dt * params.C * sigma * params.interp.h(phi)
    return plan.helmholtz(1.0 + dt * params.B, dt, 0.0, rhs)


def abort_if_nonfinite(t: float, *arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            phi = arrays[0]
            finite = phi[np.isfinite(phi)]
            max_phi = float(np.abs(finite).max()) if finite.size else float("nan")
            raise SolverAbort("non-finite values after step", time=t, max_phi=max_phi)


def default_local_stabilization(params: ModelParams) -> float:
    return params.potential.c3


def _local_arrays(plan, phi, sigma, t, params, dt, S):
    dpsi = params.potential.dpsi(phi)
    rhs = phi + dt * plan.laplacian(dpsi - S * phi) + dt * reaction_phi_array(params, phi, sigma)
    phi_new = plan.helmholtz(1.0, dt * S, dt, rhs)
    mu_new = -plan.laplacian(phi_new) + dpsi + S * (phi_new - phi)
    sigma_new = sigma_update(plan, phi, sigma, params.sigma_s_values(t, plan.grid), params, dt)
    return phi_new, mu_new, sigma_new


def step_local(state: LocalState, params: ModelParams, cfg: SolverConfig) -> LocalState:
    """Advance the local system by one step of ``cfg.dt``.

    Raises:
        SolverAbort: if the new state contains NaN or Inf.
    """
    grid = check_same_grid(state.phi, state.mu, state.sigma)
    check_positivity_gate(cfg, params)
    S = cfg.stabilization if cfg.stabilization is not None else default_local_stabilization(params)
    phi, mu, sigma = _local_arrays(
        spectral_plan(grid), state.phi.values, state.sigma.values, state.t, params, cfg.dt, S
    )
    t = state.t + cfg.dt
    abort_if_nonfinite(t, phi, mu, sigma)
    return LocalState(t, Field(grid, phi), Field(grid, mu), Field(grid, sigma))


def check_initial_sigma(sigma: Field):
    s = sigma.values
    if s.min() < 0.0 or s.max() > 1.0:
        raise ValueError(f"initial nutrient must lie in [0, 1], got [{s.min()}, {s.max()}]")


def run_local(initial: LocalState, params: ModelParams, cfg: SolverConfig) -> Trajectory:
    """Integrate from ``initial.t`` (taken as 0) to ``cfg.t_end``, storing snapshots."""
    grid: Grid = check_same_grid(initial.phi, initial.mu, initial.sigma)
    check_positivity_gate(cfg, params)
    check_initial_sigma(initial.sigma)
    S = cfg.stabilization if cfg.stabilization is not None else default_local_stabilization(params)
    if S < params.potential.c3:
        raise ConfigError(f"stabilization {S} below C3={params.potential.c3}", field="stabilization")
    plan = spectral_plan(grid)
    snaps = set(cfg.snapshot_steps())
    phi, mu, sigma = initial.phi.values, initial.mu.values, initial.sigma.values
    traj = Trajectory(info={"solver": "local", "dt": cfg.dt, "stabilization": S, "steps": cfg.n_steps})
    traj.states.append(LocalState(cfg.time_at(0), initial.phi, initial.mu, initial.sigma))
    # sigma range over every step, not only snapshots
    sig_lo, sig_hi = float(sigma.min()), float(sigma.max())
    for step in range(1, cfg.n_steps + 1):
        t_prev = cfg.time_at(step - 1)
        phi, mu, sigma = _local_arrays(plan, phi, sigma, t_prev, params, cfg.dt, S)
        t = cfg.time_at(step)
        abort_if_nonfinite(t, phi, mu, sigma)
        sig_lo, sig_hi = min(sig_lo, float(sigma.min())), max(sig_hi, float(sigma.max()))
        if step in snaps:
            state = LocalState(t, Field(grid, phi), Field(grid, mu), Field(grid, sigma))
            state.check_invariants()
            traj.states.append(state)
    traj.info["sigma_min"], traj.info["sigma_max"] = sig_lo, sig_hi
    return traj


def local_energy(phi: Field, params: ModelParams) -> float:
    """``int 1/2 |grad_h phi|^2 + Psi(phi)``."""
    grid = phi.grid
    return 0.5 * grad_norm_sq_array(phi.values, grid) + float(
        params.potential.psi(phi.values).sum() * grid.cell_volume
    )
