"""Time stepping for the nonlocal tumour model ``mu = L_eps phi + Psi'(phi)``.

Two schemes share the nutrient update of the local solver:

``stabilized``
    ``L_eps`` explicit, balanced by ``S_eps * (phi+ - phi)`` with
    ``S_eps >= max a_eps + C3``; a single cosine-space solve per step.
    Energy stable, but the splitting error scales with ``S_eps * dt`` and
    ``S_eps ~ eps**-2``.

``implicit``
    ``L_eps`` implicit, only ``Psi'`` explicit with ``S >= C3``:

        phi+ - phi = dt * Lap(L_eps phi+ + Psi'(phi) + S (phi+ - phi)) + dt * r(phi, sigma)

    On mean-free functions this is the symmetric positive definite system
    ``[(-Lap)^-1 + dt (L_eps + S)] u = (-Lap)^-1 b``, solved by conjugate
    gradients preconditioned with the cosine-diagonal reflected-kernel operator.
    This is the local scheme with ``-Lap_h`` swapped for ``L_eps``, so both
    share their time-discretisation error structure.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from .errors import ConfigError, GridMismatchError, SolverAbort
from .grid import Field, check_same_grid, spectral_plan
from .nonlocal_operator import NonlocalOperator
from .physics import ModelParams, reaction_phi_array
from .solver_local import (
    SIGMA_TOL,
    SolverConfig,
    Trajectory,
    abort_if_nonfinite,
    check_initial_sigma,
    check_positivity_gate,
    sigma_update,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class NonlocalState:
    t: float
    phi: Field
    mu: Field
    sigma: Field
    epsilon: float

    def check_invariants(self, tol: float = SIGMA_TOL):
        s = self.sigma.values
        if s.min() < -tol or s.max() > 1.0 + tol:
            raise SolverAbort(
                f"nutrient left [0, 1]: range [{s.min():.3e}, {s.max():.3e}]",
                time=self.t,
                max_phi=float(np.abs(self.phi.values).max()),
            )


def default_stabilization(op: NonlocalOperator, params: ModelParams, scheme: str) -> float:
    if scheme == "stabilized":
        return op.max_a_eps + params.potential.c3
    return params.potential.c3


def resolve_stabilization(op, params, cfg: SolverConfig) -> float:
    S = cfg.stabilization if cfg.stabilization is not None else default_stabilization(op, params, cfg.scheme)
    need = default_stabilization(op, params, cfg.scheme)
    if S < need:
        raise ConfigError(
            f"{cfg.scheme} scheme needs stabilization >= {need:.6g}, got {S:.6g}", field="stabilization"
        )
    return S


def initial_nonlocal_potential(phi: Field, op: NonlocalOperator, params: ModelParams) -> Field:
    return Field(phi.grid, op.apply_array(phi.values) + params.potential.dpsi(phi.values))


class _ImplicitSolver:
    """Inner linear solve of the implicit scheme for fixed ``dt`` and ``S``."""

    def __init__(self, op: NonlocalOperator, dt: float, S: float, tol: float):
        self.op = op
        self.plan = spectral_plan(op.grid)
        self.dt, self.S, self.tol = dt, S, tol
        lam = self.plan.lam
        nz = lam > 0
        self._inv_lam = np.where(nz, 1.0 / np.where(nz, lam, 1.0), 0.0)
        prec = np.zeros_like(lam)
        # inverse of (1/lam + dt*(symbol + S)) on nonzero modes
        prec[nz] = lam[nz] / (1.0 + dt * lam[nz] * (op.neumann_symbol()[nz] + S))
        self._prec = prec
        self._shape = op.grid.shape
        n = op.grid.size
        self._A = LinearOperator((n, n), matvec=self._matvec, dtype=float)
        self._M = LinearOperator((n, n), matvec=self._precond, dtype=float)
        self.iterations = []

    def _matvec(self, x):
        # x holds cosine coefficients of a mean-free u (zero-mode entry ignored)
        u_hat = x.reshape(self._shape).copy()
        u_hat.flat[0] = 0.0
        u = self.plan.inverse(u_hat)
        w = self.op.apply_array(u) + self.S * u
        out = self._inv_lam * u_hat + self.dt * self.plan.forward(w)
        out.flat[0] = 0.0
        return out.ravel()

    def _precond(self, r):
        return (self._prec * r.reshape(self._shape)).ravel()

    def solve(self, b: np.ndarray, guess: np.ndarray) -> np.ndarray:
        b_hat = self.plan.forward(b)
        m_hat = b_hat.flat[0]
        rhs = self._inv_lam * b_hat
        x0 = self.plan.forward(guess)
        x0.flat[0] = 0.0
        count = [0]

        def tick(_):
            count[0] += 1

        sol, info = cg(
            self._A, rhs.ravel(), x0=x0.ravel(), rtol=self.tol, atol=0.0, M=self._M,
            maxiter=2000, callback=tick,
        )
        if info != 0:
            raise SolverAbort(f"inner CG did not converge (info={info})", time=None, max_phi=None)
        self.iterations.append(count[0])
        u_hat = sol.reshape(self._shape)
        u_hat.flat[0] = m_hat
        return self.plan.inverse(u_hat)


class NonlocalStepper:
    """Reusable stepping machinery for one operator, parameter set and config."""

    def __init__(self, op: NonlocalOperator, params: ModelParams, cfg: SolverConfig):
        check_positivity_gate(cfg, params)
        self.op, self.params, self.cfg = op, params, cfg
        self.plan = spectral_plan(op.grid)
        self.S = resolve_stabilization(op, params, cfg)
        self._implicit = (
            _ImplicitSolver(op, cfg.dt, self.S, cfg.cg_tol) if cfg.scheme == "implicit" else None
        )

    @property
    def cg_iterations(self) -> list:
        return self._implicit.iterations if self._implicit is not None else []

    def arrays(self, phi, sigma, t):
        p, plan, dt, S = self.params, self.plan, self.cfg.dt, self.S
        dpsi = p.potential.dpsi(phi)
        react = dt * reaction_phi_array(p, phi, sigma)
        if self._implicit is None:
            mu_tilde = self.op.apply_array(phi) + dpsi
            rhs = phi + dt * plan.laplacian(mu_tilde - S * phi) + react
            phi_new = plan.helmholtz(1.0, dt * S, 0.0, rhs)
        else:
            rhs = phi + dt * plan.laplacian(dpsi - S * phi) + react
            phi_new = self._implicit.solve(rhs, phi)
        mu_new = self.op.apply_array(phi_new) + p.potential.dpsi(phi_new)
        sigma_new = sigma_update(plan, phi, sigma, p.sigma_s_values(t, plan.grid), p, dt)
        return phi_new, mu_new, sigma_new


def _check_grid(state_grid, op: NonlocalOperator):
    if state_grid != op.grid:
        raise GridMismatchError(f"state on {state_grid.points}, operator on {op.grid.points}")


def step_nonlocal(
    state: NonlocalState, op: NonlocalOperator, params: ModelParams, cfg: SolverConfig
) -> NonlocalState:
    """Advance the nonlocal system by one step of ``cfg.dt``.

    Builds the stepper on every call; use :func:`run_nonlocal` for long runs.
    """
    grid = check_same_grid(state.phi, state.mu, state.sigma)
    _check_grid(grid, op)
    stepper = NonlocalStepper(op, params, cfg)
    try:
        phi, mu, sigma = stepper.arrays(state.phi.values, state.sigma.values, state.t)
    except SolverAbort as exc:
        raise SolverAbort(str(exc), time=state.t, max_phi=float(np.abs(state.phi.values).max())) from exc
    t = state.t + cfg.dt
    abort_if_nonfinite(t, phi, mu, sigma)
    return NonlocalState(t, Field(grid, phi), Field(grid, mu), Field(grid, sigma), op.epsilon)


def run_nonlocal(
    initial: NonlocalState, op: NonlocalOperator, params: ModelParams, cfg: SolverConfig
) -> Trajectory:
    """Integrate to ``cfg.t_end``; snapshot times follow ``cfg.time_at``."""
    grid = check_same_grid(initial.phi, initial.mu, initial.sigma)
    _check_grid(grid, op)
    check_initial_sigma(initial.sigma)
    stepper = NonlocalStepper(op, params, cfg)
    margin = float(op.kernel.a_eps.values.min()) - params.potential.c3
    if margin <= 0:
        warnings.warn(
            f"min a_eps - C3 = {margin:.3g} <= 0 at eps={op.epsilon}: outside the well-posed range",
            RuntimeWarning,
            stacklevel=2,
        )
    snaps = set(cfg.snapshot_steps())
    phi, sigma = initial.phi.values, initial.sigma.values
    traj = Trajectory(
        info={
            "solver": "nonlocal",
            "scheme": cfg.scheme,
            "epsilon": op.epsilon,
            "dt": cfg.dt,
            "stabilization": stepper.S,
            "steps": cfg.n_steps,
            "min_a_eps_minus_c3": margin,
        }
    )
    traj.states.append(NonlocalState(cfg.time_at(0), initial.phi, initial.mu, initial.sigma, op.epsilon))
    # sigma range over every step, not only snapshots
    sig_lo, sig_hi = float(sigma.min()), float(sigma.max())
    for step in range(1, cfg.n_steps + 1):
        t_prev = cfg.time_at(step - 1)
        try:
            phi_new, mu, sigma = stepper.arrays(phi, sigma, t_prev)
        except SolverAbort as exc:
            raise SolverAbort(str(exc), time=t_prev, max_phi=float(np.abs(phi).max())) from exc
        phi = phi_new
        t = cfg.time_at(step)
        abort_if_nonfinite(t, phi, mu, sigma)
        sig_lo, sig_hi = min(sig_lo, float(sigma.min())), max(sig_hi, float(sigma.max()))
        if step in snaps:
            state = NonlocalState(t, Field(grid, phi), Field(grid, mu), Field(grid, sigma), op.epsilon)
            state.check_invariants()
            traj.states.append(state)
    if stepper.cg_iterations:
        its = stepper.cg_iterations
        traj.info["cg_iterations_mean"] = float(np.mean(its))
        traj.info["cg_iterations_max"] = int(max(its))
    log.info("nonlocal run eps=%g done: %s", op.epsilon, traj.info)
    traj.info["sigma_min"], traj.info["sigma_max"] = sig_lo, sig_hi
    return traj


def nonlocal_energy(phi: Field, op: NonlocalOperator, params: ModelParams) -> float:
    """``int Psi(phi) + E_eps(phi)``."""
    return op.energy(phi) + float(params.potential.psi(phi.values).sum() * phi.grid.cell_volume)
