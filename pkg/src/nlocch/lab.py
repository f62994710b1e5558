"""Epsilon sweeps: nonlocal-vs-local error norms, operator residuals and rate fits."""

from __future__ import annotations

import logging
import math
import platform
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Optional, Sequence, Union

import numpy as np
from scipy.integrate import trapezoid

from .catalog import DEFAULT_OPERATOR_CATALOG, CosinePolynomial
from .errors import ConfigError, SolverAbort
from .grid import DualNormWorkspace, Field, Grid, dual_norm, grad_norm_sq_array, norm_l2
from .kernel import build_kernel, build_profile
from .nonlocal_operator import NonlocalOperator
from .physics import ModelParams
from .solver_local import LocalState, SolverConfig, Trajectory, initial_chemical_potential, run_local
from .solver_nonlocal import NonlocalState, initial_nonlocal_potential, run_nonlocal

log = logging.getLogger(__name__)

COLUMNS = (
    "eps",
    "phi_dual_sup",
    "phi_l2l2",
    "sigma_l2_sup",
    "grad_sigma_l2l2",
    "op_residual",
    "energy_gap",
    "min_aeps_eps2",
    "dt",
)
ERROR_COLUMNS = COLUMNS[1:7]
SOLUTION_COLUMNS = COLUMNS[1:5]


# ---------------------------------------------------------------- error norms


def error_functionals(local_traj: Trajectory, nonlocal_traj: Trajectory, ws: DualNormWorkspace) -> dict:
    """Sup-in-time and L2-in-time error norms between two trajectories.

    The time integrals use the trapezoidal rule over the snapshot times, which
    must agree exactly between the two runs.
    """
    t_loc, t_nl = local_traj.times, nonlocal_traj.times
    if t_loc != t_nl:
        raise ValueError("snapshot times differ between the local and nonlocal trajectories")
    dual, l2_phi, l2_sig, grad_sig = [], [], [], []
    for a, b in zip(local_traj, nonlocal_traj):
        dphi = b.phi - a.phi
        dsig = b.sigma - a.sigma
        dual.append(dual_norm(dphi, ws))
        l2_phi.append(norm_l2(dphi))
        l2_sig.append(norm_l2(dsig))
        grad_sig.append(math.sqrt(grad_norm_sq_array(dsig.values, dsig.grid)))

    def l2_in_time(vals):
        if len(vals) < 2:
            return 0.0
        return math.sqrt(trapezoid(np.square(vals), t_loc))

    return {
        "phi_dual_sup": max(dual),
        "phi_l2l2": l2_in_time(l2_phi),
        "sigma_l2_sup": max(l2_sig),
        "grad_sigma_l2l2": l2_in_time(grad_sig),
    }


# ------------------------------------------------------------------ rate fits


@dataclass(frozen=True)
class RateFit:
    """Least-squares power law ``error ~ prefactor * eps**slope``.

    ``residual`` is the root-mean-square deviation in log space; ``excluded``
    lists the epsilons whose error was at or below zero (below floor).
    """

    slope: float
    prefactor: float
    residual: float
    n_points: int
    excluded: tuple = ()

    @property
    def below_floor(self) -> bool:
        return bool(self.excluded)


def fit_rate(eps: Sequence[float], errors: Sequence[float]) -> RateFit:
    eps = np.asarray(eps, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if eps.shape != errors.shape or eps.size < 3:
        raise ValueError("need at least 3 (eps, error) pairs of matching length")
    keep = np.isfinite(errors) & (errors > 0)
    excluded = tuple(float(e) for e in eps[~keep])
    if keep.sum() < 2:
        return RateFit(float("nan"), float("nan"), float("nan"), int(keep.sum()), excluded)
    x, y = np.log(eps[keep]), np.log(errors[keep])
    A = np.column_stack([x, np.ones_like(x)])
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ np.array([slope, intercept])
    return RateFit(
        slope=float(slope),
        prefactor=float(np.exp(intercept)),
        residual=float(np.sqrt(np.mean(resid**2))),
        n_points=int(keep.sum()),
        excluded=excluded,
    )


# ------------------------------------------------------------- operator study


def operator_study(
    grid: Grid,
    epsilons: Sequence[float],
    catalog: Sequence[CosinePolynomial] = DEFAULT_OPERATOR_CATALOG,
    energy_probe: Optional[CosinePolynomial] = None,
) -> dict:
    """Residuals ``||L_eps c + Lap c||`` per catalog entry, energy gaps and kernel lower bounds."""
    profile = build_profile(grid.dim)
    energy_probe = energy_probe or CosinePolynomial.mode(1, *([0] * (grid.dim - 1)))
    target = energy_probe.dirichlet_energy(grid.extents)
    probe = energy_probe.field(grid)
    rows = []
    for eps in epsilons:
        op = NonlocalOperator(build_kernel(profile, eps, grid))
        rows.append(
            {
                "eps": float(eps),
                "residuals": [op.laplacian_residual(c) for c in catalog],
                "energy": op.energy(probe),
                "energy_gap": abs(op.energy(probe) - target),
                "min_aeps_eps2": op.kernel.min_a_eps_eps2,
                "kernel": op.kernel.metadata(),
            }
        )
    fits = [fit_rate(epsilons, [r["residuals"][i] for r in rows]) for i in range(len(catalog))]
    return {
        "catalog": [c.format() for c in catalog],
        "energy_probe": energy_probe.format(),
        "energy_target": target,
        "rows": rows,
        "fits": [asdict(f) for f in fits],
        "energy_gap_fit": asdict(fit_rate(epsilons, [r["energy_gap"] for r in rows])),
    }


# -------------------------------------------------------------------- sweeps


@dataclass(frozen=True)
class SweepPlan:
    """Everything needed to reproduce one epsilon sweep.

    ``nonlocal_cfg`` is a template: its ``dt`` is the base step, refined per
    epsilon to ``dt / m`` (m integer) whenever ``c_dt * eps**2`` is smaller,
    with the snapshot stride scaled by ``m`` so every run snapshots at the
    same times as the local reference.
    """

    epsilons: tuple
    grid: Grid
    params: ModelParams
    local_cfg: SolverConfig
    nonlocal_cfg: SolverConfig
    phi0: CosinePolynomial
    sigma0: Union[float, CosinePolynomial] = 0.8
    catalog: tuple = DEFAULT_OPERATOR_CATALOG
    energy_probe: Optional[CosinePolynomial] = None
    c_dt: Optional[float] = None
    phi0_shift: float = 0.0

    def __post_init__(self):
        eps = tuple(float(e) for e in self.epsilons)
        object.__setattr__(self, "epsilons", eps)
        object.__setattr__(self, "catalog", tuple(self.catalog))
        if len(eps) < 3:
            raise ConfigError("epsilons required: at least 3 values", field="sweep.epsilons")
        if any(e <= 0 for e in eps) or any(b >= a for a, b in zip(eps, eps[1:])):
            raise ConfigError("epsilons must be positive and strictly decreasing", field="sweep.epsilons")
        gate = 2.0 * max(self.grid.spacing)
        if eps[-1] < gate:
            raise ConfigError(
                f"smallest epsilon {eps[-1]} below resolution gate 2*max(spacing) = {gate}",
                field="sweep.epsilons",
            )
        if self.c_dt is not None and not self.c_dt > 0:
            raise ConfigError("c_dt must be positive", field="sweep.c_dt")
        ref = self._snapshot_times(self.local_cfg)
        for e in eps:
            if self._snapshot_times(self.nonlocal_cfg_for(e)) != ref:
                raise ConfigError(
                    "local and nonlocal runs must snapshot at identical times "
                    "(same t_end and t_end/(dt*stride))",
                    field="sweep.snapshot_stride",
                )

    @staticmethod
    def _snapshot_times(cfg: SolverConfig):
        return [cfg.time_at(s) for s in cfg.snapshot_steps()]

    def nonlocal_cfg_for(self, eps: float) -> SolverConfig:
        base = self.nonlocal_cfg
        m = 1
        if self.c_dt is not None:
            target = min(base.dt, self.c_dt * eps * eps)
            m = max(1, math.ceil(base.dt / target - 1e-9))
        return replace(base, dt=base.dt / m, snapshot_stride=base.snapshot_stride * m)

    def initial_phi(self, eps: Optional[float] = None) -> Field:
        vals = self.phi0.values(self.grid)
        if eps is not None and self.phi0_shift:
            vals = vals + self.phi0_shift * math.sqrt(eps)
        return Field(self.grid, vals)

    def initial_sigma(self) -> Field:
        if isinstance(self.sigma0, CosinePolynomial):
            return self.sigma0.field(self.grid)
        return Field.constant(self.grid, float(self.sigma0))


@dataclass
class ConvergenceReport:
    rows: list
    fits: dict
    flags: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def column(self, name: str) -> list:
        return [r[name] for r in self.rows]

    def slopes(self) -> dict:
        return {k: v.slope for k, v in self.fits.items()}

    def monotone(self, name: str) -> bool:
        vals = [v for v in self.column(name) if v is not None and np.isfinite(v)]
        return all(b <= a for a, b in zip(vals, vals[1:]))


def run_local_reference(plan: SweepPlan) -> Trajectory:
    phi0 = plan.initial_phi()
    state = LocalState(0.0, phi0, initial_chemical_potential(phi0, plan.params), plan.initial_sigma())
    return run_local(state, plan.params, plan.local_cfg)


def run_nonlocal_case(plan: SweepPlan, eps: float, op: Optional[NonlocalOperator] = None) -> tuple:
    if op is None:
        op = NonlocalOperator(build_kernel(build_profile(plan.grid.dim), eps, plan.grid))
    phi0 = plan.initial_phi(eps)
    state = NonlocalState(
        0.0, phi0, initial_nonlocal_potential(phi0, op, plan.params), plan.initial_sigma(), eps
    )
    return op, run_nonlocal(state, op, plan.params, plan.nonlocal_cfg_for(eps))


def _operator_columns(plan: SweepPlan, op: NonlocalOperator) -> dict:
    probe = plan.energy_probe or CosinePolynomial.mode(1, *([0] * (plan.grid.dim - 1)))
    residuals = [op.laplacian_residual(c) for c in plan.catalog]
    gap = abs(op.energy(probe.field(plan.grid)) - probe.dirichlet_energy(plan.grid.extents))
    return {
        "op_residual": residuals[0],
        "op_residuals": residuals,
        "energy_gap": gap,
        "min_aeps_eps2": op.kernel.min_a_eps_eps2,
    }


def sweep_row(plan: SweepPlan, eps: float, local_traj: Trajectory, ws: DualNormWorkspace) -> dict:
    """One report row; a solver abort yields a flagged row instead of an exception."""
    profile = build_profile(plan.grid.dim)
    cfg = plan.nonlocal_cfg_for(eps)
    row = {"eps": float(eps), "dt": cfg.dt}
    op = NonlocalOperator(build_kernel(profile, eps, plan.grid))
    row.update(_operator_columns(plan, op))
    try:
        _, traj = run_nonlocal_case(plan, eps, op)
    except SolverAbort as exc:
        log.error("eps=%g aborted: %s", eps, exc)
        row.update({k: None for k in SOLUTION_COLUMNS})
        row["aborted"] = str(exc)
        return row
    row.update(error_functionals(local_traj, traj, ws))
    row["run_info"] = traj.info
    return row


_WORKER: dict = {}


def _init_worker(plan, local_traj):
    _WORKER["plan"] = plan
    _WORKER["local"] = local_traj
    _WORKER["ws"] = DualNormWorkspace(plan.grid)


def _worker_row(eps):
    return sweep_row(_WORKER["plan"], eps, _WORKER["local"], _WORKER["ws"])


def temporal_preflight(plan: SweepPlan, local_traj: Trajectory, row: dict) -> dict:
    """Rerun the smallest-epsilon case with every time step halved.

    The change in each solution error column estimates how much time
    discretisation contaminates the measured epsilon error.
    """
    eps = plan.epsilons[-1]
    halve = lambda c: replace(c, dt=c.dt / 2, snapshot_stride=c.snapshot_stride * 2)  # noqa: E731
    fine = replace(plan, local_cfg=halve(plan.local_cfg), nonlocal_cfg=halve(plan.nonlocal_cfg))
    fine_row = sweep_row(fine, eps, run_local_reference(fine), DualNormWorkspace(plan.grid))
    out = {"eps": eps}
    for k in SOLUTION_COLUMNS:
        if row.get(k) is None or fine_row.get(k) is None:
            out[k] = None
            continue
        change = abs(row[k] - fine_row[k])
        out[k] = {"coarse": row[k], "fine": fine_row[k], "relative_change": change / row[k] if row[k] else math.inf}
    return out


def run_sweep(plan: SweepPlan, parallel: int = 1, preflight: bool = False) -> ConvergenceReport:
    """Local reference, one nonlocal run per epsilon, error rows and rate fits."""
    local_traj = run_local_reference(plan)
    if parallel > 1:
        with ProcessPoolExecutor(max_workers=parallel, initializer=_init_worker, initargs=(plan, local_traj)) as ex:
            rows = list(ex.map(_worker_row, plan.epsilons))
    else:
        ws = DualNormWorkspace(plan.grid)
        rows = [sweep_row(plan, e, local_traj, ws) for e in plan.epsilons]

    fits = {}
    for col in ERROR_COLUMNS:
        vals = [r.get(col) for r in rows]
        vals = [np.nan if v is None else v for v in vals]
        fits[col] = fit_rate(plan.epsilons, vals)
    report = ConvergenceReport(rows=rows, fits=fits)
    report.flags = {
        "aborted": [r["eps"] for r in rows if "aborted" in r],
        "non_monotone": [c for c in ERROR_COLUMNS if not report.monotone(c)],
        "below_floor": {c: list(f.excluded) for c, f in fits.items() if f.excluded},
    }
    report.metadata = {
        "local_run": local_traj.info,
        "snapshots": len(local_traj),
        "environment": {"python": platform.python_version(), "numpy": np.__version__},
    }
    if preflight:
        report.metadata["temporal_preflight"] = temporal_preflight(plan, local_traj, rows[-1])
    return report


def check_rates(report: ConvergenceReport, columns=SOLUTION_COLUMNS + ("op_residual",), threshold=0.45) -> dict:
    """Pass/fail per column: slope at least ``threshold`` and errors monotone in epsilon."""
    out = {}
    for c in columns:
        fit = report.fits[c]
        out[c] = bool(np.isfinite(fit.slope) and fit.slope >= threshold and report.monotone(c))
    return out


__all__ = [
    "COLUMNS",
    "ConvergenceReport",
    "RateFit",
    "SweepPlan",
    "check_rates",
    "error_functionals",
    "fit_rate",
    "operator_study",
    "run_sweep",
]
