import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nlocch.catalog import CosinePolynomial
from nlocch.errors import ConfigError
from nlocch.grid import DualNormWorkspace, Field, Grid
from nlocch.lab import (
    COLUMNS,
    SweepPlan,
    check_rates,
    error_functionals,
    fit_rate,
    operator_study,
    run_sweep,
)
from nlocch.physics import ModelParams
from nlocch.solver_local import LocalState, SolverConfig, Trajectory

from oracles import dense_dual_norm


def traj_from(grid, times, phis, sigmas):
    zero = Field.constant(grid, 0.0)
    return Trajectory([LocalState(t, Field(grid, p), zero, Field(grid, s)) for t, p, s in zip(times, phis, sigmas)])


def small_plan(**overrides):
    g = Grid.box(32)
    kw = dict(
        epsilons=(0.4, 0.2, 0.1),
        grid=g,
        params=ModelParams(),
        local_cfg=SolverConfig(dt=1e-3, t_end=0.02, snapshot_stride=2),
        nonlocal_cfg=SolverConfig(dt=1e-3, t_end=0.02, snapshot_stride=2),
        phi0=CosinePolynomial.mode(1, 1, amplitude=0.2),
    )
    kw.update(overrides)
    return SweepPlan(**kw)


class TestErrorFunctionals:
    def setup_method(self):
        self.g = Grid.box(8)
        self.ws = DualNormWorkspace(self.g)
        rng = np.random.default_rng(0)
        self.phis = [rng.standard_normal(self.g.shape) for _ in range(3)]
        self.sigs = [rng.uniform(0, 1, self.g.shape) for _ in range(3)]
        self.times = [0.0, 0.1, 0.25]

    def test_identical(self):
        a = traj_from(self.g, self.times, self.phis, self.sigs)
        errs = error_functionals(a, a, self.ws)
        assert all(v == 0.0 for v in errs.values())

    def test_constant_shift(self):
        a = traj_from(self.g, self.times, self.phis, self.sigs)
        b = traj_from(self.g, self.times, [p + 0.3 for p in self.phis], self.sigs)
        assert error_functionals(a, b, self.ws)["phi_dual_sup"] == pytest.approx(0.3, rel=1e-12)

    def test_two_snapshot_hand_oracle(self):
        g, ws = self.g, self.ws
        t = [0.0, 0.5]
        a = traj_from(g, t, self.phis[:2], self.sigs[:2])
        dphi = [np.full(g.shape, 0.1), CosinePolynomial.mode(1, 0).values(g)]
        dsig = [np.zeros(g.shape), 0.05 * CosinePolynomial.mode(0, 1).values(g)]
        b = traj_from(g, t, [p + d for p, d in zip(self.phis, dphi)], [s + d for s, d in zip(self.sigs, dsig)])
        errs = error_functionals(a, b, ws)
        h = 1 / 8
        dual = [dense_dual_norm(g, d) for d in dphi]
        l2 = [math.sqrt(np.sum(d * d) * h * h) for d in dphi]
        sl2 = [math.sqrt(np.sum(d * d) * h * h) for d in dsig]
        gs = []
        for d in dsig:
            dx = np.diff(d, axis=0, append=d[-1:, :]) / h
            dy = np.diff(d, axis=1, append=d[:, -1:]) / h
            gs.append(math.sqrt(np.sum(dx * dx + dy * dy) * h * h))
        assert errs["phi_dual_sup"] == pytest.approx(max(dual), abs=1e-10)
        assert errs["phi_l2l2"] == pytest.approx(math.sqrt(0.25 * (l2[0] ** 2 + l2[1] ** 2)), abs=1e-10)
        assert errs["sigma_l2_sup"] == pytest.approx(max(sl2), abs=1e-10)
        assert errs["grad_sigma_l2l2"] == pytest.approx(math.sqrt(0.25 * (gs[0] ** 2 + gs[1] ** 2)), abs=1e-10)

    def test_time_mismatch(self):
        a = traj_from(self.g, self.times, self.phis, self.sigs)
        b = traj_from(self.g, [0.0, 0.1, 0.25000000000000006], self.phis, self.sigs)
        with pytest.raises(ValueError, match="snapshot times"):
            error_functionals(a, b, self.ws)


class TestFitRate:
    eps = [0.2, 0.1, 0.05, 0.025]

    def test_exact_sqrt_law(self):
        fit = fit_rate(self.eps, [2 * e**0.5 for e in self.eps])
        assert fit.slope == pytest.approx(0.5, abs=1e-12)
        assert fit.prefactor == pytest.approx(2.0, rel=1e-12)
        assert fit.residual <= 1e-12

    def test_linear_law(self):
        assert fit_rate(self.eps, self.eps).slope == pytest.approx(1.0, abs=1e-12)

    def test_seeded_noise(self):
        rng = np.random.default_rng(2024)
        for _ in range(20):
            noisy = [3 * e**0.5 * (1 + 0.05 * rng.standard_normal()) for e in self.eps]
            assert abs(fit_rate(self.eps, noisy).slope - 0.5) <= 0.1

    def test_below_floor_excluded(self):
        fit = fit_rate(self.eps, [0.2, 0.1, 0.0, 0.025])
        assert fit.excluded == (0.05,)
        assert fit.below_floor
        assert fit.n_points == 3
        assert fit.slope == pytest.approx(1.0, abs=1e-12)

    def test_too_few_points(self):
        with pytest.raises(ValueError):
            fit_rate([0.1, 0.05], [1.0, 0.5])

    @settings(max_examples=50, deadline=None)
    @given(slope=st.floats(-3, 3), pref=st.floats(1e-3, 1e3))
    def test_recovers_any_power_law(self, slope, pref):
        fit = fit_rate(self.eps, [pref * e**slope for e in self.eps])
        assert fit.slope == pytest.approx(slope, abs=1e-9)
        assert fit.prefactor == pytest.approx(pref, rel=1e-9)


class TestSweepPlan:
    def test_requires_three_decreasing(self):
        with pytest.raises(ConfigError, match="epsilons required"):
            small_plan(epsilons=(0.4, 0.2))
        with pytest.raises(ConfigError, match="decreasing"):
            small_plan(epsilons=(0.2, 0.4, 0.1))

    def test_resolution_gate(self):
        with pytest.raises(ConfigError, match="resolution"):
            small_plan(epsilons=(0.4, 0.2, 0.05))

    def test_snapshot_times_must_match(self):
        with pytest.raises(ConfigError, match="identical times"):
            small_plan(nonlocal_cfg=SolverConfig(dt=1e-3, t_end=0.02, snapshot_stride=4))

    def test_dt_refinement(self):
        plan = small_plan(c_dt=0.05)
        cfg = plan.nonlocal_cfg_for(0.1)
        assert cfg.dt == pytest.approx(5e-4)
        assert cfg.snapshot_stride == 4
        assert plan.nonlocal_cfg_for(0.4).dt == 1e-3

    def test_initial_shift(self):
        plan = small_plan(phi0_shift=0.5)
        delta = plan.initial_phi(0.04).values - plan.initial_phi().values
        np.testing.assert_allclose(delta, 0.1)


class TestOperatorStudy:
    def test_columns_and_fits(self):
        study = operator_study(Grid.box(64), (0.4, 0.2, 0.1))
        assert len(study["rows"]) == 3
        assert len(study["fits"]) == 3
        assert study["energy_target"] == pytest.approx(np.pi**2 / 4)
        gaps = [r["energy_gap"] for r in study["rows"]]
        assert gaps[0] > gaps[1] > gaps[2]


@pytest.fixture(scope="module")
def sweep_report():
    return run_sweep(small_plan())


class TestRunSweep:
    def test_rows(self, sweep_report):
        assert [r["eps"] for r in sweep_report.rows] == [0.4, 0.2, 0.1]
        for r in sweep_report.rows:
            assert set(COLUMNS) <= set(r)
            assert r["dt"] == 1e-3
        assert set(sweep_report.fits) == set(COLUMNS[1:7])
        assert sweep_report.metadata["snapshots"] == 11

    def test_errors_decrease(self, sweep_report):
        for col in ("phi_dual_sup", "phi_l2l2", "sigma_l2_sup", "grad_sigma_l2l2"):
            assert sweep_report.monotone(col), col

    def test_deterministic_and_parallel_equal(self, sweep_report):
        again = run_sweep(small_plan(), parallel=2)
        assert again.rows == sweep_report.rows
        assert again.slopes() == sweep_report.slopes()

    def test_check_rates(self, sweep_report):
        verdict = check_rates(sweep_report, threshold=0.45)
        assert set(verdict) == {"phi_dual_sup", "phi_l2l2", "sigma_l2_sup", "grad_sigma_l2l2", "op_residual"}
        assert check_rates(sweep_report, threshold=50.0) == {k: False for k in verdict}

    def test_preflight(self):
        report = run_sweep(small_plan(), preflight=True)
        pre = report.metadata["temporal_preflight"]
        assert pre["eps"] == 0.1
        assert pre["phi_dual_sup"]["relative_change"] >= 0.0

    def test_abort_flags_row(self, monkeypatch):
        from nlocch import lab
        from nlocch.errors import SolverAbort

        real = lab.run_nonlocal_case

        def flaky(plan, eps, op=None):
            if eps == 0.2:
                raise SolverAbort("boom", time=0.01, max_phi=9.0)
            return real(plan, eps, op)

        monkeypatch.setattr(lab, "run_nonlocal_case", flaky)
        report = run_sweep(small_plan())
        assert report.flags["aborted"] == [0.2]
        row = report.rows[1]
        assert row["phi_dual_sup"] is None and "boom" in row["aborted"]
        assert report.fits["phi_dual_sup"].n_points == 2
