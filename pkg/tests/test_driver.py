import numpy as np
import pytest

from jkosplit.driver import DriverConfig, interpolant, run_jko_only, run_splitting, step_count
from jkosplit.exceptions import EmptyDensityError, InvalidArgumentError, SolverStallError
from jkosplit.grid import GridDensity, make_grid
from jkosplit.model import ModelSpec
from jkosplit.transport import JkoConfig

from conftest import smooth_bump

CFG = DriverConfig(JkoConfig(n_particles=100))


@pytest.fixture(scope="module")
def small():
    g = make_grid(10.0, 256)
    return g, smooth_bump(g, 0.0, 1.5)


class TestStepCount:
    def test_divides(self):
        assert step_count(0.01, 0.5) == 50
        assert step_count(0.1, 0.0) == 0

    @pytest.mark.parametrize("tau,T", [(0.0, 1.0), (0.3, 1.0), (0.1, -1.0)])
    def test_rejects(self, tau, T):
        with pytest.raises(InvalidArgumentError):
            step_count(tau, T)


class TestRuns:
    def test_zero_horizon(self, small):
        g, rho = small
        rec = run_splitting(rho, ModelSpec(k_M=1.0), 0.01, 0.0, CFG)
        assert len(rec.rho) == 1 and rec.completed_steps == 0

    def test_shape_and_times(self, small):
        g, rho = small
        rec = run_splitting(rho, ModelSpec(k_M=1.0), 0.01, 0.05, CFG)
        assert rec.n_steps == 5 and rec.completed_steps == 5
        assert rec.n_steps * rec.tau == pytest.approx(rec.T, abs=1e-12)
        np.testing.assert_allclose(rec.times, np.arange(6) * 0.01)
        assert len(rec.half) == len(rec.reports) == len(rec.gronwall) == 5
        assert len(rec.rows) == 6
        for b in rec.beta:
            assert set(np.unique(b.values)) <= {0, 1}
        assert rec.initial is rho

    def test_reaction_grows_mass(self, small):
        g, rho = small
        rec = run_splitting(rho, ModelSpec(k_M=1.0), 0.01, 0.05, CFG)
        masses = [r.mass for r in rec.rho]
        assert np.all(np.diff(masses) > 0)
        for n, h in enumerate(rec.half):
            assert h.mass == pytest.approx(rec.rho[n].mass, rel=1e-12)

    def test_no_reaction_matches_jko_only(self, small):
        g, rho = small
        a = run_splitting(rho, ModelSpec(k_M=0.0), 0.01, 0.03, CFG)
        b = run_jko_only(rho, ModelSpec(k_M=0.0), 0.01, 0.03, CFG)
        for ra, rb in zip(a.rho, b.rho):
            np.testing.assert_array_equal(ra.values, rb.values)

    def test_jko_only_ignores_reaction(self, small):
        g, rho = small
        rec = run_jko_only(rho, ModelSpec(k_M=1.0), 0.01, 0.03, CFG)
        assert rec.rho[-1].mass == pytest.approx(rec.rho[0].mass, rel=1e-12)
        assert all(gr is None for gr in rec.gronwall)

    def test_frozen_support(self, small):
        g, rho = small
        cfg = DriverConfig(JkoConfig(n_particles=100), freeze_beta_zero=True)
        rec = run_splitting(rho, ModelSpec(k_M=1.0), 0.01, 0.02, cfg)
        assert not any(b.values.any() for b in rec.beta)

    def test_empty_rejected(self, small):
        g, _ = small
        with pytest.raises(EmptyDensityError):
            run_splitting(GridDensity(g, np.zeros(g.n)), ModelSpec(), 0.01, 0.02, CFG)

    def test_stall_carries_partial_record(self, small):
        g, rho = small
        cfg = DriverConfig(JkoConfig(n_particles=100, max_iter=1, grad_rtol=1e-14))
        with pytest.raises(SolverStallError) as info:
            run_splitting(rho, ModelSpec(), 0.01, 0.05, cfg)
        assert info.value.record.completed_steps == 1
        cont = DriverConfig(cfg.jko, continue_on_stall=True)
        rec = run_splitting(rho, ModelSpec(), 0.01, 0.05, cont)
        assert rec.stalled and rec.completed_steps == 5


@pytest.fixture(scope="module")
def rec(small):
    g, rho = small
    return run_splitting(rho, ModelSpec(k_M=1.0), 0.01, 0.05, CFG)


class TestInterpolant:
    def test_conventions(self, rec):
        assert interpolant(rec, 0.0)[0] is rec.rho[0]
        assert interpolant(rec, 0.005)[0] is rec.rho[1]
        assert interpolant(rec, 0.01)[0] is rec.rho[1]
        assert interpolant(rec, 0.0100001)[0] is rec.rho[2]
        assert interpolant(rec, 0.05)[0] is rec.rho[-1]

    def test_outside(self, rec):
        with pytest.raises(InvalidArgumentError):
            interpolant(rec, 0.06)
        with pytest.raises(InvalidArgumentError):
            interpolant(rec, -0.01)
