import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from jkosplit.exceptions import EmptyDensityError, InvalidArgumentError
from jkosplit.grid import GridDensity, ParticleDensity, make_grid, to_grid, to_particles
from jkosplit.kernel import indicator_intervals, kernel_table
from jkosplit.model import ModelSpec, SupportIndicator, support_set
from jkosplit.testfunctions import BumpFunction
from jkosplit.transport import (
    JkoConfig,
    JkoProblem,
    jko_gradient,
    jko_objective,
    jko_step,
    jko_step_particles,
    optimality_residual,
    particle_energy_on_grid_check,
)

from conftest import gaussian, smooth_bump


@pytest.fixture
def setup():
    g = make_grid(10.0, 512)
    rho = gaussian(g, 0.3, 0.8)
    spec = ModelSpec(gamma=2.0, chi=1.0)
    beta = support_set(rho, spec.threshold(rho))
    return g, rho, spec, beta


class TestObjective:
    def test_zero_displacement_is_energy(self, setup):
        g, rho, spec, beta = setup
        p = to_particles(rho, 60)
        prob = JkoProblem(p, indicator_intervals(beta), 0.01, spec)
        assert jko_objective(p.positions, p, beta, 0.01, spec) == pytest.approx(prob.energy(p.positions))

    def test_penalty_share_shrinks_with_tau(self, setup):
        g, rho, spec, beta = setup
        p = to_particles(rho, 60)
        x = p.positions + 0.1
        shares = []
        for tau in (0.01, 0.1, 1.0, 10.0):
            prob = JkoProblem(p, indicator_intervals(beta), tau, spec)
            shares.append(prob.objective(x) - prob.energy(x))
        assert np.all(np.diff(shares) < 0)

    def test_gradient_finite_difference(self, setup):
        g, rho, spec, beta = setup
        p = to_particles(rho, 40)
        rng = np.random.default_rng(1)
        x = np.sort(p.positions + rng.normal(0, 0.01, p.n_particles))
        grad = jko_gradient(x, p, beta, 0.01, spec)
        h = 1e-6
        fd = np.empty_like(x)
        for k in range(x.size):
            e = np.zeros_like(x)
            e[k] = h
            fd[k] = (jko_objective(x + e, p, beta, 0.01, spec) - jko_objective(x - e, p, beta, 0.01, spec)) / (2 * h)
        assert np.max(np.abs(grad - fd)) <= 1e-5 * np.max(np.abs(grad))

    def test_symmetric_configuration_gives_odd_gradient(self):
        g = make_grid(10.0, 400)
        rho = gaussian(g, 0.0, 1.0)
        spec = ModelSpec()
        beta = support_set(rho, 1e-10)
        p = to_particles(rho, 30)
        x = p.positions * 1.05
        grad = jko_gradient(x, p, beta, 0.01, spec)
        np.testing.assert_allclose(grad, -grad[::-1], atol=1e-10 * np.max(np.abs(grad)))

    def test_particle_and_grid_energies_agree(self, setup):
        g, rho, spec, beta = setup
        lag, eul = particle_energy_on_grid_check(to_particles(rho, 400), beta, spec, kernel_table(g))
        assert lag == pytest.approx(eul, rel=1e-2)


class TestTwoParticles:
    def test_brute_force_gap(self):
        # chi = 0: only the gap is free; the centre of mass is pinned by the transport cost
        g = make_grid(10.0, 200)
        spec = ModelSpec(gamma=2.0, chi=0.0)
        prev = ParticleDensity(np.array([-0.5, 0.5]), 0.5)
        beta = SupportIndicator.zeros(g)
        tau = 0.05
        new, rep = jko_step_particles(prev, beta, tau, spec, JkoConfig(grad_rtol=1e-12))
        assert rep.converged

        def along_gap(d):
            return jko_objective(np.array([-d / 2, d / 2]), prev, beta, tau, spec)

        best = minimize_scalar(along_gap, bounds=(0.5, 3.0), method="bounded", options={"xatol": 1e-12}).x
        assert np.diff(new.positions)[0] == pytest.approx(best, abs=1e-6)
        assert new.positions.sum() == pytest.approx(0.0, abs=1e-12)


class TestStep:
    def test_converges_and_dissipates(self, setup):
        g, rho, spec, beta = setup
        out, rep = jko_step(rho, beta, 0.01, spec, JkoConfig(n_particles=200))
        assert rep.converged and rep.grad_norm <= rep.grad_tol
        assert out.mass == pytest.approx(rho.mass, rel=1e-14)
        assert rep.w2**2 / 0.02 <= rep.energy_prev - rep.energy_new + 1e-12
        assert rep.dissipation_gap >= 0

    def test_flat_minimiser_barely_moves(self):
        # chi = 0 plateau: the first step only rounds the plateau corners
        g = make_grid(10.0, 1000)
        rho = GridDensity(g, np.where(np.abs(g.centers) < 4.0, 0.125, 0.0))
        _, rep = jko_step(rho, SupportIndicator.zeros(g), 1e-4, ModelSpec(chi=0.0), JkoConfig(n_particles=200))
        assert rep.w2 < 1e-3

    def test_empty_rejected(self, grid):
        with pytest.raises(EmptyDensityError):
            jko_step(GridDensity(grid, np.zeros(grid.n)), SupportIndicator.zeros(grid), 0.01, ModelSpec(), JkoConfig())

    def test_bad_tau(self, setup):
        g, rho, spec, beta = setup
        with pytest.raises(InvalidArgumentError):
            jko_step(rho, beta, 0.0, spec, JkoConfig())

    @pytest.mark.parametrize("kw", [{"n_particles": 1}, {"grad_rtol": 0}, {"max_iter": 0}, {"shrink": 1.0}])
    def test_config_validation(self, kw):
        with pytest.raises(InvalidArgumentError):
            JkoConfig(**kw)

    def test_iteration_cap_reports_stall(self, setup):
        g, rho, spec, beta = setup
        _, rep = jko_step(rho, beta, 0.01, spec, JkoConfig(n_particles=100, max_iter=1, grad_rtol=1e-14))
        assert not rep.converged


class TestOptimality:
    def test_residual_first_order_in_tau(self):
        # densities from the same particles the step starts from; the grid
        # sampling floor only shows once tau is far below these values
        g = make_grid(10.0, 4096)
        spec = ModelSpec(chi=1.0)
        p = to_particles(smooth_bump(g, 0.0, 2.0), 400)
        rho = to_grid(p, g)
        beta = support_set(rho, 1e-10)
        res = []
        for tau in (4e-2, 2e-2, 1e-2):
            q, _ = jko_step_particles(p, beta, tau, spec, JkoConfig(n_particles=400, grad_rtol=1e-12))
            res.append(optimality_residual(to_grid(q, g), rho, beta, tau, spec))
        orders = np.log2(np.array(res[:-1]) / np.array(res[1:]))
        assert np.all(orders >= 0.9)

    def test_far_test_function(self, setup):
        g, rho, spec, beta = setup
        new, _ = jko_step(rho, beta, 0.01, spec, JkoConfig(n_particles=100))
        far = [BumpFunction(8.5, 0.5)]
        assert optimality_residual(new, rho, beta, 0.01, spec, battery=far) <= 1e-12
