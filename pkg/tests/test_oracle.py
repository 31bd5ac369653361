import numpy as np
import pytest
from scipy import integrate

from jkosplit.driver import DriverConfig, run_jko_only
from jkosplit.exceptions import CFLError
from jkosplit.grid import GridDensity, l1_distance, make_grid
from jkosplit.model import ModelSpec
from jkosplit.oracle import (
    admissible_dt,
    barenblatt,
    barenblatt_constant,
    barenblatt_density,
    barenblatt_radius,
    compare_to_oracle,
    fv_run,
)
from jkosplit.transport import JkoConfig

from conftest import smooth_bump

HEAT = ModelSpec(gamma=2.0, chi=0.0)


class TestBarenblatt:
    @pytest.mark.parametrize("m", [0.5, 1.0, 3.0])
    def test_mass(self, m):
        R = barenblatt_radius(1.0, m)
        val, _ = integrate.quad(lambda x: barenblatt(1.0, x, m), -R, R)
        assert val == pytest.approx(m, rel=1e-10)

    def test_solves_pme(self):
        # rho_t = (rho^2)_xx at an interior point
        t, x, h = 1.3, 0.4, 1e-4
        rt = (barenblatt(t + h, x) - barenblatt(t - h, x)) / (2 * h)
        sq = lambda y: barenblatt(t, y) ** 2
        rxx = (sq(x + h) - 2 * sq(x) + sq(x - h)) / h**2
        assert rt == pytest.approx(rxx, rel=1e-5)

    def test_constant(self):
        assert barenblatt_constant(1.0) == pytest.approx((3 / (4 * np.sqrt(12))) ** (2 / 3))

    def test_rejects_nonpositive_time(self):
        with pytest.raises(Exception):
            barenblatt(0.0, 0.0)


class TestFiniteVolume:
    def test_tracks_barenblatt(self):
        g = make_grid(10.0, 2048)
        rec = fv_run(barenblatt_density(g, 1.0), HEAT, 0.5, 0.1)
        err = l1_distance(rec.rho[-1], barenblatt_density(g, 1.5))
        assert err <= 0.01

    def test_mass_conserved(self):
        g = make_grid(10.0, 512)
        rec = fv_run(smooth_bump(g, 0.0, 1.0), ModelSpec(chi=1.0), 0.2, 0.05)
        m0 = rec.rho[0].mass
        for r in rec.rho:
            assert r.mass == pytest.approx(m0, rel=1e-12)

    def test_zero_stays_zero(self):
        g = make_grid(10.0, 128)
        rec = fv_run(GridDensity(g, np.zeros(g.n)), ModelSpec(chi=1.0, k_M=1.0), 0.1, 0.05)
        assert not rec.rho[-1].values.any()

    def test_cfl(self):
        g = make_grid(10.0, 512)
        rho = smooth_bump(g, 0.0, 1.0)
        lim = admissible_dt(rho.values, np.zeros(g.n - 1), HEAT, g.dx)
        assert lim == pytest.approx(0.45 * g.dx**2 / (4 * rho.values.max()))
        with pytest.raises(CFLError) as info:
            fv_run(rho, HEAT, 0.01, 0.01, dt=2 * lim)
        assert info.value.admissible_dt == pytest.approx(lim)


class TestCompare:
    def test_identical(self):
        g = make_grid(10.0, 256)
        rec = fv_run(smooth_bump(g, 0.0, 1.0), HEAT, 0.1, 0.05)
        cmp = compare_to_oracle(rec, rec, [0.05, 0.1])
        assert not cmp.l1.any() and not cmp.w2.any() and not cmp.dbl_upper.any()
        assert cmp.passed

    def test_jko_against_fv_refines(self):
        errs = []
        for n, npart, tau in ((256, 100, 0.02), (512, 200, 0.01)):
            g = make_grid(10.0, n)
            rho = smooth_bump(g, 0.0, 1.0)
            spec = ModelSpec(chi=1.0)
            a = run_jko_only(rho, spec, tau, 0.2, DriverConfig(JkoConfig(n_particles=npart)))
            b = fv_run(rho, spec, 0.2, 0.02)
            errs.append(compare_to_oracle(a, b, [0.2]).l1.max())
        assert np.all(np.isfinite(errs)) and errs[1] < errs[0]
