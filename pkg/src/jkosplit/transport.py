"""Implicit-explicit JKO step in Lagrangian (quantile) coordinates.

One step minimises

    (1/2 tau) W2^2(rho_prev, rho) + F[rho | rho_prev]

over densities with the mass of ``rho_prev``.  Both measures are carried by
the same ladder of equal-mass particles, so the identity matching between
``X`` and ``X_prev`` is the optimal plan and the transport cost is exact.
The support term is frozen at the support of the previous iterate.

The internal energy is that of the piecewise-constant reconstruction used by
:func:`jkosplit.grid.to_grid`: density ``m_p / g_k`` on every gap
``g_k = X[k+1] - X[k]``, with the two end gaps extended by half a gap to
carry the end half-masses.  Every gap is penalised directly, so there is no
odd-even decoupling.  The self-interaction exploits ``K(x) = exp(-|x|) / 2``
to evaluate all pair sums in O(n).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .exceptions import EmptyDensityError, InvalidArgumentError
from .grid import GridDensity, ParticleDensity, project_monotone, to_grid, to_particles
from .kernel import KernelTable, gradient_convolve_values, indicator_intervals, indicator_potential
from .model import ModelSpec, SupportIndicator
from .testfunctions import spatial_battery

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class JkoConfig:
    """Optimiser settings for one transport step.

    ``grad_rtol`` scales with the gradient norm at the starting point;
    ``grad_atol`` (default: a roundoff floor derived from the problem
    scales) keeps the criterion attainable in floating point.
    """

    n_particles: int = 400
    grad_rtol: float = 1e-8
    grad_atol: float | None = None
    max_iter: int = 500
    shrink: float = 0.5
    max_backtracks: int = 40
    armijo: float = 1e-4
    min_gap: float | None = None

    def __post_init__(self):
        if self.n_particles < 2:
            raise InvalidArgumentError("n_particles must be at least 2")
        if not self.grad_rtol > 0:
            raise InvalidArgumentError("grad_rtol must be positive")
        if self.max_iter < 1 or self.max_backtracks < 1:
            raise InvalidArgumentError("iteration caps must be positive")
        if not 0 < self.shrink < 1:
            raise InvalidArgumentError("shrink factor must lie in (0, 1)")


@dataclass(frozen=True)
class JkoReport:
    """Certificate of one transport step (all energies in particle form)."""

    iterations: int
    grad_norm: float
    grad_tol: float
    objective_initial: float
    objective_final: float
    energy_prev: float
    energy_new: float
    w2: float
    converged: bool
    parts_prev: tuple = (0.0, 0.0, 0.0)
    parts_new: tuple = (0.0, 0.0, 0.0)

    @property
    def dissipation_gap(self) -> float:
        """``F[prev|prev] - F[new|prev] - W2^2 / (2 tau)``; nonnegative at a minimiser."""
        return self.objective_initial - self.objective_final


class JkoProblem:
    """Objective, gradient and preconditioner of one transport step.

    Parameters
    ----------
    prev : ParticleDensity
        Particles of the previous iterate.
    intervals : ndarray of shape (k, 2)
        Frozen support of the previous iterate as disjoint intervals.
    tau : float
        Time step.
    spec : ModelSpec
    """

    def __init__(self, prev: ParticleDensity, intervals: np.ndarray, tau: float, spec: ModelSpec):
        if not tau > 0:
            raise InvalidArgumentError("tau must be positive")
        self.x_prev = prev.positions
        self.m = prev.particle_mass
        self.tau = float(tau)
        self.spec = spec
        self.intervals = np.asarray(intervals, dtype=float).reshape(-1, 2)
        n = self.x_prev.size
        self.n = n
        self._gap_op = _gap_operator(n)
        self._gap_weight = _gap_weights(n)

    def gaps(self, x):
        return self._gap_op @ x

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n,):
            raise InvalidArgumentError(f"expected {self.n} positions, got shape {x.shape}")
        if np.any(np.diff(x) <= 0):
            raise InvalidArgumentError("positions must be strictly increasing")
        return x

    def _pair_sums(self, x):
        # A_k = sum_{j<k} e^{-(x_k - x_j)}, B_k = sum_{j>k} e^{-(x_j - x_k)}
        c = 0.5 * (x[0] + x[-1])
        ep = np.exp(x - c)
        em = np.exp(-(x - c))
        cum = np.concatenate(([0.0], np.cumsum(ep)[:-1]))
        rcum = np.concatenate((np.cumsum(em[::-1])[::-1][1:], [0.0]))
        return em * cum, ep * rcum

    def energy_terms(self, x):
        """Internal, interaction and support energies of the particle state."""
        x = self._check(x)
        m, spec = self.m, self.spec
        d = self.gaps(x)
        internal = float(np.sum(self._gap_weight * spec.phi(m / d) * d))
        a, _ = self._pair_sums(x)
        interaction = -0.5 * spec.chi * m * m * (0.5 * self.n + float(np.sum(a)))
        v, _ = indicator_potential(x, self.intervals)
        support = -spec.chi * m * float(np.sum(v))
        return internal, interaction, support

    def energy(self, x) -> float:
        return float(sum(self.energy_terms(x)))

    def objective(self, x) -> float:
        x = self._check(x)
        w = 0.5 * self.m / self.tau * float(np.sum((x - self.x_prev) ** 2))
        return w + self.energy(x)

    def gradient(self, x) -> np.ndarray:
        x = self._check(x)
        m, spec = self.m, self.spec
        d = self.gaps(x)
        g = (m / self.tau) * (x - self.x_prev)
        g += self._gap_op.T @ (-self._gap_weight * spec.pressure(m / d))
        if spec.chi:
            a, b = self._pair_sums(x)
            g += 0.5 * spec.chi * m * m * (a - b)
            _, dv = indicator_potential(x, self.intervals)
            g -= spec.chi * m * dv
        return g

    def local_hessian(self, x):
        """Hessian of the transport cost plus internal energy (SPD, banded)."""
        m = self.m
        d = self.gaps(x)
        rho = m / d
        curv = self._gap_weight * rho * rho * self.spec.phi_second(rho) / d
        h = self._gap_op.T @ sp.diags(curv) @ self._gap_op
        return (h + sp.identity(self.n) * (m / self.tau)).tocsc()

    def w2(self, x) -> float:
        return float(np.sqrt(self.m * np.sum((np.asarray(x) - self.x_prev) ** 2)))


def _gap_operator(n: int):
    """Forward differences ``X[k+1] - X[k]`` as an ``(n-1, n)`` sparse matrix."""
    return sp.diags([-np.ones(n - 1), np.ones(n - 1)], [0, 1], shape=(n - 1, n), format="csr")


def _gap_weights(n: int) -> np.ndarray:
    # end gaps also carry the half-gap extensions holding the end half-masses
    w = np.ones(n - 1)
    w[0] += 0.5
    w[-1] += 0.5
    if n == 2:
        w[0] = 2.0
    return w


def jko_objective(x, prev: ParticleDensity, beta: SupportIndicator, tau: float, spec: ModelSpec) -> float:
    """Transport cost plus frozen-support energy at particle positions ``x``."""
    return JkoProblem(prev, indicator_intervals(beta), tau, spec).objective(x)


def jko_gradient(x, prev: ParticleDensity, beta: SupportIndicator, tau: float, spec: ModelSpec) -> np.ndarray:
    """Analytic gradient of :func:`jko_objective`."""
    return JkoProblem(prev, indicator_intervals(beta), tau, spec).gradient(x)


def minimize_jko(problem: JkoProblem, cfg: JkoConfig, min_gap: float):
    """Preconditioned projected gradient descent with Armijo backtracking.

    The search direction is the gradient preconditioned by the banded
    Hessian of the convex local part; every trial point is projected onto
    the ordered set with gap floor ``min_gap``.  Near the optimum the
    objective decrease drops below its rounding error and Armijo can no
    longer decide; steps are then backtracked on the gradient norm instead,
    never raising the objective by more than a few ulps.
    """
    x = problem.x_prev.copy()
    f0 = problem.objective(x)
    g = problem.gradient(x)
    g0 = float(np.max(np.abs(g)))
    atol = cfg.grad_atol
    if atol is None:
        scale = problem.m / problem.tau * max(float(np.max(np.abs(x))), 1.0)
        atol = 1e3 * np.finfo(float).eps * scale
    tol = max(cfg.grad_rtol * g0, atol)
    f = f0
    it = 0
    gnorm = g0
    while gnorm > tol and it < cfg.max_iter:
        try:
            d = -spsolve(problem.local_hessian(x), g)
        except (ValueError, RuntimeError):
            d = -g
        if not np.all(np.isfinite(d)) or float(g @ d) >= 0:
            d = -g
        it += 1
        alpha = 1.0
        step = None
        for _ in range(cfg.max_backtracks):
            trial = project_monotone(x + alpha * d, min_gap)
            ft = problem.objective(trial)
            if ft < f and ft <= f + cfg.armijo * float(g @ (trial - x)):
                step = trial, ft, problem.gradient(trial)
                break
            alpha *= cfg.shrink
        if step is None:
            # roundoff regime: backtrack on the gradient norm instead
            alpha = 1.0
            for _ in range(cfg.max_backtracks):
                trial = project_monotone(x + alpha * d, min_gap)
                ft = problem.objective(trial)
                gt = problem.gradient(trial)
                if ft <= f + 8 * np.finfo(float).eps * abs(f) and np.max(np.abs(gt)) <= (1.0 - 0.25 * alpha) * gnorm:
                    step = trial, ft, gt
                    break
                alpha *= cfg.shrink
        if step is None:
            logger.debug("line search stalled at |g|=%.3e (tol %.3e)", gnorm, tol)
            break
        x, f, g = step
        gnorm = float(np.max(np.abs(g)))
    parts_prev = problem.energy_terms(problem.x_prev)
    parts_new = problem.energy_terms(x)
    report = JkoReport(
        iterations=it,
        grad_norm=gnorm,
        grad_tol=tol,
        objective_initial=f0,
        objective_final=f,
        energy_prev=float(sum(parts_prev)),
        energy_new=float(sum(parts_new)),
        w2=problem.w2(x),
        converged=bool(gnorm <= tol),
        parts_prev=tuple(float(v) for v in parts_prev),
        parts_new=tuple(float(v) for v in parts_new),
    )
    return x, report


def jko_step_particles(prev: ParticleDensity, beta: SupportIndicator, tau: float, spec: ModelSpec, cfg: JkoConfig):
    """Transport step on particles; returns the new particles and the report."""
    min_gap = cfg.min_gap if cfg.min_gap is not None else beta.grid.min_gap
    problem = JkoProblem(prev, indicator_intervals(beta), tau, spec)
    x, report = minimize_jko(problem, cfg, min_gap)
    return ParticleDensity(x, prev.particle_mass), report


def jko_step(rho_prev: GridDensity, beta: SupportIndicator, tau: float, spec: ModelSpec, cfg: JkoConfig, tab: KernelTable | None = None):
    """One implicit-explicit JKO step from a grid density.

    Returns the grid reconstruction of the minimiser and its
    :class:`JkoReport`.  Non-convergence is flagged in the report; the best
    iterate is still returned.
    """
    if rho_prev.mass <= 0:
        raise EmptyDensityError("transport step needs positive mass")
    if not tau > 0:
        raise InvalidArgumentError("tau must be positive")
    prev = to_particles(rho_prev, cfg.n_particles)
    new, report = jko_step_particles(prev, beta, tau, spec, cfg)
    out = to_grid(new, rho_prev.grid)
    # particle masses are untouched; remove the last-ulp drift of the deposit
    out = GridDensity(out.grid, out.values * (rho_prev.mass / out.mass))
    return out, report


def weak_rhs_terms(rho: GridDensity, beta: SupportIndicator, spec: ModelSpec, phi_fn, tab: KernelTable | None = None):
    """Spatial right-hand side terms of the weak formulation for one test function.

    Returns ``(diffusion, interaction, support)`` where, for the exact flow,
    ``d/dt int phi rho = -diffusion + interaction + support``:

    * diffusion   ``= int rho d/dx Phi'(rho) phi' = -int P(rho) phi''`` (pressure form)
    * interaction ``= chi int rho (K' * rho) phi'``
    * support     ``= chi int rho (K' * beta) phi'``
    """
    x = rho.grid.centers
    dx = rho.grid.dx
    _, d1, d2 = phi_fn.derivatives(x)
    r = rho.values
    diffusion = -float(np.sum(spec.pressure(r) * d2) * dx)
    if spec.chi:
        gk_rho = gradient_convolve_values(r, rho.grid)
        gk_beta = gradient_convolve_values(beta.values.astype(float), rho.grid)
        interaction = spec.chi * float(np.sum(r * gk_rho * d1) * dx)
        support = spec.chi * float(np.sum(r * gk_beta * d1) * dx)
    else:
        interaction = support = 0.0
    return diffusion, interaction, support


def optimality_residual(rho_new: GridDensity, rho_prev: GridDensity, beta: SupportIndicator, tau: float, spec: ModelSpec, tab: KernelTable | None = None, battery=None) -> float:
    """Max over a test-function battery of the discrete Euler-Lagrange defect.

    Compares ``(1/tau) int phi (rho_prev - rho_new)`` with
    ``int rho d/dx Phi'(rho) phi' - chi int rho (K' * rho) phi' - chi int rho (K' * 1_S) phi'``
    evaluated at ``rho_new`` with the frozen support ``beta``.
    """
    battery = spatial_battery() if battery is None else battery
    dx = rho_new.grid.dx
    worst = 0.0
    for phi_fn in battery:
        phi = phi_fn(rho_new.grid.centers)
        lhs = float(np.sum(phi * (rho_prev.values - rho_new.values)) * dx) / tau
        dif, inter, sup = weak_rhs_terms(rho_new, beta, spec, phi_fn)
        worst = max(worst, abs(lhs - (dif - inter - sup)))
    return worst


def particle_energy_on_grid_check(particles: ParticleDensity, beta: SupportIndicator, spec: ModelSpec, tab: KernelTable):
    """Particle-form and grid-form energies of the same state, for cross-checks."""
    from .model import energy_parts

    problem = JkoProblem(particles, indicator_intervals(beta), 1.0, spec)
    lag = problem.energy(particles.positions)
    eul = energy_parts(to_grid(particles, beta.grid), beta, tab, spec).total
    return lag, eul


__all__ = [
    "JkoConfig",
    "JkoReport",
    "JkoProblem",
    "jko_objective",
    "jko_gradient",
    "jko_step",
    "jko_step_particles",
    "optimality_residual",
    "weak_rhs_terms",
]
