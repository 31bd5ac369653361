"""Estimator-style wrappers: ``fit`` an initial density, ``predict`` it at later times.

The wrappers follow scikit-learn conventions (constructor-only
hyper-parameters, ``get_params``/``set_params``, trailing-underscore fitted
attributes) so solvers can be swept and cloned with standard tooling.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .driver import DriverConfig, interpolant, run_jko_only, run_splitting
from .exceptions import InvalidArgumentError
from .grid import GridDensity, make_grid
from .model import ModelSpec
from .oracle import fv_run
from .transport import JkoConfig


def check_density(X, n: int) -> np.ndarray:
    """Validate initial density samples: finite, nonnegative, ``n`` cells."""
    X = check_array(X, ensure_2d=False, dtype=np.float64)
    if X.ndim != 1:
        raise InvalidArgumentError(f"expected a 1D array of cell values, got shape {X.shape}")
    if X.shape[0] != n:
        raise InvalidArgumentError(f"expected {n} cell values, got {X.shape[0]}")
    if np.any(X < 0):
        raise InvalidArgumentError("density values must be nonnegative")
    return X


def check_times(times, T: float) -> np.ndarray:
    t = check_array(np.atleast_1d(np.asarray(times, dtype=float)), ensure_2d=False)
    if np.any(t < 0) or np.any(t > T * (1 + 1e-12)):
        raise InvalidArgumentError(f"prediction times must lie in [0, {T}]")
    return t


class _TrajectoryEstimator(BaseEstimator):
    def _spec(self) -> ModelSpec:
        return ModelSpec(gamma=self.gamma, chi=self.chi, k_M=self.k_M, k_h=self.k_h)

    def predict(self, times) -> np.ndarray:
        """Densities ``rho_tau(t)`` at ``times``, one row per time."""
        check_is_fitted(self, "trajectory_")
        t = check_times(times, self.T)
        return np.stack([interpolant(self.trajectory_, float(s))[0].values for s in t])

    def predict_support(self, times) -> np.ndarray:
        check_is_fitted(self, "trajectory_")
        t = check_times(times, self.T)
        return np.stack([interpolant(self.trajectory_, float(s))[1].values for s in t])


class SplittingSolver(_TrajectoryEstimator):
    """Transport/reaction splitting solver.

    Parameters
    ----------
    gamma, chi, k_M, k_h : float
        Model coefficients.
    tau, T : float
        Step size and horizon; ``tau`` must divide ``T``.
    L : float
        Domain half-width.
    n : int
        Cell count of the grid the densities live on.
    n_particles : int
        Particles per transport step.
    grad_rtol : float
        Relative stopping tolerance of the transport optimiser.
    react : bool
        ``False`` skips the reaction steps (pure minimising movement).
    continue_on_stall : bool
        Keep going after a non-converged transport step.
    """

    def __init__(self, gamma=2.0, chi=1.0, k_M=0.0, k_h=1.0, tau=1e-3, T=0.5, L=10.0, n=1024, n_particles=400, grad_rtol=1e-8, react=True, continue_on_stall=False):
        self.gamma = gamma
        self.chi = chi
        self.k_M = k_M
        self.k_h = k_h
        self.tau = tau
        self.T = T
        self.L = L
        self.n = n
        self.n_particles = n_particles
        self.grad_rtol = grad_rtol
        self.react = react
        self.continue_on_stall = continue_on_stall

    def fit(self, X, y=None):
        """Run the scheme from the initial cell values ``X``."""
        self.grid_ = make_grid(self.L, self.n)
        rho0 = GridDensity(self.grid_, check_density(X, self.n))
        cfg = DriverConfig(JkoConfig(n_particles=self.n_particles, grad_rtol=self.grad_rtol), continue_on_stall=self.continue_on_stall)
        runner = run_splitting if self.react else run_jko_only
        self.trajectory_ = runner(rho0, self._spec(), self.tau, self.T, cfg)
        self.n_steps_ = self.trajectory_.completed_steps
        return self


class JKOSolver(SplittingSolver):
    """Pure minimising-movement solver (reaction switched off)."""

    def __init__(self, gamma=2.0, chi=1.0, k_M=0.0, k_h=1.0, tau=1e-3, T=0.5, L=10.0, n=1024, n_particles=400, grad_rtol=1e-8, react=False, continue_on_stall=False):
        super().__init__(gamma, chi, k_M, k_h, tau, T, L, n, n_particles, grad_rtol, react, continue_on_stall)


class FiniteVolumeSolver(_TrajectoryEstimator):
    """Explicit upwind finite-volume reference solver.

    ``record_every`` is the snapshot spacing; the internal step adapts to
    the stability limits.
    """

    def __init__(self, gamma=2.0, chi=1.0, k_M=0.0, k_h=1.0, record_every=1e-2, T=0.5, L=10.0, n=2048):
        self.gamma = gamma
        self.chi = chi
        self.k_M = k_M
        self.k_h = k_h
        self.record_every = record_every
        self.T = T
        self.L = L
        self.n = n

    def fit(self, X, y=None):
        self.grid_ = make_grid(self.L, self.n)
        rho0 = GridDensity(self.grid_, check_density(X, self.n))
        self.trajectory_ = fv_run(rho0, self._spec(), self.T, self.record_every)
        self.n_steps_ = self.trajectory_.completed_steps
        return self
