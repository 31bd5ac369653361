"""Lie splitting of transport and reaction, with the support field carried along.

The transport state is a ladder of equal-mass particles.  Between steps it
is carried exactly; only a reaction step, which changes interval masses on
the fixed reconstruction partition, forces a re-quantisation at the start
of the next transport step.  Grid snapshots are deposits of that state.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .exceptions import EmptyDensityError, InvalidArgumentError, SolverStallError
from .grid import (
    GridDensity,
    deposit_partition,
    entropy,
    requantize,
    second_moment,
    to_grid,
    to_particles,
)
from .kernel import kernel_table
from .model import ModelSpec, SupportIndicator, energy_parts, support_set
from .reaction import GronwallReport, gronwall_check, reaction_step_particles
from .transport import JkoConfig, JkoReport, jko_step_particles

logger = logging.getLogger(__name__)

STEP_RTOL = 1e-9


@dataclass(frozen=True)
class DriverConfig:
    """Run options on top of the transport solver settings.

    ``freeze_beta_zero`` replaces every support update by the empty set; it
    exists only to exercise the constraint diagnostics.
    """

    jko: JkoConfig = field(default_factory=JkoConfig)
    continue_on_stall: bool = False
    freeze_beta_zero: bool = False
    diagnostics: bool = True


@dataclass
class TrajectoryRecord:
    """Snapshots of a run under the piecewise-constant time convention.

    ``rho[n]`` and ``beta[n]`` hold the state on ``((n-1) tau, n tau]``,
    index 0 the initial pair.  For particle runs ``rho[0]`` is the
    reconstruction of the initial particles, the discrete initial datum the
    scheme actually evolves; the raw input is kept in ``initial``.  ``half[n]`` is the post-transport density of
    step ``n + 1`` (empty for transport-free records).
    """

    tau: float
    T: float
    spec: ModelSpec
    mode: str
    threshold: float
    rho: list = field(default_factory=list)
    beta: list = field(default_factory=list)
    half: list = field(default_factory=list)
    reports: list = field(default_factory=list)
    gronwall: list = field(default_factory=list)
    rows: list = field(default_factory=list)
    stalled: bool = False
    initial: GridDensity | None = None

    @property
    def grid(self):
        return self.rho[0].grid

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.tau)) if self.tau > 0 else 0

    @property
    def completed_steps(self) -> int:
        return len(self.rho) - 1

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self.rho)) * self.tau


def step_count(tau: float, T: float) -> int:
    if not tau > 0:
        raise InvalidArgumentError("tau must be positive")
    if T < 0:
        raise InvalidArgumentError("horizon T must be nonnegative")
    N = int(round(T / tau))
    if abs(N * tau - T) > STEP_RTOL * max(T, tau):
        raise InvalidArgumentError(f"tau={tau} does not divide T={T}")
    return N


def _row(rec: TrajectoryRecord, n: int, tab, report: JkoReport | None, gr: GronwallReport | None) -> dict:
    rho, beta = rec.rho[n], rec.beta[n]
    parts = energy_parts(rho, beta, tab, rec.spec)
    row = {
        "step": n,
        "time": n * rec.tau,
        "mass": rho.mass,
        "m2": second_moment(rho),
        "entropy": entropy(rho),
        "internal": parts.internal,
        "interaction": parts.interaction,
        "support": parts.support,
        "w2_step": report.w2 if report else 0.0,
        "dissipation_slack": np.nan,
        "gronwall_lgamma": gr.ratio_lgamma if gr else np.nan,
        "gronwall_m2": gr.ratio_m2 if gr else np.nan,
        "gronwall_h1": gr.ratio_h1 if gr else np.nan,
    }
    if report is not None:
        lhs = report.w2**2 / (2.0 * rec.tau)
        row["dissipation_slack"] = report.energy_prev - report.energy_new - lhs
    return row


def _run(rho0: GridDensity, spec: ModelSpec, tau: float, T: float, cfg: DriverConfig, react: bool, mode: str) -> TrajectoryRecord:
    N = step_count(tau, T)
    if rho0.mass <= 0:
        raise EmptyDensityError("initial density has zero mass")
    grid = rho0.grid
    theta = spec.threshold(rho0)
    rec = TrajectoryRecord(tau=float(tau), T=float(T), spec=spec, mode=mode, threshold=theta, initial=rho0)
    particles = to_particles(rho0, cfg.jko.n_particles)
    start = to_grid(particles, grid)
    beta0 = SupportIndicator.zeros(grid) if cfg.freeze_beta_zero else support_set(start, theta)
    rec.rho.append(start)
    rec.beta.append(beta0)
    tab = kernel_table(grid) if cfg.diagnostics else None
    if cfg.diagnostics:
        rec.rows.append(_row(rec, 0, tab, None, None))
    logger.info("beta at t=0 initialised to the support of rho0 (%d cells)", int(beta0.values.sum()))
    react = react and spec.k_M > 0
    min_gap = cfg.jko.min_gap if cfg.jko.min_gap is not None else grid.min_gap
    L = grid.half_width
    for n in range(N):
        particles, report = jko_step_particles(particles, rec.beta[n], tau, spec, cfg.jko)
        half = to_grid(particles, grid)
        beta = SupportIndicator.zeros(grid) if cfg.freeze_beta_zero else support_set(half, theta)
        gr = None
        if react:
            nodes, cum = reaction_step_particles(particles, tau, spec, L)
            new = deposit_partition(nodes, cum, grid)
            gr = gronwall_check(half, new, tau, spec.gamma, spec)
            particles = requantize(nodes, cum, cfg.jko.n_particles, min_gap)
        else:
            new = half
        rec.half.append(half)
        rec.rho.append(new)
        rec.beta.append(beta)
        rec.reports.append(report)
        rec.gronwall.append(gr)
        if cfg.diagnostics:
            rec.rows.append(_row(rec, n + 1, tab, report, gr))
        if not report.converged:
            rec.stalled = True
            msg = (
                f"transport step {n + 1} did not converge: |grad|={report.grad_norm:.3e} "
                f"> {report.grad_tol:.3e} after {report.iterations} iterations"
            )
            if not cfg.continue_on_stall:
                raise SolverStallError(msg, record=rec)
            logger.warning(msg)
    return rec


def run_splitting(rho0: GridDensity, spec: ModelSpec, tau: float, T: float, cfg: DriverConfig | None = None) -> TrajectoryRecord:
    """Transport, support update, then reaction, for ``N = T / tau`` steps.

    Raises :class:`SolverStallError` carrying the partial record if a
    transport step fails to converge, unless ``cfg.continue_on_stall``.
    """
    return _run(rho0, spec, tau, T, cfg or DriverConfig(), react=True, mode="splitting")


def run_jko_only(rho0: GridDensity, spec: ModelSpec, tau: float, T: float, cfg: DriverConfig | None = None) -> TrajectoryRecord:
    """Pure minimising-movement scheme: :func:`run_splitting` with ``M = 0``."""
    return _run(rho0, spec, tau, T, cfg or DriverConfig(), react=False, mode="jko-only")


def interpolant(rec: TrajectoryRecord, t: float):
    """``(rho_tau(t), beta_tau(t))`` with ``rho_tau = rho^k`` on ``((k-1) tau, k tau]``."""
    if t < 0 or t > rec.T * (1 + 1e-12) + 1e-15:
        raise InvalidArgumentError(f"time {t} outside [0, {rec.T}]")
    if t == 0:
        return rec.rho[0], rec.beta[0]
    k = int(np.ceil(t / rec.tau - 1e-9))
    k = min(max(k, 1), rec.completed_steps)
    return rec.rho[k], rec.beta[k]

