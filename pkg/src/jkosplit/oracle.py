"""Reference solutions: the Barenblatt profile and an explicit finite-volume scheme.

The finite-volume solver shares only grid, kernel and model primitives with
the variational solver, so agreement between the two is independent
evidence.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .driver import TrajectoryRecord, interpolant, step_count
from .exceptions import CFLError, InvalidArgumentError, UnequalMassError
from .grid import Grid, GridDensity, l1_distance
from .kernel import convolve_values, kernel_table
from .metrics import dbl_bounds, w2_1d
from .model import ModelSpec, SupportIndicator, support_set
from .reaction import reaction_flow

logger = logging.getLogger(__name__)

CFL_SAFETY = 0.45


def barenblatt_constant(m: float) -> float:
    """Height constant ``C_m`` of the mass-``m`` profile of ``rho_t = (rho^2)_xx``."""
    return (3.0 * m / (4.0 * np.sqrt(12.0))) ** (2.0 / 3.0)


def barenblatt(t, x, m: float = 1.0):
    """``t^{-1/3} (C_m - x^2 / (12 t^{2/3}))_+``, the self-similar solution."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise InvalidArgumentError("barenblatt requires t > 0")
    C = barenblatt_constant(m)
    return t ** (-1.0 / 3.0) * np.maximum(C - np.asarray(x) ** 2 / (12.0 * t ** (2.0 / 3.0)), 0.0)


def barenblatt_radius(t: float, m: float = 1.0) -> float:
    return float(np.sqrt(12.0 * barenblatt_constant(m)) * t ** (1.0 / 3.0))


def barenblatt_density(grid: Grid, t: float, m: float = 1.0, samples: int = 64) -> GridDensity:
    """Cell averages of the Barenblatt profile on ``grid``."""
    s = (np.arange(samples) + 0.5) / samples
    x = grid.edges[:-1, None] + s[None, :] * grid.dx
    return GridDensity(grid, barenblatt(t, x, m).mean(axis=1))


def _velocity(rho: np.ndarray, beta: np.ndarray, tab, spec: ModelSpec) -> np.ndarray:
    if spec.chi == 0:
        return np.zeros(rho.size - 1)
    c = convolve_values(rho + beta, tab, method="recursive")
    return spec.chi * np.diff(c) / tab.grid.dx


def admissible_dt(rho: np.ndarray, v: np.ndarray, spec: ModelSpec, dx: float) -> float:
    """Largest explicit step allowed by the diffusion and advection limits."""
    with np.errstate(divide="ignore", invalid="ignore"):
        d = float(np.max(2.0 * spec.phi_second(rho) * rho, initial=0.0))
    dt = np.inf
    if d > 0:
        dt = CFL_SAFETY * dx * dx / d
    vmax = float(np.max(np.abs(v), initial=0.0))
    if vmax > 0:
        dt = min(dt, CFL_SAFETY * dx / vmax)
    return dt


def fv_step(rho: np.ndarray, beta: np.ndarray, dt: float, spec: ModelSpec, tab, v=None) -> np.ndarray:
    """One conservative upwind step with zero flux at the domain ends."""
    dx = tab.grid.dx
    if v is None:
        v = _velocity(rho, beta, tab, spec)
    up = np.where(v > 0, rho[:-1], rho[1:])
    P = spec.pressure(rho)
    flux = up * v - np.diff(P) / dx
    div = np.zeros_like(rho)
    div[:-1] += flux
    div[1:] -= flux
    out = rho - dt / dx * div
    return np.maximum(out, 0.0) if out.min() > -1e-14 * max(rho.max(), 1.0) else out


def fv_run(rho0: GridDensity, spec: ModelSpec, T: float, record_every: float, dt: float | None = None, max_steps: int = 10**7) -> TrajectoryRecord:
    """Explicit finite-volume solution recorded every ``record_every`` time units.

    With ``dt=None`` the step adapts to the stability limits each step;
    a fixed ``dt`` above the limit raises :class:`CFLError`.  The support
    field is refreshed every step and the reaction uses the same RK4 cell
    update as the splitting scheme.
    """
    step_count(record_every, T)
    grid = rho0.grid
    tab = kernel_table(grid)
    theta = spec.threshold(rho0)
    rec = TrajectoryRecord(tau=float(record_every), T=float(T), spec=spec, mode="fv-oracle", threshold=theta)
    rho = np.array(rho0.values)
    beta = support_set(rho0, theta).values.astype(float)
    rec.rho.append(rho0)
    rec.beta.append(SupportIndicator(grid, beta))
    t = 0.0
    steps = 0
    for k in range(1, step_count(record_every, T) + 1):
        t_out = k * record_every
        while t < t_out - 1e-14 * max(1.0, t_out):
            v = _velocity(rho, beta, tab, spec)
            lim = admissible_dt(rho, v, spec, grid.dx)
            if dt is None:
                h = min(lim, t_out - t)
            else:
                if dt > lim:
                    raise CFLError(f"dt={dt:.3e} exceeds the stability limit {lim:.3e}", admissible_dt=lim)
                h = min(dt, t_out - t)
            rho = fv_step(rho, beta, h, spec, tab, v)
            if spec.k_M > 0:
                rho = reaction_flow(rho, h, spec)
            beta = (rho > theta).astype(float)
            t += h
            steps += 1
            if steps > max_steps:
                raise InvalidArgumentError("finite-volume step budget exhausted")
        t = t_out
        rec.rho.append(GridDensity(grid, rho))
        rec.beta.append(SupportIndicator(grid, beta))
    logger.info("finite-volume run finished after %d steps", steps)
    return rec


@dataclass(frozen=True)
class OracleComparison:
    times: np.ndarray
    l1: np.ndarray
    w2: np.ndarray
    dbl_upper: np.ndarray
    budget: float

    @property
    def flagged(self) -> np.ndarray:
        return self.times[self.l1 > self.budget]

    @property
    def passed(self) -> bool:
        return self.flagged.size == 0


def _regrid(rho: GridDensity, grid: Grid) -> GridDensity:
    if rho.grid == grid:
        return rho
    F = np.concatenate(([0.0], np.cumsum(rho.values) * rho.grid.dx))
    G = np.interp(grid.edges, rho.grid.edges, F)
    return GridDensity(grid, np.maximum(np.diff(G), 0.0) / grid.dx)


def compare_to_oracle(rec_a: TrajectoryRecord, rec_b: TrajectoryRecord, times, budget: float = 0.05) -> OracleComparison:
    """Distances between two records at the requested times.

    Densities on different grids are compared on the coarser grid after
    conservative re-binning of the finer one.
    """
    ga, gb = rec_a.grid, rec_b.grid
    target = ga if ga.n <= gb.n else gb
    times = np.asarray(times, dtype=float)
    l1, w2, ub = [], [], []
    for t in times:
        a = _regrid(interpolant(rec_a, t)[0], target)
        b = _regrid(interpolant(rec_b, t)[0], target)
        l1.append(l1_distance(a, b))
        try:
            w2.append(w2_1d(a, b))
        except UnequalMassError:
            w2.append(np.nan)
        ub.append(dbl_bounds(a, b).upper)
    return OracleComparison(times, np.array(l1), np.array(w2), np.array(ub), budget)
