"""Uniform 1D grids, Eulerian/Lagrangian density representations and quadrature.

Densities live on the truncated domain ``[-L, L]`` split into ``n`` equal
cells.  The Lagrangian form stores equal-mass particles located at the
mid-mass quantiles of the density, which is the natural chart for exact
one-dimensional optimal transport.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.special import xlogy

from .exceptions import DomainOverflowError, EmptyDensityError, InvalidArgumentError

MASS_RTOL = 1e-12
MIN_GAP_FACTOR = 1e-10


@dataclass(frozen=True)
class Grid:
    """Uniform cell-centred grid on ``[-half_width, half_width]``."""

    half_width: float
    n: int

    def __post_init__(self):
        if not np.isfinite(self.half_width) or self.half_width <= 0:
            raise InvalidArgumentError(f"half_width must be positive, got {self.half_width}")
        if int(self.n) != self.n or self.n < 2:
            raise InvalidArgumentError(f"cell count must be an integer >= 2, got {self.n}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "half_width", float(self.half_width))

    @property
    def dx(self) -> float:
        return 2.0 * self.half_width / self.n

    @cached_property
    def centers(self) -> np.ndarray:
        c = -self.half_width + (np.arange(self.n) + 0.5) * self.dx
        c.setflags(write=False)
        return c

    @cached_property
    def edges(self) -> np.ndarray:
        e = -self.half_width + np.arange(self.n + 1) * self.dx
        e.setflags(write=False)
        return e

    @property
    def min_gap(self) -> float:
        """Smallest admissible distance between neighbouring particles."""
        return MIN_GAP_FACTOR * self.half_width


def make_grid(L: float, n: int) -> Grid:
    """Build the uniform grid with centres ``x_i = -L + (i + 1/2) dx``."""
    return Grid(L, n)


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class GridDensity:
    """Nonnegative cell values of a density on a :class:`Grid`."""

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = _frozen(self.values)
        if v.shape != (self.grid.n,):
            raise InvalidArgumentError(f"expected {self.grid.n} values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise InvalidArgumentError("density values must be finite")
        if np.any(v < 0):
            raise InvalidArgumentError(f"density values must be nonnegative (min {v.min():.3e})")
        object.__setattr__(self, "values", v)

    @cached_property
    def mass(self) -> float:
        return float(np.sum(self.values) * self.grid.dx)

    def scaled(self, factor: float) -> "GridDensity":
        return GridDensity(self.grid, self.values * factor)


@dataclass(frozen=True)
class ScalarField:
    """Real values per cell, e.g. a convolution ``K * rho``."""

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = _frozen(self.values)
        if v.shape != (self.grid.n,):
            raise InvalidArgumentError(f"expected {self.grid.n} values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise InvalidArgumentError("field values must be finite")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class ParticleDensity:
    """Equal-mass particles at strictly increasing positions."""

    positions: np.ndarray = field(repr=False)
    particle_mass: float

    def __post_init__(self):
        x = _frozen(self.positions)
        if x.ndim != 1 or x.size < 2:
            raise InvalidArgumentError("need at least two particle positions")
        if not np.all(np.isfinite(x)):
            raise InvalidArgumentError("particle positions must be finite")
        if np.any(np.diff(x) <= 0):
            raise InvalidArgumentError("particle positions must be strictly increasing")
        if not self.particle_mass > 0:
            raise InvalidArgumentError("particle mass must be positive")
        object.__setattr__(self, "positions", x)

    @property
    def n_particles(self) -> int:
        return self.positions.size

    @property
    def mass(self) -> float:
        return self.n_particles * self.particle_mass


def density_from_function(grid: Grid, func) -> GridDensity:
    """Sample ``func`` at the cell centres."""
    return GridDensity(grid, np.asarray(func(grid.centers), dtype=float))


def mass(rho: GridDensity) -> float:
    return rho.mass


def first_moment(rho: GridDensity) -> float:
    return float(np.sum(rho.grid.centers * rho.values) * rho.grid.dx)


def second_moment(rho: GridDensity) -> float:
    """Discrete second moment ``sum x_i^2 rho_i dx``."""
    return float(np.sum(rho.grid.centers**2 * rho.values) * rho.grid.dx)


def entropy(rho: GridDensity) -> float:
    """Boltzmann entropy ``sum (rho log rho - rho) dx`` with ``0 log 0 = 0``."""
    v = rho.values
    return float(np.sum(xlogy(v, v) - v) * rho.grid.dx)


def lp_norm(rho: GridDensity, p: float) -> float:
    return float((np.sum(rho.values**p) * rho.grid.dx) ** (1.0 / p))


def l1_distance(rho: GridDensity, mu: GridDensity) -> float:
    _check_same_grid(rho.grid, mu.grid)
    return float(np.sum(np.abs(rho.values - mu.values)) * rho.grid.dx)


def finite_difference(values: np.ndarray, dx: float) -> np.ndarray:
    """Centred difference in the interior, one-sided at the two ends."""
    return np.gradient(values, dx, edge_order=1)


def h1_seminorm_pow(rho: GridDensity, gamma: float) -> float:
    """Squared discrete H1 seminorm of ``rho**(gamma/2)``."""
    if not gamma > 1:
        raise InvalidArgumentError(f"gamma must exceed 1, got {gamma}")
    u = rho.values ** (0.5 * gamma)
    du = finite_difference(u, rho.grid.dx)
    return float(np.sum(du**2) * rho.grid.dx)


def project_monotone(positions: np.ndarray, min_gap: float) -> np.ndarray:
    """Smallest rightward correction making consecutive gaps at least ``min_gap``."""
    k = np.arange(positions.size) * min_gap
    return np.maximum.accumulate(positions - k) + k


def cumulative_mass(rho: GridDensity) -> np.ndarray:
    """Piecewise-linear CDF sampled at the ``n + 1`` cell edges."""
    F = np.empty(rho.grid.n + 1)
    F[0] = 0.0
    np.cumsum(rho.values * rho.grid.dx, out=F[1:])
    return F


def quantile(rho: GridDensity, levels: np.ndarray) -> np.ndarray:
    """Inverse of the piecewise-linear CDF at mass levels in ``(0, mass]``.

    Flat stretches of the CDF resolve to their left-most point.
    """
    F = cumulative_mass(rho)
    levels = np.asarray(levels, dtype=float)
    idx = np.searchsorted(F, levels, side="left")
    cell = np.clip(idx - 1, 0, rho.grid.n - 1)
    dens = rho.values[cell]
    safe = np.where(dens > 0, dens, 1.0)
    x = rho.grid.edges[cell] + np.where(dens > 0, (levels - F[cell]) / safe, 0.0)
    return np.clip(x, rho.grid.edges[cell], rho.grid.edges[cell + 1])


def to_particles(rho: GridDensity, n_particles: int) -> ParticleDensity:
    """Equal-mass particles at the mid-mass quantiles ``(k - 1/2) m / n_p``."""
    if n_particles < 2:
        raise InvalidArgumentError("need at least two particles")
    m = rho.mass
    if m <= 0:
        raise EmptyDensityError("cannot build particles from a density with zero mass")
    levels = (np.arange(n_particles) + 0.5) * (m / n_particles)
    x = project_monotone(quantile(rho, levels), rho.grid.min_gap)
    return ParticleDensity(x, m / n_particles)


def particle_cdf_nodes(p: ParticleDensity, L: float | None = None):
    """Breakpoints and cumulative masses of the particle reconstruction.

    Particle ``k`` sits at cumulative mass ``(k - 1/2) m_p``; the two end
    half-masses extend half a gap beyond the outermost particles (clipped to
    the domain if given), so the reconstruction carries the full mass.
    """
    x = p.positions
    mp = p.particle_mass
    n = x.size
    left = x[0] - 0.5 * (x[1] - x[0])
    right = x[-1] + 0.5 * (x[-1] - x[-2])
    if L is not None:
        left = max(left, -L)
        right = min(right, L)
    nodes = np.concatenate(([left], x, [right]))
    cum = np.concatenate(([0.0], (np.arange(n) + 0.5) * mp, [n * mp]))
    return nodes, cum


def deposit_partition(nodes: np.ndarray, cum: np.ndarray, grid: Grid) -> GridDensity:
    """Deposit a piecewise-constant density given by its CDF at ``nodes`` onto ``grid``."""
    G = np.interp(grid.edges, nodes, cum)
    G[0], G[-1] = 0.0, cum[-1]
    cell_mass = np.maximum(np.diff(G), 0.0)
    return GridDensity(grid, cell_mass / grid.dx)


def requantize(nodes: np.ndarray, cum: np.ndarray, n_particles: int, min_gap: float) -> ParticleDensity:
    """Equal-mass particles at the mid-mass quantiles of a partition density."""
    m = float(cum[-1])
    if m <= 0:
        raise EmptyDensityError("cannot build particles from a density with zero mass")
    levels = (np.arange(n_particles) + 0.5) * (m / n_particles)
    x = project_monotone(np.interp(levels, cum, nodes), min_gap)
    return ParticleDensity(x, m / n_particles)


def to_grid(p: ParticleDensity, grid: Grid) -> GridDensity:
    """Deposit the piecewise-constant particle reconstruction onto ``grid``."""
    L = grid.half_width
    x = p.positions
    if x[0] <= -L or x[-1] >= L:
        raise DomainOverflowError(
            f"particles span [{x[0]:.6g}, {x[-1]:.6g}], outside the open domain (-{L}, {L})"
        )
    nodes, cum = particle_cdf_nodes(p, L)
    return deposit_partition(nodes, cum, grid)


def _check_same_grid(a: Grid, b: Grid):
    if a != b:
        raise InvalidArgumentError(f"grid mismatch: {a} vs {b}")
