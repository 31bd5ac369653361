"""Model nonlinearities, the frozen-support energy and support extraction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import InvalidArgumentError
from .grid import Grid, GridDensity, _check_same_grid
from .kernel import KernelTable, convolve, convolve_indicator

PHI_FAMILIES = ("power",)


@dataclass(frozen=True)
class SupportIndicator:
    """{0,1}-valued cell field marking the support of a density."""

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values)
        if v.shape != (self.grid.n,):
            raise InvalidArgumentError(f"expected {self.grid.n} indicator values, got {v.shape}")
        if not np.all((v == 0) | (v == 1)):
            raise InvalidArgumentError("indicator values must be exactly 0 or 1")
        v = v.astype(np.int8)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, grid: Grid) -> "SupportIndicator":
        return cls(grid, np.zeros(grid.n, dtype=np.int8))


def _nonneg(s, name):
    s = np.asarray(s, dtype=float)
    if np.any(s < 0):
        raise InvalidArgumentError(f"{name} requires s >= 0")
    return s


@dataclass(frozen=True)
class ModelSpec:
    """Nonlinearities and coefficients of the aggregation-diffusion-reaction model.

    Parameters
    ----------
    gamma : float
        Adiabatic exponent, must exceed 1.
    chi : float
        Chemotactic sensitivity, must be positive (0 is allowed to switch
        attraction off for oracle runs).
    k_M : float
        Logistic reaction rate, ``M(s) = k_M s (1 - s)``.
    k_h : float
        Saturation rate, ``h(s) = k_h s / (1 + s)``.
    phi_family : str
        Diffusion family tag; ``"power"`` is ``Phi(s) = s^gamma / (gamma - 1)``.
    support_rtol : float
        Relative support threshold; cells above ``support_rtol * max(rho0)``
        count as occupied.
    """

    gamma: float = 2.0
    chi: float = 1.0
    k_M: float = 0.0
    k_h: float = 1.0
    phi_family: str = "power"
    support_rtol: float = 1e-10

    def __post_init__(self):
        if not self.gamma > 1:
            raise InvalidArgumentError(f"gamma must exceed 1, got {self.gamma}")
        if not self.chi >= 0:
            raise InvalidArgumentError(f"chi must be nonnegative, got {self.chi}")
        if not self.k_M >= 0:
            raise InvalidArgumentError(f"k_M must be nonnegative, got {self.k_M}")
        if not self.k_h > 0:
            raise InvalidArgumentError(f"k_h must be positive, got {self.k_h}")
        if self.phi_family not in PHI_FAMILIES:
            raise InvalidArgumentError(f"unknown phi family {self.phi_family!r}")
        if not self.support_rtol > 0:
            raise InvalidArgumentError("support_rtol must be positive")
        s = np.logspace(-6, 3, 200)
        lo, hi = self.c_gamma * s ** (self.gamma - 2), self.C_gamma * s ** (self.gamma - 2)
        d2 = self.phi_second(s)
        if np.any(d2 < lo * (1 - 1e-12)) or np.any(d2 > hi * (1 + 1e-12)):
            raise InvalidArgumentError("phi'' violates the growth sandwich")

    @property
    def c_gamma(self) -> float:
        return self.gamma

    @property
    def C_gamma(self) -> float:
        return self.gamma

    def phi(self, s):
        s = _nonneg(s, "phi")
        return s**self.gamma / (self.gamma - 1.0)

    def phi_prime(self, s):
        s = _nonneg(s, "phi_prime")
        return self.gamma * s ** (self.gamma - 1.0) / (self.gamma - 1.0)

    def phi_second(self, s):
        s = _nonneg(s, "phi_second")
        with np.errstate(divide="ignore"):
            return self.gamma * s ** (self.gamma - 2.0)

    def pressure(self, s):
        """``s Phi'(s) - Phi(s)``, so that ``d/dx pressure(rho) = rho d/dx Phi'(rho)``."""
        s = _nonneg(s, "pressure")
        return s**self.gamma

    def f(self, z):
        z = _nonneg(z, "f")
        return self.phi(z ** (2.0 / self.gamma))

    def reaction_M(self, s):
        s = np.asarray(s, dtype=float)
        return self.k_M * s * (1.0 - s)

    def saturation_h(self, s):
        s = np.asarray(s, dtype=float)
        return self.k_h * s / (1.0 + s)

    def saturation_h_prime(self, s):
        s = np.asarray(s, dtype=float)
        return self.k_h / (1.0 + s) ** 2

    def threshold(self, rho0: GridDensity) -> float:
        """Absolute support threshold for a run started from ``rho0``."""
        peak = float(np.max(rho0.values)) if rho0.values.size else 0.0
        return self.support_rtol * peak

    def with_params(self, **kw) -> "ModelSpec":
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d.update(kw)
        return ModelSpec(**d)


def internal_energy(rho: GridDensity, spec: ModelSpec) -> float:
    return float(np.sum(spec.phi(rho.values)) * rho.grid.dx)


def interaction_energy(rho: GridDensity, tab: KernelTable, spec: ModelSpec) -> float:
    c = convolve(rho, tab).values
    return float(-0.5 * spec.chi * np.sum(rho.values * c) * rho.grid.dx)


def support_energy(rho: GridDensity, beta: SupportIndicator, tab: KernelTable, spec: ModelSpec) -> float:
    _check_same_grid(rho.grid, beta.grid)
    c = convolve_indicator(beta, tab).values
    return float(-spec.chi * np.sum(rho.values * c) * rho.grid.dx)


@dataclass(frozen=True)
class EnergyParts:
    internal: float
    interaction: float
    support: float

    @property
    def total(self) -> float:
        return self.internal + self.interaction + self.support


def energy_parts(rho, beta, tab, spec) -> EnergyParts:
    return EnergyParts(
        internal_energy(rho, spec),
        interaction_energy(rho, tab, spec),
        support_energy(rho, beta, tab, spec),
    )


def total_energy(rho: GridDensity, beta: SupportIndicator, tab: KernelTable, spec: ModelSpec) -> float:
    """Frozen-support energy: internal + self-interaction + support attraction."""
    return energy_parts(rho, beta, tab, spec).total


def support_set(rho: GridDensity, threshold: float) -> SupportIndicator:
    """Mark the cells whose density is strictly above ``threshold``."""
    return SupportIndicator(rho.grid, (rho.values > threshold).astype(np.int8))
