"""Bessel kernel of ``(1 - Laplacian)`` and discrete convolutions against it.

In one dimension the kernel is the Morse potential ``K(x) = exp(-|x|) / 2``.
The two dimensional kernel has no elementary form and is evaluated from its
subordination integral; it is only used for asymptotic checks.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate
from scipy.signal import lfilter

from .exceptions import InvalidArgumentError
from .grid import Grid, GridDensity, ScalarField, _check_same_grid

U_CUTOFF = 40.0


def bessel_1d(x):
    """One dimensional Bessel kernel ``exp(-|x|) / 2``."""
    return 0.5 * np.exp(-np.abs(x))


def bessel_1d_prime(x):
    """Derivative of :func:`bessel_1d`, set to 0 at the kink."""
    return -0.5 * np.sign(x) * np.exp(-np.abs(x))


def _bessel_2d_scalar(r: float, epsrel: float) -> float:
    # t = e^u turns t^{-1} dt into du; the integrand peaks at e^u = 2 pi r
    c = np.pi * r * r
    peak = np.log(2.0 * np.pi * r)

    def integrand(u):
        return np.exp(-c * np.exp(-u) - np.exp(u) / (4.0 * np.pi))

    lo, hi = -U_CUTOFF, U_CUTOFF
    pts = [p for p in (peak - 5.0, peak, peak + 5.0) if lo < p < hi]
    val, _ = integrate.quad(integrand, lo, hi, points=pts, epsabs=0.0, epsrel=epsrel, limit=400)
    return val / (4.0 * np.pi)


def bessel_2d(r, epsrel: float = 1e-11):
    """Radial profile of the two dimensional Bessel kernel.

    Evaluates ``(1/4pi) int_0^inf t^{-1} exp(-pi r^2/t - t/(4pi)) dt`` by
    adaptive quadrature in ``u = log t`` restricted to ``|u| <= 40``.
    """
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr <= 0):
        raise InvalidArgumentError("bessel_2d is singular at r <= 0")
    out = np.vectorize(lambda s: _bessel_2d_scalar(s, epsrel), otypes=[float])(r_arr)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class KernelTable:
    """Kernel sampled at the grid lags ``K(l dx)``, ``l = 0..n-1``."""

    grid: Grid
    lags: np.ndarray = field(repr=False)
    kernel: Callable = field(default=bessel_1d, repr=False, compare=False)

    def __post_init__(self):
        lags = np.array(self.lags, dtype=float)
        if lags.shape != (self.grid.n,):
            raise InvalidArgumentError("lag table length must equal the cell count")
        lags.setflags(write=False)
        object.__setattr__(self, "lags", lags)

    @property
    def symmetric(self) -> np.ndarray:
        """Values at lags ``-(n-1) .. (n-1)``."""
        return np.concatenate((self.lags[:0:-1], self.lags))

    @property
    def is_exponential(self) -> bool:
        return self.kernel is bessel_1d


def kernel_table(grid: Grid, kernel: Callable = bessel_1d) -> KernelTable:
    return KernelTable(grid, kernel(np.arange(grid.n) * grid.dx), kernel)


def _direct(values: np.ndarray, tab: KernelTable) -> np.ndarray:
    n = values.size
    full = np.convolve(values, tab.symmetric)
    return full[n - 1 : 2 * n - 1] * tab.grid.dx


def _recursive(values: np.ndarray, tab: KernelTable) -> np.ndarray:
    # same discrete sum as _direct, via two first-order sweeps (exponential kernel only)
    q = np.exp(-tab.grid.dx)
    left = lfilter([1.0], [1.0, -q], values)
    right = lfilter([1.0], [1.0, -q], values[::-1])[::-1]
    return 0.5 * (left + right - values) * tab.grid.dx


def convolve_values(values: np.ndarray, tab: KernelTable, method: str = "direct") -> np.ndarray:
    if method == "recursive" and tab.is_exponential:
        return _recursive(np.asarray(values, dtype=float), tab)
    if method not in ("direct", "recursive"):
        raise InvalidArgumentError(f"unknown convolution method {method!r}")
    return _direct(np.asarray(values, dtype=float), tab)


def convolve(rho: GridDensity, tab: KernelTable, method: str = "direct") -> ScalarField:
    """``(K * rho)(x_i) = sum_j K(x_i - x_j) rho_j dx``."""
    _check_same_grid(rho.grid, tab.grid)
    return ScalarField(rho.grid, convolve_values(rho.values, tab, method))


def convolve_indicator(beta, tab: KernelTable, method: str = "direct") -> ScalarField:
    """``K * 1_S`` on the grid for a support indicator ``beta``."""
    _check_same_grid(beta.grid, tab.grid)
    return ScalarField(beta.grid, convolve_values(beta.values.astype(float), tab, method))


def gradient_convolve_values(values: np.ndarray, grid: Grid) -> np.ndarray:
    """``(K' * f)(x_i) = sum_j K'(x_i - x_j) f_j dx`` with ``K'(0) = 0``."""
    n = grid.n
    lags = np.arange(-(n - 1), n) * grid.dx
    full = np.convolve(np.asarray(values, dtype=float), bessel_1d_prime(lags))
    return full[n - 1 : 2 * n - 1] * grid.dx


def indicator_intervals(beta) -> np.ndarray:
    """Maximal runs of marked cells as an ``(k, 2)`` array of ``[a, b]`` endpoints."""
    b = np.asarray(beta.values, dtype=np.int8)
    padded = np.concatenate(([0], b, [0]))
    d = np.diff(padded)
    starts = np.flatnonzero(d == 1)
    stops = np.flatnonzero(d == -1)
    edges = beta.grid.edges
    return np.column_stack((edges[starts], edges[stops])) if starts.size else np.empty((0, 2))


def indicator_potential(points, intervals: np.ndarray):
    """Exact ``(K * 1_S)`` and its derivative at arbitrary points (1D Morse kernel).

    ``S`` is a finite union of intervals ``[a, b]``.  On each interval
    ``d/dx (K * 1_[a,b])(x) = K(x - a) - K(x - b)``.
    """
    x = np.asarray(points, dtype=float)[:, None]
    if intervals.size == 0:
        z = np.zeros(x.shape[0])
        return z, z.copy()
    a = intervals[:, 0][None, :]
    b = intervals[:, 1][None, :]
    ea = np.exp(-np.abs(x - a))
    eb = np.exp(-np.abs(x - b))
    inside = (x >= a) & (x <= b)
    # outside [a,b]: 0.5*|e^{-|x-b|} - e^{-|x-a|}|; inside: 1 - (e^{-(x-a)} + e^{-(b-x)})/2
    val = np.where(inside, 1.0 - 0.5 * (ea + eb), 0.5 * np.abs(ea - eb))
    der = 0.5 * (ea - eb)
    return val.sum(axis=1), der.sum(axis=1)
