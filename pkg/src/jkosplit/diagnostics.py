"""Checks of the discrete estimates along computed trajectories.

Every function here is a pure function of completed
:class:`~jkosplit.driver.TrajectoryRecord` objects.  Constants are either
assembled from explicit bounds or fitted once at the coarsest time step and
then frozen; none is tuned per assertion.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import InvalidArgumentError, UnequalMassError
from .grid import GridDensity, entropy, h1_seminorm_pow
from .kernel import bessel_1d_prime, gradient_convolve_values
from .metrics import dbl_upper, w2_1d
from .testfunctions import spacetime_battery, spatial_battery

DISSIPATION_SLACK = 1e-9
ALIGN_RTOL = 1e-9


@dataclass(frozen=True)
class DissipationReport:
    """Per-step ``W2^2 / (2 tau)`` against the energy drop of the same step."""

    lhs: np.ndarray
    rhs: np.ndarray
    slack: np.ndarray

    @property
    def margin(self) -> np.ndarray:
        return self.rhs + self.slack - self.lhs

    @property
    def passed(self) -> bool:
        return bool(np.all(self.margin >= 0))


def dissipation_check(rec) -> DissipationReport:
    """Minimiser inequality at every transport step.

    Energies are those of the transport problem itself (particle form with
    the frozen support), so the check certifies exactly what the optimiser
    guarantees.
    """
    reps = rec.reports
    lhs = np.array([r.w2**2 / (2.0 * rec.tau) for r in reps])
    rhs = np.array([r.energy_prev - r.energy_new for r in reps])
    slack = np.array([DISSIPATION_SLACK * (1.0 + abs(r.energy_prev)) for r in reps])
    return DissipationReport(lhs, rhs, slack)


@dataclass(frozen=True)
class W2SumReport:
    partial_sums: np.ndarray
    bounds: np.ndarray
    constant: float

    @property
    def passed(self) -> bool:
        return bool(np.all(self.partial_sums <= self.bounds))


def w2_sum_check(rec) -> W2SumReport:
    """Summed step distances against ``4 tau (A0 + K0) + C tau + 4 n chi^2 m tau^2``.

    ``C = -4 inf(A + K)`` from ``A >= 0`` and ``K >= -chi m^2 / 4`` (the
    kernel is at most 1/2); the last term carries the mass ``m`` that the
    support-energy Lipschitz bound produces for non-unit mass.
    """
    if rec.mode == "splitting" and rec.spec.k_M > 0:
        raise InvalidArgumentError("the summed estimate needs a transport-only record")
    reps = rec.reports
    if not reps:
        return W2SumReport(np.zeros(0), np.zeros(0), 0.0)
    tau, chi = rec.tau, rec.spec.chi
    m = rec.rho[0].mass
    a0, k0, _ = reps[0].parts_prev
    C = chi * m * m
    n = np.arange(1, len(reps) + 1)
    sums = np.cumsum([r.w2**2 for r in reps])
    bounds = 4.0 * tau * (a0 + k0) + C * tau + 4.0 * n * chi**2 * m * tau**2
    return W2SumReport(sums, bounds, C)


@dataclass(frozen=True)
class RegularityReport:
    h1_integrals: np.ndarray
    h1_ratio: float
    entropy_constant: float
    entropy_margins: np.ndarray

    @property
    def passed_h1(self) -> bool:
        return self.h1_ratio <= 1.5

    @property
    def passed_entropy(self) -> bool:
        return bool(np.all(self.entropy_margins >= 0))

    @property
    def passed(self) -> bool:
        return self.passed_h1 and self.passed_entropy


def h1_time_integral(rec, gamma: float) -> float:
    """``tau sum_n (||rho^{gamma/2}||_2^2 + |rho^{gamma/2}|_{H1}^2)`` over ``n >= 1``."""
    total = 0.0
    for rho in rec.rho[1:]:
        total += float(np.sum(rho.values**gamma) * rho.grid.dx) + h1_seminorm_pow(rho, gamma)
    return rec.tau * total


def entropy_trace(rec) -> np.ndarray:
    return np.array([entropy(r) for r in rec.rho])


def regularity_check(recs, gamma: float) -> RegularityReport:
    """H1 time integrals across step sizes and the entropy envelope.

    ``recs`` are runs of one configuration at decreasing step sizes.  The
    entropy constant is the steepest growth rate ``max_n (H_n - H_0) / t_n``
    (floored at 0) of the coarsest run; every run must then satisfy
    ``H_n <= H_0 + C_ent t_n`` along its whole trace.
    """
    recs = sorted(recs, key=lambda r: -r.tau)
    ints = np.array([h1_time_integral(r, gamma) for r in recs])
    ratio = float(ints.max() / ints.min()) if ints.min() > 0 else (1.0 if ints.max() == 0 else np.inf)
    coarse = recs[0]
    H = entropy_trace(coarse)
    t = coarse.times
    c_ent = max(0.0, float(np.max((H[1:] - H[0]) / t[1:]))) if t.size > 1 else 0.0
    margins = []
    for r in recs:
        Hr = entropy_trace(r)
        tol = 1e-12 * (1.0 + np.abs(Hr[0]))
        margins.append(float(np.min(Hr[0] + c_ent * r.times + tol - Hr)))
    return RegularityReport(ints, ratio, c_ent, np.array(margins))


def constraint_residual(rec, battery=None) -> float:
    """``max_psi |tau sum_n sum_i h(rho_i^n) (1 - beta_i^n) psi(t_n, x_i) dx|``."""
    battery = spacetime_battery() if battery is None else battery
    x = rec.grid.centers
    dx = rec.grid.dx
    acc = np.zeros(len(battery))
    for n in range(1, len(rec.rho)):
        w = rec.spec.saturation_h(rec.rho[n].values) * (1 - rec.beta[n].values)
        if not np.any(w):
            continue
        t = n * rec.tau
        for j, psi in enumerate(battery):
            acc[j] += float(np.sum(w * psi(t, x)) * dx)
    return float(np.max(np.abs(rec.tau * acc))) if len(battery) else 0.0


def _index(rec, t: float) -> int:
    k = t / rec.tau
    i = int(round(k))
    if abs(i - k) > ALIGN_RTOL * max(1.0, k) or i < 0 or i > rec.completed_steps:
        raise InvalidArgumentError(f"time {t} is not a step boundary of the record")
    return i


def weak_terms(rho: GridDensity, beta, spec, battery):
    """Right-hand side ``d/dt int phi rho`` for each test function.

    Pressure form for diffusion, ``chi int rho (K' * rho) phi'`` for the
    self-interaction, ``chi int rho (K' * beta) phi'`` for the support
    attraction and ``int M(rho) phi`` for the reaction.
    """
    x, dx = rho.grid.centers, rho.grid.dx
    r = rho.values
    P = spec.pressure(r)
    Mr = spec.reaction_M(r) if spec.k_M else None
    if spec.chi:
        drift = spec.chi * r * (gradient_convolve_values(r, rho.grid) + gradient_convolve_values(beta.values.astype(float), rho.grid))
    out = np.empty(len(battery))
    for j, phi_fn in enumerate(battery):
        phi, d1, d2 = phi_fn.derivatives(x)
        val = float(np.sum(P * d2) * dx)
        if spec.chi:
            val += float(np.sum(drift * d1) * dx)
        if Mr is not None:
            val += float(np.sum(Mr * phi) * dx)
        out[j] = val
    return out


def weak_form_residual(rec, battery=None, t: float = 0.0, s: float | None = None) -> float:
    """Defect of the weak formulation between step boundaries ``t < s``.

    Time integrals use the left-endpoint rule over the recorded snapshots.
    Returns the maximum over the battery.
    """
    battery = spatial_battery() if battery is None else battery
    s = rec.completed_steps * rec.tau if s is None else s
    i0, i1 = _index(rec, t), _index(rec, s)
    if i1 <= i0:
        raise InvalidArgumentError("need t < s")
    x, dx = rec.grid.centers, rec.grid.dx
    phis = np.array([f(x) for f in battery])
    change = phis @ (rec.rho[i1].values - rec.rho[i0].values) * dx
    integral = np.zeros(len(battery))
    for k in range(i0, i1):
        integral += weak_terms(rec.rho[k], rec.beta[k], rec.spec, battery)
    return float(np.max(np.abs(change - rec.tau * integral)))


def interaction_term_symmetrized(rho: GridDensity, phi_fn, chi: float) -> float:
    """``(chi/2) sum_ij K'(x_i - x_j) (phi'(x_i) - phi'(x_j)) rho_i rho_j dx^2``."""
    x, dx = rho.grid.centers, rho.grid.dx
    _, d1, _ = phi_fn.derivatives(x)
    Kp = bessel_1d_prime(x[:, None] - x[None, :])
    r = rho.values
    return float(0.5 * chi * np.sum(Kp * (d1[:, None] - d1[None, :]) * r[:, None] * r[None, :]) * dx * dx)


def interaction_term(rho: GridDensity, phi_fn, chi: float) -> float:
    """``chi sum_i rho_i (K' * rho)_i phi'(x_i) dx``."""
    _, d1, _ = phi_fn.derivatives(rho.grid.centers)
    return float(chi * np.sum(rho.values * gradient_convolve_values(rho.values, rho.grid) * d1) * rho.grid.dx)


def _distance(a: GridDensity, b: GridDensity) -> float:
    try:
        return w2_1d(a, b)
    except UnequalMassError:
        return dbl_upper(a, b)


def trajectory_distance(rec_a, rec_b) -> float:
    """Sup over the coarser record's step boundaries of W2, or of the
    bounded-Lipschitz upper bound when masses differ."""
    coarse, fine = (rec_a, rec_b) if rec_a.tau >= rec_b.tau else (rec_b, rec_a)
    T = min(coarse.completed_steps * coarse.tau, fine.completed_steps * fine.tau)
    worst = 0.0
    for n in range(int(round(T / coarse.tau)) + 1):
        t = n * coarse.tau
        worst = max(worst, _distance(coarse.rho[n], fine.rho[_index(fine, t)]))
    return worst


@dataclass(frozen=True)
class SelfConvergenceReport:
    distances: np.ndarray
    rate: float

    @property
    def monotone(self) -> bool:
        return bool(np.all(np.diff(self.distances) <= 0))


def self_convergence(recs) -> SelfConvergenceReport:
    """Cauchy distances between successive step sizes and the observed rate.

    With three records at ``tau, tau/2, tau/4`` the rate is
    ``log2(d(tau, tau/2) / d(tau/2, tau/4))``; it is an empirical figure.
    """
    recs = sorted(recs, key=lambda r: -r.tau)
    d = np.array([trajectory_distance(a, b) for a, b in zip(recs[:-1], recs[1:])])
    rate = float(np.log2(d[0] / d[1])) if d.size >= 2 and d[1] > 0 and d[0] > 0 else np.nan
    return SelfConvergenceReport(d, rate)


def holder_constant(rec, max_snapshots: int = 40, metric: str = "auto") -> float:
    """``max_{s<t} dist(rho(s), rho(t)) / sqrt(t - s)`` over subsampled snapshots.

    ``metric`` is ``"w2"``, ``"dbl"`` (bounded-Lipschitz upper bound) or
    ``"auto"``, which picks W2 for mass-conserving records.
    """
    if metric == "auto":
        metric = "w2" if rec.spec.k_M == 0 or rec.mode == "jko-only" else "dbl"
    n = rec.completed_steps
    idx = np.unique(np.linspace(0, n, min(max_snapshots, n + 1)).round().astype(int))
    dist = w2_1d if metric == "w2" else dbl_upper
    best = 0.0
    for a in range(idx.size):
        for b in range(a + 1, idx.size):
            i, j = idx[a], idx[b]
            best = max(best, dist(rec.rho[i], rec.rho[j]) / np.sqrt((j - i) * rec.tau))
    return best
