"""The acceptance battery shared by ``jkosplit validate`` and the test suite.

Each criterion returns a :class:`CriterionResult`.  Runs are cached in an
:class:`AcceptanceContext` so criteria sharing a trajectory compute it once.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
from scipy import integrate

from . import diagnostics as diag
from .config import RunConfig, initial_density, parse_config
from .driver import DriverConfig, run_jko_only, run_splitting
from .grid import GridDensity, ParticleDensity, l1_distance, make_grid
from .kernel import bessel_1d, bessel_2d
from .model import ModelSpec
from .oracle import barenblatt_density, compare_to_oracle, fv_run
from .reaction import gronwall_check, reaction_step
from .transport import JkoProblem

PRESETS = ("barenblatt", "aggregation", "splitting", "fault_beta")
SWEEP_PRESETS = ("barenblatt", "aggregation", "splitting")
TAUS = (4e-3, 2e-3, 1e-3)
TAMPER_FACTOR = 1.01


def preset_path(name: str):
    return resources.files("jkosplit") / "presets" / f"{name}.yaml"


def load_preset(name: str) -> RunConfig:
    with resources.as_file(preset_path(name)) as p:
        return parse_config(p)


@dataclass
class CriterionResult:
    key: str
    title: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.key}: {self.title} -- {self.detail}"

    def as_dict(self) -> dict:
        return {"criterion": self.key, "title": self.title, "passed": self.passed, "detail": self.detail, "seconds": round(self.seconds, 3)}


@dataclass
class AcceptanceContext:
    """Lazily computed runs keyed by preset and step size."""

    tamper_kernel: bool = False
    seed: int = 20240917
    _runs: dict = field(default_factory=dict)
    _fv: dict = field(default_factory=dict)

    def config(self, name: str) -> RunConfig:
        return load_preset(name)

    def run(self, name: str, tau: float | None = None):
        cfg = self.config(name)
        tau = cfg.tau if tau is None else tau
        key = (name, tau)
        if key not in self._runs:
            cfg = cfg.replace(tau=tau)
            rho0 = initial_density(cfg)
            dcfg = cfg.driver_config()
            dcfg = DriverConfig(dcfg.jko, dcfg.continue_on_stall, dcfg.freeze_beta_zero, diagnostics=False)
            runner = run_jko_only if cfg.mode == "jko-only" else run_splitting
            self._runs[key] = runner(rho0, cfg.spec(), tau, cfg.T, dcfg)
        return self._runs[key]

    def sweep(self, name: str):
        return [self.run(name, t) for t in TAUS]

    def fv(self, name: str):
        if name not in self._fv:
            cfg = self.config(name)
            grid = make_grid(cfg.L, cfg.fv_n)
            self._fv[name] = fv_run(initial_density(cfg, grid), cfg.spec(), cfg.T, 0.01)
        return self._fv[name]


def _fmt(x: float) -> str:
    return f"{x:.3e}"


def check_dissipation(ctx: AcceptanceContext):
    worst, steps = np.inf, 0
    for name in PRESETS:
        recs = ctx.sweep(name) if name in SWEEP_PRESETS else [ctx.run(name)]
        for rec in recs:
            rep = diag.dissipation_check(rec)
            worst = min(worst, float(rep.margin.min()))
            steps += rep.lhs.size
    return worst >= 0, f"{steps} transport steps, smallest margin {_fmt(worst)}"


def check_w2_sum(ctx: AcceptanceContext):
    ok, worst = True, np.inf
    for name in SWEEP_PRESETS:
        if ctx.config(name).mode != "jko-only":
            continue
        for rec in ctx.sweep(name):
            rep = diag.w2_sum_check(rec)
            ok &= rep.passed
            worst = min(worst, float(np.min(rep.bounds - rep.partial_sums)))
    return ok, f"smallest bound margin {_fmt(worst)}"


def check_mass(ctx: AcceptanceContext):
    transport_err, growth_excess, reacting = 0.0, -np.inf, 0
    for name in PRESETS:
        recs = ctx.sweep(name) if name in SWEEP_PRESETS else [ctx.run(name)]
        for rec in recs:
            k = rec.spec.k_M
            for n, half in enumerate(rec.half):
                before = rec.rho[n].mass
                transport_err = max(transport_err, abs(half.mass - before) / before)
                if rec.gronwall[n] is None:
                    continue
                reacting += 1
                growth_excess = max(growth_excess, rec.rho[n + 1].mass / half.mass / np.exp(k * rec.tau) - 1.0)
    ok = transport_err <= 1e-12 and reacting > 0 and growth_excess <= 1e-12
    return ok, (
        f"transport drift {_fmt(transport_err)}; over {reacting} reaction steps "
        f"max growth factor / exp(k_M tau) - 1 = {_fmt(growth_excess)}"
    )


def check_gronwall(ctx: AcceptanceContext):
    rng = np.random.default_rng(ctx.seed)
    spec = ModelSpec(gamma=2.0, chi=1.0, k_M=1.0)
    grid = make_grid(10.0, 1024)
    tau = 0.01
    worst = 0.0
    x = grid.centers
    for _ in range(50):
        v = np.zeros_like(x)
        for _ in range(rng.integers(1, 4)):
            a, c, w = rng.uniform(0.1, 2.0), rng.uniform(-5, 5), rng.uniform(0.3, 2.0)
            v += a * np.exp(-(((x - c) / w) ** 2))
        before = GridDensity(grid, v)
        rep = gronwall_check(before, reaction_step(before, tau, spec), tau, spec.gamma, spec)
        lim = rep.bound * (1 + 10 * grid.dx)
        worst = max(worst, max(rep.ratio_lgamma, rep.ratio_m2, rep.ratio_h1) / lim)
    steps = 0
    for name in PRESETS:
        recs = ctx.sweep(name) if name in SWEEP_PRESETS else [ctx.run(name)]
        for rec in recs:
            for rep in rec.gronwall:
                if rep is None:
                    continue
                lim = rep.bound * rep.h1_slack
                worst = max(worst, max(rep.ratio_lgamma, rep.ratio_m2, rep.ratio_h1) / lim)
                steps += 1
    return worst <= 1.0, f"50 random profiles + {steps} reaction steps, worst ratio/bound {worst:.6f}"


def check_oracle(ctx: AcceptanceContext):
    cfg = ctx.config("barenblatt")
    rec = ctx.run("barenblatt", 1e-3)
    t_end = cfg.initial_time + cfg.T
    e_jko = l1_distance(rec.rho[-1], barenblatt_density(rec.grid, t_end, cfg.mass))
    fv = ctx.fv("barenblatt")
    e_fv = l1_distance(fv.rho[-1], barenblatt_density(fv.grid, t_end, cfg.mass))
    agg = ctx.config("aggregation")
    times = np.arange(1, int(round(agg.T / 0.01)) + 1) * 0.01
    cmp = compare_to_oracle(ctx.run("aggregation", 1e-3), ctx.fv("aggregation"), times, budget=agg.oracle_budget)
    ok = e_jko <= cfg.barenblatt_budget and e_fv <= 0.01 and cmp.passed
    return ok, f"JKO-Barenblatt L1 {_fmt(e_jko)}, FV-Barenblatt L1 {_fmt(e_fv)}, JKO-FV max L1 {_fmt(cmp.l1.max())}"


def check_constraint(ctx: AcceptanceContext):
    worst = 0.0
    for name in SWEEP_PRESETS:
        for rec in ctx.sweep(name):
            worst = max(worst, diag.constraint_residual(rec))
    fault = ctx.run("fault_beta")
    clean = ctx.run("splitting", fault.tau)
    r_fault, r_clean = diag.constraint_residual(fault), diag.constraint_residual(clean)
    ok = worst <= 1e-9 and r_fault > 0 and r_fault >= 1e3 * r_clean
    return ok, f"clean max {_fmt(worst)}, fault {_fmt(r_fault)} vs clean {_fmt(r_clean)}"


def check_weak_form(ctx: AcceptanceContext):
    ok, parts = True, []
    for name in SWEEP_PRESETS:
        res = np.array([diag.weak_form_residual(r) for r in ctx.sweep(name)])
        slope = float(np.polyfit(np.log(TAUS), np.log(res), 1)[0])
        good = bool(np.all(np.diff(res) < 0)) and slope >= 0.4
        ok &= good
        parts.append(f"{name} {'/'.join(_fmt(v) for v in res)} rate {slope:.2f}")
    return ok, "; ".join(parts)


def check_regularity(ctx: AcceptanceContext):
    ok, parts = True, []
    for name in SWEEP_PRESETS:
        rep = diag.regularity_check(ctx.sweep(name), ctx.config(name).gamma)
        ok &= rep.passed
        parts.append(f"{name} H1 ratio {rep.h1_ratio:.4f}, C_ent {rep.entropy_constant:.3g}, entropy margin {_fmt(rep.entropy_margins.min())}")
    return ok, "; ".join(parts)


def gradient_fd_error(rng, n_particles: int = 40, L: float = 10.0) -> float:
    """Max deviation of the analytic gradient from central differences,
    relative to the gradient's sup norm, at one random state."""
    spec = ModelSpec(gamma=float(rng.uniform(1.5, 3.0)), chi=float(rng.uniform(0.2, 2.0)))
    gaps = rng.uniform(0.02, 0.1, n_particles - 1)
    x_prev = np.concatenate(([0.0], np.cumsum(gaps)))
    x_prev -= x_prev.mean()
    prev = ParticleDensity(x_prev, 1.0 / n_particles)
    a = rng.uniform(-2.0, 0.0)
    intervals = np.array([[a, a + rng.uniform(0.5, 2.0)]])
    prob = JkoProblem(prev, intervals, float(rng.uniform(1e-3, 1e-1)), spec)
    x = x_prev + rng.uniform(-0.2, 0.2, n_particles) * gaps.min()
    g = prob.gradient(x)
    h = 1e-6 * L
    fd = np.empty_like(g)
    for k in range(n_particles):
        e = np.zeros(n_particles)
        e[k] = h
        fd[k] = (prob.objective(x + e) - prob.objective(x - e)) / (2 * h)
    return float(np.max(np.abs(g - fd)) / np.max(np.abs(fd)))


def check_gradient(ctx: AcceptanceContext):
    rng = np.random.default_rng(ctx.seed)
    errs = [gradient_fd_error(rng) for _ in range(20)]
    return max(errs) <= 1e-4, f"20 random states, max relative error {_fmt(max(errs))}"


def kernel_figures(scale: float = 1.0) -> dict:
    """Normalisation and asymptotic ratios of the (optionally scaled) kernels."""
    k1 = lambda x: scale * bessel_1d(x)
    k2 = lambda r: scale * bessel_2d(r)
    L = 10.0
    mass1, _ = integrate.quad(k1, -L, L, points=[0.0], epsabs=1e-13, epsrel=1e-13)
    mass2, _ = integrate.quad(lambda u: 2 * np.pi * k2(np.exp(u)) * np.exp(2 * u), -30.0, np.log(60.0), limit=200)
    small = k2(1e-3) / (-np.log(1e-3) / (2 * np.pi))
    large = k2(10.0) / (np.exp(-10.0) / np.sqrt(10.0) / (2 * np.sqrt(2 * np.pi)))
    return {"L": L, "mass_1d": mass1, "mass_2d": mass2, "small_r_ratio": small, "large_r_ratio": large}


def check_kernel(ctx: AcceptanceContext):
    f = kernel_figures(TAMPER_FACTOR if ctx.tamper_kernel else 1.0)
    ok = (
        abs(f["mass_1d"] - 1) <= np.exp(-f["L"]) + 1e-6
        and abs(f["mass_2d"] - 1) <= 1e-4
        and abs(f["small_r_ratio"] - 1) <= 0.10
        and abs(f["large_r_ratio"] - 1) <= 0.02
    )
    return ok, (
        f"1D mass {f['mass_1d']:.9f}, 2D mass {f['mass_2d']:.9f}, "
        f"small-r ratio {f['small_r_ratio']:.4f}, large-r ratio {f['large_r_ratio']:.4f}"
    )


def check_holder(ctx: AcceptanceContext):
    ok, parts = True, []
    for name in SWEEP_PRESETS:
        C = np.array([diag.holder_constant(r) for r in ctx.sweep(name)])
        drift = float(C.max() / C.min())
        ok &= drift <= 2.0
        parts.append(f"{name} C {'/'.join(f'{c:.4f}' for c in C)}")
    return ok, "; ".join(parts)


CRITERIA = (
    ("dissipation", "minimiser inequality at every transport step", check_dissipation),
    ("w2_sum", "summed W2 estimate", check_w2_sum),
    ("mass", "mass conservation and reaction growth", check_mass),
    ("gronwall", "reaction growth ratios", check_gronwall),
    ("oracle", "Barenblatt and finite-volume agreement", check_oracle),
    ("constraint", "support constraint residual", check_constraint),
    ("weak_form", "weak-form residual decay", check_weak_form),
    ("regularity", "H1 time integral and entropy envelope", check_regularity),
    ("gradient", "analytic gradient vs central differences", check_gradient),
    ("kernel", "kernel normalisation and asymptotics", check_kernel),
    ("holder", "Holder constant stability", check_holder),
)
CRITERION_KEYS = tuple(c[0] for c in CRITERIA)


def run_criterion(key: str, ctx: AcceptanceContext) -> CriterionResult:
    title, fn = {k: (t, f) for k, t, f in CRITERIA}[key]
    t0 = time.perf_counter()
    try:
        ok, detail = fn(ctx)
    except Exception as exc:  # a crash is a failed criterion, not a crashed battery
        ok, detail = False, f"error: {type(exc).__name__}: {exc}"
    return CriterionResult(key, title, bool(ok), detail, time.perf_counter() - t0)


def run_acceptance(only=None, tamper_kernel: bool = False, ctx: AcceptanceContext | None = None, log=None):
    """Run the selected criteria (all by default) and return their results."""
    keys = CRITERION_KEYS if not only else tuple(only)
    unknown = [k for k in keys if k not in CRITERION_KEYS]
    if unknown:
        raise KeyError(f"unknown criteria: {', '.join(unknown)}")
    ctx = ctx or AcceptanceContext(tamper_kernel=tamper_kernel)
    out = []
    for key in keys:
        res = run_criterion(key, ctx)
        if log is not None:
            log(res.line())
        out.append(res)
    return out
