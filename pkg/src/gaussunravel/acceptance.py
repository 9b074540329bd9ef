"""
Acceptance suite: ten end-to-end checks, each at its stated tolerance.

Every check returns a :class:`CriterionResult`; :func:`run_all` prints one
PASS/FAIL line per check.  All randomness is seeded, so a run is exactly
reproducible.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .correlations import (
    CorrelationKernel,
    ModeSet,
    SpectralDensityModel,
    TimeGrid,
    build_kernel,
    decoherence_exponent,
    discretize_spectral_density,
)
from .entanglement import CONCURRENCE, dephased_density, mean_entanglement_bound, wootters_concurrence
from .noise import CorrelationAccumulator, CovarianceSampler, modesum_ensemble
from .optimize import bound_at_horizon, optimal_rule, restore_rule, search_squeezing, zero_rule
from .oracle import CompositeState, FockBath, evolve_composite, quadrature_average, verify_sse_residual
from .sse import SIGMA_Z, DephasingChannel, DephasingSystem, bell_state, run_ensemble, sample_states

EPSILON = 1e-3
XI_TEST = 0.5 * np.exp(1j * math.pi / 3)
PLUS = np.array([1.0, 1.0], dtype=complex) / math.sqrt(2)


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        return f"C{self.number:<2d} {'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail} ({self.seconds:.1f} s)"


def _within(dev, se, k: float) -> bool:
    """Entrywise ``|dev| <= k se`` for real and imaginary parts (``se`` packed as re + i im)."""
    return bool(np.all(np.abs(dev.real) <= k * se.real + 1e-13) and np.all(np.abs(dev.imag) <= k * se.imag + 1e-13))


def _worst_ratio(dev, se) -> float:
    r_re = np.abs(dev.real) / np.maximum(se.real, 1e-300)
    r_im = np.abs(dev.imag) / np.maximum(se.imag, 1e-300)
    r_re[np.abs(dev.real) < 1e-13] = 0.0
    r_im[np.abs(dev.imag) < 1e-13] = 0.0
    return float(max(r_re.max(), r_im.max()))


def _lower(m):
    return m[np.tril_indices(m.shape[0])]


def c1_noise_correlations(n_samples: int = 100_000, seed: int = 101) -> CriterionResult:
    modes = ModeSet(
        np.array([0.6, 0.4, 0.5]),
        np.array([0.8, 1.5, 2.3]),
        np.array([XI_TEST, -0.7, 0.3j]),
    )
    grid = TimeGrid(0.25, 12)
    kernel = build_kernel(modes, grid)
    ms = CorrelationAccumulator(grid)
    cv = CorrelationAccumulator(grid)
    sampler = CovarianceSampler.from_kernel(kernel)
    for lo in range(0, n_samples, 20_000):
        size = min(20_000, n_samples - lo)
        ms.add(modesum_ensemble(modes, grid, seed, size, lo)[0])
        cv.add(sampler.draw(seed + 1, size, lo))
    a, b = ms.stats(kernel), cv.stats(kernel)
    ra = _worst_ratio(_lower(a.est_alpha - kernel.alpha), _lower(a.se_alpha))
    re = _worst_ratio(_lower(a.est_eta - kernel.eta), _lower(a.se_eta))

    def comb(x, y):
        return np.hypot(x.real, y.real) + 1j * np.hypot(x.imag, y.imag)

    rca = _worst_ratio(_lower(a.est_alpha - b.est_alpha), _lower(comb(a.se_alpha, b.se_alpha)))
    rce = _worst_ratio(_lower(a.est_eta - b.est_eta), _lower(comb(a.se_eta, b.se_eta)))
    ok = max(ra, re) <= 4.0 and max(rca, rce) <= 4.0
    return CriterionResult(
        1,
        "noise correlation fidelity",
        ok,
        f"worst |dev|/SE alpha {ra:.2f}, eta {re:.2f}; covariance vs mode-sum {max(rca, rce):.2f} (limit 4)",
    )


def _one_qubit_modes() -> ModeSet:
    return ModeSet(np.array([0.5, 0.35, 0.45]), np.array([0.9, 1.6, 2.4]), np.zeros(3, dtype=complex))


def c2_xi_independence(n_samples: int = 100_000, seed: int = 202) -> CriterionResult:
    base = _one_qubit_modes()
    grid = TimeGrid(0.05, 40)
    system = DephasingSystem(1, (0,), PLUS)
    rules = {"zero": zero_rule(), "optimal": optimal_rule(grid.T, EPSILON), "restore": restore_rule(grid.T, EPSILON)}
    avgs = {}
    for k, (name, rule) in enumerate(rules.items()):
        ch = DephasingChannel.from_modes(base.with_squeezing(rule), grid)
        avgs[name] = run_ensemble(system, [ch], seed + k, n_samples, chunk=10_000, threads=1)
    worst = 0.0
    names = list(avgs)
    for i in range(3):
        for j in range(i + 1, 3):
            x, y = avgs[names[i]], avgs[names[j]]
            se = np.hypot(x.rho_se.real, y.rho_se.real) + 1j * np.hypot(x.rho_se.imag, y.rho_se.imag)
            worst = max(worst, _worst_ratio(x.rho - y.rho, se))
    return CriterionResult(
        2,
        "xi-independence of the averaged state",
        worst <= 5.0,
        f"rules zero/optimal/restore, {n_samples} trajectories each; worst |diff|/SE {worst:.2f} (limit 5)",
    )


def c3_oracle_equivalence(tol: float = 1e-8) -> CriterionResult:
    modes = ModeSet(np.array([0.4]), np.array([1.0]), np.zeros(1, dtype=complex))
    bath = FockBath(modes, n_max=30)
    grid = TimeGrid(0.1, 30)
    h = 0.35 * SIGMA_Z
    evo = evolve_composite(h, SIGMA_Z, bath, grid, CompositeState.product(PLUS, bath))
    worst_ptr = worst_id = 0.0
    for xi in (0.0, XI_TEST):
        for k in (10, 20, 30):
            q = quadrature_average(evo.states[k], xi, n_nodes=50)
            worst_ptr = max(worst_ptr, q.partial_trace_residual)
            worst_id = max(worst_id, abs(q.identity_residual))
    ok = evo.valid and worst_ptr < tol and worst_id < tol
    return CriterionResult(
        3,
        "oracle equivalence",
        ok,
        f"leakage {evo.leakage:.1e}; partial-trace residual {worst_ptr:.2e}, identity residual {worst_id:.2e} (limit {tol:g})",
    )


def c4_sse_residual(tol: float = 1e-6) -> CriterionResult:
    omega = 1.3
    modes = ModeSet(np.array([0.45]), np.array([omega]), np.zeros(1, dtype=complex))
    bath = FockBath(modes, n_max=30)
    grid = TimeGrid(1e-3 / omega, 40)
    h = 0.2 * SIGMA_Z
    evo = evolve_composite(h, SIGMA_Z, bath, grid, CompositeState.product(PLUS, bath))
    nodes = [np.array([0.3 + 0.2j]), np.array([-0.6 + 0.5j]), np.array([1.1 - 0.4j])]
    res = {}
    for xi in (0.0, XI_TEST):
        res[xi] = verify_sse_residual(evo, h, SIGMA_Z, nodes, xi, time_indices=range(2, 39, 6)).max_residual
    worst = max(res.values())
    return CriterionResult(
        4,
        "mode-resolved SSE residual",
        evo.valid and worst < tol,
        f"dt = 1e-3/omega; residual xi=0 {res[0.0]:.2e}, xi!=0 {res[XI_TEST]:.2e} (limit {tol:g})",
    )


def _ohmic_modes(strength: float = 0.25) -> ModeSet:
    return discretize_spectral_density(SpectralDensityModel.ohmic(strength, 1.0), 20.0, 1000)


def c5_scaling_relation(n_samples: int = 1000, seed: int = 505, tol: float = 1e-8) -> CriterionResult:
    grid = TimeGrid(0.02, 150)
    ch = DephasingChannel.from_modes(_ohmic_modes().with_squeezing(optimal_rule(grid.T, EPSILON)), grid)
    system = DephasingSystem(2, (0,), bell_state())
    states = sample_states(system, [ch], seed, n_samples)
    f = np.exp(-2.0 * decoherence_exponent(ch.kernel).real)  # |det| of the local Kraus factor
    mu0 = CONCURRENCE(system.initial_state)
    worst = 0.0
    for s in states:
        p = np.sum(np.abs(s) ** 2, axis=1)
        mu = np.array([CONCURRENCE(v) for v in s])
        x = mu / p / mu0
        pred = f * p[0] / p
        worst = max(worst, float(np.max(np.abs(x - pred) / pred)))
    return CriterionResult(
        5,
        "per-trajectory scaling relation",
        worst < tol,
        f"{n_samples} Bell trajectories; worst relative deviation {worst:.2e} (limit {tol:g})",
    )


def c6_tight_bound(n_times: int = 50, tol: float = 1e-3) -> CriterionResult:
    modes = _ohmic_modes()
    psi0 = bell_state()
    worst_opt = 0.0
    min_gap = math.inf
    interior_gaps = []
    for T in np.linspace(0.1, 5.0, n_times):
        grid = TimeGrid.from_horizon(T, 200)
        opt = bound_at_horizon(modes, grid, optimal_rule(T, EPSILON))
        zero = bound_at_horizon(modes, grid, zero_rule())
        kappa = math.exp(-float(modes.dephasing_exponent(T)))
        exact = wootters_concurrence(dephased_density(psi0, 2, [0], [kappa]))
        worst_opt = max(worst_opt, abs(opt - exact))
        min_gap = min(min_gap, zero - exact)
        interior_gaps.append(zero - exact)
    interior = np.array(interior_gaps[5:-5])
    ok = worst_opt <= tol + EPSILON and min_gap >= -1e-12 and bool(np.all(interior > 0))
    return CriterionResult(
        6,
        "tight bound reproduction (Ohmic)",
        ok,
        f"{n_times} target times; max |xbar_opt - exact| {worst_opt:.2e} (limit {tol:g} + eps); "
        f"xi=0 gap min {min_gap:.2e}, interior min {interior.min():.3e}",
    )


def c7_multichannel(tol: float = 1e-10) -> CriterionResult:
    modes = _ohmic_modes().with_squeezing(optimal_rule(3.0, EPSILON))
    grid = TimeGrid(0.02, 150)
    kernels = [build_kernel(modes, grid) for _ in range(3)]
    single = mean_entanglement_bound(kernels[:1]).xbar
    triple = mean_entanglement_bound(kernels).xbar
    dev = float(np.max(np.abs(triple - single**3)))
    return CriterionResult(7, "multi-channel exponent", dev < tol, f"max |xbar_3 - xbar_1^3| {dev:.2e} (limit {tol:g})")


def c8_restoration(n_samples: int = 1000, seed: int = 808) -> CriterionResult:
    modes = _ohmic_modes()
    # horizon with decoherence function close to one
    ts = np.linspace(0.01, 10, 2000)
    T = float(ts[np.argmin(np.abs(modes.dephasing_exponent(ts) - 1.0))])
    grid = TimeGrid.from_horizon(T, 200)
    ch = DephasingChannel.from_modes(modes.with_squeezing(restore_rule(T, EPSILON)), grid)
    xbar = float(mean_entanglement_bound([ch.kernel]).xbar[-1])
    system = DephasingSystem(2, (0,), bell_state())
    states = sample_states(system, [ch], seed, n_samples)[:, -1]
    c0 = CONCURRENCE(system.initial_state)
    ratios = np.array([CONCURRENCE(s) / np.vdot(s, s).real / c0 for s in states])
    worst = float(np.max(np.abs(ratios - 1.0)))
    ok = xbar >= 0.99 and worst <= 10 * EPSILON
    return CriterionResult(
        8,
        "entanglement restoration",
        ok,
        f"Gamma(T) = 1 at T = {T:.3f}; xbar(T) {xbar:.6f}; worst per-trajectory |x - 1| {worst:.2e} (limit {10 * EPSILON:g})",
    )


def lorentzian_kernel(gamma: float, tau: float, grid: TimeGrid, xi_magnitude: float = 0.0) -> CorrelationKernel:
    """Exponential memory kernel on the whole frequency line, optionally with ``xi(w) = -|xi| exp(i w T)``.

    ``alpha(t, s) = gamma / (2 tau) exp(-|t - s| / tau)`` and
    ``eta(t, s) = |xi| alpha(T - t - s)``.
    """
    model = SpectralDensityModel.lorentzian(gamma, tau)
    n = grid.n_steps
    lags = model.continuum_alpha(np.arange(n + 1) * grid.dt)
    sums = xi_magnitude * model.continuum_alpha(grid.T - np.arange(2 * n + 1) * grid.dt)
    return CorrelationKernel.from_lags(grid, lags, sums)


def c9_markov_limit(
    taus: tuple[float, ...] = (0.1, 0.05, 0.025), gamma: float = 1.0, T: float = 0.5, n_samples: int = 40_000, seed: int = 909
) -> CriterionResult:
    system = DephasingSystem(1, (0,), PLUS)
    rows = []
    ok = True
    last_gap = math.inf
    for i, tau in enumerate(taus):
        grid = TimeGrid.from_horizon(T, int(round(10 * T / tau)))
        fits = []
        curves = []
        for j, mag in enumerate((0.0, 0.9)):
            k = lorentzian_kernel(gamma, tau, grid, mag)
            avg = run_ensemble(system, [DephasingChannel.from_kernel(k)], seed + 10 * i + j, n_samples, chunk=10_000, threads=1)
            c = 2.0 * avg.rho[:, 0, 1].real
            se = 2.0 * avg.rho_se[:, 0, 1].real
            curves.append((c, se))
            fits.append((-math.log(c[-1]) / T, se[-1] / (c[-1] * T)))
        (ca, sa), (cb, sb) = curves
        dev = float(np.max(np.abs(ca - cb) / np.maximum(np.hypot(sa, sb), 1e-300)))
        exact = 2 * gamma * (1 - tau / T * (1 - math.exp(-T / tau)))
        g_gap = abs(exact - 2 * gamma)
        fit_ok = all(abs(g - exact) <= 5 * s for g, s in fits)
        ok = ok and dev <= 5.0 and fit_ok and g_gap < last_gap
        last_gap = g_gap
        rows.append(f"tau={tau:g}: gamma_eff {fits[0][0]:.3f}/{fits[1][0]:.3f} (exact {exact:.3f}), |diff|/SE {dev:.2f}")
    return CriterionResult(9, "Markov limit", ok, f"target 2 gamma = {2 * gamma:g}; " + "; ".join(rows))


def c10_optimizer(tol: float = 1e-3, seed: int = 1010) -> CriterionResult:
    modes = ModeSet(np.array([0.3, 0.2, 0.25]), np.array([0.7, 1.1, 1.9]), np.zeros(3, dtype=complex))
    grid = TimeGrid(0.01, 250)
    res = search_squeezing(modes, grid, maximize=False, epsilon=EPSILON, n_starts=4, seed=seed)
    visited = min(v for _, v, _ in res.trace)
    never_lower = res.best_value >= res.analytic_value * (1 - 1e-12) and visited >= res.analytic_value * (1 - 1e-12)
    ok = res.phase_error < tol and never_lower and not res.budget_exhausted
    return CriterionResult(
        10,
        "optimizer validation",
        ok,
        f"phase error {res.phase_error:.2e} rad (limit {tol:g}); best {res.best_value:.9f} vs analytic {res.analytic_value:.9f}",
    )


CRITERIA: dict[int, Callable[[], CriterionResult]] = {
    1: c1_noise_correlations,
    2: c2_xi_independence,
    3: c3_oracle_equivalence,
    4: c4_sse_residual,
    5: c5_scaling_relation,
    6: c6_tight_bound,
    7: c7_multichannel,
    8: c8_restoration,
    9: c9_markov_limit,
    10: c10_optimizer,
}


def run_criterion(number: int) -> CriterionResult:
    start = time.perf_counter()
    res = CRITERIA[number]()
    res.seconds = time.perf_counter() - start
    return res


def run_all(only: list[int] | None = None, echo: bool = True) -> list[CriterionResult]:
    results = []
    for n in only or sorted(CRITERIA):
        res = run_criterion(n)
        if echo:
            print(res.line(), flush=True)
        results.append(res)
    return results
