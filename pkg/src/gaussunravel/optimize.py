"""
Squeezing rules and a numerical search over per-mode squeezing phases.

For local dephasing the bound at a target time ``T`` factorizes over bath
modes, and each factor depends on ``xi_l`` only through ``Re(conj(xi_l) S_l^2)``
with ``S_l = int_0^T exp(i w_l s) ds``.  Pushing ``xi_l`` to the unit circle
at ``-exp(i w_l T)`` minimizes the bound; ``+exp(i w_l T)`` maximizes it.
"""

from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.optimize import minimize_scalar

from .correlations import DEFAULT_EPSILON, ModeSet, TimeGrid, build_kernel, clamp_squeezing
from .entanglement import mean_entanglement_bound
from .noise import stream


class RuleKind(str, enum.Enum):
    ZERO = "zero"
    OPTIMAL = "optimal"
    RESTORE = "restore"
    PHASES = "phases"
    CUSTOM = "custom"


@dataclass(frozen=True)
class SqueezingRule:
    """Callable ``omega -> xi`` with every value kept at ``|xi| <= 1 - epsilon``."""

    kind: RuleKind
    T: float = 0.0
    epsilon: float = DEFAULT_EPSILON
    phases: tuple[float, ...] = ()
    magnitude: float = 0.0
    func: Callable | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "kind", RuleKind(self.kind))
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError("epsilon must lie in (0, 1)")
        if self.kind is RuleKind.PHASES and not 0.0 <= self.magnitude <= 1.0 - self.epsilon:
            raise ValueError("phase-rule magnitude must lie in [0, 1 - epsilon]")

    def __call__(self, omega: ArrayLike) -> NDArray[np.complex128]:
        omega = np.asarray(omega, dtype=float)
        k = self.kind
        if k is RuleKind.ZERO:
            return np.zeros(omega.shape, dtype=complex)
        if k is RuleKind.OPTIMAL:
            return -(1.0 - self.epsilon) * np.exp(1j * omega * self.T)
        if k is RuleKind.RESTORE:
            return (1.0 - self.epsilon) * np.exp(1j * omega * self.T)
        if k is RuleKind.PHASES:
            if omega.shape != (len(self.phases),):
                raise ValueError("phase rule has one phase per mode; evaluate it on the full mode array")
            return self.magnitude * np.exp(1j * np.asarray(self.phases))
        xi = np.broadcast_to(np.asarray(self.func(omega), dtype=complex), omega.shape)
        return clamp_squeezing(xi, self.epsilon)

    @property
    def descriptor(self) -> str:
        k = self.kind
        if k is RuleKind.ZERO:
            return "zero"
        if k in (RuleKind.OPTIMAL, RuleKind.RESTORE):
            return f"{k.value}(T={self.T:.12g}, epsilon={self.epsilon:.3g})"
        if k is RuleKind.PHASES:
            return f"phases(magnitude={self.magnitude:.12g}, n={len(self.phases)})"
        return f"custom({getattr(self.func, '__name__', 'function')}, epsilon={self.epsilon:.3g})"

    def markov_form(self) -> tuple[complex, float]:
        """``(a, shift)`` with ``xi(w) = a exp(i w shift)``, the form a Markov kernel can carry."""
        k = self.kind
        if k is RuleKind.ZERO:
            return 0j, 0.0
        if k is RuleKind.OPTIMAL:
            return complex(-(1.0 - self.epsilon)), self.T
        if k is RuleKind.RESTORE:
            return complex(1.0 - self.epsilon), self.T
        raise ValueError(f"rule '{k.value}' has no Markov-limit form")


def zero_rule() -> SqueezingRule:
    return SqueezingRule(RuleKind.ZERO)


def optimal_rule(T: float, epsilon: float = DEFAULT_EPSILON) -> SqueezingRule:
    """``omega -> -(1 - epsilon) exp(i omega T)``: tightest bound at ``t = T``."""
    return SqueezingRule(RuleKind.OPTIMAL, T=float(T), epsilon=epsilon)


def restore_rule(T: float, epsilon: float = DEFAULT_EPSILON) -> SqueezingRule:
    """``omega -> (1 - epsilon) exp(i omega T)``: bound pushed back to one at ``t = T``."""
    return SqueezingRule(RuleKind.RESTORE, T=float(T), epsilon=epsilon)


def phase_rule(phases: ArrayLike, magnitude: float, epsilon: float = DEFAULT_EPSILON) -> SqueezingRule:
    return SqueezingRule(RuleKind.PHASES, epsilon=epsilon, phases=tuple(map(float, phases)), magnitude=magnitude)


def custom_rule(func: Callable, epsilon: float = DEFAULT_EPSILON) -> SqueezingRule:
    return SqueezingRule(RuleKind.CUSTOM, epsilon=epsilon, func=func)


def bound_at_horizon(modes: ModeSet, grid: TimeGrid, rule, n_channels: int = 1) -> float:
    """``xbar(T)`` for ``n_channels`` identical channels, through the full kernel path."""
    k = build_kernel(modes.with_squeezing(rule), grid)
    return float(mean_entanglement_bound([k] * n_channels).xbar[-1])


class PhaseObjective:
    """``log xbar(T)`` as a function of per-mode phases at fixed magnitude.

    Exactly the exponent of :func:`mean_entanglement_bound` on ``grid``:
    ``-2 M [1/2 w^T Re(alpha) w - 1/2 sum_l Re(conj(xi_l) g_l^2 S_l^2)]`` with
    ``S_l`` the trapezoid sum of ``exp(i w_l t_k)``.
    """

    def __init__(self, modes: ModeSet, grid: TimeGrid, n_channels: int = 1):
        w = grid.trapezoid_weights()
        self.modes = modes
        self.grid = grid
        self.n_channels = n_channels
        s = np.exp(1j * np.outer(modes.omega, grid.times)) @ w
        self.g2s2 = modes.g**2 * s**2
        self.alpha_part = 0.5 * float(np.sum(modes.g**2 * np.abs(s) ** 2))
        self.evaluations = 0

    def log_xbar(self, xi: NDArray[np.complex128]) -> float:
        self.evaluations += 1
        eta_part = -0.5 * float(np.real(np.sum(np.conj(xi) * self.g2s2)))
        return -2.0 * self.n_channels * (self.alpha_part + eta_part)

    def analytic_phases(self, maximize: bool = False) -> NDArray[np.float64]:
        base = self.modes.omega * self.grid.T
        return np.mod(base if maximize else base + math.pi, 2 * math.pi)


def circular_distance(a: ArrayLike, b: ArrayLike) -> NDArray[np.float64]:
    d = np.mod(np.asarray(a) - np.asarray(b) + math.pi, 2 * math.pi) - math.pi
    return np.abs(d)


@dataclass
class SearchResult:
    best_rule: SqueezingRule
    best_phases: NDArray[np.float64]
    best_value: float
    analytic_phases: NDArray[np.float64]
    analytic_value: float
    analytic_gap: float
    phase_error: float
    trace: list[tuple[int, float, NDArray[np.float64]]]
    magnitude_sweep: list[tuple[float, float]]
    budget_exhausted: bool
    evaluations: int
    maximize: bool

    def as_dict(self) -> dict:
        return {
            "objective": "maximize" if self.maximize else "minimize",
            "best_value": self.best_value,
            "best_phases": self.best_phases.tolist(),
            "analytic_value": self.analytic_value,
            "analytic_phases": self.analytic_phases.tolist(),
            "analytic_gap": self.analytic_gap,
            "phase_error": self.phase_error,
            "magnitude_sweep": [[m, v] for m, v in self.magnitude_sweep],
            "budget_exhausted": self.budget_exhausted,
            "evaluations": self.evaluations,
            "rule": self.best_rule.descriptor,
        }

    def write(self, trace_csv: str | Path, result_json: str | Path) -> None:
        n = self.best_phases.size
        with open(trace_csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "objective"] + [f"phase_{i + 1}" for i in range(n)])
            for it, val, ph in self.trace:
                w.writerow([it, float(val)] + [float(p) for p in ph])
        Path(result_json).write_text(json.dumps(self.as_dict(), indent=2))


class _Budget(Exception):
    pass


def search_squeezing(
    modes: ModeSet,
    grid: TimeGrid,
    maximize: bool = False,
    epsilon: float = DEFAULT_EPSILON,
    n_starts: int = 4,
    budget: int = 20000,
    seed: int = 0,
    n_channels: int = 1,
    sweeps: int = 50,
    xtol: float = 1e-10,
) -> SearchResult:
    """Multi-start coordinate descent over per-mode phases at ``|xi| = 1 - epsilon``.

    Each coordinate step scans 16 phases and polishes the best with a bounded
    Brent search.  ``budget`` caps objective evaluations; on exhaustion the
    best point so far is returned with ``budget_exhausted`` set.  The target
    time is ``grid.T``.
    """
    if len(modes) > 16:
        raise ValueError("phase search is meant for at most 16 modes")
    obj = PhaseObjective(modes, grid, n_channels)
    mag = 1.0 - epsilon
    sign = -1.0 if maximize else 1.0
    n = len(modes)
    trace: list[tuple[int, float, NDArray[np.float64]]] = []
    best = {"f": math.inf, "phases": None}
    scan = np.linspace(0.0, 2 * math.pi, 16, endpoint=False)

    def f(phases):
        if obj.evaluations >= max(budget, 1):
            raise _Budget
        val = sign * obj.log_xbar(mag * np.exp(1j * phases))
        if val < best["f"]:
            best["f"], best["phases"] = val, phases.copy()
        return val

    exhausted = False
    iteration = 0
    try:
        for start in range(n_starts):
            phases = stream(seed, start, 0).uniform(0.0, 2 * math.pi, n)
            current = f(phases)
            trace.append((iteration, math.exp(sign * current), phases.copy()))
            for _ in range(sweeps):
                previous = current
                for i in range(n):

                    def line(p, i=i):
                        trial = phases.copy()
                        trial[i] = p
                        return f(trial)

                    vals = [line(p) for p in scan]
                    j = int(np.argmin(vals))
                    step = scan[1] - scan[0]
                    res = minimize_scalar(
                        line,
                        bounds=(scan[j] - step, scan[j] + step),
                        method="bounded",
                        options={"xatol": xtol},
                    )
                    if res.fun <= vals[j]:
                        phases[i] = np.mod(res.x, 2 * math.pi)
                        current = res.fun
                    else:
                        phases[i] = scan[j]
                        current = vals[j]
                iteration += 1
                trace.append((iteration, math.exp(sign * current), phases.copy()))
                if abs(previous - current) <= 1e-15 * max(1.0, abs(current)):
                    break
            if budget == 0:
                raise _Budget
    except _Budget:
        exhausted = True
    n_evaluations = obj.evaluations

    best_phases = np.mod(best["phases"], 2 * math.pi)
    best_value = math.exp(sign * best["f"])
    ana_phases = obj.analytic_phases(maximize)
    ana_value = math.exp(obj.log_xbar(mag * np.exp(1j * ana_phases)))
    sweep = [
        (float(m), math.exp(obj.log_xbar(m * np.exp(1j * best_phases))))
        for m in np.linspace(0.0, mag, 11)
    ]
    gap = (best_value - ana_value) if not maximize else (ana_value - best_value)
    return SearchResult(
        best_rule=phase_rule(best_phases, mag, epsilon),
        best_phases=best_phases,
        best_value=best_value,
        analytic_phases=ana_phases,
        analytic_value=ana_value,
        analytic_gap=gap,
        phase_error=float(np.max(circular_distance(best_phases, ana_phases))),
        trace=trace,
        magnitude_sweep=sweep,
        budget_exhausted=exhausted,
        evaluations=n_evaluations,
        maximize=maximize,
    )


def horizon_bound_curve(modes: ModeSet, grid: TimeGrid, rule: str, epsilon: float = DEFAULT_EPSILON, n_channels: int = 1):
    """``xbar_{xi(T)}(T)`` for every grid time ``T`` at once, retuning the rule to each ``T``.

    ``rule`` is ``"zero"``, ``"optimal"`` or ``"restore"``.  With
    ``S_l(T)`` the trapezoid sum of ``exp(i w_l t)`` up to ``T`` the exponent
    is ``-(1 + c) M sum_l g_l^2 |S_l|^2`` with ``c = 0, 1 - epsilon,
    -(1 - epsilon)``; identical to :func:`bound_at_horizon` on the truncated grid.
    """
    c = {"zero": 0.0, "optimal": 1.0 - epsilon, "restore": -(1.0 - epsilon)}[rule]
    dt = grid.dt
    ph = np.exp(1j * np.outer(grid.times, modes.omega))
    cs = np.cumsum(ph, axis=0)
    s = dt * (cs - 0.5 * (ph[0] + ph))
    s[0] = 0.0
    a = np.sum(modes.g**2 * np.abs(s) ** 2, axis=1)
    return np.exp(-(1.0 + c) * n_channels * a)
