"""
SL-invariant entanglement of relative states and the mean-entanglement bound
for local dephasing channels.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .correlations import CorrelationKernel, MarkovKernel, TimeGrid, decoherence_exponent
from .sse import RelativeStateTrajectory

SIGMA_Y = np.array([[0, -1j], [1j, 0]])
_YY = np.kron(SIGMA_Y, SIGMA_Y)


@dataclass(frozen=True)
class SLInvariantMeasure:
    """Pure-state measure, homogeneous of degree two and invariant under local SL transformations.

    ``local_dims`` lists the subsystem dimensions the measure expects.
    """

    name: str
    evaluator: Callable[[NDArray[np.complex128]], float]
    local_dims: tuple[int, ...] = (2, 2)

    def __call__(self, psi: ArrayLike) -> float:
        return float(self.evaluator(np.asarray(psi, dtype=complex)))


def concurrence2(psi: ArrayLike) -> float:
    """``|<psi*| sigma_y (x) sigma_y |psi>|`` of an unnormalized two-qubit vector."""
    psi = np.asarray(psi, dtype=complex).ravel()
    if psi.size != 4:
        raise ValueError(f"concurrence2 needs a 4-dimensional state, got {psi.size}")
    return float(abs(psi @ _YY @ psi))


def sigma_y_tangle(psi: ArrayLike) -> float:
    """``|<psi*| sigma_y^(x)n |psi>|`` for an even number ``n`` of qubits (reduces to concurrence for ``n = 2``)."""
    psi = np.asarray(psi, dtype=complex).ravel()
    n = int(round(math.log2(psi.size)))
    if 2**n != psi.size or n % 2:
        raise ValueError("sigma_y_tangle needs an even number of qubits")
    t = psi.reshape((2,) * n)
    for ax in range(n):
        t = np.moveaxis(np.tensordot(SIGMA_Y, t, axes=([1], [ax])), 0, ax)
    return float(abs(psi @ t.ravel()))


CONCURRENCE = SLInvariantMeasure("concurrence", concurrence2, (2, 2))


def random_sl(dim: int, rng: np.random.Generator) -> NDArray[np.complex128]:
    m = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return m / np.linalg.det(m) ** (1.0 / dim)


def check_measure(measure: SLInvariantMeasure, n_trials: int = 1000, seed: int = 0, rtol: float = 1e-10) -> dict:
    """Admission test for a user measure: homogeneity and local SL invariance on random inputs.

    Returns the worst relative deviations; ``ok`` is true when both are below ``rtol``.
    """
    rng = np.random.default_rng(seed)
    dims = measure.local_dims
    dim = int(np.prod(dims))
    worst_h = worst_sl = 0.0
    for _ in range(n_trials):
        psi = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
        base = measure(psi)
        scale = max(abs(base), 1e-300)
        u = complex(rng.standard_normal(), rng.standard_normal())
        worst_h = max(worst_h, abs(measure(u * psi) - abs(u) ** 2 * base) / (abs(u) ** 2 * scale))
        op = np.ones((1, 1))
        for d in dims:
            op = np.kron(op, random_sl(d, rng))
        worst_sl = max(worst_sl, abs(measure(op @ psi) - base) / scale)
    return {"homogeneity": worst_h, "sl_invariance": worst_sl, "ok": worst_h < rtol and worst_sl < rtol}


def wootters_concurrence(rho: ArrayLike, atol: float = 1e-8) -> float:
    """Two-qubit mixed-state concurrence ``max(0, l1 - l2 - l3 - l4)``."""
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (4, 4):
        raise ValueError("wootters_concurrence needs a 4x4 density matrix")
    if not np.allclose(rho, rho.conj().T, atol=atol):
        raise ValueError("density matrix is not hermitian")
    if abs(np.trace(rho).real - 1.0) > atol:
        raise ValueError(f"density matrix trace {np.trace(rho).real:.12g} deviates from 1")
    r = rho @ _YY @ rho.conj() @ _YY
    lam = np.sqrt(np.abs(np.linalg.eigvals(r).real))
    lam = np.sort(lam)[::-1]
    return float(max(0.0, lam[0] - lam[1] - lam[2] - lam[3]))


def dephased_density(psi0: ArrayLike, n_qubits: int, coupled: Sequence[int], factors: Sequence[complex]):
    """Exact ``rho(t)`` for local pure dephasing with no system Hamiltonian.

    Element ``(a, b)`` picks up ``factors[k]`` for each coupled qubit ``k`` with
    bits ``(0, 1)`` and its conjugate for ``(1, 0)``.
    """
    psi0 = np.asarray(psi0, dtype=complex).ravel()
    rho = np.outer(psi0, psi0.conj())
    idx = np.arange(2**n_qubits)
    for k, f in zip(coupled, factors):
        bit = (idx >> (n_qubits - 1 - k)) & 1
        up = (bit[:, None] == 0) & (bit[None, :] == 1)
        down = (bit[:, None] == 1) & (bit[None, :] == 0)
        rho = rho * np.where(up, f, 1.0) * np.where(down, np.conj(f), 1.0)
    return rho


def scaling_ratio(trajectory: RelativeStateTrajectory, measure: SLInvariantMeasure, t_index: int) -> float:
    """``mu(normalized psi(t)) / mu(normalized psi(0))``."""
    mu0 = measure(trajectory.normalized(0))
    if mu0 < 1e-14:
        raise ValueError("initial state carries no entanglement; the scaling ratio is undefined")
    return measure(trajectory.normalized(t_index)) / mu0


@dataclass
class EntanglementReport:
    grid: TimeGrid
    xbar: NDArray[np.float64]
    xi_rule_descriptor: str
    gamma_integral: NDArray[np.float64]
    channel_gamma_integrals: list[NDArray[np.float64]] = field(default_factory=list)
    exact_reference: NDArray[np.float64] | None = None

    @property
    def n_channels(self) -> int:
        return len(self.channel_gamma_integrals)


def mean_entanglement_bound(kernels: Sequence[CorrelationKernel | MarkovKernel], descriptor: str = "") -> EntanglementReport:
    """``xbar(t) = prod_k exp(-1/2 int_0^t gamma_k)`` with ``int gamma_k = 4 Re Phi_k``.

    ``Phi_k`` is the cumulative exponent of :func:`decoherence_exponent`, the
    same quantity the trajectory propagator uses, so bound and trajectories
    agree to rounding.
    """
    kernels = list(kernels)
    if not kernels:
        raise ValueError("need at least one channel")
    grid = kernels[0].grid
    if any(k.grid != grid for k in kernels):
        raise ValueError("channel kernels live on different grids")
    per = [4.0 * decoherence_exponent(k).real for k in kernels]
    total = np.sum(per, axis=0)
    return EntanglementReport(grid, np.exp(-0.5 * total), descriptor, total, per)


@dataclass(frozen=True)
class BoundComparison:
    t: NDArray[np.float64]
    xbar: NDArray[np.float64]
    exact: NDArray[np.float64]
    gap: NDArray[np.float64]
    violations: NDArray[np.bool_]

    @property
    def violated(self) -> bool:
        return bool(np.any(self.violations))


def bound_vs_exact(report: EntanglementReport, exact: ArrayLike, tolerance: float = 1e-10) -> BoundComparison:
    """Gap ``xbar - exact`` per time; entries below ``-tolerance`` violate the bound."""
    exact = np.asarray(exact, dtype=float)
    if exact.shape != report.xbar.shape:
        raise ValueError("exact reference must be sampled on the report grid")
    gap = report.xbar - exact
    return BoundComparison(report.grid.times, report.xbar, exact, gap, gap < -tolerance)


def write_report(report: EntanglementReport, csv_path: str | Path, json_path: str | Path, scenario: str = "") -> None:
    exact = report.exact_reference
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "xbar", "exact", "gap", "gamma_integral"])
        for k, t in enumerate(report.grid.times):
            e = "" if exact is None else float(exact[k])
            gap = "" if exact is None else float(report.xbar[k] - exact[k])
            w.writerow([float(t), float(report.xbar[k]), e, gap, float(report.gamma_integral[k])])
    header = {"scenario": scenario, "squeezing_rule": report.xi_rule_descriptor, "channels": report.n_channels}
    Path(json_path).write_text(json.dumps(header, indent=2))
