"""
Linear non-Markovian SSE for qubits with local sigma_z baths.

For ``L = sigma_z`` and a system Hamiltonian that commutes with every coupled
``sigma_z`` the functional derivative closes, ``delta psi_t / delta z*_s =
sigma_z psi_t``, and the SSE reduces to

    d psi / dt = [-i H_S + sum_k sigma_z^(k) z*_k(t) - sum_k (A_k(t) + E_k(t))] psi.

All generators commute, so one grid step is a product of exponentials.  The
state is kept unnormalized; its squared norm is the POVM weight of the
trajectory relative to the Gaussian sampling density.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.linalg import expm

from . import _kernels
from .correlations import CorrelationKernel, ModeSet, TimeGrid, build_kernel, decoherence_exponent
from .noise import CovarianceSampler, NoiseTrajectory, _phase_matrix, amplitudes_from_normals, stream

SIGMA_Z = np.diag([1.0, -1.0]).astype(complex)

#: Largest register handled by default (states are stored at every grid point).
MAX_QUBITS = 12


def _embed(op: NDArray[np.complex128], k: int, n: int) -> NDArray[np.complex128]:
    out = np.eye(1, dtype=complex)
    for q in range(n):
        out = np.kron(out, op if q == k else np.eye(2))
    return out


@dataclass(frozen=True)
class DephasingSystem:
    """``N`` non-interacting qubits, those in ``coupled`` dephased by their own bath.

    Qubit 0 is the leftmost Kronecker factor.  ``local_hamiltonians`` holds one
    2x2 hermitian matrix per qubit (``None`` means zero).
    """

    n_qubits: int
    coupled: tuple[int, ...]
    initial_state: NDArray[np.complex128]
    local_hamiltonians: tuple[NDArray[np.complex128] | None, ...] = ()
    max_qubits: int = MAX_QUBITS

    def __post_init__(self):
        n = int(self.n_qubits)
        if not 1 <= n <= self.max_qubits:
            raise ValueError(f"n_qubits must be in 1..{self.max_qubits}, got {n}")
        coupled = tuple(int(k) for k in self.coupled)
        if len(set(coupled)) != len(coupled) or any(not 0 <= k < n for k in coupled):
            raise ValueError(f"coupled qubit indices must be distinct and in 0..{n - 1}")
        hs = list(self.local_hamiltonians) or [None] * n
        if len(hs) != n:
            raise ValueError("need one local Hamiltonian (or None) per qubit")
        clean = []
        for k, h in enumerate(hs):
            h = np.zeros((2, 2), dtype=complex) if h is None else np.asarray(h, dtype=complex)
            if h.shape != (2, 2) or not np.allclose(h, h.conj().T, atol=1e-12):
                raise ValueError(f"local Hamiltonian of qubit {k} must be a hermitian 2x2 matrix")
            if k in coupled and not np.allclose(h @ SIGMA_Z, SIGMA_Z @ h, atol=1e-12):
                raise ValueError(
                    f"local Hamiltonian of coupled qubit {k} does not commute with sigma_z; "
                    "the exact dephasing propagator needs [H_k, sigma_z] = 0"
                )
            clean.append(h)
        psi = np.asarray(self.initial_state, dtype=complex).ravel()
        if psi.size != 2**n:
            raise ValueError(f"initial state must have dimension 2**{n} = {2**n}")
        norm = np.linalg.norm(psi)
        if not abs(norm - 1.0) < 1e-10:
            raise ValueError(f"initial state must be normalized (norm {norm:.12g})")
        psi.setflags(write=False)
        object.__setattr__(self, "n_qubits", n)
        object.__setattr__(self, "coupled", coupled)
        object.__setattr__(self, "local_hamiltonians", tuple(clean))
        object.__setattr__(self, "initial_state", psi)

    @property
    def dim(self) -> int:
        return 2**self.n_qubits

    @property
    def n_channels(self) -> int:
        return len(self.coupled)

    def hamiltonian(self) -> NDArray[np.complex128]:
        return sum(_embed(h, k, self.n_qubits) for k, h in enumerate(self.local_hamiltonians))

    def step_unitary(self, dt: float) -> NDArray[np.complex128]:
        u = np.eye(1, dtype=complex)
        for h in self.local_hamiltonians:
            u = np.kron(u, expm(-1j * dt * h))
        return u

    def local_step_unitaries(self, dt: float) -> NDArray[np.complex128]:
        """``exp(-i dt h_k)`` per qubit, shape ``(n_qubits, 2, 2)``; the step unitary is their Kronecker product."""
        return np.ascontiguousarray(np.stack([expm(-1j * dt * h) for h in self.local_hamiltonians]))

    def signs(self) -> NDArray[np.float64]:
        """``signs[b, m]``: eigenvalue of sigma_z on coupled qubit ``m`` for basis state ``b``."""
        b = np.arange(self.dim)
        cols = [1.0 - 2.0 * ((b >> (self.n_qubits - 1 - k)) & 1) for k in self.coupled]
        return np.ascontiguousarray(np.stack(cols, axis=1) if cols else np.zeros((self.dim, 0)))


@dataclass
class RelativeStateTrajectory:
    grid: TimeGrid
    states: NDArray[np.complex128]
    norms_sq: NDArray[np.float64]
    noise: tuple[NoiseTrajectory, ...] = ()

    def normalized(self, t_index: int) -> NDArray[np.complex128]:
        return self.states[t_index] / math.sqrt(self.norms_sq[t_index])


def _check_grids(grid: TimeGrid, kernels, noises=()) -> None:
    for obj in list(kernels) + list(noises):
        if obj.grid != grid:
            raise ValueError("all kernels and noise trajectories must share one grid")


def _phi_increments(kernels: Sequence[CorrelationKernel]) -> NDArray[np.complex128]:
    phi = sum(decoherence_exponent(k) for k in kernels)
    return np.ascontiguousarray(np.diff(phi)) if len(kernels) else None


def propagate_batch(
    system: DephasingSystem,
    dz: NDArray[np.complex128],
    dphi: NDArray[np.complex128],
    dt: float,
) -> NDArray[np.complex128]:
    """States ``(batch, n_steps + 1, dim)`` from noise increments ``dz[b, j, m]`` and exponent increments."""
    dz = np.ascontiguousarray(dz, dtype=complex)
    return _kernels.propagate_dephasing(
        np.ascontiguousarray(system.initial_state),
        system.local_step_unitaries(dt),
        system.signs(),
        dz,
        np.ascontiguousarray(dphi, dtype=complex),
    )


def propagate_dephasing(
    system: DephasingSystem,
    noises: Sequence[NoiseTrajectory],
    kernels: Sequence[CorrelationKernel],
) -> RelativeStateTrajectory:
    """Propagate one trajectory; ``noises[m]`` and ``kernels[m]`` belong to ``system.coupled[m]``."""
    if len(noises) != system.n_channels or len(kernels) != system.n_channels:
        raise ValueError("need one noise trajectory and one kernel per coupled qubit")
    if system.n_channels == 0:
        raise ValueError("no coupled qubits; use step_unitary directly")
    grid = kernels[0].grid
    _check_grids(grid, kernels, noises)
    dz = np.stack([nz.integral() for nz in noises], axis=-1)[None]
    states = propagate_batch(system, dz, _phi_increments(kernels), grid.dt)[0]
    return RelativeStateTrajectory(grid, states, np.sum(np.abs(states) ** 2, axis=1), tuple(noises))


def povm_density(trajectory: RelativeStateTrajectory, t_index: int) -> float:
    """``||psi(t)||^2``: outcome density relative to the sampling density ``p_xi(z)``."""
    return float(trajectory.norms_sq[t_index])


@dataclass(frozen=True)
class DephasingChannel:
    """Bath of one coupled qubit: its kernel plus how to draw noise for it.

    With ``modes`` present noise comes from the mode sum, otherwise from the
    covariance factorization of ``kernel``.
    """

    kernel: CorrelationKernel
    modes: ModeSet | None = None
    _sampler: CovarianceSampler | None = field(default=None, repr=False, compare=False)

    @classmethod
    def from_modes(cls, modes: ModeSet, grid: TimeGrid) -> "DephasingChannel":
        return cls(build_kernel(modes, grid), modes)

    @classmethod
    def from_kernel(cls, kernel: CorrelationKernel) -> "DephasingChannel":
        return cls(kernel, None, CovarianceSampler.from_kernel(kernel))

    @property
    def grid(self) -> TimeGrid:
        return self.kernel.grid

    def draw(self, seed: int, n_samples: int, start: int, channel: int) -> NDArray[np.complex128]:
        if self.modes is not None:
            L = len(self.modes)
            normals = np.empty((n_samples, L, 2))
            for k in range(n_samples):
                normals[k] = stream(seed, start + k, channel).standard_normal((L, 2))
            z = amplitudes_from_normals(self.modes.xi, normals)
            return np.conj(z) @ _phase_matrix(self.modes, self.grid)
        return self._sampler.draw(seed, n_samples, start, channel)


class DensityAccumulator:
    """Sums of ``psi psi^+`` (and squared parts for standard errors) over trajectories."""

    def __init__(self, n_times: int, dim: int):
        self.n = 0
        self.s_rho = np.zeros((n_times, dim, dim), dtype=complex)
        self.s_rho_sq = np.zeros((n_times, dim, dim), dtype=complex)  # Re^2 + i Im^2
        self.s_norm = np.zeros(n_times)
        self.s_norm_sq = np.zeros(n_times)

    def add(self, states: NDArray[np.complex128]) -> "DensityAccumulator":
        outer = states[..., :, None] * np.conj(states[..., None, :])
        norms = np.sum(np.abs(states) ** 2, axis=-1)
        self.n += states.shape[0]
        self.s_rho += outer.sum(axis=0)
        self.s_rho_sq += (outer.real**2).sum(axis=0) + 1j * (outer.imag**2).sum(axis=0)
        self.s_norm += norms.sum(axis=0)
        self.s_norm_sq += (norms**2).sum(axis=0)
        return self

    def merge(self, other: "DensityAccumulator") -> "DensityAccumulator":
        out = DensityAccumulator(*self.s_rho.shape[:2])
        out.n = self.n + other.n
        for name in ("s_rho", "s_rho_sq", "s_norm", "s_norm_sq"):
            setattr(out, name, getattr(self, name) + getattr(other, name))
        return out

    def result(self, grid: TimeGrid) -> "DensityAverage":
        n = self.n
        rho = self.s_rho / n
        norm_mean = self.s_norm / n
        if n > 1:
            f = n / (n - 1)
            var_re = np.clip(self.s_rho_sq.real / n - rho.real**2, 0, None) * f
            var_im = np.clip(self.s_rho_sq.imag / n - rho.imag**2, 0, None) * f
            se = np.sqrt(var_re / n) + 1j * np.sqrt(var_im / n)
            norm_se = np.sqrt(np.clip(self.s_norm_sq / n - norm_mean**2, 0, None) * f / n)
        else:
            se = np.full(rho.shape, np.nan + 1j * np.nan)
            norm_se = np.full(norm_mean.shape, np.nan)
        trace = np.real(np.trace(rho, axis1=1, axis2=2))
        return DensityAverage(grid, rho, se, np.abs(trace - 1.0), norm_mean, norm_se, n)


@dataclass(frozen=True)
class DensityAverage:
    """Ensemble average of unnormalized projectors on a grid.

    ``rho_se`` carries the standard error of the real parts in its real
    component and of the imaginary parts in its imaginary one.
    """

    grid: TimeGrid
    rho: NDArray[np.complex128]
    rho_se: NDArray[np.complex128]
    trace_deviation: NDArray[np.float64]
    mean_norm_sq: NDArray[np.float64]
    norm_sq_se: NDArray[np.float64]
    n_samples: int


def average_density_matrix(trajectories: Sequence[RelativeStateTrajectory]) -> DensityAverage:
    """``rho_S(t_k) = mean |psi(t_k)><psi(t_k)|`` with no reweighting (the Gaussian measure is in the sampling)."""
    trajectories = list(trajectories)
    if not trajectories:
        raise ValueError("need at least one trajectory")
    grid = trajectories[0].grid
    if any(tr.grid != grid for tr in trajectories):
        raise ValueError("trajectories live on different grids")
    acc = DensityAccumulator(grid.n_steps + 1, trajectories[0].states.shape[1])
    for tr in trajectories:
        acc.add(tr.states[None])
    return acc.result(grid)


def default_threads() -> int:
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)


def sample_states(
    system: DephasingSystem, channels: Sequence[DephasingChannel], seed: int, n_samples: int, start: int = 0
) -> NDArray[np.complex128]:
    """States of trajectories ``start .. start + n_samples - 1``; channel ``m`` uses stream ``(seed, index, m)``."""
    grid = channels[0].grid
    _check_grids(grid, [ch.kernel for ch in channels])
    dt = grid.dt
    dz = np.empty((n_samples, grid.n_steps, len(channels)), dtype=complex)
    for m, ch in enumerate(channels):
        z_star = ch.draw(seed, n_samples, start, m)
        dz[:, :, m] = 0.5 * dt * (z_star[:, 1:] + z_star[:, :-1])
    return propagate_batch(system, dz, _phi_increments([ch.kernel for ch in channels]), dt)


def run_ensemble(
    system: DephasingSystem,
    channels: Sequence[DephasingChannel],
    seed: int,
    n_samples: int,
    chunk: int = 2000,
    threads: int | None = None,
) -> DensityAverage:
    """Average ``n_samples`` trajectories without keeping them.

    Work is split into fixed chunks of trajectory indices; chunk results are
    merged in index order, so the output is bitwise independent of ``threads``.
    """
    if len(channels) != system.n_channels or not channels:
        raise ValueError("need one channel per coupled qubit")
    grid = channels[0].grid
    bounds = [(lo, min(chunk, n_samples - lo)) for lo in range(0, n_samples, chunk)]

    def work(b):
        lo, size = b
        return DensityAccumulator(grid.n_steps + 1, system.dim).add(sample_states(system, channels, seed, size, lo))

    threads = threads or default_threads()
    if threads > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, bounds))
    else:
        parts = [work(b) for b in bounds]
    total = parts[0]
    for p in parts[1:]:
        total = total.merge(p)
    return total.result(grid)


def write_norm_csv(traj: RelativeStateTrajectory, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "norm_sq"])
        for t, n in zip(traj.grid.times, traj.norms_sq):
            w.writerow([float(t), float(n)])


def dump_states(traj: RelativeStateTrajectory, path: str | Path) -> None:
    """Raw states: little-endian float64, interleaved re/im, row-major ``(n_steps + 1, dim)``."""
    np.ascontiguousarray(traj.states, dtype="<c16").tofile(path)


def load_states(path: str | Path, grid: TimeGrid, dim: int) -> NDArray[np.complex128]:
    return np.fromfile(path, dtype="<c16").reshape(grid.n_steps + 1, dim)


def write_rho_csv(avg: DensityAverage, path: str | Path) -> None:
    """Upper triangle ``i <= j`` of the averaged density matrix per time step."""
    dim = avg.rho.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "i", "j", "re_rho", "im_rho"])
        for k, t in enumerate(avg.grid.times):
            for i in range(dim):
                for j in range(i, dim):
                    r = avg.rho[k, i, j]
                    w.writerow([float(t), i, j, float(r.real), float(r.imag)])


def product_state(*qubits: ArrayLike) -> NDArray[np.complex128]:
    out = np.ones(1, dtype=complex)
    for q in qubits:
        out = np.kron(out, np.asarray(q, dtype=complex))
    return out


def bell_state() -> NDArray[np.complex128]:
    """``(|00> + |11>) / sqrt(2)``."""
    return np.array([1, 0, 0, 1], dtype=complex) / math.sqrt(2)
