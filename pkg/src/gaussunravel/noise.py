"""
Samplers for the complex Gaussian process ``z*_t`` and ensemble estimators.

Two independent routes are provided:

* mode sum: draw each mode amplitude ``z_l`` from the squeezed Gaussian
  density ``p_xi(z)`` and form ``z*_t = -i sum_l g_l exp(i w_l t) conj(z_l)``;
* covariance factorization: build the real covariance of ``(Re z_t, Im z_t)``
  from ``alpha`` and ``eta`` and transform i.i.d. normals.

Random streams
--------------
Every trajectory owns a counter-based Philox stream keyed by the run seed,
``Philox(key=seed, counter=[0, index, channel, 0])``.  Trajectory ``index``
therefore gets the same normals whether it is drawn alone, inside a batch, or
on another worker (the transformed noise agrees to rounding; fixed chunking
makes ensemble outputs bitwise reproducible).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from numpy.typing import NDArray

from .correlations import CorrelationKernel, ModeSet, TimeGrid

#: Relative threshold below which negative covariance eigenvalues count as rounding.
PSD_TOLERANCE = 1e-10


def stream(seed: int, index: int = 0, channel: int = 0) -> np.random.Generator:
    """Generator for trajectory ``index`` and noise ``channel`` of a run seeded with ``seed``."""
    if seed < 0 or index < 0 or channel < 0:
        raise ValueError("seed, index and channel must be nonnegative")
    return np.random.Generator(np.random.Philox(key=int(seed), counter=[0, int(index), int(channel), 0]))


def _as_generator(seed_or_rng, index: int = 0, channel: int = 0) -> np.random.Generator:
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return stream(int(seed_or_rng), index, channel)


def _check_xi(xi: NDArray[np.complex128]) -> None:
    if np.any(np.abs(xi) >= 1.0):
        raise ValueError("mode amplitudes need |xi| < 1 for every mode")


def amplitudes_from_normals(xi: NDArray[np.complex128], normals: NDArray[np.float64]) -> NDArray[np.complex128]:
    """Map standard normals ``normals[..., l, 0:2]`` to draws from ``p_xi``.

    In the frame rotated by ``arg(xi) / 2`` the density factorizes into
    independent real and imaginary parts with variances ``(1 +- |xi|) / 2``.
    """
    r = np.abs(xi)
    rot = np.exp(0.5j * np.angle(xi))
    x = np.sqrt(0.5 * (1 + r)) * normals[..., 0]
    y = np.sqrt(0.5 * (1 - r)) * normals[..., 1]
    return rot * (x + 1j * y)


def sample_mode_amplitudes(modes: ModeSet | NDArray[np.complex128], seed, index: int = 0, channel: int = 0):
    """One amplitude ``z_l`` per mode with ``E[z z*] = 1``, ``E[z^2] = xi``, ``E[z] = 0``."""
    xi = modes.xi if isinstance(modes, ModeSet) else np.atleast_1d(np.asarray(modes, dtype=complex))
    _check_xi(xi)
    rng = _as_generator(seed, index, channel)
    return amplitudes_from_normals(xi, rng.standard_normal((xi.size, 2)))


def squeezed_density(z, xi) -> NDArray[np.float64]:
    """``p_xi(z)`` normalized with respect to ``d Re z d Im z``."""
    z = np.asarray(z, dtype=complex)
    xi = complex(xi)
    s = 1.0 - abs(xi) ** 2
    q = np.abs(z) ** 2 - np.real(np.conj(xi) * z**2)
    return np.exp(-q / s) / (np.pi * np.sqrt(s))


@dataclass(frozen=True)
class NoiseTrajectory:
    grid: TimeGrid
    z_star: NDArray[np.complex128]
    seed: int
    index: int = 0
    mode_amplitudes: NDArray[np.complex128] | None = None

    def __post_init__(self):
        if self.z_star.shape != (self.grid.n_steps + 1,):
            raise ValueError("z_star must have one value per grid point")

    def integral(self) -> NDArray[np.complex128]:
        """Trapezoid increments ``int_{t_j}^{t_{j+1}} z*_s ds``, length ``n_steps``."""
        return 0.5 * self.grid.dt * (self.z_star[1:] + self.z_star[:-1])


def _phase_matrix(modes: ModeSet, grid: TimeGrid) -> NDArray[np.complex128]:
    # (L, n+1): -i g_l exp(i w_l t_k)
    return -1j * modes.g[:, None] * np.exp(1j * np.outer(modes.omega, grid.times))


def modesum_ensemble(
    modes: ModeSet, grid: TimeGrid, seed: int, n_samples: int, start: int = 0, channel: int = 0
) -> tuple[NDArray[np.complex128], NDArray[np.complex128]]:
    """Mode-sum draws for trajectory indices ``start .. start + n_samples - 1``.

    Returns ``(z_star, amplitudes)`` with shapes ``(n_samples, n_steps + 1)`` and ``(n_samples, n_modes)``.
    """
    _check_xi(modes.xi)
    L = len(modes)
    normals = np.empty((n_samples, L, 2))
    for k in range(n_samples):
        normals[k] = stream(seed, start + k, channel).standard_normal((L, 2))
    z = amplitudes_from_normals(modes.xi, normals)
    return np.conj(z) @ _phase_matrix(modes, grid), z


def sample_noise_modesum(modes: ModeSet, grid: TimeGrid, seed: int, index: int = 0, channel: int = 0) -> NoiseTrajectory:
    z_star, z = modesum_ensemble(modes, grid, seed, 1, index, channel)
    return NoiseTrajectory(grid, z_star[0], seed, index, z[0])


def augmented_covariance(kernel: CorrelationKernel) -> NDArray[np.float64]:
    """Real covariance of ``(Re z_t0 .. Re z_tn, Im z_t0 .. Im z_tn)`` implied by ``alpha`` and ``eta``.

    Uses ``<z_t z*_s> = alpha(t, s)`` and ``<z_t z_s> = conj(eta(t, s))``.
    """
    a, e = kernel.alpha, kernel.eta
    caa = 0.5 * np.real(a + e)
    cbb = 0.5 * np.real(a - e)
    cab = -0.5 * (np.imag(e) + np.imag(a))
    cba = 0.5 * (np.imag(a) - np.imag(e))
    c = np.block([[caa, cab], [cba, cbb]])
    return 0.5 * (c + c.T)


class IndefiniteCovarianceError(ValueError):
    """The alpha/eta pair admits no Gaussian process (violates ``|xi| <= 1`` positivity)."""

    def __init__(self, most_negative: float, largest: float):
        self.most_negative = most_negative
        self.largest = largest
        super().__init__(
            f"augmented noise covariance is indefinite: most negative eigenvalue {most_negative:.6g} "
            f"(largest {largest:.6g}); alpha and eta are inconsistent"
        )


@dataclass(frozen=True)
class CovarianceSampler:
    """Eigen-factorization of the augmented covariance of one kernel, reusable across draws."""

    kernel: CorrelationKernel
    factor: NDArray[np.float64] = field(repr=False)

    @classmethod
    def from_kernel(cls, kernel: CorrelationKernel, tolerance: float = PSD_TOLERANCE) -> "CovarianceSampler":
        lam, vec = np.linalg.eigh(augmented_covariance(kernel))
        top = max(float(lam[-1]), 0.0)
        if lam[0] < -tolerance * top or (top == 0.0 and lam[0] < 0):
            raise IndefiniteCovarianceError(float(lam[0]), top)
        lam = np.clip(lam, 0.0, None)
        keep = lam > 0
        return cls(kernel, vec[:, keep] * np.sqrt(lam[keep]))

    def draw(self, seed: int, n_samples: int, start: int = 0, channel: int = 0) -> NDArray[np.complex128]:
        n = self.kernel.grid.n_steps + 1
        rank = self.factor.shape[1]
        u = np.empty((n_samples, rank))
        for k in range(n_samples):
            u[k] = stream(seed, start + k, channel).standard_normal(rank)
        x = u @ self.factor.T
        # z*_t = Re z_t - i Im z_t
        return x[:, :n] - 1j * x[:, n:]


def sample_noise_covariance(kernel: CorrelationKernel, seed: int, index: int = 0, channel: int = 0) -> NoiseTrajectory:
    z_star = CovarianceSampler.from_kernel(kernel).draw(seed, 1, index, channel)[0]
    return NoiseTrajectory(kernel.grid, z_star, seed, index)


class CorrelationAccumulator:
    """Running first and second moments of ``z_t`` with mergeable partial sums.

    Partial ensembles are combined with :meth:`merge` (plain addition of sums),
    so the result does not depend on how the ensemble was split.
    """

    def __init__(self, grid: TimeGrid):
        n = grid.n_steps + 1
        self.grid = grid
        self.n = 0
        self.s_mean = np.zeros(n, dtype=complex)
        self.s_alpha = np.zeros((n, n), dtype=complex)
        self.s_eta = np.zeros((n, n), dtype=complex)
        self.s_alpha_sq = np.zeros((n, n), dtype=complex)  # sum of Re^2 + i Im^2
        self.s_eta_sq = np.zeros((n, n), dtype=complex)

    def add(self, z_star: NDArray[np.complex128]) -> "CorrelationAccumulator":
        z_star = np.atleast_2d(z_star)
        if z_star.shape[1] != self.grid.n_steps + 1:
            raise ValueError("trajectory length does not match the accumulator grid")
        z = np.conj(z_star)
        pa = z[:, :, None] * z_star[:, None, :]  # z_t z*_s
        pe = z_star[:, :, None] * z_star[:, None, :]  # z*_t z*_s
        self.n += z_star.shape[0]
        self.s_mean += z.sum(axis=0)
        self.s_alpha += pa.sum(axis=0)
        self.s_eta += pe.sum(axis=0)
        self.s_alpha_sq += (pa.real**2).sum(axis=0) + 1j * (pa.imag**2).sum(axis=0)
        self.s_eta_sq += (pe.real**2).sum(axis=0) + 1j * (pe.imag**2).sum(axis=0)
        return self

    def merge(self, other: "CorrelationAccumulator") -> "CorrelationAccumulator":
        if other.grid != self.grid:
            raise ValueError("cannot merge accumulators on different grids")
        out = CorrelationAccumulator(self.grid)
        out.n = self.n + other.n
        for name in ("s_mean", "s_alpha", "s_eta", "s_alpha_sq", "s_eta_sq"):
            setattr(out, name, getattr(self, name) + getattr(other, name))
        return out

    def _se(self, s, s_sq):
        m = s / self.n
        var_re = np.clip(s_sq.real / self.n - m.real**2, 0.0, None) * self.n / (self.n - 1)
        var_im = np.clip(s_sq.imag / self.n - m.imag**2, 0.0, None) * self.n / (self.n - 1)
        return np.sqrt(var_re / self.n) + 1j * np.sqrt(var_im / self.n)

    def stats(self, reference: CorrelationKernel | None = None) -> "NoiseEnsembleStats":
        if self.n < 2:
            raise ValueError("need at least two trajectories")
        est_alpha = self.s_alpha / self.n
        est_eta = self.s_eta / self.n
        if reference is not None:
            if reference.grid != self.grid:
                raise ValueError("reference kernel lives on a different grid")
            da = float(np.max(np.abs(est_alpha - reference.alpha)))
            de = float(np.max(np.abs(est_eta - reference.eta)))
        else:
            da = de = float("nan")
        return NoiseEnsembleStats(
            n_samples=self.n,
            est_alpha=est_alpha,
            est_eta=est_eta,
            est_mean=self.s_mean / self.n,
            max_alpha_dev=da,
            max_eta_dev=de,
            se_alpha=self._se(self.s_alpha, self.s_alpha_sq),
            se_eta=self._se(self.s_eta, self.s_eta_sq),
        )


@dataclass(frozen=True)
class NoiseEnsembleStats:
    """Ensemble estimates of ``<z_t z*_s>``, ``<z*_t z*_s>`` and ``<z_t>``.

    ``se_alpha`` / ``se_eta`` hold the standard errors of the real parts in
    their real component and of the imaginary parts in their imaginary one.
    """

    n_samples: int
    est_alpha: NDArray[np.complex128]
    est_eta: NDArray[np.complex128]
    est_mean: NDArray[np.complex128]
    max_alpha_dev: float
    max_eta_dev: float
    se_alpha: NDArray[np.complex128] | None = None
    se_eta: NDArray[np.complex128] | None = None

    def summary(self) -> dict:
        return {"n_samples": self.n_samples, "max_alpha_dev": self.max_alpha_dev, "max_eta_dev": self.max_eta_dev}


def _stack(trajectories: Sequence[NoiseTrajectory] | NDArray[np.complex128]):
    if isinstance(trajectories, np.ndarray):
        return np.atleast_2d(trajectories), None
    trajectories = list(trajectories)
    if not trajectories:
        raise ValueError("no trajectories given")
    grid = trajectories[0].grid
    if any(tr.grid != grid for tr in trajectories):
        raise ValueError("trajectories live on different grids")
    return np.stack([tr.z_star for tr in trajectories]), grid


def estimate_correlations(
    trajectories: Sequence[NoiseTrajectory] | NDArray[np.complex128],
    reference: CorrelationKernel,
    chunk: int = 4096,
) -> NoiseEnsembleStats:
    """Sample second moments of an ensemble and their max deviation from ``reference``."""
    z_star, grid = _stack(trajectories)
    if grid is not None and grid != reference.grid:
        raise ValueError("trajectory grid differs from the reference kernel grid")
    if z_star.shape[0] < 2:
        raise ValueError("need at least two trajectories")
    acc = CorrelationAccumulator(reference.grid)
    for lo in range(0, z_star.shape[0], chunk):
        acc.add(z_star[lo : lo + chunk])
    return acc.stats(reference)


def write_trajectory_csv(traj: NoiseTrajectory, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "re_z_star", "im_z_star"])
        for t, z in zip(traj.grid.times, traj.z_star):
            w.writerow([float(t), float(z.real), float(z.imag)])


def write_stats(stats: NoiseEnsembleStats, grid: TimeGrid, csv_path: str | Path, json_path: str | Path) -> None:
    t = grid.times
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "s", "re_est_alpha", "im_est_alpha", "re_est_eta", "im_est_eta"])
        for i in range(t.size):
            for j in range(i + 1):
                a, e = stats.est_alpha[i, j], stats.est_eta[i, j]
                w.writerow([float(t[i]), float(t[j]), float(a.real), float(a.imag), float(e.real), float(e.imag)])
    Path(json_path).write_text(json.dumps(stats.summary(), indent=2))


def iter_chunks(n_samples: int, chunk: int) -> Iterable[tuple[int, int]]:
    for lo in range(0, n_samples, chunk):
        yield lo, min(chunk, n_samples - lo)
