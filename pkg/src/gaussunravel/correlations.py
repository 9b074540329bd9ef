"""
Bath descriptions and the two correlation kernels of the squeezed unraveling.

A bath is a comb of bosonic modes with real couplings ``g``, frequencies
``omega`` and per-mode squeezing ``xi``.  On a uniform time grid it defines

    alpha(t, s) =  sum_l g_l^2 exp(-i w_l (t - s))          (hermitian, stationary)
    eta(t, s)   = -sum_l conj(xi_l) g_l^2 exp(i w_l (t + s)) (symmetric, depends on t + s)

Continuum spectral densities are turned into combs by midpoint sampling.
The singular Markov kernel ``gamma * delta(t - s)`` is never put on a grid;
:class:`MarkovKernel` carries its integrated form instead.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

SqueezingFunction = Callable[[NDArray[np.float64]], ArrayLike]

#: Default distance from the unit circle used when a squeezing of modulus one is requested.
DEFAULT_EPSILON = 1e-3


def clamp_squeezing(xi: ArrayLike, epsilon: float = DEFAULT_EPSILON) -> NDArray[np.complex128]:
    """Pull squeezing values with ``|xi| >= 1 - epsilon`` back to radius ``1 - epsilon``."""
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    xi = np.asarray(xi, dtype=complex)
    r = np.abs(xi)
    limit = 1.0 - epsilon
    scale = np.where(r > limit, limit / np.where(r > 0, r, 1.0), 1.0)
    return xi * scale


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_k = k * dt`` for ``k = 0 .. n_steps``."""

    dt: float
    n_steps: int

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError(f"dt must be positive, got {self.dt}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ValueError(f"n_steps must be a positive integer, got {self.n_steps}")
        object.__setattr__(self, "n_steps", int(self.n_steps))

    @classmethod
    def from_horizon(cls, T: float, n_steps: int) -> "TimeGrid":
        return cls(dt=T / n_steps, n_steps=n_steps)

    @property
    def t0(self) -> float:
        return 0.0

    @property
    def T(self) -> float:
        return self.n_steps * self.dt

    @property
    def times(self) -> NDArray[np.float64]:
        return np.arange(self.n_steps + 1) * self.dt

    def __len__(self) -> int:
        return self.n_steps + 1

    def trapezoid_weights(self, k: int | None = None) -> NDArray[np.float64]:
        """Trapezoid weights for integrating over ``[0, t_k]`` (length ``n_steps + 1``)."""
        k = self.n_steps if k is None else k
        w = np.zeros(self.n_steps + 1)
        if k > 0:
            w[: k + 1] = self.dt
            w[0] = w[k] = 0.5 * self.dt
        return w


@dataclass(frozen=True)
class ModeSet:
    """Discrete bath modes.

    ``comb_spacing`` is set when the modes come from a frequency comb; it fixes
    the recurrence time ``2 pi / comb_spacing`` beyond which the comb stops
    representing the continuum.
    """

    g: NDArray[np.float64]
    omega: NDArray[np.float64]
    xi: NDArray[np.complex128]
    comb_spacing: float | None = None

    def __post_init__(self):
        g = np.atleast_1d(np.asarray(self.g, dtype=float)).copy()
        omega = np.atleast_1d(np.asarray(self.omega, dtype=float)).copy()
        xi = np.atleast_1d(np.asarray(self.xi, dtype=complex)).copy()
        if xi.size == 1 and g.size > 1:
            xi = np.full(g.shape, xi[0])
        if not (g.ndim == omega.ndim == xi.ndim == 1 and g.size == omega.size == xi.size):
            raise ValueError("g, omega and xi must be 1-d arrays of equal length")
        if g.size == 0:
            raise ValueError("a ModeSet needs at least one mode")
        if np.any(g < 0) or not np.all(np.isfinite(g)):
            raise ValueError("couplings g must be finite and nonnegative")
        if not np.all(np.isfinite(omega)):
            raise ValueError("frequencies must be finite")
        bad = np.abs(xi) >= 1.0
        if np.any(bad):
            raise ValueError(
                f"squeezing parameters must satisfy |xi| < 1; offending modes {np.flatnonzero(bad).tolist()}"
            )
        for arr in (g, omega, xi):
            arr.setflags(write=False)
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "xi", xi)

    @classmethod
    def from_modes(cls, modes: Sequence[tuple[float, float, complex]]) -> "ModeSet":
        """Build from ``(g, omega, xi)`` triples."""
        if len(modes) == 0:
            raise ValueError("a ModeSet needs at least one mode")
        g, omega, xi = zip(*modes)
        return cls(np.array(g), np.array(omega), np.array(xi, dtype=complex))

    def __len__(self) -> int:
        return self.g.size

    @property
    def recurrence_time(self) -> float:
        if self.comb_spacing is None:
            return math.inf
        return 2 * math.pi / self.comb_spacing

    def with_squeezing(self, rule: SqueezingFunction | ArrayLike) -> "ModeSet":
        """Same couplings and frequencies, new squeezing from a rule ``omega -> xi`` or an array."""
        xi = _evaluate_rule(rule, self.omega) if callable(rule) else np.asarray(rule, dtype=complex)
        return ModeSet(self.g, self.omega, np.broadcast_to(xi, self.g.shape), self.comb_spacing)

    def alpha(self, tau: ArrayLike) -> NDArray[np.complex128]:
        """``alpha`` as a function of the lag ``tau = t - s``."""
        tau = np.asarray(tau, dtype=float)
        g2 = self.g**2
        return np.exp(-1j * np.multiply.outer(tau, self.omega)) @ g2

    def eta(self, sigma: ArrayLike) -> NDArray[np.complex128]:
        """``eta`` as a function of ``sigma = t + s``."""
        sigma = np.asarray(sigma, dtype=float)
        c = -np.conj(self.xi) * self.g**2
        return np.exp(1j * np.multiply.outer(sigma, self.omega)) @ c

    def dephasing_exponent(self, t: ArrayLike) -> NDArray[np.float64]:
        """Closed-form decoherence function ``4 sum g^2 (1 - cos w t) / w^2`` of a sigma_z-coupled qubit."""
        t = np.asarray(t, dtype=float)
        half = 0.5 * np.multiply.outer(t, np.ones_like(self.omega))
        nz = self.omega != 0
        # 1 - cos x = 2 sin^2(x / 2); the w -> 0 limit of sin(w t / 2) / w is t / 2
        half[..., nz] = np.sin(0.5 * np.multiply.outer(t, self.omega[nz])) / self.omega[nz]
        return 8.0 * half**2 @ self.g**2


def _evaluate_rule(rule: SqueezingFunction, omega: NDArray[np.float64]) -> NDArray[np.complex128]:
    try:
        xi = np.asarray(rule(omega), dtype=complex)
        return np.broadcast_to(xi, omega.shape).copy()
    except (TypeError, ValueError):
        return np.array([complex(rule(float(w))) for w in omega])


class SpectralKind(str, enum.Enum):
    MARKOV = "markov"
    OHMIC = "ohmic"
    SUPER_OHMIC = "superohmic"
    LORENTZIAN = "lorentzian"
    TABLE = "table"


@dataclass(frozen=True)
class SpectralDensityModel:
    """Continuum spectral density ``J(omega)`` with ``alpha(tau) = int dw J(w) exp(-i w tau)``.

    * ``markov``: flat ``J = gamma / (2 pi)`` (a delta kernel of weight ``gamma``
      in the infinite-band limit).
    * ``ohmic`` / ``superohmic``: ``J = A w^p exp(-w / w_d)`` with ``p = 1`` / ``p = 3``.
    * ``lorentzian``: ``J = (gamma / 2 pi) / (1 + (w tau)^2)`` on the whole real
      line, i.e. ``alpha(tau') = gamma / (2 tau) exp(-|tau'| / tau)``; it tends to
      ``gamma delta`` as ``tau -> 0``.
    * ``table``: piecewise-linear interpolation of ``(omega_i, J_i)`` pairs, zero outside.
    """

    kind: SpectralKind
    strength: float = 1.0
    cutoff: float = 1.0
    table_omega: tuple[float, ...] = ()
    table_j: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "kind", SpectralKind(self.kind))
        if self.kind is SpectralKind.TABLE:
            w = np.asarray(self.table_omega, dtype=float)
            j = np.asarray(self.table_j, dtype=float)
            if w.size < 2 or w.shape != j.shape:
                raise ValueError("table spectral density needs matching omega/J arrays of length >= 2")
            if np.any(np.diff(w) <= 0):
                raise ValueError("table frequencies must be strictly increasing")
            if np.any(j < 0):
                raise ValueError("spectral density values must be nonnegative")
        else:
            if not self.strength > 0:
                raise ValueError(f"{self.kind.value}: rate/coupling strength must be positive")
            if not self.cutoff > 0:
                raise ValueError(f"{self.kind.value}: cutoff / memory time must be positive")

    @classmethod
    def markov(cls, gamma: float) -> "SpectralDensityModel":
        return cls(SpectralKind.MARKOV, strength=gamma)

    @classmethod
    def ohmic(cls, strength: float, cutoff: float) -> "SpectralDensityModel":
        return cls(SpectralKind.OHMIC, strength=strength, cutoff=cutoff)

    @classmethod
    def super_ohmic(cls, strength: float, cutoff: float) -> "SpectralDensityModel":
        return cls(SpectralKind.SUPER_OHMIC, strength=strength, cutoff=cutoff)

    @classmethod
    def lorentzian(cls, gamma: float, tau: float) -> "SpectralDensityModel":
        return cls(SpectralKind.LORENTZIAN, strength=gamma, cutoff=tau)

    @classmethod
    def table(cls, omega: Sequence[float], j: Sequence[float]) -> "SpectralDensityModel":
        return cls(SpectralKind.TABLE, table_omega=tuple(map(float, omega)), table_j=tuple(map(float, j)))

    @property
    def gamma(self) -> float:
        return self.strength

    def density(self, omega: ArrayLike) -> NDArray[np.float64]:
        w = np.asarray(omega, dtype=float)
        k = self.kind
        if k is SpectralKind.MARKOV:
            return np.full(w.shape, self.strength / (2 * math.pi))
        if k is SpectralKind.LORENTZIAN:
            return self.strength / (2 * math.pi) / (1.0 + (w * self.cutoff) ** 2)
        if k is SpectralKind.TABLE:
            return np.interp(w, self.table_omega, self.table_j, left=0.0, right=0.0)
        p = 1 if k is SpectralKind.OHMIC else 3
        wp = np.clip(w, 0.0, None)
        return self.strength * wp**p * np.exp(-wp / self.cutoff)

    def continuum_alpha(self, tau: ArrayLike) -> NDArray[np.complex128]:
        """Closed-form ``int_0^inf dw J(w) exp(-i w tau)`` for the Ohmic family and the Lorentzian."""
        tau = np.asarray(tau, dtype=float)
        k = self.kind
        if k is SpectralKind.OHMIC:
            return self.strength * self.cutoff**2 / (1 + 1j * self.cutoff * tau) ** 2
        if k is SpectralKind.SUPER_OHMIC:
            return 6 * self.strength * self.cutoff**4 / (1 + 1j * self.cutoff * tau) ** 4
        if k is SpectralKind.LORENTZIAN:
            return (self.strength / (2 * self.cutoff) * np.exp(-np.abs(tau) / self.cutoff)).astype(complex)
        raise ValueError(f"no closed-form continuum kernel for {k.value}")


def discretize_spectral_density(
    model: SpectralDensityModel,
    omega_max: float,
    n_modes: int,
    squeezing_rule: SqueezingFunction | None = None,
    omega_min: float = 0.0,
) -> ModeSet:
    """Midpoint comb ``w_k = omega_min + (k - 1/2) dw`` with ``g_k^2 = J(w_k) dw``.

    ``dw = (omega_max - omega_min) / n_modes``.  The default band starts at zero;
    a negative ``omega_min`` is only useful for two-sided densities such as the
    Lorentzian.
    """
    if not omega_max > 0:
        raise ValueError(f"omega_max must be positive, got {omega_max}")
    if omega_min >= omega_max:
        raise ValueError("omega_min must be below omega_max")
    if int(n_modes) != n_modes or n_modes < 1:
        raise ValueError(f"n_modes must be a positive integer, got {n_modes}")
    dw = (omega_max - omega_min) / n_modes
    omega = omega_min + (np.arange(n_modes) + 0.5) * dw
    g = np.sqrt(model.density(omega) * dw)
    if squeezing_rule is None:
        xi = np.zeros(n_modes, dtype=complex)
    else:
        xi = _evaluate_rule(squeezing_rule, omega)
        if np.any(~np.isfinite(xi)) or np.any(np.abs(xi) >= 1.0):
            worst = float(np.max(np.abs(xi)))
            raise ValueError(f"squeezing rule produced |xi| = {worst:.6g} >= 1; clamp it with a finite epsilon")
    return ModeSet(g, omega, xi, comb_spacing=dw)


@dataclass(frozen=True)
class CorrelationKernel:
    """``alpha`` and ``eta`` sampled on ``grid`` as full ``(n+1, n+1)`` matrices.

    ``alpha[i, j] = alpha(t_i, t_j)`` and ``eta[i, j] = eta(t_i, t_j)``; both
    triangles are stored, the upper one following from hermiticity/symmetry.
    """

    grid: TimeGrid
    alpha: NDArray[np.complex128]
    eta: NDArray[np.complex128]
    modes: ModeSet | None = field(default=None, compare=False)

    def __post_init__(self):
        n = self.grid.n_steps + 1
        alpha = np.asarray(self.alpha, dtype=complex)
        eta = np.asarray(self.eta, dtype=complex)
        if alpha.shape != (n, n) or eta.shape != (n, n):
            raise ValueError(f"kernel matrices must have shape {(n, n)}")
        alpha.setflags(write=False)
        eta.setflags(write=False)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "eta", eta)

    @classmethod
    def from_lags(cls, grid: TimeGrid, alpha_lags: ArrayLike, eta_sums: ArrayLike, modes: ModeSet | None = None):
        """From ``alpha(k dt)`` for ``k = 0..n`` and ``eta`` at ``t + s = m dt`` for ``m = 0..2n``."""
        n = grid.n_steps
        alpha_lags = np.asarray(alpha_lags, dtype=complex)
        eta_sums = np.asarray(eta_sums, dtype=complex)
        if alpha_lags.shape != (n + 1,) or eta_sums.shape != (2 * n + 1,):
            raise ValueError("lag arrays have the wrong length for this grid")
        idx = np.arange(n + 1)
        lag = idx[:, None] - idx[None, :]
        alpha = np.where(lag >= 0, alpha_lags[np.abs(lag)], np.conj(alpha_lags[np.abs(lag)]))
        eta = eta_sums[idx[:, None] + idx[None, :]]
        return cls(grid, alpha, eta, modes)

    @property
    def is_markov(self) -> bool:
        return False

    def integrated_rates(self):
        return integrated_rates(self)

    def decoherence_exponent(self):
        return decoherence_exponent(self)


@dataclass(frozen=True)
class MarkovKernel:
    """Integrated form of ``alpha = gamma delta(t - s)`` with an optional shifted-delta ``eta``.

    ``eta(t, s) = -conj(a) gamma delta(t + s - shift)`` is the Markov image of a
    squeezing rule ``xi(w) = a exp(i w shift)``; ``a = 0`` is the ``eta = 0``
    unraveling.  Only the real part of the positive-frequency delta survives
    in the rates, which is all that enters the reduced dynamics and the bound.
    """

    grid: TimeGrid
    gamma: float
    a: complex = 0j
    shift: float = 0.0

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("Markov rate gamma must be positive")
        if abs(self.a) >= 1:
            raise ValueError("|a| must be below 1")

    @property
    def is_markov(self) -> bool:
        return True

    @property
    def alpha(self):
        raise ValueError("the Markov kernel gamma*delta(t-s) cannot be materialized on a grid; use integrated_rates()")

    eta = alpha

    def integrated_rates(self):
        return integrated_rates(self)

    def decoherence_exponent(self):
        return decoherence_exponent(self)


Kernel = CorrelationKernel | MarkovKernel


def build_kernel(modes: ModeSet, grid: TimeGrid) -> CorrelationKernel:
    """Evaluate ``alpha`` and ``eta`` of a mode set on ``grid``.

    Uses the stationarity of ``alpha`` and the ``t + s`` dependence of ``eta``,
    so the mode sums cost ``O(n_steps * n_modes)``.
    """
    if grid.T >= modes.recurrence_time:
        raise ValueError(
            f"grid horizon T = {grid.T:.6g} reaches the comb recurrence time "
            f"2*pi/d_omega = {modes.recurrence_time:.6g}; use more modes or a shorter horizon"
        )
    n = grid.n_steps
    alpha_lags = modes.alpha(np.arange(n + 1) * grid.dt)
    eta_sums = modes.eta(np.arange(2 * n + 1) * grid.dt)
    return CorrelationKernel.from_lags(grid, alpha_lags, eta_sums, modes)


def markov_kernel(gamma: float, grid: TimeGrid, a: complex = 0j, shift: float = 0.0) -> MarkovKernel:
    return MarkovKernel(grid, gamma, complex(a), float(shift))


def _row_trapezoid(m: NDArray[np.complex128], dt: float) -> NDArray[np.complex128]:
    """``out[i] = trapezoid of m[i, 0..i]`` over ``[0, t_i]``."""
    low = np.tril(m)
    out = dt * (low.sum(axis=1) - 0.5 * m[:, 0] - 0.5 * np.diagonal(m))
    out[0] = 0.0
    return out


def _markov_eta_support(kernel: MarkovKernel, t: NDArray[np.float64]):
    """Endpoint weight of the ``eta`` atom in ``int_0^t ds`` and the measure of ``int_0^t int_0^s``.

    ``eta(t, s) ~ delta(t + s - shift)`` sits at ``s = shift - t``, which lies in
    ``[0, t]`` iff ``shift / 2 <= t <= shift``.
    """
    if kernel.shift <= 0:
        return np.zeros_like(t), np.zeros_like(t)
    lo, hi = 0.5 * kernel.shift, kernel.shift
    weight = np.where((t > lo) & (t < hi), 1.0, 0.0)
    weight = np.where(np.isclose(t, lo) | np.isclose(t, hi), 0.5, weight)
    length = np.clip(np.minimum(t, hi) - lo, 0.0, None)
    return weight, length


def integrated_rates(kernel: Kernel):
    """``A(t) = int_0^t alpha(t, s) ds``, ``E(t) = int_0^t eta(t, s) ds`` and ``gamma = 4 Re(A + E)``.

    Trapezoid rule on the grid for sampled kernels; exact for :class:`MarkovKernel`
    (a delta sitting on an integration endpoint counts with weight one half).
    """
    grid = kernel.grid
    if isinstance(kernel, MarkovKernel):
        t = grid.times
        A = np.where(t > 0, 0.5 * kernel.gamma, 0.0).astype(complex)
        weight, _ = _markov_eta_support(kernel, t)
        E = (-np.conj(kernel.a) * kernel.gamma * weight).astype(complex)
    else:
        A = _row_trapezoid(kernel.alpha, grid.dt)
        E = _row_trapezoid(kernel.eta, grid.dt)
    gamma = 4.0 * np.real(A + E)
    return A, E, gamma


def _symmetric_double_trapezoid(m: NDArray[np.complex128]) -> NDArray[np.complex128]:
    """``q[k] = w_k^T m w_k / dt^2`` with ``w_k`` the trapezoid weights on ``[0, t_k]``, for all ``k``.

    ``m`` must be symmetric.  Written with 2-d prefix sums so the whole sweep is ``O(n^2)``.
    """
    c = np.cumsum(np.cumsum(m, axis=0), axis=1)
    rowcum = np.cumsum(m, axis=1)
    k = np.arange(m.shape[0])
    total = c[k, k]
    edges = rowcum[0, k] + rowcum[k, k]
    corners = 0.25 * (m[0, 0] + 2 * m[0, k] + m[k, k])
    return total - edges + corners


def decoherence_exponent(kernel: Kernel) -> NDArray[np.complex128]:
    """Cumulative exponent ``Phi(t) = int_0^t (A + E)(s) ds`` on the grid.

    The real part is evaluated as the square-domain trapezoid
    ``Phi = 1/2 w^T (alpha + eta) w``: this is exactly the exponent that the
    trapezoid noise integral ``Z = int z*_s ds`` generates, which keeps the
    discrete unraveling norm-preserving on average and independent of ``eta``
    at any step size.  ``Im int A`` (a global phase) comes from the nested
    trapezoid.
    """
    grid = kernel.grid
    if isinstance(kernel, MarkovKernel):
        t = grid.times
        _, length = _markov_eta_support(kernel, t)
        return 0.5 * kernel.gamma * t - np.conj(kernel.a) * kernel.gamma * length
    dt = grid.dt
    alpha_sym = 0.5 * (kernel.alpha + kernel.alpha.T)
    eta_sym = 0.5 * (kernel.eta + kernel.eta.T)
    phi = 0.5 * dt**2 * _symmetric_double_trapezoid(alpha_sym + eta_sym)
    A = _row_trapezoid(kernel.alpha, dt)
    im_a = np.concatenate([[0.0], np.cumsum(0.5 * dt * (A[1:].imag + A[:-1].imag))])
    return phi.real + 1j * (phi.imag + im_a)


def write_kernel_csv(kernel: CorrelationKernel, path: str | Path) -> int:
    """Lower triangle ``s <= t`` row-major as ``t,s,re_alpha,im_alpha,re_eta,im_eta``; returns the row count."""
    t = kernel.grid.times
    rows = 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "s", "re_alpha", "im_alpha", "re_eta", "im_eta"])
        for i in range(t.size):
            for j in range(i + 1):
                a = kernel.alpha[i, j]
                e = kernel.eta[i, j]
                w.writerow([float(t[i]), float(t[j]), float(a.real), float(a.imag), float(e.real), float(e.imag)])
                rows += 1
    return rows


def read_kernel_csv(path: str | Path, grid: TimeGrid) -> CorrelationKernel:
    """Inverse of :func:`write_kernel_csv`; the upper triangle is rebuilt from the symmetries."""
    n = grid.n_steps + 1
    alpha = np.zeros((n, n), dtype=complex)
    eta = np.zeros((n, n), dtype=complex)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
    it = iter(rows)
    for i in range(n):
        for j in range(i + 1):
            r = next(it)
            alpha[i, j] = float(r["re_alpha"]) + 1j * float(r["im_alpha"])
            eta[i, j] = float(r["re_eta"]) + 1j * float(r["im_eta"])
    iu = np.triu_indices(n, 1)
    alpha[iu] = np.conj(alpha.T[iu])
    eta[iu] = eta.T[iu]
    return CorrelationKernel(grid, alpha, eta)
