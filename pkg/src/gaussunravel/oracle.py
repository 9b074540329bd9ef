"""
Brute-force reference: system plus a few bath modes in a truncated Fock space.

The composite state is evolved with the interaction-picture Hamiltonian

    H_I(t) = H_S + sum_l g_l (L b_l^+ exp(i w_l t) + L^+ b_l exp(-i w_l t)),

starting from the bath vacuum.  Relative states are obtained by contracting
with the dual Bargmann squeezed state ``<<z, xi| = <0| exp(z* b - xi*/2 b^2)``,
and the Gaussian averages over ``z`` are done with tensor Gauss-Hermite rules
in the principal axes of ``p_xi``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from numpy.typing import ArrayLike, NDArray
from scipy.integrate import solve_ivp

from . import _kernels
from .correlations import ModeSet, TimeGrid

#: Quadrature-based checks are limited to this many modes (K^(2 L) nodes).
MAX_QUADRATURE_MODES = 2


@dataclass(frozen=True)
class FockBath:
    modes: ModeSet
    n_max: int = 20
    leakage_threshold: float = 1e-6

    def __post_init__(self):
        if self.n_max < 1:
            raise ValueError("n_max must be at least 1")

    @property
    def n_modes(self) -> int:
        return len(self.modes)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n_max + 1,) * self.n_modes

    @property
    def dim(self) -> int:
        return (self.n_max + 1) ** self.n_modes


@dataclass(frozen=True)
class CompositeState:
    """Amplitudes with shape ``(system_dim, n_max + 1, ..., n_max + 1)``."""

    amplitudes: NDArray[np.complex128]
    time: float = 0.0

    @property
    def system_dim(self) -> int:
        return self.amplitudes.shape[0]

    def matrix(self) -> NDArray[np.complex128]:
        return self.amplitudes.reshape(self.system_dim, -1)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def reduced(self) -> NDArray[np.complex128]:
        """Partial trace over the bath."""
        m = self.matrix()
        return m @ m.conj().T

    @classmethod
    def product(cls, psi_s: ArrayLike, bath: FockBath, time: float = 0.0) -> "CompositeState":
        """``psi_s`` tensored with the bath vacuum."""
        psi_s = np.asarray(psi_s, dtype=complex).ravel()
        amp = np.zeros((psi_s.size,) + bath.shape, dtype=complex)
        amp[(slice(None),) + (0,) * bath.n_modes] = psi_s
        return cls(amp, time)


def _annihilator(n_max: int) -> sp.csr_matrix:
    return sp.diags(np.sqrt(np.arange(1, n_max + 1)), 1, format="csr", dtype=complex)


def mode_leakage(state: CompositeState) -> float:
    """Largest population found in the top two Fock levels of any mode."""
    p = np.abs(state.amplitudes) ** 2
    worst = 0.0
    for ax in range(1, p.ndim):
        marginal = p.sum(axis=tuple(a for a in range(p.ndim) if a != ax))
        worst = max(worst, float(marginal[-2:].sum()))
    return worst


@dataclass
class CompositeEvolution:
    grid: TimeGrid
    bath: FockBath
    states: list[CompositeState]
    leakage: float
    norm_drift: float

    @property
    def valid(self) -> bool:
        return self.leakage < self.bath.leakage_threshold


def evolve_composite(
    h_system: ArrayLike,
    coupling: ArrayLike,
    bath: FockBath,
    grid: TimeGrid,
    initial: CompositeState | ArrayLike,
    rtol: float = 1e-10,
    atol: float = 1e-12,
) -> CompositeEvolution:
    """Integrate ``i dPsi/dt = H_I(t) Psi`` with an adaptive 8th-order Runge-Kutta method.

    The result records the worst truncation leakage over the horizon; when it
    exceeds ``bath.leakage_threshold`` the evolution is flagged invalid.
    """
    h_system = np.asarray(h_system, dtype=complex)
    L = np.asarray(coupling, dtype=complex)
    d = h_system.shape[0]
    if not isinstance(initial, CompositeState):
        initial = CompositeState.product(initial, bath)
    if initial.system_dim != d:
        raise ValueError("initial state and system Hamiltonian dimensions differ")

    b = _annihilator(bath.n_max)
    eye_b = sp.identity(bath.n_max + 1, format="csr", dtype=complex)
    raise_ops, lower_ops = [], []
    for lam in range(bath.n_modes):
        factors = [b if k == lam else eye_b for k in range(bath.n_modes)]
        b_full = factors[0]
        for f in factors[1:]:
            b_full = sp.kron(b_full, f, format="csr")
        raise_ops.append(sp.kron(sp.csr_matrix(L), b_full.conj().T, format="csr"))
        lower_ops.append(sp.kron(sp.csr_matrix(L.conj().T), b_full, format="csr"))
    h0 = sp.kron(sp.csr_matrix(h_system), sp.identity(bath.dim, dtype=complex), format="csr")
    g = bath.modes.g
    w = bath.modes.omega

    def rhs(t, y):
        out = h0 @ y
        for lam in range(bath.n_modes):
            if g[lam] == 0:
                continue
            ph = np.exp(1j * w[lam] * t)
            out = out + g[lam] * (ph * (raise_ops[lam] @ y) + np.conj(ph) * (lower_ops[lam] @ y))
        return -1j * out

    y0 = initial.amplitudes.ravel().astype(complex)
    sol = solve_ivp(rhs, (0.0, grid.T), y0, method="DOP853", t_eval=grid.times, rtol=rtol, atol=atol)
    if not sol.success:
        raise RuntimeError(f"composite evolution failed: {sol.message}")
    shape = initial.amplitudes.shape
    states = [CompositeState(sol.y[:, k].reshape(shape), float(t)) for k, t in enumerate(sol.t)]
    leakage = max(mode_leakage(s) for s in states)
    norm0 = initial.norm()
    drift = max(abs(s.norm() - norm0) for s in states)
    return CompositeEvolution(grid, bath, states, leakage, drift)


def bargmann_coefficients(z: ArrayLike, xi: complex, n_max: int) -> NDArray[np.complex128]:
    """``<n||z, xi>>`` for ``n = 0..n_max``, one row per entry of ``z``."""
    z = np.ascontiguousarray(np.atleast_1d(np.asarray(z, dtype=complex)))
    return _kernels.bargmann_coefficients(z, complex(xi), int(n_max))


def relative_state(psi: CompositeState, w: ArrayLike, xi_conj: ArrayLike) -> NDArray[np.complex128]:
    """Relative state as an analytic function of ``w = z*`` and ``xi*`` (one value per mode).

    ``<<z, xi|Psi> = sum_n c_n(z*, xi*) Psi_n`` because the recurrence for
    ``c_n`` has real coefficients apart from ``z`` and ``xi``.
    """
    w = np.atleast_1d(np.asarray(w, dtype=complex))
    xc = np.broadcast_to(np.asarray(xi_conj, dtype=complex), w.shape)
    amp = psi.amplitudes
    n_max = amp.shape[1] - 1
    out = amp
    for lam in range(w.size):
        c = bargmann_coefficients(w[lam : lam + 1], xc[lam], n_max)[0]
        out = np.tensordot(out, c, axes=([1], [0]))
    return out


def project_relative_state(psi: CompositeState, z: ArrayLike, xi: ArrayLike) -> NDArray[np.complex128]:
    """``<<z, xi|Psi>`` for per-mode ``z`` and ``xi``; unnormalized system vector."""
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    xi = np.broadcast_to(np.asarray(xi, dtype=complex), z.shape)
    if np.any(np.abs(xi) >= 1):
        raise ValueError("|xi| < 1 required for every mode")
    return relative_state(psi, np.conj(z), np.conj(xi))


@dataclass(frozen=True)
class SqueezedQuadrature:
    """Tensor Gauss-Hermite rule for ``int d^2z p_xi(z) f(z)`` of one mode."""

    nodes: NDArray[np.complex128]
    weights: NDArray[np.float64]

    @classmethod
    def build(cls, xi: complex, n_nodes: int = 40) -> "SqueezedQuadrature":
        xi = complex(xi)
        r = abs(xi)
        if r >= 1:
            raise ValueError("|xi| < 1 required")
        u, wu = np.polynomial.hermite_e.hermegauss(n_nodes)
        wu = wu / math.sqrt(2 * math.pi)
        x = math.sqrt(0.5 * (1 + r)) * u
        y = math.sqrt(0.5 * (1 - r)) * u
        z = np.exp(0.5j * np.angle(xi)) * (x[:, None] + 1j * y[None, :])
        return cls(z.ravel(), np.outer(wu, wu).ravel())


@dataclass(frozen=True)
class QuadratureResult:
    rho: NDArray[np.complex128]
    partial_trace: NDArray[np.complex128]
    partial_trace_residual: float
    identity_residual: float


def quadrature_average(
    psi: CompositeState, xi: ArrayLike, n_nodes: int = 40, max_modes: int = MAX_QUADRATURE_MODES
) -> QuadratureResult:
    """``rho_S = sum_nodes w |psi_rel><psi_rel|`` compared with the partial trace.

    ``identity_residual`` is ``sum_nodes w ||psi_rel||^2 - 1``.
    """
    amp = psi.amplitudes
    n_modes = amp.ndim - 1
    if n_modes > max_modes:
        raise ValueError(f"quadrature checks are limited to {max_modes} modes")
    xi = np.broadcast_to(np.asarray(xi, dtype=complex), (n_modes,))
    n_max = amp.shape[1] - 1
    rel = amp
    weights = np.ones(1)
    for lam in range(n_modes):
        q = SqueezedQuadrature.build(xi[lam], n_nodes)
        c = np.conj(bargmann_coefficients(q.nodes, xi[lam], n_max))  # (K^2, n+1)
        # contract the leading remaining Fock axis (axis 1) against the new node axis
        rel = np.tensordot(rel, c, axes=([1], [1]))
        weights = np.multiply.outer(weights, q.weights)
    d = amp.shape[0]
    rel = rel.reshape(d, -1)
    wflat = weights.ravel()
    rho = (rel * wflat) @ rel.conj().T
    ptr = psi.reduced()
    return QuadratureResult(
        rho=rho,
        partial_trace=ptr,
        partial_trace_residual=float(np.max(np.abs(rho - ptr))),
        identity_residual=float(np.sum(wflat * np.sum(np.abs(rel) ** 2, axis=0)) - 1.0),
    )


def _fd4(f, x, h):
    return (-f(x + 2 * h) + 8 * f(x + h) - 8 * f(x - h) + f(x - 2 * h)) / (12 * h)


@dataclass
class SSEResidualReport:
    max_residual: float
    max_closure_residual: float | None
    max_cauchy_riemann: float
    residual_by_node: list[float] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "max_residual": self.max_residual,
            "max_closure_residual": self.max_closure_residual,
            "max_cauchy_riemann": self.max_cauchy_riemann,
            "residual_by_node": self.residual_by_node,
        }


def verify_sse_residual(
    evolution: CompositeEvolution,
    h_system: ArrayLike,
    coupling: ArrayLike,
    z_nodes: Sequence[ArrayLike],
    xi: ArrayLike,
    time_indices: Sequence[int] | None = None,
    dz: float = 1e-3,
) -> SSEResidualReport:
    """Check the mode-resolved linear SSE on relative states of the exact composite evolution.

    With ``w_l = z_l*`` and ``z*_t = -i sum_l g_l exp(i w_l t) w_l``:

        d psi/dt = -i H_S psi + L z*_t psi
                   - i sum_l g_l (exp(-i w_l t) L^+ - xi_l* exp(i w_l t) L) d psi / d w_l

    ``d/dt`` uses fourth-order central differences on the evolution grid and
    ``d/dw`` fourth-order central differences with step ``dz``.  When ``L`` is
    hermitian, squares to one and commutes with ``H_S`` the dephasing closure
    ``d psi / d w_l = -i g_l int_0^t exp(i w_l s) ds L psi`` is checked too.
    Residuals are divided by ``max(1, max |psi|)``.
    """
    H = np.asarray(h_system, dtype=complex)
    L = np.asarray(coupling, dtype=complex)
    Ld = L.conj().T
    modes = evolution.bath.modes
    g, om = modes.g, modes.omega
    xi = np.broadcast_to(np.asarray(xi, dtype=complex), g.shape)
    xc = np.conj(xi)
    grid = evolution.grid
    dt = grid.dt
    if grid.n_steps < 4:
        raise ValueError("need at least 5 grid points for fourth-order time differences")
    if time_indices is None:
        time_indices = range(2, grid.n_steps - 1)
    time_indices = [k for k in time_indices if 2 <= k <= grid.n_steps - 2]
    closure = (
        np.allclose(L, Ld)
        and np.allclose(L @ L, np.eye(L.shape[0]))
        and np.allclose(H @ L, L @ H)
    )
    worst = 0.0
    worst_closure = 0.0 if closure else None
    worst_cr = 0.0
    by_node = []
    for node in z_nodes:
        wvec = np.conj(np.atleast_1d(np.asarray(node, dtype=complex)))
        node_worst = 0.0
        for k in time_indices:
            t = grid.times[k]
            st = evolution.states

            def at(j):
                return relative_state(st[j], wvec, xc)

            psi = at(k)
            scale = max(1.0, float(np.max(np.abs(psi))))
            dpsi_dt = (-at(k + 2) + 8 * at(k + 1) - 8 * at(k - 1) + at(k - 2)) / (12 * dt)
            rhs = -1j * H @ psi + (-1j * np.sum(g * np.exp(1j * om * t) * wvec)) * (L @ psi)
            for lam in range(g.size):

                def f(wl, lam=lam):
                    w2 = wvec.copy()
                    w2[lam] = wl
                    return relative_state(st[k], w2, xc)

                d_w = _fd4(f, wvec[lam], dz)
                d_w_im = _fd4(f, wvec[lam], 1j * dz)
                worst_cr = max(worst_cr, float(np.max(np.abs(d_w - d_w_im))) / scale)
                op = np.exp(-1j * om[lam] * t) * Ld - xc[lam] * np.exp(1j * om[lam] * t) * L
                rhs = rhs - 1j * g[lam] * (op @ d_w)
                if closure:
                    integral = t if om[lam] == 0 else (np.exp(1j * om[lam] * t) - 1) / (1j * om[lam])
                    pred = -1j * g[lam] * integral * (L @ psi)
                    worst_closure = max(worst_closure, float(np.max(np.abs(d_w - pred))) / scale)
            res = float(np.max(np.abs(dpsi_dt - rhs))) / scale
            node_worst = max(node_worst, res)
        by_node.append(node_worst)
        worst = max(worst, node_worst)
    return SSEResidualReport(worst, worst_closure, worst_cr, by_node)


def independent_boson_coherence(modes: ModeSet, t: ArrayLike, splitting: float = 0.0) -> NDArray[np.complex128]:
    """Exact coherence factor ``rho_01(t) / rho_01(0)`` of a qubit with ``H = splitting/2 sigma_z`` and ``L = sigma_z``.

    The two sigma_z branches displace the bath to ``+-beta(t)`` with
    ``beta = -g (exp(i w t) - 1) / w``; their overlap gives
    ``exp(-4 sum g^2 (1 - cos w t) / w^2)``.
    """
    t = np.asarray(t, dtype=float)
    return np.exp(-modes.dephasing_exponent(t)) * np.exp(-1j * splitting * t)


@dataclass
class OracleReport:
    scenario: str
    n_max: int
    leakage: float
    identity_residual: float
    partial_trace_residual: float
    sse_residual: float
    xi_values_tested: list[complex]
    passed: bool = True
    extra: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "n_max": self.n_max,
            "leakage": self.leakage,
            "identity_residual": self.identity_residual,
            "partial_trace_residual": self.partial_trace_residual,
            "sse_residual": self.sse_residual,
            "xi_values_tested": [[complex(x).real, complex(x).imag] for x in self.xi_values_tested],
            "passed": self.passed,
            **self.extra,
        }

    def write(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.as_dict(), indent=2))
