"""Pure numpy versions of the compiled kernels (same signatures and results)."""

from __future__ import annotations

import numpy as np


def _split_gates(local_unitaries, dim):
    """Fold diagonal single-qubit gates into one phase vector; return it and the remaining gates."""
    n_q = len(local_unitaries)
    bits = np.arange(dim)
    diag = np.ones(dim, dtype=complex)
    dense = []
    for k, u in enumerate(local_unitaries):
        if u[0, 1] == 0 and u[1, 0] == 0:
            diag *= np.where((bits >> (n_q - 1 - k)) & 1, u[1, 1], u[0, 0])
        else:
            dense.append((k, u))
    return diag, dense


def propagate_dephasing(psi0, local_unitaries, signs, dz, dphi):
    dz = np.asarray(dz, dtype=complex)
    batch, n_steps, _ = dz.shape
    psi0 = np.asarray(psi0, dtype=complex)
    local_unitaries = np.asarray(local_unitaries, dtype=complex)
    n_q = local_unitaries.shape[0]
    if psi0.size != 2**n_q:
        raise ValueError("inconsistent kernel input shapes")
    diag, dense = _split_gates(local_unitaries, psi0.size)
    out = np.empty((batch, n_steps + 1, psi0.size), dtype=complex)
    out[:, 0] = psi0
    signs_t = np.asarray(signs, dtype=float).T
    shape = (batch,) + (2,) * n_q
    for j in range(n_steps):
        s = np.exp(dz[:, j, :] @ signs_t - dphi[j]) * diag * out[:, j]
        if dense:
            s = s.reshape(shape)
            for k, u in dense:
                s = np.moveaxis(np.tensordot(u, s, axes=([1], [k + 1])), 0, k + 1)
            s = s.reshape(batch, -1)
        out[:, j + 1] = s
    return out


def bargmann_coefficients(z, xi, n_max):
    z = np.asarray(z, dtype=complex)
    c = np.zeros((z.size, n_max + 1), dtype=complex)
    c[:, 0] = 1.0
    if n_max >= 1:
        c[:, 1] = z
    with np.errstate(over="ignore", invalid="ignore"):
        for n in range(1, n_max):
            c[:, n + 1] = (z * c[:, n] - xi * np.sqrt(n) * c[:, n - 1]) / np.sqrt(n + 1)
    if not np.all(np.isfinite(c)):
        raise OverflowError("Bargmann recurrence overflowed; shrink the quadrature domain or n_max")
    return c
