# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops; :mod:`gaussunravel._pykernels` holds the reference numpy versions.

Complex arithmetic is spelled out on real and imaginary parts to avoid the
slow C99 complex multiply.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, cos, sin, sqrt, isfinite

cnp.import_array()

ctypedef double complex cplx


def propagate_dephasing(
    const cplx[::1] psi0,
    const cplx[:, :, ::1] local_unitaries,
    const double[:, ::1] signs,
    const cplx[:, :, ::1] dz,
    const cplx[::1] dphi,
):
    """States of a batch of trajectories, shape ``(batch, n_steps + 1, dim)``.

    Step ``j``: ``psi <- U exp(sum_m signs[:, m] dz[b, j, m] - dphi[j]) psi`` with
    ``U`` the Kronecker product of ``local_unitaries`` (qubit 0 leftmost).
    ``signs`` entries must be +1 or -1.
    """
    cdef Py_ssize_t batch = dz.shape[0], n_steps = dz.shape[1], n_ch = dz.shape[2]
    cdef Py_ssize_t dim = psi0.shape[0], n_q = local_unitaries.shape[0]
    cdef Py_ssize_t b, j, m, p, k, stride, lo
    cdef double fr, fi, er, ei, tr, ti, ar, ai, br, bi, mag
    if dim != (1 << n_q) or signs.shape[0] != dim or signs.shape[1] != n_ch or dphi.shape[0] != n_steps:
        raise ValueError("inconsistent kernel input shapes")

    # diagonal gates fold into one phase vector; the rest act as 2x2 blocks
    diag = np.ones(dim, dtype=np.complex128)
    dense = []
    bits = np.arange(dim)
    for k in range(n_q):
        u = np.asarray(local_unitaries[k])
        bit = (bits >> (n_q - 1 - k)) & 1
        if u[0, 1] == 0 and u[1, 0] == 0:
            diag *= np.where(bit == 0, u[0, 0], u[1, 1])
        else:
            dense.append(k)
    cdef double[::1] dg = diag.view(np.float64)
    cdef Py_ssize_t n_dense = len(dense)
    cdef Py_ssize_t[::1] dense_q = np.array(dense, dtype=np.intp)
    cdef double[:, ::1] gates = np.ascontiguousarray(np.asarray(local_unitaries)[dense].reshape(n_dense, 4)).view(np.float64) if n_dense else np.zeros((1, 8))
    cdef unsigned char[:, ::1] pos = (np.asarray(signs) > 0).astype(np.uint8)

    cdef const double[:, ::1] dzv = np.ascontiguousarray(np.asarray(dz).reshape(batch, n_steps * n_ch)).view(np.float64)
    cdef double[::1] f0 = np.ascontiguousarray(np.exp(-np.asarray(dphi))).view(np.float64)
    cdef const double[::1] psi = np.ascontiguousarray(psi0).view(np.float64)
    out_arr = np.empty((batch, n_steps + 1, dim), dtype=np.complex128)
    cdef double[:, ::1] out = out_arr.reshape(batch, (n_steps + 1) * dim).view(np.float64)
    cdef double[::1] ep = np.empty(2 * n_ch + 2)
    cdef double[::1] em = np.empty(2 * n_ch + 2)
    cdef double *s
    cdef double *src

    with nogil:
        for b in range(batch):
            for p in range(2 * dim):
                out[b, p] = psi[p]
            for j in range(n_steps):
                for m in range(n_ch):
                    er = dzv[b, 2 * (j * n_ch + m)]
                    ei = dzv[b, 2 * (j * n_ch + m) + 1]
                    mag = exp(er)
                    ep[2 * m] = mag * cos(ei)
                    ep[2 * m + 1] = mag * sin(ei)
                    em[2 * m] = cos(ei) / mag
                    em[2 * m + 1] = -sin(ei) / mag
                src = &out[b, 2 * j * dim]
                s = &out[b, 2 * (j + 1) * dim]
                for p in range(dim):
                    fr = f0[2 * j] * dg[2 * p] - f0[2 * j + 1] * dg[2 * p + 1]
                    fi = f0[2 * j] * dg[2 * p + 1] + f0[2 * j + 1] * dg[2 * p]
                    for m in range(n_ch):
                        if pos[p, m]:
                            er = ep[2 * m]
                            ei = ep[2 * m + 1]
                        else:
                            er = em[2 * m]
                            ei = em[2 * m + 1]
                        tr = fr * er - fi * ei
                        fi = fr * ei + fi * er
                        fr = tr
                    s[2 * p] = fr * src[2 * p] - fi * src[2 * p + 1]
                    s[2 * p + 1] = fr * src[2 * p + 1] + fi * src[2 * p]
                for k in range(n_dense):
                    stride = 1 << (n_q - 1 - dense_q[k])
                    for lo in range(dim):
                        if lo & stride:
                            continue
                        ar = s[2 * lo]
                        ai = s[2 * lo + 1]
                        br = s[2 * (lo + stride)]
                        bi = s[2 * (lo + stride) + 1]
                        s[2 * lo] = gates[k, 0] * ar - gates[k, 1] * ai + gates[k, 2] * br - gates[k, 3] * bi
                        s[2 * lo + 1] = gates[k, 0] * ai + gates[k, 1] * ar + gates[k, 2] * bi + gates[k, 3] * br
                        s[2 * (lo + stride)] = gates[k, 4] * ar - gates[k, 5] * ai + gates[k, 6] * br - gates[k, 7] * bi
                        s[2 * (lo + stride) + 1] = gates[k, 4] * ai + gates[k, 5] * ar + gates[k, 6] * bi + gates[k, 7] * br
    return out_arr


def bargmann_coefficients(const cplx[::1] z, cplx xi, Py_ssize_t n_max):
    """Fock coefficients ``c_n`` of ``exp(z b^+ - xi/2 b^+2)|0>`` for each ``z``, shape ``(len(z), n_max + 1)``.

    ``c_0 = 1``, ``c_{n+1} = (z c_n - xi sqrt(n) c_{n-1}) / sqrt(n + 1)``.
    """
    cdef Py_ssize_t k, n, nz = z.shape[0]
    out_arr = np.zeros((nz, n_max + 1), dtype=np.complex128)
    cdef double[:, ::1] c = out_arr.view(np.float64)
    cdef const double[::1] zr = np.ascontiguousarray(z).view(np.float64)
    cdef double[::1] root = np.sqrt(np.arange(n_max + 2, dtype=np.float64))
    cdef double[::1] inv_root = 1.0 / np.maximum(root, 1.0)
    cdef double xr = xi.real, xim = xi.imag, ar, ai, br, bi, a, bb
    cdef bint finite = True
    with nogil:
        for k in range(nz):
            a = zr[2 * k]
            bb = zr[2 * k + 1]
            c[k, 0] = 1.0
            if n_max >= 1:
                c[k, 2] = a
                c[k, 3] = bb
            for n in range(1, n_max):
                ar = a * c[k, 2 * n] - bb * c[k, 2 * n + 1]
                ai = a * c[k, 2 * n + 1] + bb * c[k, 2 * n]
                br = (xr * c[k, 2 * n - 2] - xim * c[k, 2 * n - 1]) * root[n]
                bi = (xr * c[k, 2 * n - 1] + xim * c[k, 2 * n - 2]) * root[n]
                c[k, 2 * n + 2] = (ar - br) * inv_root[n + 1]
                c[k, 2 * n + 3] = (ai - bi) * inv_root[n + 1]
            for n in range(2 * n_max + 2):
                if not isfinite(c[k, n]):
                    finite = False
    if not finite:
        raise OverflowError("Bargmann recurrence overflowed; shrink the quadrature domain or n_max")
    return out_arr
