"""Compiled vs numpy kernels on trajectory propagation and Bargmann coefficients.

Usage: python benchmarks/bench_kernels.py [--repeat N]
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from gaussunravel import _pykernels

try:
    from gaussunravel import _ckernels
except ImportError:
    _ckernels = None


def propagation_case(batch, n_steps, n_qubits, channels, seed=0, mixing=False):
    rng = np.random.default_rng(seed)
    dim = 2**n_qubits
    psi0 = np.full(dim, dim**-0.5, dtype=complex)
    u = np.stack([np.diag(np.exp(-1j * rng.uniform(0, 0.1, 2))) for _ in range(n_qubits)])
    if mixing:
        # transverse-field rotation on the uncoupled qubits
        c, s = np.cos(0.05), np.sin(0.05)
        u[channels:] = np.array([[c, -1j * s], [-1j * s, c]])
    b = np.arange(dim)
    signs = np.ascontiguousarray(np.stack([1.0 - 2.0 * ((b >> (n_qubits - 1 - k)) & 1) for k in range(channels)], axis=1))
    dz = 0.05 * (rng.standard_normal((batch, n_steps, channels)) + 1j * rng.standard_normal((batch, n_steps, channels)))
    dphi = np.full(n_steps, 0.001 + 0j)
    return psi0, u, signs, dz, dphi


def bargmann_case(n_points, seed=0):
    rng = np.random.default_rng(seed)
    return np.ascontiguousarray(rng.standard_normal(n_points) + 1j * rng.standard_normal(n_points)), 0.4 + 0.2j, 30


def bench(fn, args, repeat):
    return min(timeit.repeat(lambda: fn(*args), number=1, repeat=repeat))


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args(argv)
    cases = [
        ("propagate B=2000 n=200 N=2 M=1", _pykernels.propagate_dephasing, "propagate_dephasing", propagation_case(2000, 200, 2, 1)),
        ("propagate B=500 n=200 N=6 M=3", _pykernels.propagate_dephasing, "propagate_dephasing", propagation_case(500, 200, 6, 3)),
        ("propagate B=500 n=200 N=6 M=3 mix", _pykernels.propagate_dephasing, "propagate_dephasing", propagation_case(500, 200, 6, 3, mixing=True)),
        ("bargmann 2500 nodes n_max=30", _pykernels.bargmann_coefficients, "bargmann_coefficients", bargmann_case(2500)),
    ]
    print(f"{'case':38s} {'numpy [ms]':>11s} {'compiled [ms]':>14s} {'speedup':>8s}")
    for name, py_fn, attr, case in cases:
        t_py = bench(py_fn, case, args.repeat)
        if _ckernels is None:
            print(f"{name:38s} {1e3 * t_py:11.2f} {'n/a':>14s} {'':>8s}")
            continue
        c_fn = getattr(_ckernels, attr)
        assert np.allclose(c_fn(*case), py_fn(*case), rtol=1e-12, atol=1e-14)
        t_c = bench(c_fn, case, args.repeat)
        print(f"{name:38s} {1e3 * t_py:11.2f} {1e3 * t_c:14.2f} {t_py / t_c:7.1f}x")


if __name__ == "__main__":
    main()
