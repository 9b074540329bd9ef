from __future__ import annotations

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gaussunravel.correlations import ModeSet, TimeGrid, build_kernel, decoherence_exponent, markov_kernel
from gaussunravel.entanglement import (
    CONCURRENCE,
    SLInvariantMeasure,
    bound_vs_exact,
    check_measure,
    concurrence2,
    dephased_density,
    mean_entanglement_bound,
    scaling_ratio,
    sigma_y_tangle,
    wootters_concurrence,
    write_report,
)
from gaussunravel.noise import sample_noise_modesum
from gaussunravel.optimize import optimal_rule
from gaussunravel.sse import DephasingSystem, bell_state, product_state, propagate_dephasing

BELL = bell_state()


def test_concurrence_of_reference_states():
    assert concurrence2(BELL) == pytest.approx(1.0)
    assert concurrence2(product_state([1, 0], [0.6, 0.8])) == pytest.approx(0.0, abs=1e-15)
    psi = np.array([math.cos(0.3), 0, 0, math.sin(0.3)])
    assert concurrence2(psi) == pytest.approx(math.sin(0.6))


def test_concurrence_is_sl_invariant_and_homogeneous():
    rep = check_measure(CONCURRENCE, n_trials=200, seed=3)
    assert rep["ok"], rep


def test_check_measure_rejects_non_invariant_measure():
    bad = SLInvariantMeasure("population", lambda psi: abs(psi[0]) ** 2)
    assert not check_measure(bad, n_trials=20)["ok"]


def test_sigma_y_tangle():
    assert sigma_y_tangle(BELL) == pytest.approx(concurrence2(BELL))
    four = np.kron(BELL, BELL)
    assert sigma_y_tangle(four) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        sigma_y_tangle(np.ones(8))


@pytest.mark.parametrize("p", [0.0, 0.2, 1 / 3, 0.5, 0.9, 1.0])
def test_wootters_werner_state(p):
    rho = p * np.outer(BELL, BELL) + (1 - p) * np.eye(4) / 4
    assert wootters_concurrence(rho) == pytest.approx(max(0.0, (3 * p - 1) / 2), abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=8, max_size=8))
def test_wootters_reduces_to_pure_state_concurrence(v):
    psi = np.array(v[:4]) + 1j * np.array(v[4:])
    if np.linalg.norm(psi) < 1e-3:
        return
    psi = psi / np.linalg.norm(psi)
    assert wootters_concurrence(np.outer(psi, psi.conj())) == pytest.approx(concurrence2(psi), abs=1e-7)


def test_wootters_validation():
    with pytest.raises(ValueError):
        wootters_concurrence(np.eye(4))
    with pytest.raises(ValueError):
        wootters_concurrence(np.eye(2) / 2)


def test_dephased_bell_concurrence_equals_coherence_factor():
    for kappa in (1.0, 0.6 * np.exp(0.4j), 0.05):
        assert wootters_concurrence(dephased_density(BELL, 2, [0], [kappa])) == pytest.approx(abs(kappa))


def test_dephased_density_is_a_noise_average():
    rng = np.random.default_rng(0)
    psi = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    psi /= np.linalg.norm(psi)
    # random phase kicks exp(-i phi sigma_z) on qubit 1 with phi ~ N(0, s^2): coherence factor exp(-2 s^2)
    s = 0.4
    phis = np.linspace(-8 * s, 8 * s, 4001)
    w = np.exp(-0.5 * (phis / s) ** 2)
    w /= w.sum()
    rho = sum(wi * np.outer(v, v.conj()) for wi, v in ((wi, np.kron(np.eye(2), np.diag([np.exp(-1j * p), np.exp(1j * p)])) @ psi) for wi, p in zip(w, phis)))
    assert np.allclose(rho, dephased_density(psi, 2, [1], [math.exp(-2 * s * s)]), atol=1e-12)


def test_bound_zero_squeezing_is_half_decoherence_exponent():
    modes = ModeSet(np.array([0.5, 0.3]), np.array([1.0, 2.0]), np.zeros(2, dtype=complex))
    grid = TimeGrid(0.05, 40)
    k = build_kernel(modes, grid)
    rep = mean_entanglement_bound([k], "zero")
    gamma = 4 * decoherence_exponent(k).real
    assert np.allclose(rep.xbar, np.exp(-0.5 * gamma))
    assert np.allclose(rep.gamma_integral, gamma)


@settings(max_examples=20, deadline=None)
@given(m=st.integers(1, 5), gamma=st.floats(0.1, 3.0))
def test_bound_factorizes_over_channels(m, gamma):
    grid = TimeGrid(0.02, 50)
    k = markov_kernel(gamma, grid, *optimal_rule(grid.T).markov_form())
    one = mean_entanglement_bound([k]).xbar
    assert np.allclose(mean_entanglement_bound([k] * m).xbar, one**m, rtol=1e-12)


def test_bound_is_mean_of_unnormalized_trajectory_entanglement():
    modes = ModeSet(np.array([0.5, 0.3]), np.array([1.0, 2.0]), np.array([0.3, -0.5j]))
    grid = TimeGrid(0.05, 40)
    k = build_kernel(modes, grid)
    system = DephasingSystem(2, (0,), BELL)
    rep = mean_entanglement_bound([k])
    for i in range(20):
        tr = propagate_dephasing(system, [sample_noise_modesum(modes, grid, 4, i)], [k])
        # mu(psi(t)) / mu(psi(0)) is the same for every outcome
        assert concurrence2(tr.states[-1]) == pytest.approx(rep.xbar[-1], rel=1e-12)
        assert scaling_ratio(tr, CONCURRENCE, grid.n_steps) * tr.norms_sq[-1] == pytest.approx(rep.xbar[-1], rel=1e-12)


def test_scaling_ratio_needs_entangled_start():
    modes = ModeSet(np.array([0.5]), np.array([1.0]), np.zeros(1, dtype=complex))
    grid = TimeGrid(0.05, 4)
    system = DephasingSystem(2, (0,), product_state([1, 0], [1, 0]))
    tr = propagate_dephasing(system, [sample_noise_modesum(modes, grid, 1)], [build_kernel(modes, grid)])
    with pytest.raises(ValueError):
        scaling_ratio(tr, CONCURRENCE, 2)


def test_bound_vs_exact_flags_violations(tmp_path):
    grid = TimeGrid(0.1, 10)
    rep = mean_entanglement_bound([markov_kernel(1.0, grid)], "zero")
    exact = np.exp(-2 * grid.times)
    cmp = bound_vs_exact(rep, exact)
    assert not cmp.violated and np.all(cmp.gap >= 0)
    assert bound_vs_exact(rep, np.ones_like(exact)).violated
    rep.exact_reference = exact
    write_report(rep, tmp_path / "b.csv", tmp_path / "b.json", "markov")
    data = np.genfromtxt(tmp_path / "b.csv", delimiter=",", names=True)
    assert list(data.dtype.names) == ["t", "xbar", "exact", "gap", "gamma_integral"]
    assert json.loads((tmp_path / "b.json").read_text())["channels"] == 1
