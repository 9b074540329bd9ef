from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from gaussunravel.correlations import (
    CorrelationKernel,
    ModeSet,
    SpectralDensityModel,
    TimeGrid,
    build_kernel,
    clamp_squeezing,
    decoherence_exponent,
    discretize_spectral_density,
    integrated_rates,
    markov_kernel,
    read_kernel_csv,
    write_kernel_csv,
)
from gaussunravel.optimize import optimal_rule, restore_rule


def brute_alpha_eta(modes, t, s):
    a = sum(g**2 * np.exp(-1j * w * (t - s)) for g, w in zip(modes.g, modes.omega))
    e = -sum(np.conj(x) * g**2 * np.exp(1j * w * (t + s)) for g, w, x in zip(modes.g, modes.omega, modes.xi))
    return a, e


def test_kernel_matches_brute_force_mode_sum(three_modes, small_grid):
    k = build_kernel(three_modes, small_grid)
    t = small_grid.times
    for i in range(0, t.size, 3):
        for j in range(0, t.size, 4):
            a, e = brute_alpha_eta(three_modes, t[i], t[j])
            assert k.alpha[i, j] == pytest.approx(a, abs=1e-13)
            assert k.eta[i, j] == pytest.approx(e, abs=1e-13)


def test_kernel_symmetries(three_modes, small_grid):
    k = build_kernel(three_modes, small_grid)
    assert np.allclose(k.alpha, k.alpha.conj().T, atol=1e-14)
    assert np.allclose(k.eta, k.eta.T, atol=1e-14)


def test_zero_squeezing_gives_vanishing_eta(small_grid):
    modes = ModeSet(np.array([0.3, 0.2]), np.array([1.0, 2.0]), np.zeros(2, dtype=complex))
    assert np.all(build_kernel(modes, small_grid).eta == 0)


def test_squeezing_does_not_touch_alpha(three_modes, small_grid):
    a = build_kernel(three_modes, small_grid).alpha
    b = build_kernel(three_modes.with_squeezing(np.zeros(3)), small_grid).alpha
    assert np.array_equal(a, b)


def test_mode_set_rejects_unphysical_squeezing():
    with pytest.raises(ValueError):
        ModeSet(np.array([0.1]), np.array([1.0]), np.array([1.0 + 0j]))
    with pytest.raises(ValueError):
        ModeSet(np.array([-0.1]), np.array([1.0]), np.array([0j]))


def test_clamp_squeezing_keeps_phase():
    xi = clamp_squeezing(np.array([2.0 * np.exp(0.7j), 0.1]), 1e-3)
    assert abs(xi[0]) == pytest.approx(1 - 1e-3)
    assert np.angle(xi[0]) == pytest.approx(0.7)
    assert xi[1] == 0.1


@pytest.mark.parametrize(
    "model",
    [SpectralDensityModel.ohmic(0.3, 1.0), SpectralDensityModel.super_ohmic(0.05, 1.0)],
)
def test_discretized_comb_converges_to_continuum(model):
    modes = discretize_spectral_density(model, 20.0, 1000)
    tau = np.linspace(0, 5, 51)
    ref = model.continuum_alpha(tau)
    err = np.max(np.abs(modes.alpha(tau) - ref)) / np.max(np.abs(ref))
    assert err < 1e-3


def test_continuum_alpha_matches_numerical_integral():
    model = SpectralDensityModel.ohmic(0.3, 1.0)
    for tau in (0.0, 0.7, 2.5):
        re = quad(lambda w: model.density(w) * math.cos(w * tau), 0, np.inf)[0]
        im = -quad(lambda w: model.density(w) * math.sin(w * tau), 0, np.inf, limit=200)[0]
        assert model.continuum_alpha(tau) == pytest.approx(re + 1j * im, abs=1e-9)


def test_discretize_rejects_bad_input():
    model = SpectralDensityModel.ohmic(0.3, 1.0)
    with pytest.raises(ValueError):
        discretize_spectral_density(model, 0.0, 10)
    with pytest.raises(ValueError):
        discretize_spectral_density(model, 10.0, 10, lambda w: np.full(w.shape, 1.0 + 0j))


def test_recurrence_guard():
    modes = discretize_spectral_density(SpectralDensityModel.ohmic(0.3, 1.0), 10.0, 10)
    with pytest.raises(ValueError, match="recurrence"):
        build_kernel(modes, TimeGrid(0.1, 100))


def test_decoherence_exponent_ratio_to_closed_form(small_grid):
    modes = ModeSet(np.array([0.4, 0.3]), np.array([1.0, 1.7]), np.zeros(2, dtype=complex))
    fine = TimeGrid(small_grid.T / 2000, 2000)
    phi = decoherence_exponent(build_kernel(modes, fine))
    # Gamma = 4 Re Phi for a dephasing qubit
    assert 4 * phi[-1].real == pytest.approx(modes.dephasing_exponent(fine.T), rel=1e-6)


def test_decoherence_exponent_real_part_is_xi_independent(three_modes, small_grid):
    a = decoherence_exponent(build_kernel(three_modes, small_grid))
    b = decoherence_exponent(build_kernel(three_modes.with_squeezing(np.zeros(3)), small_grid))
    eta_part = a - b
    # eta only shifts the exponent by a quadratic form of the trapezoid weights
    w = small_grid.trapezoid_weights()
    eta = build_kernel(three_modes, small_grid).eta
    assert eta_part[-1] == pytest.approx(0.5 * w @ eta @ w, abs=1e-12)


def test_integrated_rates_gamma(three_modes, small_grid):
    k = build_kernel(three_modes, small_grid)
    A, E, gamma = integrated_rates(k)
    assert np.allclose(gamma, 4 * np.real(A + E))
    assert A[0] == 0 and E[0] == 0


def test_markov_kernel_rates_closed_form():
    grid = TimeGrid(0.01, 200)
    k = markov_kernel(1.5, grid)
    A, E, gamma = integrated_rates(k)
    assert np.allclose(A[1:], 0.75)
    assert np.all(E == 0)
    phi = decoherence_exponent(k)
    assert np.allclose(phi.real, 0.75 * grid.times)


def test_markov_rule_form_optimal_exponent():
    grid = TimeGrid(0.01, 200)
    a, shift = optimal_rule(grid.T, 1e-3).markov_form()
    phi = decoherence_exponent(markov_kernel(1.0, grid, a, shift))
    assert phi[-1].real == pytest.approx(0.5 * grid.T * (2 - 1e-3))
    a, shift = restore_rule(grid.T, 1e-3).markov_form()
    phi = decoherence_exponent(markov_kernel(1.0, grid, a, shift))
    assert phi[-1].real == pytest.approx(0.5 * grid.T * 1e-3)


def test_markov_kernel_refuses_materialization():
    k = markov_kernel(1.0, TimeGrid(0.1, 5))
    with pytest.raises(ValueError):
        k.alpha


def test_kernel_csv_round_trip(tmp_path, three_modes):
    grid = TimeGrid(0.1, 10)
    k = build_kernel(three_modes, grid)
    rows = write_kernel_csv(k, tmp_path / "k.csv")
    assert rows == (grid.n_steps + 1) * (grid.n_steps + 2) // 2
    back = read_kernel_csv(tmp_path / "k.csv", grid)
    assert np.array_equal(back.alpha, k.alpha) and np.array_equal(back.eta, k.eta)


@settings(max_examples=40, deadline=None)
@given(
    r=st.floats(0.0, 0.99),
    theta=st.floats(-math.pi, math.pi),
    g=st.floats(0.01, 2.0),
    w=st.floats(0.1, 5.0),
)
def test_kernel_properties_hold_for_any_single_mode(r, theta, g, w):
    modes = ModeSet(np.array([g]), np.array([w]), np.array([r * np.exp(1j * theta)]))
    grid = TimeGrid(0.1, 8)
    k = build_kernel(modes, grid)
    assert np.allclose(k.alpha, k.alpha.conj().T)
    assert np.allclose(k.eta, k.eta.T)
    # |eta| <= alpha(t,t) pointwise on the diagonal: Cauchy-Schwarz for a single mode
    assert np.all(np.abs(np.diag(k.eta)) <= np.diag(k.alpha).real * (1 + 1e-12))


def test_correlation_kernel_validates_shapes():
    grid = TimeGrid(0.1, 3)
    with pytest.raises(ValueError):
        CorrelationKernel(grid, np.zeros((3, 3), complex), np.zeros((4, 4), complex))
