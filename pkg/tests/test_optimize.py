from __future__ import annotations

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gaussunravel.correlations import ModeSet, TimeGrid, build_kernel
from gaussunravel.entanglement import mean_entanglement_bound
from gaussunravel.optimize import (
    PhaseObjective,
    RuleKind,
    SqueezingRule,
    bound_at_horizon,
    circular_distance,
    custom_rule,
    horizon_bound_curve,
    optimal_rule,
    phase_rule,
    restore_rule,
    search_squeezing,
    zero_rule,
)


@pytest.fixture
def modes():
    return ModeSet(np.array([0.3, 0.2, 0.25]), np.array([0.7, 1.1, 1.9]), np.zeros(3, dtype=complex))


GRID = TimeGrid(0.01, 250)


def test_rule_values():
    w = np.array([0.5, 1.0])
    assert np.allclose(optimal_rule(2.0, 1e-3)(w), -(1 - 1e-3) * np.exp(2j * w))
    assert np.allclose(restore_rule(2.0, 1e-3)(w), (1 - 1e-3) * np.exp(2j * w))
    assert np.all(zero_rule()(w) == 0)
    assert np.all(np.abs(custom_rule(lambda w: 5 * np.exp(1j * w))(w)) <= 1 - 1e-3 + 1e-15)


def test_rule_validation():
    with pytest.raises(ValueError):
        optimal_rule(1.0, 0.0)
    with pytest.raises(ValueError):
        phase_rule([0.0], 1.0)
    with pytest.raises(ValueError):
        phase_rule([0.0, 1.0], 0.5)(np.array([1.0]))
    with pytest.raises(ValueError):
        custom_rule(np.cos).markov_form()
    assert SqueezingRule("optimal", T=1.0).kind is RuleKind.OPTIMAL
    assert "T=2" in optimal_rule(2.0).descriptor


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(0, 2 * math.pi), min_size=3, max_size=3), st.floats(0.0, 0.999))
def test_phase_objective_equals_kernel_path(phases, mag):
    m = ModeSet(np.array([0.3, 0.2, 0.25]), np.array([0.7, 1.1, 1.9]), np.zeros(3, dtype=complex))
    grid = TimeGrid(0.05, 50)
    xi = mag * np.exp(1j * np.array(phases))
    obj = PhaseObjective(m, grid, n_channels=2)
    k = build_kernel(m.with_squeezing(xi), grid)
    ref = math.log(mean_entanglement_bound([k, k]).xbar[-1])
    assert obj.log_xbar(xi) == pytest.approx(ref, rel=1e-10, abs=1e-12)


def test_analytic_rule_is_optimal_and_restoring(modes):
    lo = bound_at_horizon(modes, GRID, optimal_rule(GRID.T))
    hi = bound_at_horizon(modes, GRID, restore_rule(GRID.T))
    zero = bound_at_horizon(modes, GRID, zero_rule())
    assert lo < zero < hi
    rng = np.random.default_rng(0)
    for _ in range(50):
        r = phase_rule(rng.uniform(0, 2 * np.pi, 3), 1 - 1e-3)
        assert lo <= bound_at_horizon(modes, GRID, r) * (1 + 1e-12) <= hi * (1 + 1e-12)


def test_horizon_curve_matches_retuned_kernel(modes):
    grid = TimeGrid(0.02, 100)
    for kind, make in (("optimal", optimal_rule), ("restore", restore_rule), ("zero", lambda T: zero_rule())):
        curve = horizon_bound_curve(modes, grid, kind, n_channels=2)
        for k in (10, 55, 100):
            g = TimeGrid(grid.dt, k)
            assert curve[k] == pytest.approx(bound_at_horizon(modes, g, make(g.T), n_channels=2), rel=1e-10)
    assert horizon_bound_curve(modes, grid, "optimal")[0] == 1.0


@pytest.mark.parametrize("maximize", [False, True])
def test_search_recovers_analytic_phases(modes, maximize):
    res = search_squeezing(modes, GRID, maximize=maximize, seed=3)
    assert res.phase_error < 1e-3
    assert not res.budget_exhausted
    if maximize:
        assert res.best_value <= res.analytic_value * (1 + 1e-12)
    else:
        assert res.best_value >= res.analytic_value * (1 - 1e-12)
    assert abs(res.analytic_gap) < 1e-9


def test_search_never_beats_analytic_rule_anywhere(modes):
    res = search_squeezing(modes, GRID, seed=11, n_starts=6)
    assert all(v >= res.analytic_value * (1 - 1e-12) for _, v, _ in res.trace)
    sweep = dict(res.magnitude_sweep)
    assert sweep[0.0] == pytest.approx(bound_at_horizon(modes, GRID, zero_rule()), rel=1e-10)


def test_one_mode_search_agrees_with_exhaustive_scan():
    m = ModeSet(np.array([0.4]), np.array([1.3]), np.zeros(1, dtype=complex))
    grid = TimeGrid(0.01, 200)
    obj = PhaseObjective(m, grid)
    scan = np.linspace(0, 2 * np.pi, 10_000, endpoint=False)
    vals = [obj.log_xbar((1 - 1e-3) * np.exp(1j * np.array([p]))) for p in scan]
    best_scan = scan[int(np.argmin(vals))]
    res = search_squeezing(m, grid, seed=1)
    assert circular_distance(res.best_phases[0], best_scan) <= 2 * np.pi / 10_000
    assert math.log(res.best_value) <= min(vals) + 1e-12


def test_budget_exhaustion_returns_best_so_far(modes, tmp_path):
    res = search_squeezing(modes, GRID, budget=0)
    assert res.budget_exhausted and res.evaluations == 1
    res = search_squeezing(modes, GRID, budget=40)
    assert res.budget_exhausted and res.evaluations <= 40
    res.write(tmp_path / "t.csv", tmp_path / "r.json")
    data = json.loads((tmp_path / "r.json").read_text())
    assert data["budget_exhausted"] is True
    head = (tmp_path / "t.csv").read_text().splitlines()[0]
    assert head == "iteration,objective,phase_1,phase_2,phase_3"


def test_search_is_seed_deterministic(modes):
    a = search_squeezing(modes, GRID, seed=5, n_starts=2)
    b = search_squeezing(modes, GRID, seed=5, n_starts=2)
    assert np.array_equal(a.best_phases, b.best_phases)
