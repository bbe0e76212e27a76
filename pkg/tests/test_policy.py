import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from storage_screening.market import Affine, GenerationTech, LoadGrid, MeritOrder, TechSet
from storage_screening.policy import (
    ConvergenceError, Regime, StorageGrid, complementarity_gap, expected_next_price,
    policy_update, price_field, solve_cells, solve_policy, threshold_loads,
)

from conftest import LINEAR, UNIFORM, linear_case

TOL = 1e-6


def test_storage_grid_validation():
    with pytest.raises(ValueError):
        StorageGrid(np.array([0.0, 0.0]))
    with pytest.raises(ValueError):
        StorageGrid(np.array([0.0, 1.0]), discount=0.0)
    with pytest.raises(ValueError):
        StorageGrid(np.array([0.0, 1.0]), delta_t=0.0)
    g = StorageGrid.uniform(0.0, 0.0)
    assert g.n == 1 and g.capacity == 0


def test_zero_capacity_leaves_prices_untouched():
    sol = solve_policy(LINEAR, StorageGrid.uniform(0.0, 0.0), UNIFORM)
    np.testing.assert_array_equal(sol.policy, 0.0)
    np.testing.assert_allclose(sol.prices[0], LINEAR.price(UNIFORM.values))


def test_price_field_substitution():
    grid = StorageGrid.uniform(0.0, 10.0, 3)
    loads = LoadGrid.from_pairs([40.0, 60.0], [1, 1])
    full_to_empty = np.full((3, 2), 0.0)
    p, floor = price_field(full_to_empty, grid, LINEAR, loads)
    np.testing.assert_allclose(p[-1], LINEAR.price(loads.values - 10.0))
    assert not floor.any()


def test_price_field_hedge_row_arithmetic():
    grid = StorageGrid(np.array([0.0, 7.7, 18.7, 20.0]))
    loads = LoadGrid.from_pairs([43.0], [1])
    policy = np.array([[0.0], [18.7], [18.7], [20.0]])
    p, _ = price_field(policy, grid, LINEAR, loads)
    # charging 11 MWh on top of a 43 MW load faces the price of 54 MW
    assert p[1, 0] == pytest.approx(101.0)


def test_price_field_floor_event():
    grid = StorageGrid.uniform(0.0, 10.0, 3)
    loads = LoadGrid.from_pairs([2.0], [1])
    policy = np.array([[0.0], [0.0], [0.0]])
    p, floor = price_field(policy, grid, LINEAR, loads)
    assert floor[-1, 0] and not floor[0, 0]
    assert p[-1, 0] == LINEAR.price(0.0)


def test_expected_next_price():
    loads = LoadGrid.from_pairs([1.0, 2.0], [1, 1])
    np.testing.assert_allclose(expected_next_price(np.full((3, 2), 95.0), loads), 95.0)
    assert expected_next_price(np.array([[80.0, 120.0]]), loads)[0] == pytest.approx(100.0)


def test_policy_update_extremes():
    grid = StorageGrid.uniform(0.0, 10.0, 11)
    ep = np.full(11, 95.0)
    loads = LoadGrid.from_pairs([1.0, 99.0], [1, 1])
    pol = policy_update(ep, grid, LINEAR, loads)
    # very high load: discharge everything; very low load: fill up
    np.testing.assert_array_equal(pol[:, 1], 0.0)
    np.testing.assert_array_equal(pol[:, 0], 10.0)


def test_interior_root_condition(linear150):
    sol = linear150.solution
    inner = sol.regime == Regime.INTERIOR
    assert inner.any()
    assert np.max(np.abs(sol.prices - sol.discounted_ep_next)[inner]) <= TOL


def test_flat_g_returns_midpoint():
    curve = MeritOrder(TechSet([GenerationTech("flat", 10.0, 0, 1000)], 1000))
    grid = StorageGrid.uniform(0.0, 10.0, 11, discount=0.5)
    ep = np.full(11, 20.0)
    closing, regime = solve_cells(curve, grid, ep, np.array([4.0]), np.array([50.0]))
    assert regime[0] == Regime.INTERIOR
    assert closing[0] == pytest.approx(5.0, abs=1e-9)


def test_linear_mid_state_bands(linear10):
    sol = linear10.solution
    i = sol.grid.mid_index
    regime = sol.regime[i]
    loads = sol.loads.values
    fill = loads[regime == Regime.AT_MAX]
    empty = loads[regime == Regime.AT_MIN]
    assert fill.size and empty.size
    # charge at low load (long duration), discharge at high load (short duration)
    assert fill.max() < empty.min()
    between = (loads > fill.max()) & (loads < empty.min())
    assert np.all(regime[between] == Regime.INTERIOR)
    assert np.max(np.abs(sol.prices[i, between] - sol.discounted_ep_next[i, between]), initial=0) <= TOL


def test_threshold_loads_degenerate():
    sol = solve_policy(LINEAR, StorageGrid.uniform(0.0, 0.0), UNIFORM)
    l_fill, l_empty = threshold_loads(sol)
    assert not (sol.regime == Regime.INTERIOR).any()
    assert l_empty[0] - l_fill[0] == pytest.approx(UNIFORM.values[1] - UNIFORM.values[0])


def test_threshold_loads_move_with_state(linear20):
    # Filling from a fuller store adds less to net demand, so the fill band
    # reaches higher loads; emptying a fuller store removes more, so the
    # empty band needs higher loads.  Both thresholds rise with S, which is
    # what a policy nondecreasing in S requires.
    sol = linear20.solution
    l_fill, l_empty = threshold_loads(sol)
    ok = ~np.isnan(l_fill)
    assert ok.sum() > 1 and np.all(np.diff(l_fill[ok]) >= 0)
    ok = ~np.isnan(l_empty)
    assert ok.sum() > 1 and np.all(np.diff(l_empty[ok]) >= 0)
    # and the fill band always sits below the empty band
    both = ~np.isnan(l_fill) & ~np.isnan(l_empty)
    assert np.all(l_fill[both] < l_empty[both])


@pytest.mark.parametrize("pct", [10, 50, 150])
def test_structural_invariants(pct):
    sol = linear_case(pct).solution
    g = sol.grid
    assert np.all(sol.policy >= g.s_min) and np.all(sol.policy <= g.s_max)
    assert np.all(np.diff(sol.policy, axis=1) <= 1e-9)
    assert np.all(np.diff(sol.policy, axis=0) >= -1e-9)
    assert np.all(np.diff(sol.ep) <= 1e-12)
    assert complementarity_gap(sol).max() <= TOL
    assert sol.residual <= 1e-9


def test_cell_matches_grid_solution(linear20):
    sol = linear20.solution
    for i in (0, 17, 50, 100):
        for j in (0, 33, 71, 100):
            c = sol.cell(sol.grid.s_values[i], sol.loads.values[j])
            assert c["closing"] == pytest.approx(sol.policy[i, j], abs=1e-9)
            assert c["price"] == pytest.approx(sol.prices[i, j], abs=1e-9)
            assert c["regime"] == sol.regime[i, j]


def test_non_convergence_reports_history():
    grid = StorageGrid.uniform(0.0, 20.0, 21)
    with pytest.raises(ConvergenceError) as err:
        solve_policy(LINEAR, grid, UNIFORM, max_iter=3)
    assert len(err.value.residual_history) == 3


def test_bad_solver_parameters():
    grid = StorageGrid.uniform(0.0, 20.0, 21)
    with pytest.raises(ValueError):
        solve_policy(LINEAR, grid, UNIFORM, tol=0)
    with pytest.raises(ValueError):
        solve_policy(LINEAR, grid, UNIFORM, damping=1.5)


def test_policy_update_projects_non_monotone_ep():
    grid = StorageGrid.uniform(0.0, 10.0, 5)
    bumpy = np.array([100.0, 90.0, 95.0, 80.0, 70.0])
    pol = policy_update(bumpy, grid, LINEAR, UNIFORM)
    assert np.all(np.diff(pol, axis=1) <= 1e-9)


@settings(max_examples=15, deadline=None)
@given(
    intercept=st.floats(0, 50),
    slope=st.floats(0.2, 3),
    capacity=st.floats(1, 40),
    discount=st.sampled_from([0.9, 0.99, 0.999]),
)
def test_random_affine_cases_satisfy_trichotomy(intercept, slope, capacity, discount):
    loads = LoadGrid.uniform(capacity, capacity + 50, 21)
    grid = StorageGrid.uniform(0.0, capacity, 21, discount=discount)
    sol = solve_policy(Affine(intercept, slope), grid, loads, tol=1e-10)
    assert complementarity_gap(sol).max() <= 1e-6
    assert np.all(np.diff(sol.policy, axis=1) <= 1e-9)
    assert np.all(np.diff(sol.ep) <= 1e-12)
