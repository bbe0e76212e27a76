import numpy as np
import pytest

from storage_screening.investment import solve_storage_case
from storage_screening.market import GenerationTech, LoadGrid, MeritOrder, TechSet
from storage_screening.montecarlo import (
    RNG_NAME, draw_loads, empirical_state_distribution, make_rng, private_optimality_check,
    simulate, summary, total_variation,
)

from conftest import UNIFORM, linear_case


@pytest.fixture(scope="module")
def long_run(linear10):
    return simulate(linear10.solution, 100_000, seed=2024)


def flat_price_case():
    techs = TechSet([GenerationTech("only", 40.0, 0, 1000.0)], 1000.0)
    return solve_storage_case(MeritOrder(techs), UNIFORM, 10.0, n_states=11)


def test_zero_capacity_has_no_cashflow():
    traj = simulate(linear_case(0).solution, 500, seed=3)
    np.testing.assert_array_equal(traj.cashflow, 0.0)


def test_same_seed_same_path(linear10):
    a = simulate(linear10.solution, 2000, seed=11)
    b = simulate(linear10.solution, 2000, seed=11)
    c = simulate(linear10.solution, 2000, seed=12)
    for name in ("opening", "load", "closing", "price", "cashflow"):
        np.testing.assert_array_equal(getattr(a, name), getattr(b, name))
    assert not np.array_equal(a.load, c.load)
    assert a.rng == RNG_NAME == "Philox"


def test_path_is_chained_and_bounded(linear10):
    traj = simulate(linear10.solution, 5000, seed=5, s0=0.0)
    g = linear10.solution.grid
    np.testing.assert_array_equal(traj.closing[:-1], traj.opening[1:])
    assert traj.opening[0] == 0.0
    assert np.all((traj.closing >= g.s_min) & (traj.closing <= g.s_max))
    np.testing.assert_allclose(traj.cashflow, traj.price * (traj.opening - traj.closing))
    assert len(list(traj.rows())) == len(traj) == 5000


def test_simulate_validation(linear10):
    with pytest.raises(ValueError):
        simulate(linear10.solution, 0, seed=1)
    with pytest.raises(ValueError):
        simulate(linear10.solution, 10, seed=1, s0=-1.0)


def test_load_draws_follow_weights():
    loads = LoadGrid.from_pairs([1.0, 2.0, 3.0], [1, 2, 7])
    draws = draw_loads(loads, 200_000, make_rng(9))
    freq = np.array([(draws == v).mean() for v in loads.values])
    np.testing.assert_allclose(freq, loads.probabilities, atol=0.005)


def test_empirical_distribution_splits_between_nodes():
    class Fake:
        opening = np.array([0.0, 0.25, 1.0, 2.0])
    hist = empirical_state_distribution(Fake, [0.0, 1.0, 2.0])
    np.testing.assert_allclose(hist, [1.75 / 4, 1.25 / 4, 1.0 / 4])
    assert total_variation([1, 0], [0, 1]) == 1.0


def test_state_histogram_matches_stationary(linear10, long_run):
    emp = empirical_state_distribution(long_run, linear10.solution.grid.s_values)
    assert total_variation(emp, linear10.stationary.mass) <= 0.05


def test_mean_price_within_sampling_error(linear10, long_run):
    s = summary(long_run, linear10.solution)
    assert s["intervals"] == 100_000 and s["rng"] == "Philox" and s["seed"] == 2024
    assert abs(s["mean_price"] - s["stationary_mean_price"]) <= 4 * s["mean_price_se"]
    assert s["state_tv_distance"] <= 0.05


def test_private_optimality_linear(linear10, long_run):
    rep = private_optimality_check(linear10.solution, n_facility=5, trajectory=long_run)
    assert rep.rule_is_optimal
    assert rep.best_alternative <= 1e-6
    assert rep.worst_deviation_gain <= 1e-6
    assert rep.marginal_profit_error <= 0.05


def test_flat_price_world():
    case = flat_price_case()
    sol = case.solution
    np.testing.assert_array_equal(sol.prices, 40.0)
    # discounting makes holding energy worthless: the store empties and idles
    assert case.marginal_benefit == 0.0
    traj = simulate(sol, 200, seed=1)
    np.testing.assert_array_equal(traj.cashflow[1:], 0.0)
    rep = private_optimality_check(sol, n_facility=3, T=200, n_random=20)
    assert rep.rule_is_optimal
    # the unit facility opens half full, sells that once and then idles
    assert rep.marginal_profit == pytest.approx(40.0 * 0.5 / 200, abs=1e-12)


def test_facility_grid_limits(linear10):
    with pytest.raises(ValueError):
        private_optimality_check(linear10.solution, n_facility=8, T=10)
