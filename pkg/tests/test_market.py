import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import lp_dispatch_cost
from storage_screening.market import (
    Affine, GenerationTech, LoadGrid, MeritOrder, TechSet, dispatch_cost,
    generator_optimal_output, inverse_price, price, screening_capacities,
)

from conftest import TABLE1


def stack_50_30_20():
    return TABLE1.with_capacities([50, 30, 20])


def test_dispatch_cost_hand_stack():
    assert dispatch_cost(60, stack_50_30_20()) == pytest.approx(3500.0)
    assert dispatch_cost(0, stack_50_30_20()) == 0.0


def test_dispatch_cost_above_capacity_uses_voll():
    techs = stack_50_30_20()
    expected = lp_dispatch_cost(105, techs.costs, techs.capacities, techs.voll)
    assert expected == pytest.approx(16500.0)
    assert dispatch_cost(105, techs) == pytest.approx(expected)


def test_dispatch_cost_rejects_negative_load():
    with pytest.raises(ValueError):
        dispatch_cost(-1.0, stack_50_30_20())


def test_price_examples():
    assert price(50, Affine(20, 1.5)) == pytest.approx(95.0)
    mo = MeritOrder(stack_50_30_20())
    assert price(60, mo) == 100.0
    assert price(101, mo) == 1000.0


def test_price_breakpoint_is_next_unit():
    mo = MeritOrder(stack_50_30_20())
    assert price(50, mo) == 100.0
    assert price(80, mo) == 300.0
    assert price(100, mo) == 1000.0


def test_inverse_price_examples():
    assert inverse_price(95, Affine(20, 1.5)) == (pytest.approx(50.0), False)
    assert inverse_price(100, MeritOrder(stack_50_30_20())) == (80.0, False)
    load, at_floor = inverse_price(10, Affine(20, 1.5))
    assert load == 0.0 and at_floor


def test_generator_output():
    assert generator_optimal_output(95, 50, 50) == 50
    assert generator_optimal_output(95, 100, 30) == 0
    assert generator_optimal_output(100, 100, 30) == 30


def test_techset_merges_ties_and_checks_voll():
    ts = TechSet([GenerationTech("a", 10, 1, 5), GenerationTech("b", 10, 2, 7),
                  GenerationTech("c", 5, 0, 1)], 100)
    assert list(ts.costs) == [5, 10]
    assert list(ts.capacities) == [1, 12]
    with pytest.raises(ValueError):
        TechSet([GenerationTech("a", 10)], 10)
    with pytest.raises(ValueError):
        GenerationTech("a", -1)


def test_load_grid_validation():
    with pytest.raises(ValueError):
        LoadGrid([1, 1], [0.5, 0.5])
    with pytest.raises(ValueError):
        LoadGrid([1, 2], [0.5, 0.6])
    g = LoadGrid.uniform(0, 100, 101)
    assert g.probabilities.sum() == pytest.approx(1.0, abs=1e-12)
    assert g.l_min == 0 and g.l_max == 100 and g.span == 100


def test_screening_capacities_table1():
    ts = screening_capacities(TABLE1, LoadGrid.uniform(0, 100, 101))
    np.testing.assert_allclose(ts.capacities, [30, 30, 30])


def test_screening_skips_dominated_tech():
    # "X" costs more to run and more to build than "M": never least cost
    techs = TechSet(list(TABLE1.techs) + [GenerationTech("X", 200, 160)], 1000)
    caps = dict(zip([t.name for t in techs.techs],
                    screening_capacities(techs, LoadGrid.uniform(0, 100, 11)).capacities))
    assert caps["X"] == 0
    assert caps["L"] == pytest.approx(30) and caps["M"] == pytest.approx(30)


costs_caps = st.lists(
    st.tuples(st.integers(1, 60), st.integers(0, 6)), min_size=1, max_size=4, unique_by=lambda t: t[0]
)


@settings(max_examples=60, deadline=None)
@given(costs_caps, st.floats(0, 30, allow_nan=False))
def test_dispatch_matches_lp_enumeration(tc, load):
    techs = TechSet([GenerationTech(f"g{i}", c, 0, k) for i, (c, k) in enumerate(tc)], 100)
    expected = lp_dispatch_cost(load, techs.costs, techs.capacities, techs.voll)
    assert dispatch_cost(load, techs) == pytest.approx(expected, rel=1e-12, abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(costs_caps)
def test_price_is_subgradient_of_convex_cost(tc):
    curve = MeritOrder(TechSet([GenerationTech(f"g{i}", c, 0, k) for i, (c, k) in enumerate(tc)], 100))
    # integer breakpoints land exactly on this grid
    loads = np.arange(301) / 10.0
    dc = curve.dispatch_cost(loads)
    slopes = np.diff(dc) / np.diff(loads)
    assert np.all(slopes >= -1e-9)
    assert np.all(np.diff(slopes) >= -1e-7)
    # the right-continuous price is the right derivative of the cost
    np.testing.assert_allclose(curve.price(loads[:-1]), slopes, rtol=1e-9)


@settings(max_examples=100, deadline=None)
@given(costs_caps, st.floats(0, 30, allow_nan=False))
def test_price_inverse_roundtrip_merit(tc, load):
    curve = MeritOrder(TechSet([GenerationTech(f"g{i}", c, 0, k) for i, (c, k) in enumerate(tc)], 100))
    p = curve.price(load)
    back, _ = curve.inverse(p)
    if np.isfinite(back):
        # the inverse is sup{L : price(L) <= p}; at a breakpoint the
        # right-continuous price has already stepped up, so compare the
        # price just below it
        left, right = curve.price_bounds(back)
        assert left == p
        assert back >= load


@settings(max_examples=100, deadline=None)
@given(st.floats(-50, 50), st.floats(0.01, 10), st.floats(0, 200))
def test_price_inverse_roundtrip_affine(a, b, load):
    curve = Affine(a, b)
    p = curve.price(load)
    back, at_floor = curve.inverse(p)
    if not at_floor:
        assert curve.price(back) == pytest.approx(p, rel=1e-9, abs=1e-9)
