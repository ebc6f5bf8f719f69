from fractions import Fraction as F

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coupled_markets.curves import Curve, CurveError, aggregate, generalized_inverse
from coupled_markets.power_exchange import (
    InconsistentClearing,
    allocate,
    clear_market,
    clearing_interval,
    clearing_price,
    equal_split_rationing,
    proportional_rationing,
)
from tests import oracles
from tests.builders import flat_ask
from tests.strategies import demands, staircase_asks

STEP_DEMAND = Curve.step_left([(30, 8), (60, 2)], 0)


def _offer(*asks):
    return aggregate([generalized_inverse(a) for a in asks])


def test_interval_with_demand_plateau():
    offer = _offer(flat_ask(5, 10), flat_ask(5, 20))
    assert clearing_interval(offer, STEP_DEMAND, F(100)) == (20, 30)


def test_interval_when_demand_is_never_met():
    offer = _offer(flat_ask(10, 5))
    assert clearing_interval(offer, Curve.constant(100), F(100)) == (100, 100)


def test_interval_on_linear_demand():
    offer = _offer(flat_ask(10, 10), flat_ask(10, 12))
    assert clearing_interval(offer, Curve.piecewise_linear([(0, 60), (60, 0)]), F(100)) == (40, 40)


def test_price_is_top_of_interval():
    assert clearing_price(F(20), F(30)) == 30
    assert clearing_price(F(40), F(40)) == 40
    with pytest.raises(InconsistentClearing):
        clearing_price(F(3), F(2))


def test_proportional_rationing_example():
    out = clear_market([flat_ask(5, 10), flat_ask(5, 20)], STEP_DEMAND, F(100))
    assert (out.p_under, out.p_elec, out.phi, out.total_sold) == (20, 30, (5, 3), 8)


def test_single_producer_linear_demand():
    out = clear_market([flat_ask(5, 10)], Curve.piecewise_linear([(0, 20), (20, 0)]), F(100))
    assert (out.p_elec, out.phi) == (15, (5,))


def test_single_producer_rationed_gets_all_demand():
    out = clear_market([flat_ask(10, 10)], STEP_DEMAND, F(100))
    assert out.phi == (8,)


def test_unmet_demand_clears_at_price_cap():
    out = clear_market([flat_ask(4, 10), flat_ask(3, 20)], Curve.constant(50), F(100))
    assert out.p_elec == 100 and out.phi == (4, 3)


def test_merit_order_against_brute_force_dispatch():
    # inelastic 25 units up to the cap, flat asks: cheapest first
    demand = Curve.step_left([(100, 25)], 0)
    asks = [flat_ask(10, 30), flat_ask(10, 10), flat_ask(10, 20)]
    out = clear_market(asks, demand, F(100))
    assert list(out.phi) == oracles.merit_order([(30, 10), (10, 10), (20, 10)], F(25))


def test_allocation_with_no_jump_is_inconsistent():
    with pytest.raises(InconsistentClearing):
        proportional_rationing([F(1)], [F(0)], F(1))


def test_equal_split_mutant_ignores_jump_sizes():
    assert equal_split_rationing([F(0), F(0)], [F(1), F(9)], F(4)) == [2, 2]
    assert proportional_rationing([F(0), F(0)], [F(1), F(9)], F(4)) == [F(2, 5), F(18, 5)]


def test_demand_validation():
    offer = _offer(flat_ask(5, 10))
    with pytest.raises(CurveError):
        clearing_interval(offer, Curve.step_right([(0, 5), (10, 8)]), F(100))
    with pytest.raises(CurveError):
        clearing_interval(offer, Curve.constant(0), F(100))


@settings(max_examples=200, deadline=None)
@given(st.lists(staircase_asks(), min_size=1, max_size=5), demands())
def test_conservation_and_share_bounds(asks, demand):
    out = clear_market(asks, demand, F(100))
    sizes = [generalized_inverse(a).eval(out.p_elec) for a in asks]
    assert out.total_sold == sum(out.phi) == min(demand.eval(out.p_elec), sum(sizes))
    for x, size, a in zip(out.phi, sizes, asks):
        assert 0 <= x <= size <= a.domain_end
    assert out.p_under <= out.p_elec <= out.p_over


@settings(max_examples=150, deadline=None)
@given(st.lists(staircase_asks(), min_size=1, max_size=4), demands())
def test_lowest_excess_price_matches_grid_oracle(asks, demand):
    p_under, _ = clearing_interval(_offer(*asks), demand, F(100))
    assert p_under == oracles.lowest_excess_price(asks, demand, F(100))


@settings(max_examples=100, deadline=None)
@given(
    st.lists(staircase_asks(), min_size=2, max_size=4),
    st.lists(staircase_asks(), min_size=2, max_size=4),
    demands(),
)
def test_equal_lowest_excess_price_gives_equal_clearing_price(a, b, demand):
    oa = clear_market(a, demand, F(100))
    ob = clear_market(b, demand, F(100))
    if oa.p_under == ob.p_under:
        assert oa.p_elec == ob.p_elec
    elif oa.p_under < ob.p_under:
        assert oa.p_elec <= ob.p_elec


@settings(max_examples=100, deadline=None)
@given(st.lists(staircase_asks(), min_size=1, max_size=4), demands())
def test_allocation_serves_everything_below_the_interval(asks, demand):
    offers = [generalized_inverse(x) for x in asks]
    out = clear_market(asks, demand, F(100))
    phi = allocate(offers, demand, out.p_under, out.p_elec)
    for x, o in zip(phi, offers):
        assert x >= min(o.eval_left(out.p_under), o.eval(out.p_elec))
