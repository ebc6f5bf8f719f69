from fractions import Fraction as F

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coupled_markets.coupling import (
    Producer,
    Scenario,
    ScenarioError,
    check_admissible,
    flat_cost,
    regulated_cost,
)
from coupled_markets.curves import Curve
from coupled_markets.equilibrium import dominant_strategy
from tests.builders import s0
from tests.strategies import increasing_costs, staircase_asks


def test_regulated_cost_two_steps():
    cost = regulated_cost(Producer(F(10), F(2), F(40)), F(40), F(5), F(20))
    assert [cost.eval(x) for x in (0, 10, 20, F(201, 10), 40)] == [20, 20, 20, 50, 50]
    assert cost.domain_end == 40 and cost.is_increasing


def test_regulated_cost_without_allowances_pays_penalty():
    cost = regulated_cost(Producer(F(10), F(2), F(40)), F(0), F(5), F(20))
    assert set(cost.at) == {50}


def test_regulated_cost_fully_covered():
    cost = regulated_cost(Producer(F(10), F(2), F(40)), F(100), F(5), F(20))
    assert cost.eval(40) == 20 and cost.eval(1) == 20


def test_regulated_cost_rejects_negative_allowances():
    with pytest.raises(ValueError):
        regulated_cost(Producer(F(10), F(2), F(40)), F(-1), F(5), F(20))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 80), st.integers(0, 20), st.integers(0, 20))
def test_regulated_cost_monotone_in_carbon_price(delta, p1, p2):
    prod = Producer(F(3), F(2), F(30))
    lo, hi = sorted((F(p1), F(p2)))
    a, b = regulated_cost(prod, F(delta), lo, F(20)), regulated_cost(prod, F(delta), hi, F(20))
    for x in range(0, 31):
        covered = x <= F(delta) / 2
        assert a.eval(x) <= b.eval(x) if covered else a.eval(x) == b.eval(x) == 3 + 40
    assert a.is_increasing


def test_producer_invariants():
    with pytest.raises(ScenarioError):
        Producer(F(1), F(1), F(0))
    with pytest.raises(ScenarioError):
        Producer(F(1), F(0), F(1))
    with pytest.raises(ScenarioError):
        Producer(F(-1), F(1), F(1))


def test_scenario_invariants():
    base = s0()
    demand = base.demand
    twins = (Producer(F(10), F(1), F(5), "a"), Producer(F(10), F(1), F(7), "b"))
    with pytest.raises(ScenarioError, match="same"):
        Scenario(twins, demand, F(12), F(30), F(100))
    with pytest.raises(ScenarioError, match="p_lolc"):
        Scenario(base.producers, demand, F(12), F(30), F(72))
    with pytest.raises(ScenarioError, match="demand"):
        Scenario(base.producers, Curve.constant(0), F(12), F(30), F(100))
    with pytest.raises(ScenarioError):
        Scenario(base.producers, demand, F(0), F(30), F(100))


def test_cost_asks_are_admissible():
    costs = [regulated_cost(p, F(3), F(14), F(30)) for p in s0().producers]
    asks = [dominant_strategy(c, F(100)) for c in costs]
    assert check_admissible(asks, costs) is None


def test_ask_at_covered_cost_without_allowances_is_a_violation():
    prod = Producer(F(10), F(2), F(10))
    cost = regulated_cost(prod, F(0), F(5), F(20))
    ask = dominant_strategy(flat_cost(prod, F(5)), F(100))
    v = check_admissible([ask], [cost])
    assert v is not None and v.producer == 0 and v.ask == 20 and v.cost == 50


@settings(max_examples=150, deadline=None)
@given(staircase_asks(), increasing_costs())
def test_admissibility_agrees_with_dense_grid(ask, cost):
    kappa = cost.domain_end
    ask = ask.with_tail(ask.tail, kappa) if ask.domain_end >= kappa else ask
    grid = [kappa * k / 400 for k in range(401)]
    dense_ok = all(ask.eval(x) >= cost.eval(x) for x in grid)
    found = check_admissible([ask], [cost])
    if found is None:
        assert dense_ok
    else:
        assert ask.eval(found.quantity) < cost.eval(found.quantity)
