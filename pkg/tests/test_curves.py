from fractions import Fraction as F

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coupled_markets.curves import Curve, CurveError, aggregate, generalized_inverse, q
from tests import oracles
from tests.strategies import demands, staircase_asks


def test_right_continuous_step_value_at_breakpoint():
    c = Curve.step_right([(0, 0), (10, 5)])
    assert c.eval(10) == 5
    assert c.is_right_continuous and c.is_increasing


def test_linear_demand_affine_piece():
    d = Curve.piecewise_linear([(0, 60), (60, 0)])
    assert d.eval(20) == 40
    assert d.eval(75) == 0


def test_left_continuous_step_demand_keeps_value_at_breakpoint():
    d = Curve.step_left([(40, 100), (80, 60)], 0)
    assert d.eval(40) == 100
    assert d.eval(F(4001, 100)) == 60
    assert d.is_left_continuous and d.is_decreasing


def test_one_sided_limits_at_a_jump():
    offer = Curve.step_left([(10, 0)], 5)
    assert offer.eval_left(10) == 0
    assert offer.eval_right(10) == 5
    assert offer.eval_left(3) == offer.eval(3) == offer.eval_right(3) == 0


def test_ask_size_uses_strict_inequality():
    of = generalized_inverse(Curve.step_left([(5, 10)], 100, domain_end=5))
    assert of.eval(10) == 0
    assert of.eval(10 + F(1, 1000)) == 5


def test_ask_size_between_stairs():
    of = generalized_inverse(Curve.step_left([(3, 10), (5, 20)], 100, domain_end=5))
    assert of.eval(15) == 3
    assert of.eval(20) == 3
    assert of.eval(21) == 5


def test_aggregate_of_disjoint_jumps():
    a = generalized_inverse(Curve.step_left([(5, 10)], 100, domain_end=5))
    b = generalized_inverse(Curve.step_left([(5, 20)], 100, domain_end=5))
    total = aggregate([a, b])
    assert [total.eval(p) for p in (10, 15, 20, 21)] == [0, 5, 5, 10]
    assert aggregate([a]) == a


def test_floats_are_refused():
    with pytest.raises(TypeError):
        q(0.1)
    assert q("0.1") == F(1, 10)


def test_malformed_curves_are_rejected():
    with pytest.raises(CurveError):
        Curve((F(1),), (F(0),), (F(0),), (F(0),))
    with pytest.raises(CurveError):
        Curve((F(0), F(1)), (F(0),) * 2, (F(0),) * 2, (F(0), F(1)))
    with pytest.raises(CurveError):
        Curve.step_left([(0, 1)], 0)
    with pytest.raises(CurveError):
        Curve.constant(1).eval(-1)


def test_canonical_form_drops_redundant_breakpoints():
    c = Curve.step_left([(2, 5), (4, 5)], 5)
    assert c == Curve.constant(5)


@settings(max_examples=150, deadline=None)
@given(staircase_asks(), st.lists(st.integers(0, 400), min_size=5, max_size=5))
def test_ask_size_matches_grid_sup_oracle(ask, raw_prices):
    of = generalized_inverse(ask)
    prices = [F(p, 4) for p in raw_prices] + list(ask.at) + [v + F(1, 1000) for v in ask.at]
    for p in prices:
        assert of.eval(p) == oracles.ask_size(ask, p)


@settings(max_examples=150, deadline=None)
@given(staircase_asks())
def test_ask_size_shape(ask):
    of = generalized_inverse(ask)
    assert of.eval(0) == 0
    assert of.is_increasing and of.is_left_continuous
    assert max(of.at + of.start) <= ask.domain_end


@settings(max_examples=100, deadline=None)
@given(staircase_asks(), st.integers(0, 20))
def test_higher_asks_offer_less(ask, bump):
    kappa = ask.domain_end
    raised = ask.shifted(bump).with_tail(ask.tail + bump, kappa)
    lo, hi = generalized_inverse(ask), generalized_inverse(raised)
    for p in sorted(set(ask.at) | set(raised.at) | {F(0), F(50), F(200)}):
        assert hi.eval(p) <= lo.eval(p)


@settings(max_examples=100, deadline=None)
@given(st.lists(staircase_asks(), min_size=3, max_size=3), st.integers(0, 400))
def test_aggregate_is_pointwise_sum_and_order_free(asks, raw):
    a, b, c = (generalized_inverse(x) for x in asks)
    p = F(raw, 4)
    assert aggregate([a, b, c]).eval(p) == a.eval(p) + b.eval(p) + c.eval(p)
    assert aggregate([a, b, c]) == aggregate([c, a, b])
    assert (a + b) + c == a + (b + c)


@settings(max_examples=100, deadline=None)
@given(demands())
def test_generated_demands_are_valid(d):
    assert d.is_decreasing and d.is_left_continuous
    assert d - d == Curve.constant(0)
