"""Uniform-price auction for a fixed stock of CO2 allowances."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

from .curves import Curve, CurveError, Number, aggregate, level_pieces, q

ZERO = Fraction(0)


@dataclass(frozen=True)
class CarbonOutcome:
    p_co2: Fraction
    delta: tuple[Fraction, ...]


def bid_curve(segments: Iterable[tuple[Number, Number]]) -> Curve:
    """Staircase bid ``w -> price`` from ``(w_end, price)`` segments.

    The price of segment ``i`` applies on ``(w_{i-1}, w_i]`` (and at ``w = 0``
    for the first one); beyond the last ``w_end`` the bid is 0.
    """
    segs = [(q(w), q(p)) for w, p in segments]
    if not segs:
        raise CurveError("a bid needs at least one segment")
    if any(p < 0 for _, p in segs):
        raise CurveError("bid prices must be non-negative")
    return Curve.step_left(segs, 0, domain_end=segs[-1][0])


def allowance_demand(bid: Curve) -> Curve:
    """``p -> sup{w : bid(w) >= p}``: decreasing and left-continuous.

    Note the weak inequality, which makes the curve keep its value at each
    bid level.
    """
    best: dict[Fraction, Fraction] = {}
    for value, sup in level_pieces(bid):
        if value < 0:
            raise CurveError("bid prices must be non-negative")
        best[value] = max(best.get(value, ZERO), sup)
    levels = sorted(best, reverse=True)
    # qty_at[k]: quantity demanded at any price in (levels[k+1], levels[k]]
    qty_at = []
    running = ZERO
    for level in levels:
        running = max(running, best[level])
        qty_at.append(running)
    xs = [ZERO]
    at = [running]
    start = [running]
    for k in range(len(levels) - 1, -1, -1):
        level = levels[k]
        after = qty_at[k - 1] if k > 0 else ZERO
        if level == 0:
            start[0] = after
            continue
        xs.append(level)
        at.append(qty_at[k])
        start.append(after)
    return Curve.build(xs, at, start, [ZERO] * len(xs))


def carbon_price(theta_agg: Curve, cap: Fraction) -> Fraction:
    """``inf{p >= 0 : theta_agg(p) < cap}`` for an aggregate allowance demand."""
    if cap <= 0:
        raise ValueError("the allowance cap must be positive")
    if theta_agg.at[0] < cap:
        return ZERO
    for i, (lo, _, right, _) in enumerate(theta_agg.pieces()):
        if i > 0 and theta_agg.at[i] < cap:
            return lo
        if right < cap:
            return lo
    raise CurveError("allowance demand never falls below the cap")


def allocate_allowances(
    thetas: Sequence[Curve], p_co2: Fraction, cap: Fraction
) -> list[Fraction]:
    """Allowances won by each bidder at the clearing price.

    Bidders are served in full when the cap covers demand at ``p_co2``;
    otherwise demand strictly above the price is served and the remainder is
    shared in proportion to each bidder's drop in demand at ``p_co2``.
    """
    at_price = [t.eval(p_co2) for t in thetas]
    if sum(at_price, ZERO) <= cap:
        return at_price
    above = [t.eval_right(p_co2) for t in thetas]
    drops = [a - b for a, b in zip(at_price, above)]
    total_drop = sum(drops, ZERO)
    residual = cap - sum(above, ZERO)
    if total_drop <= 0 or residual < 0:
        raise CurveError("allowance demand is inconsistent with the clearing price")
    return [b + d * residual / total_drop for b, d in zip(above, drops)]


def clear_auction(bids: Sequence[Curve], cap: Fraction) -> CarbonOutcome:
    if not bids:
        raise ValueError("at least one bidder is required")
    thetas = [allowance_demand(b) for b in bids]
    p = carbon_price(aggregate(thetas), cap)
    return CarbonOutcome(p, tuple(allocate_allowances(thetas, p, cap)))
