"""Uniform-price electricity clearing with proportional rationing."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Sequence

from .curves import Curve, CurveError, aggregate, generalized_inverse

# (base quantities, jump sizes, residual demand) -> sold quantities
RationingRule = Callable[[Sequence[Fraction], Sequence[Fraction], Fraction], list[Fraction]]


class InconsistentClearing(RuntimeError):
    """An internal invariant of the clearing broke (should be unreachable)."""


@dataclass(frozen=True)
class ElecOutcome:
    p_under: Fraction
    p_over: Fraction
    p_elec: Fraction
    phi: tuple[Fraction, ...]
    total_sold: Fraction


def _check_offer(offer: Curve) -> None:
    if not (offer.is_step and offer.is_increasing) or offer.at[0] != 0:
        raise CurveError("offer curve must be an increasing staircase equal to 0 at p = 0")


def check_demand(demand: Curve) -> None:
    if not demand.is_decreasing:
        raise CurveError("demand must be decreasing")
    if not demand.is_left_continuous:
        raise CurveError("demand must be left-continuous")
    if demand.tail < 0:
        raise CurveError("demand must be non-negative")
    if demand.eval(0) <= 0:
        raise CurveError("demand must be positive at price 0")


def lowest_excess_price(offer: Curve, demand: Curve) -> Fraction | None:
    """``inf{p > 0 : offer(p) > demand(p)}`` or ``None`` when the set is empty."""
    gap = offer - demand
    for i, (lo, hi, right, slope) in enumerate(gap.pieces()):
        if i > 0 and gap.at[i] > 0:
            return lo
        if right > 0:
            return lo
        if slope > 0:
            root = lo - right / slope
            if hi is None or root < hi:
                return root
    return None


def demand_plateau_end(demand: Curve, p: Fraction, cap: Fraction) -> Fraction:
    """``sup{r in [p, cap] : demand(r) = demand(p)}``."""
    level = demand.eval(p)
    end = p
    i = demand.piece_index(p)
    while end < cap:
        if demand.slope[i] != 0 or demand.start[i] != level:
            break
        if i + 1 == len(demand.xs):
            return cap
        i += 1
        end = demand.xs[i]
        if demand.at[i] != level:
            break
    return min(end, cap)


def clearing_interval(offer: Curve, demand: Curve, p_lolc: Fraction) -> tuple[Fraction, Fraction]:
    """Return ``(p_under, p_over)`` for an aggregate offer and a demand curve.

    ``p_under`` is the lowest price at which offer strictly exceeds demand
    (``p_lolc`` when that never happens, and capped at ``p_lolc``);
    ``p_over`` is the end of the demand plateau starting at ``p_under``.
    """
    _check_offer(offer)
    check_demand(demand)
    found = lowest_excess_price(offer, demand)
    p_under = p_lolc if found is None else min(found, p_lolc)
    return p_under, demand_plateau_end(demand, p_under, p_lolc)


def clearing_price(p_under: Fraction, p_over: Fraction) -> Fraction:
    """The market picks the top of the clearing interval."""
    if p_under > p_over:
        raise InconsistentClearing(f"empty clearing interval [{p_under}, {p_over}]")
    return p_over


def proportional_rationing(
    base: Sequence[Fraction], jumps: Sequence[Fraction], residual: Fraction
) -> list[Fraction]:
    total = sum(jumps, Fraction(0))
    if total <= 0:
        raise InconsistentClearing("rationing reached with no offer jump at the clearing price")
    return [b + j * residual / total for b, j in zip(base, jumps)]


def equal_split_rationing(
    base: Sequence[Fraction], jumps: Sequence[Fraction], residual: Fraction
) -> list[Fraction]:
    """Deliberately wrong rule (equal shares among jumping producers), for mutation tests."""
    movers = [j > 0 for j in jumps]
    n = sum(movers)
    if n == 0:
        raise InconsistentClearing("rationing reached with no offer jump at the clearing price")
    return [b + (residual / n if m else 0) for b, m in zip(base, movers)]


def allocate(
    offers: Sequence[Curve],
    demand: Curve,
    p_under: Fraction,
    p_elec: Fraction,
    rationing: RationingRule = proportional_rationing,
) -> list[Fraction]:
    """Quantity sold by each producer at ``p_elec``.

    Producers are served in full when demand covers the aggregate offer.
    Otherwise everything offered strictly below ``p_under`` is accepted and
    the remaining demand is shared among the offer increments between
    ``p_under`` (left limit) and ``p_elec``.
    """
    at_price = [o.eval(p_elec) for o in offers]
    d = demand.eval(p_elec)
    if d >= sum(at_price, Fraction(0)):
        return at_price
    base = [o.eval_left(p_under) for o in offers]
    jumps = [a - b for a, b in zip(at_price, base)]
    residual = d - sum(base, Fraction(0))
    if residual < 0:
        raise InconsistentClearing("demand below the offer accepted before the clearing price")
    return rationing(base, jumps, residual)


def clear_offers(
    offers: Sequence[Curve],
    demand: Curve,
    p_lolc: Fraction,
    rationing: RationingRule = proportional_rationing,
) -> ElecOutcome:
    """Clear a market given per-producer ask-size curves."""
    if not offers:
        raise ValueError("at least one producer is required")
    total = aggregate(offers)
    p_under, p_over = clearing_interval(total, demand, p_lolc)
    p_elec = clearing_price(p_under, p_over)
    phi = allocate(offers, demand, p_under, p_elec, rationing)
    return ElecOutcome(p_under, p_over, p_elec, tuple(phi), sum(phi, Fraction(0)))


def clear_market(
    asks: Sequence[Curve],
    demand: Curve,
    p_lolc: Fraction,
    rationing: RationingRule = proportional_rationing,
) -> ElecOutcome:
    """Clear the electricity market for a profile of ask curves."""
    return clear_offers([generalized_inverse(a) for a in asks], demand, p_lolc, rationing)
