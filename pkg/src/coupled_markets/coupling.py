"""Producers, scenarios, and the regulated marginal cost linking both markets."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from .curves import Curve, CurveError
from .power_exchange import check_demand

ZERO = Fraction(0)


class ScenarioError(ValueError):
    """A scenario violates one of the modelling assumptions."""


@dataclass(frozen=True)
class Producer:
    c: Fraction
    e: Fraction
    kappa: Fraction
    name: str = ""

    def __post_init__(self) -> None:
        if self.kappa <= 0:
            raise ScenarioError(f"producer {self.name!r}: capacity must be positive")
        if self.e <= 0:
            raise ScenarioError(f"producer {self.name!r}: emission rate must be positive")
        if self.c < 0:
            raise ScenarioError(f"producer {self.name!r}: base cost must be non-negative")

    def cost_at(self, tau: Fraction) -> Fraction:
        return self.c + tau * self.e


@dataclass(frozen=True)
class Scenario:
    producers: tuple[Producer, ...]
    demand: Curve
    W: Fraction
    penalty: Fraction
    p_lolc: Fraction
    verify: dict = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        if not self.producers:
            raise ScenarioError("at least one producer is required")
        seen: dict[tuple[Fraction, Fraction], str] = {}
        for p in self.producers:
            key = (p.c, p.e)
            if key in seen:
                raise ScenarioError(
                    f"producers {seen[key]!r} and {p.name!r} share the same (c, e); "
                    "producers must be pairwise distinct"
                )
            seen[key] = p.name
        try:
            check_demand(self.demand)
        except CurveError as exc:
            raise ScenarioError(f"demand: {exc}") from None
        if self.W <= 0:
            raise ScenarioError("allowance cap W must be positive")
        if self.penalty < 0:
            raise ScenarioError("penalty must be non-negative")
        top = max(p.c + p.e * self.penalty for p in self.producers)
        if self.p_lolc <= top:
            raise ScenarioError(
                f"p_lolc = {self.p_lolc} must exceed every penalised production cost (max {top})"
            )

    @property
    def size(self) -> int:
        return len(self.producers)


def regulated_cost(
    producer: Producer, delta_j: Fraction, p_co2: Fraction, penalty: Fraction
) -> Curve:
    """Marginal cost once the carbon market has cleared.

    Output covered by the ``delta_j`` allowances costs ``c + e * p_co2``;
    the rest costs ``c + e * penalty``.  The covered quantity is clipped to
    ``[0, kappa]``.  The value at ``q = 0`` is the first step's.
    """
    if delta_j < 0:
        raise ValueError("allowance quantity must be non-negative")
    kappa = producer.kappa
    covered = min(delta_j / producer.e, kappa)
    low = producer.c + producer.e * p_co2
    high = producer.c + producer.e * penalty
    if covered == 0:
        return Curve.step_left([(kappa, high)], high, domain_end=kappa)
    if covered == kappa:
        return Curve.step_left([(kappa, low)], low, domain_end=kappa)
    return Curve.step_left([(covered, low), (kappa, high)], high, domain_end=kappa)


def flat_cost(producer: Producer, tau: Fraction = ZERO) -> Curve:
    """Constant marginal cost ``c + tau * e`` on ``[0, kappa]``."""
    v = producer.cost_at(tau)
    return Curve.step_left([(producer.kappa, v)], v, domain_end=producer.kappa)


@dataclass(frozen=True)
class Violation:
    producer: int
    quantity: Fraction
    ask: Fraction
    cost: Fraction


def check_admissible(asks: Sequence[Curve], costs: Sequence[Curve]) -> Violation | None:
    """First point where an ask sells below cost, or ``None`` if every ask is admissible.

    Both sides are staircases, so checking every breakpoint and one point
    inside every cell of the merged grid is exhaustive.
    """
    if len(asks) != len(costs):
        raise ValueError("one ask per producer is required")
    for j, (ask, cost) in enumerate(zip(asks, costs)):
        end = cost.domain_end
        if end is None:
            raise CurveError("cost curves need a bounded domain")
        grid = sorted({x for x in ask.xs + cost.xs if x <= end} | {end})
        probes = []
        for a, b in zip(grid, grid[1:]):
            probes += [a, (a + b) / 2]
        probes.append(end)
        for x in probes:
            if ask.eval(x) < cost.eval(x):
                return Violation(j, x, ask.eval(x), cost.eval(x))
    return None
