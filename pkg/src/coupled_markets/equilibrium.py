"""Construction of the coupled-market equilibrium candidate.

Everything is driven by an exogenous carbon cost ``tau``: producers ask at
``c_j + tau * e_j`` and the resulting electricity clearing tells how many
allowances the market would be willing to buy.  The two guess prices are the
largest ``tau`` at which that demand still exceeds the cap, and the bid
profile is then built around them.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Iterator, Sequence, Union

from .carbon_auction import CarbonOutcome, bid_curve, clear_auction
from .coupling import Scenario, check_admissible, flat_cost, regulated_cost
from .curves import Curve
from .power_exchange import ElecOutcome, clear_market

log = logging.getLogger(__name__)

ZERO = Fraction(0)


class EquilibriumError(Exception):
    """Base class for failures of the equilibrium construction."""


class DesignRejected(EquilibriumError, ValueError):
    """The allowance cap does not bracket the willing-to-buy quantities."""


class NonclassifiableCrossing(EquilibriumError):
    """The active set changes at the guess price in neither expected way."""


class ParameterError(EquilibriumError, ValueError):
    """``(eps, delta)`` produce a degenerate bid profile."""


class NoValidatedParameters(EquilibriumError):
    """The ``(eps, delta)`` search grid was exhausted."""

    def __init__(self, message: str, attempts: int):
        super().__init__(message)
        self.attempts = attempts


@dataclass(frozen=True)
class TauOutcome:
    tau: Fraction
    p_elec: Fraction
    phi: tuple[Fraction, ...]
    active: frozenset[int]
    elec: ElecOutcome


@dataclass(frozen=True)
class WillingToBuy:
    tau: Fraction
    w: Fraction
    w_bar: Fraction


@dataclass(frozen=True)
class CaseA:
    i_bar: int


@dataclass(frozen=True)
class CaseB:
    i_l: int
    i_r: int


CaseTag = Union[CaseA, CaseB]


@dataclass(frozen=True)
class DesignCheck:
    ok: bool
    reason: str
    w_zero: Fraction
    w_bar_penalty: Fraction


@dataclass(frozen=True)
class CoupledOutcome:
    carbon: CarbonOutcome
    costs: tuple[Curve, ...]
    asks: tuple[Curve, ...]
    elec: ElecOutcome


@dataclass(frozen=True)
class EquilibriumReport:
    tau_guess: Fraction
    tau_bar_guess: Fraction
    case: CaseTag
    eps: Fraction
    delta_param: Fraction
    bids: tuple[Curve, ...]
    outcome: CoupledOutcome
    predicted: TauOutcome
    w_at_guess: tuple[Fraction, Fraction, Fraction]
    case_identities: dict[str, bool]
    claims: dict[str, bool]
    discrepancies: tuple[str, ...]
    falsifier: "object"
    attempts: int
    emission_rates: tuple[Fraction, ...] = ()
    flags: dict[str, bool] = field(default_factory=dict)

    @property
    def asks(self) -> tuple[Curve, ...]:
        return self.outcome.asks

    @property
    def p_co2(self) -> Fraction:
        return self.outcome.carbon.p_co2

    @property
    def p_elec(self) -> Fraction:
        return self.outcome.elec.p_elec

    @property
    def phi(self) -> tuple[Fraction, ...]:
        return self.outcome.elec.phi

    @property
    def delta(self) -> tuple[Fraction, ...]:
        return self.outcome.carbon.delta

    @property
    def covered_emissions(self) -> tuple[Fraction, ...]:
        return covered_emissions(self.emission_rates, self.phi, self.delta)

    @property
    def verified(self) -> bool:
        return self.falsifier.best_improvement == 0  # type: ignore[attr-defined]


def covered_emissions(
    e: Sequence[Fraction], phi: Sequence[Fraction], delta: Sequence[Fraction]
) -> tuple[Fraction, ...]:
    return tuple(min(ej * pj, dj) for ej, pj, dj in zip(e, phi, delta))


# -- electricity at an exogenous carbon cost ------------------------------------


def dominant_strategy(cost: Curve, p_lolc: Fraction) -> Curve:
    """Ask exactly the marginal cost on its domain and ``p_lolc`` beyond."""
    if cost.domain_end is None:
        raise ValueError("cost curves need a bounded domain")
    return cost.with_tail(p_lolc, cost.domain_end)


@lru_cache(maxsize=8192)
def tau_clearing(scenario: Scenario, tau: Fraction) -> TauOutcome:
    """Clear electricity with every producer asking ``c_j + tau * e_j``."""
    if not 0 <= tau <= scenario.penalty:
        raise ValueError(f"tau = {tau} outside [0, penalty]")
    asks = [dominant_strategy(flat_cost(p, tau), scenario.p_lolc) for p in scenario.producers]
    out = clear_market(asks, scenario.demand, scenario.p_lolc)
    active = frozenset(j for j, x in enumerate(out.phi) if x != 0)
    return TauOutcome(tau, out.p_elec, out.phi, active, out)


def willing_to_buy(scenario: Scenario, tau: Fraction) -> WillingToBuy:
    out = tau_clearing(scenario, tau)
    w = sum((p.e * x for p, x in zip(scenario.producers, out.phi)), ZERO)
    w_bar = sum((p.e * p.kappa for j, p in enumerate(scenario.producers) if j in out.active), ZERO)
    return WillingToBuy(tau, w, w_bar)


def _subset_sums(values: Sequence[Fraction]) -> set[Fraction]:
    sums = {ZERO}
    for v in values:
        sums |= {s + v for s in sums}
    return sums


def tau_breakpoints(scenario: Scenario) -> list[Fraction]:
    """Carbon costs in ``[0, penalty]`` where the clearing structure can change.

    These are pairwise crossings of the cost lines and the carbon costs at
    which a cost line meets a critical demand price: a demand breakpoint or
    a price where a sloped demand piece equals a sum of capacities.
    """
    producers = scenario.producers
    lo, hi = ZERO, scenario.penalty
    out: set[Fraction] = set()
    for a, b in itertools.combinations(producers, 2):
        if a.e != b.e:
            t = (a.c - b.c) / (b.e - a.e)
            if lo <= t <= hi:
                out.add(t)
    prices: set[Fraction] = set(scenario.demand.xs)
    sums = _subset_sums([p.kappa for p in producers])
    for x0, x1, right, slope in scenario.demand.pieces():
        if slope == 0:
            continue
        for s in sums:
            p = x0 + (s - right) / slope
            if x0 < p and (x1 is None or p < x1):
                prices.add(p)
    for rho in prices:
        for prod in producers:
            t = (rho - prod.c) / prod.e
            if lo <= t <= hi:
                out.add(t)
    return sorted(out)


def tau_knots(scenario: Scenario) -> list[Fraction]:
    """Breakpoints together with both ends of ``[0, penalty]``."""
    return sorted(set(tau_breakpoints(scenario)) | {ZERO, scenario.penalty})


def _cells(knots: Sequence[Fraction]) -> Iterator[tuple[Fraction, Fraction]]:
    return zip(knots, knots[1:])


def _affine_on_cell(
    f: Callable[[Fraction], Fraction], a: Fraction, b: Fraction
) -> tuple[Fraction, Fraction]:
    """``(value at the first third, slope)`` of ``f`` on the open cell ``(a, b)``."""
    m1, m2, mid = a + (b - a) / 3, a + 2 * (b - a) / 3, (a + b) / 2
    v1, v2 = f(m1), f(m2)
    slope = (v2 - v1) / (m2 - m1)
    if f(mid) != v1 + slope * (mid - m1):
        raise EquilibriumError(f"willing-to-buy is not affine on ({a}, {b}); missing breakpoint")
    return v1, slope


def sup_above(
    f: Callable[[Fraction], Fraction], knots: Sequence[Fraction], level: Fraction
) -> Fraction | None:
    """``sup{t in [knots[0], knots[-1]] : f(t) > level}`` for ``f`` affine between knots."""
    for idx in range(len(knots) - 1, -1, -1):
        b = knots[idx]
        if f(b) > level:
            return b
        if idx == 0:
            break
        a = knots[idx - 1]
        v1, slope = _affine_on_cell(f, a, b)
        m1 = a + (b - a) / 3
        if slope == 0:
            if v1 > level:
                return b
            continue
        root = m1 + (level - v1) / slope
        if slope > 0 and root < b:
            return b
        if slope < 0 and root > a:
            return min(root, b)
    return None


def design_check(scenario: Scenario) -> DesignCheck:
    """The cap must satisfy ``W(0) > W > W_bar(penalty)``."""
    w0 = willing_to_buy(scenario, ZERO).w
    wp = willing_to_buy(scenario, scenario.penalty).w_bar
    if not scenario.W < w0:
        return DesignCheck(
            False,
            f"too many allowances: cap {scenario.W} is not below the allowances "
            f"needed with free carbon ({w0}); the allowance price would collapse to 0",
            w0,
            wp,
        )
    if not scenario.W > wp:
        return DesignCheck(
            False,
            f"too few allowances: cap {scenario.W} is not above the capacity-based "
            f"need at the penalty price ({wp})",
            w0,
            wp,
        )
    return DesignCheck(True, "", w0, wp)


def guess_prices(scenario: Scenario) -> tuple[Fraction, Fraction]:
    """``(tau_guess, tau_bar_guess)``: last carbon costs where the need exceeds the cap."""
    check = design_check(scenario)
    if not check.ok:
        raise DesignRejected(check.reason)
    knots = tau_knots(scenario)
    cap = scenario.W
    tau_guess = sup_above(lambda t: willing_to_buy(scenario, t).w, knots, cap)
    tau_bar = sup_above(lambda t: willing_to_buy(scenario, t).w_bar, knots, cap)
    assert tau_guess is not None and tau_bar is not None  # design check guarantees t = 0
    return tau_guess, tau_bar


def tau_side(scenario: Scenario, tau: Fraction, side: int) -> TauOutcome:
    """Clearing just left (``side=-1``) or right (``side=+1``) of ``tau``.

    The structure is constant between consecutive knots, so the midpoint of
    the adjacent cell realises the one-sided limit exactly.  At the ends of
    ``[0, penalty]`` the value at ``tau`` itself is used.
    """
    knots = tau_knots(scenario)
    if side < 0:
        prev = [k for k in knots if k < tau]
        return tau_clearing(scenario, (prev[-1] + tau) / 2 if prev else tau)
    nxt = [k for k in knots if k > tau]
    return tau_clearing(scenario, (nxt[0] + tau) / 2 if nxt else tau)


def _w_bar(scenario: Scenario, out: TauOutcome) -> Fraction:
    return sum((scenario.producers[j].e * scenario.producers[j].kappa for j in out.active), ZERO)


def _w(scenario: Scenario, out: TauOutcome) -> Fraction:
    return sum((p.e * x for p, x in zip(scenario.producers, out.phi)), ZERO)


def classify_case(scenario: Scenario, tau_bar: Fraction) -> CaseTag:
    left = tau_side(scenario, tau_bar, -1).active
    right = tau_side(scenario, tau_bar, +1).active
    leavers = sorted(left - right)
    enterers = sorted(right - left)
    if len(leavers) == 1 and not enterers:
        return CaseA(leavers[0])
    if len(leavers) == 1 and len(enterers) == 1:
        return CaseB(leavers[0], enterers[0])
    raise NonclassifiableCrossing(
        f"active set changes from {sorted(left)} to {sorted(right)} at tau = {tau_bar}"
    )


def _flat_level(scenario: Scenario, k: int, p_elec: Fraction) -> Fraction:
    p = scenario.producers[k]
    return max(ZERO, (p_elec - p.c) / p.e)


def case_quantity(scenario: Scenario, case: CaseTag, tau_bar: Fraction) -> Fraction:
    """Quantity the ``eps`` offset is subtracted from in the bid construction."""
    if isinstance(case, CaseA):
        p = scenario.producers[case.i_bar]
        return p.e * tau_side(scenario, tau_bar, -1).phi[case.i_bar]
    return scenario.W - _w_bar(scenario, tau_side(scenario, tau_bar, +1))


def build_bids(
    scenario: Scenario,
    case: CaseTag,
    tau_guess: Fraction,
    tau_bar: Fraction,
    eps: Fraction,
    delta_param: Fraction,
) -> tuple[Curve, ...]:
    """Allowance bids of the equilibrium candidate.

    Case A: the leaving producer bids ``tau_bar + delta`` for the allowances
    covering its sales just below ``tau_bar`` (less ``eps``) and
    ``tau_guess`` for the rest of its capacity.  Case B: the leaving producer
    bids high only up to the residual cap (less ``eps``), the entering one
    bids high for its whole capacity.  Everyone else bids the carbon cost
    that would make ``p_elec(tau_bar)`` their break-even, floored at 0.
    """
    if eps <= 0 or delta_param <= 0:
        raise ParameterError("eps and delta must be positive")
    producers = scenario.producers
    p_bar = tau_clearing(scenario, tau_bar).p_elec
    high = tau_bar + delta_param
    cut = case_quantity(scenario, case, tau_bar) - eps
    if cut <= 0:
        raise ParameterError(f"eps = {eps} leaves a non-positive bid breakpoint ({cut})")
    bids: list[Curve] = []
    for k, p in enumerate(producers):
        full = p.e * p.kappa
        if isinstance(case, CaseA) and k == case.i_bar:
            segs = [(cut, high)] + ([(full, tau_guess)] if cut < full else [])
        elif isinstance(case, CaseB) and k == case.i_l:
            segs = [(min(cut, full), high)] + ([(full, tau_bar)] if cut < full else [])
        elif isinstance(case, CaseB) and k == case.i_r:
            segs = [(full, high)]
        else:
            segs = [(full, _flat_level(scenario, k, p_bar))]
        bids.append(bid_curve(segs))
    return tuple(bids)


AskOverride = Callable[[Curve], Curve]


def clear_profile(
    scenario: Scenario,
    bids: Sequence[Curve],
    ask_override: dict[int, AskOverride] | None = None,
) -> CoupledOutcome:
    """Clear carbon first, then electricity with the resulting regulated costs.

    By default each producer asks its regulated marginal cost; ``ask_override``
    maps a producer index to a function of that cost returning its ask.
    """
    carbon = clear_auction(bids, scenario.W)
    costs = tuple(
        regulated_cost(p, d, carbon.p_co2, scenario.penalty)
        for p, d in zip(scenario.producers, carbon.delta)
    )
    override = ask_override or {}
    asks = tuple(
        override[j](c) if j in override else dominant_strategy(c, scenario.p_lolc)
        for j, c in enumerate(costs)
    )
    elec = clear_market(asks, scenario.demand, scenario.p_lolc)
    return CoupledOutcome(carbon, costs, asks, elec)


def equilibrium_claims(
    scenario: Scenario, outcome: CoupledOutcome, tau_guess: Fraction
) -> dict[str, bool]:
    predicted = tau_clearing(scenario, tau_guess)
    return {
        "carbon_price_is_tau_guess": outcome.carbon.p_co2 == tau_guess,
        "elec_price_is_p_elec_at_tau_guess": outcome.elec.p_elec == predicted.p_elec,
        "no_allowances_without_sales": all(
            d == 0 for x, d in zip(outcome.elec.phi, outcome.carbon.delta) if x == 0
        ),
    }


def structural_gaps(scenario: Scenario) -> tuple[Fraction, Fraction]:
    """Seeds for the parameter search.

    Returns the smallest non-zero distance between a willing-to-buy plateau
    and the cap, and the smallest spacing between consecutive knots.
    """
    knots = tau_knots(scenario)
    samples = list(knots) + [(a + b) / 2 for a, b in _cells(knots)]
    gaps = {abs(willing_to_buy(scenario, t).w - scenario.W) for t in samples} - {ZERO}
    spacing = [b - a for a, b in _cells(knots)]
    g_eps = min(gaps) if gaps else Fraction(1)
    g_delta = min(spacing) if spacing else Fraction(1)
    return g_eps, g_delta


def parameter_grid(
    scenario: Scenario, case: CaseTag, tau_bar: Fraction, rounds: int = 6
) -> list[tuple[Fraction, Fraction]]:
    """Candidate ``(eps, delta)`` pairs in search order.

    ``eps`` halves from the quantity gap seed, approached from both ends of
    its admissible range ``(0, quantity)``; ``delta`` halves from the knot
    spacing.  Pairs are ordered by total halving depth.
    """
    g_eps, g_delta = structural_gaps(scenario)
    top = case_quantity(scenario, case, tau_bar)
    eps_levels: list[list[Fraction]] = []
    for k in range(rounds):
        step = g_eps / 2**k
        level = [e for e in (step, top - step) if 0 < e < top]
        eps_levels.append(list(dict.fromkeys(level)))
    deltas = [g_delta / 2**k for k in range(rounds)]
    out: list[tuple[Fraction, Fraction]] = []
    for depth in range(2 * rounds - 1):
        for ke in range(rounds):
            kd = depth - ke
            if 0 <= kd < rounds:
                out += [(e, deltas[kd]) for e in eps_levels[ke]]
    return list(dict.fromkeys(out))


def find_eps_delta(
    scenario: Scenario,
    case: CaseTag,
    tau_guess: Fraction,
    tau_bar: Fraction,
    *,
    rounds: int = 6,
    max_steps: int = 2,
) -> tuple[Fraction, Fraction, object, int]:
    """Search ``(eps, delta)`` until a candidate survives the deviation falsifier.

    Candidates whose cleared carbon price differs from ``tau_guess`` or that
    hand allowances to a producer selling nothing are discarded before the
    (expensive) falsifier runs.  Returns ``(eps, delta, report, attempts)``.
    """
    from .verifier import check_coupled_nash, structural_family

    attempts = 0
    for eps, delta in parameter_grid(scenario, case, tau_bar, rounds):
        attempts += 1
        try:
            bids = build_bids(scenario, case, tau_guess, tau_bar, eps, delta)
        except ParameterError:
            continue
        outcome = clear_profile(scenario, bids)
        claims = equilibrium_claims(scenario, outcome, tau_guess)
        if not (claims["carbon_price_is_tau_guess"] and claims["no_allowances_without_sales"]):
            log.debug("eps=%s delta=%s rejected on claims %s", eps, delta, claims)
            continue
        family = structural_family(scenario, bids, tau_guess, tau_bar, eps, delta, max_steps)
        report = check_coupled_nash(scenario, bids, family)
        if report.best_improvement == 0:
            return eps, delta, report, attempts
        log.debug("eps=%s delta=%s refuted: %s", eps, delta, report.witness)
    raise NoValidatedParameters(
        f"no (eps, delta) in the search grid survived the falsifier ({attempts} tried)", attempts
    )


def solve(scenario: Scenario, *, rounds: int = 6, max_steps: int = 2) -> EquilibriumReport:
    """Run the whole construction and check its claims on the cleared outcome."""
    tau_guess, tau_bar = guess_prices(scenario)
    case = classify_case(scenario, tau_bar)
    eps, delta, falsifier, attempts = find_eps_delta(
        scenario, case, tau_guess, tau_bar, rounds=rounds, max_steps=max_steps
    )
    bids = build_bids(scenario, case, tau_guess, tau_bar, eps, delta)
    outcome = clear_profile(scenario, bids)
    predicted = tau_clearing(scenario, tau_guess)
    claims = equilibrium_claims(scenario, outcome, tau_guess)

    w_left = _w(scenario, tau_side(scenario, tau_guess, -1))
    w_here = _w(scenario, predicted)
    w_right = _w(scenario, tau_side(scenario, tau_guess, +1))

    identities: dict[str, bool] = {}
    if isinstance(case, CaseA):
        p = scenario.producers[case.i_bar]
        identities["break_even_at_tau_bar"] = (
            tau_clearing(scenario, tau_bar).p_elec - p.c
        ) / p.e == tau_bar
        identities["break_even_at_tau_guess"] = (predicted.p_elec - p.c) / p.e == tau_guess
        identities["leaver_inactive_at_tau_bar"] = case.i_bar not in tau_clearing(
            scenario, tau_bar
        ).active
    else:
        identities["residual_cap_non_negative"] = case_quantity(scenario, case, tau_bar) >= 0

    discrepancies = [f"claim failed: {name}" for name, ok in claims.items() if not ok]
    discrepancies += [f"identity failed: {name}" for name, ok in identities.items() if not ok]
    meets_cap = w_here == scenario.W
    if not meets_cap:
        discrepancies.append(
            f"willing-to-buy at tau_guess is {w_here} (left {w_left}, right {w_right}), "
            f"not the cap {scenario.W}"
        )
    if check_admissible(outcome.asks, outcome.costs) is not None:
        discrepancies.append("equilibrium asks are not admissible")

    flags = {"willing_to_buy_discontinuous": not meets_cap}
    return EquilibriumReport(
        tau_guess=tau_guess,
        tau_bar_guess=tau_bar,
        case=case,
        eps=eps,
        delta_param=delta,
        bids=bids,
        outcome=outcome,
        predicted=predicted,
        w_at_guess=(w_left, w_here, w_right),
        case_identities=identities,
        claims=claims,
        discrepancies=tuple(discrepancies),
        falsifier=falsifier,
        attempts=attempts,
        emission_rates=tuple(p.e for p in scenario.producers),
        flags=flags,
    )
