"""Search-based falsification of the game-theoretic claims.

Each check enumerates or samples a finite set of unilateral deviations and
reports the largest market-share gain it found.  A zero gain means only that
no counterexample exists inside the searched family.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Iterator, Sequence

from .carbon_auction import bid_curve, clear_auction
from .coupling import Producer, Scenario, check_admissible, regulated_cost
from .curves import Curve, generalized_inverse
from .equilibrium import (
    clear_profile,
    dominant_strategy,
    tau_clearing,
    tau_knots,
    tau_side,
    willing_to_buy,
)
from .power_exchange import RationingRule, clear_offers, proportional_rationing

ZERO = Fraction(0)

SCOPE = "no counterexample in the searched deviation family (not a proof of equilibrium)"


def _fmt(x: Fraction) -> str:
    return f"{x.numerator}/{x.denominator}"


def encode_staircase(segments: Sequence[tuple[Fraction, Fraction]]) -> str:
    return "[" + ",".join(f"({_fmt(w)},{_fmt(v)})" for w, v in segments) + "]"


@dataclass(frozen=True)
class DeviationFamily:
    """Finite surrogate for a producer's strategy set.

    ``price_levels`` feed both bid and flat-ask levels, ``quantity_breaks``
    (in allowance units) the bid breakpoints.  Ask deviations are the
    regulated cost plus each of ``markups`` or a flat ask at a price level.
    """

    price_levels: tuple[Fraction, ...]
    quantity_breaks: tuple[Fraction, ...]
    max_steps: int = 2
    markups: tuple[Fraction, ...] = (ZERO,)

    def bid_staircases(self) -> Iterator[tuple[tuple[Fraction, Fraction], ...]]:
        """Staircases with strictly decreasing levels and increasing breakpoints."""
        levels = sorted(set(self.price_levels), reverse=True)
        breaks = sorted({b for b in self.quantity_breaks if b > 0})
        for n in range(1, self.max_steps + 1):
            for lv in itertools.combinations(levels, n):
                for qs in itertools.combinations(breaks, n):
                    yield tuple(zip(qs, lv))


@dataclass(frozen=True)
class AskDeviation:
    """An ask expressed relative to the cost it faces: ``cost + markup`` or flat."""

    kind: str  # "cost" or "flat"
    value: Fraction

    def build(self, cost: Curve, p_lolc: Fraction) -> Curve:
        if self.kind == "cost":
            return dominant_strategy(cost.shifted(self.value), p_lolc)
        end = cost.domain_end
        assert end is not None
        return Curve.step_left([(end, self.value)], p_lolc, domain_end=end)

    @property
    def encoding(self) -> str:
        return f"{self.kind}:{_fmt(self.value)}"


TRUTHFUL = AskDeviation("cost", ZERO)


@dataclass(frozen=True)
class Witness:
    producer: int
    deviation: str
    baseline_share: Fraction
    deviated_share: Fraction
    replay: dict = field(default_factory=dict, compare=False)


@dataclass(frozen=True)
class FalsifierReport:
    checked_count: int
    skipped_count: int
    best_improvement: Fraction
    witness: Witness | None
    scope: str = SCOPE

    def __post_init__(self) -> None:
        if (self.best_improvement > 0) != (self.witness is not None):
            raise ValueError("a witness is present exactly when the improvement is positive")


class _Best:
    """Running argmax with the tie-break (gain, lower producer, encoding)."""

    def __init__(self) -> None:
        self.gain = ZERO
        self.key: tuple[int, str] | None = None
        self.witness: Witness | None = None

    def offer(self, gain: Fraction, producer: int, encoding: str, make: "callable") -> None:
        if gain <= 0:
            return
        key = (producer, encoding)
        if gain > self.gain or (gain == self.gain and self.key is not None and key < self.key):
            self.gain, self.key, self.witness = gain, key, make()

    def report(self, checked: int, skipped: int) -> FalsifierReport:
        return FalsifierReport(checked, skipped, self.gain, self.witness)


# -- the coupled game -----------------------------------------------------------


def structural_family(
    scenario: Scenario,
    bids: Sequence[Curve],
    tau_guess: Fraction,
    tau_bar: Fraction,
    eps: Fraction,
    delta: Fraction,
    max_steps: int = 2,
) -> DeviationFamily:
    """Price and quantity candidates where the coupled outcome can change."""
    knots = tau_knots(scenario)
    p_bar = tau_clearing(scenario, tau_bar).p_elec
    anchors = {ZERO, scenario.penalty, scenario.p_lolc, tau_guess, tau_bar, tau_bar + delta, p_bar}
    for p in scenario.producers:
        anchors |= {p.cost_at(t) for t in knots}
    for b in bids:
        anchors |= set(b.at) | set(b.start)
    ordered = sorted(anchors)
    gaps = [b - a for a, b in zip(ordered, ordered[1:])]
    eta = min(gaps + [delta]) / 4
    levels = set(anchors)
    for a in (tau_guess, tau_bar, tau_bar + delta, p_bar):
        levels |= {a - eta, a + eta}
    levels = {v for v in levels if v >= 0}

    left = tau_side(scenario, tau_bar, -1)
    right = tau_side(scenario, tau_bar, +1)
    w_bar_right = sum(
        (scenario.producers[j].e * scenario.producers[j].kappa for j in right.active), ZERO
    )
    breaks = {scenario.W, scenario.W - w_bar_right}
    for j, p in enumerate(scenario.producers):
        breaks |= {p.e * p.kappa, p.e * left.phi[j], p.e * tau_clearing(scenario, tau_bar).phi[j]}
    for b in bids:
        breaks |= {x for x in b.xs if x > 0}
        if b.domain_end is not None:
            breaks.add(b.domain_end)
    breaks |= {x + s for x in list(breaks) for s in (eps, -eps)}
    breaks = {x for x in breaks if x > 0}
    return DeviationFamily(
        tuple(sorted(levels)), tuple(sorted(breaks)), max_steps, (ZERO, eta)
    )


def _ask_deviations(family: DeviationFamily) -> list[AskDeviation]:
    out = [AskDeviation("cost", m) for m in sorted(set(family.markups) | {ZERO})]
    out += [AskDeviation("flat", v) for v in sorted(set(family.price_levels))]
    return out


def check_coupled_nash(
    scenario: Scenario, bids: Sequence[Curve], family: DeviationFamily
) -> FalsifierReport:
    """Largest market-share gain from a unilateral (bid, ask) deviation.

    Every other producer keeps its bid and asks its realised regulated cost.
    The deviator's ask must be admissible against the regulated cost that
    its deviated bid produces; inadmissible pairs are skipped and counted.
    """
    bids = tuple(bids)
    base = clear_profile(scenario, bids)
    p_lolc = scenario.p_lolc
    asks = _ask_deviations(family)
    staircases = list(family.bid_staircases())
    checked = skipped = 0
    best = _Best()
    for j in range(scenario.size):
        options: list[tuple[str, Curve]] = [("own", bids[j])]
        options += [(encode_staircase(s), bid_curve(s)) for s in staircases]
        by_carbon: dict[tuple, list[tuple[AskDeviation, Fraction | None]]] = {}
        for bid_code, bid in options:
            trial = bids[:j] + (bid,) + bids[j + 1 :]
            carbon = clear_auction(trial, scenario.W)
            key = (carbon.p_co2, carbon.delta)
            if key not in by_carbon:
                by_carbon[key] = _ask_shares(scenario, j, carbon, asks)
            for ask, share in by_carbon[key]:
                if share is None:
                    skipped += 1
                    continue
                checked += 1
                gain = share - base.elec.phi[j]
                code = f"bid={bid_code};ask={ask.encoding}"
                best.offer(
                    gain,
                    j,
                    code,
                    lambda: _coupled_witness(scenario, bids, j, bid, ask, code, base.elec.phi[j]),
                )
    return best.report(checked, skipped)


def _ask_shares(
    scenario: Scenario, j: int, carbon, asks: Sequence[AskDeviation]
) -> list[tuple[AskDeviation, Fraction | None]]:
    costs = [
        regulated_cost(p, d, carbon.p_co2, scenario.penalty)
        for p, d in zip(scenario.producers, carbon.delta)
    ]
    offers = [generalized_inverse(dominant_strategy(c, scenario.p_lolc)) for c in costs]
    out: list[tuple[AskDeviation, Fraction | None]] = []
    for dev in asks:
        ask = dev.build(costs[j], scenario.p_lolc)
        if check_admissible([ask], [costs[j]]) is not None:
            out.append((dev, None))
            continue
        trial = offers[:j] + [generalized_inverse(ask)] + offers[j + 1 :]
        out.append((dev, clear_offers(trial, scenario.demand, scenario.p_lolc).phi[j]))
    return out


def _coupled_witness(
    scenario: Scenario,
    bids: tuple[Curve, ...],
    j: int,
    bid: Curve,
    ask: AskDeviation,
    code: str,
    baseline: Fraction,
) -> Witness:
    trial = bids[:j] + (bid,) + bids[j + 1 :]
    out = clear_profile(scenario, trial, {j: lambda c: ask.build(c, scenario.p_lolc)})
    replay = {
        "bid": bid,
        "ask": ask,
        "p_co2": out.carbon.p_co2,
        "delta": out.carbon.delta,
        "p_elec": out.elec.p_elec,
        "phi": out.elec.phi,
    }
    return Witness(j, code, baseline, out.elec.phi[j], replay)


def replay_coupled_witness(scenario: Scenario, bids: Sequence[Curve], witness: Witness) -> Fraction:
    """Re-run both clearings for a witness and return the deviator's share."""
    bids = tuple(bids)
    j = witness.producer
    ask: AskDeviation = witness.replay["ask"]
    trial = bids[:j] + (witness.replay["bid"],) + bids[j + 1 :]
    out = clear_profile(scenario, trial, {j: lambda c: ask.build(c, scenario.p_lolc)})
    return out.elec.phi[j]


# -- the electricity game with fixed costs --------------------------------------


@dataclass(frozen=True)
class ElecGame:
    """Electricity-only game: fixed marginal-cost staircases and a demand curve."""

    costs: tuple[Curve, ...]
    demand: Curve
    p_lolc: Fraction

    def truthful(self) -> tuple[Curve, ...]:
        return tuple(dominant_strategy(c, self.p_lolc) for c in self.costs)

    def clear(self, asks: Sequence[Curve], rationing: RationingRule = proportional_rationing):
        offers = [generalized_inverse(a) for a in asks]
        return clear_offers(offers, self.demand, self.p_lolc, rationing)


def _staircase_segments(curve: Curve) -> list[tuple[Fraction, Fraction]]:
    end = curve.domain_end
    assert end is not None
    pts = [x for x in curve.xs if 0 < x < end] + [end]
    return [(x, curve.eval(x)) for x in pts]


def check_dominance(
    game: ElecGame,
    samples: int,
    seed: int,
    rationing: RationingRule = proportional_rationing,
) -> FalsifierReport:
    """Does any producer ever sell more with a sampled ask than with its cost?

    For each sampled admissible profile ``s`` and each ``j`` the share under
    ``s`` is compared with the share after ``j`` switches to asking its cost.
    """
    rng = random.Random(seed)
    truthful = game.truthful()
    best = _Best()
    checked = 0
    for k in range(samples):
        asks = tuple(random_admissible_ask(rng, c, game.p_lolc) for c in game.costs)
        out = game.clear(asks, rationing)
        for j in range(len(asks)):
            switched = asks[:j] + (truthful[j],) + asks[j + 1 :]
            honest = game.clear(switched, rationing).phi[j]
            checked += 1
            code = f"sample={k};ask={encode_staircase(_staircase_segments(asks[j]))}"
            best.offer(
                out.phi[j] - honest,
                j,
                code,
                lambda: Witness(
                    j, code, honest, out.phi[j], {"asks": asks, "p_elec": out.p_elec, "phi": out.phi}
                ),
            )
    return best.report(checked, 0)


def electricity_family(game: ElecGame, asks: Sequence[Curve], max_steps: int = 2) -> DeviationFamily:
    """Structural ask candidates around the truthful clearing of ``game``."""
    out = game.clear(game.truthful())
    levels = {ZERO, game.p_lolc, out.p_under, out.p_elec}
    for c in list(game.costs) + list(asks):
        end = c.domain_end
        levels |= {v for x, v in zip(c.xs, c.at) if end is None or x <= end}
        levels |= {v for x, v in zip(c.xs, c.start) if end is None or x < end}
    ordered = sorted(levels)
    eta = min([b - a for a, b in zip(ordered, ordered[1:])] or [Fraction(1)]) / 4
    levels |= {out.p_elec - eta, out.p_elec + eta, out.p_under - eta}
    breaks = set(out.phi)
    for c in game.costs:
        breaks |= {x for x in c.xs if x > 0}
        if c.domain_end is not None:
            breaks.add(c.domain_end)
    return DeviationFamily(
        tuple(sorted(v for v in levels if v >= 0)),
        tuple(sorted(b for b in breaks if b > 0)),
        max_steps,
        (ZERO, eta),
    )


def _ask_staircases(
    family: DeviationFamily, cost: Curve, p_lolc: Fraction
) -> Iterator[tuple[str, Curve]]:
    end = cost.domain_end
    assert end is not None
    levels = sorted(set(family.price_levels))
    inner = sorted({b for b in family.quantity_breaks if 0 < b < end})
    for n in range(1, family.max_steps + 1):
        for qs in itertools.combinations(inner, n - 1):
            for lv in itertools.product(levels, repeat=n):
                segs = list(zip(list(qs) + [end], lv))
                yield encode_staircase(segs), Curve.step_left(segs, p_lolc, domain_end=end)


def scan_deviations(game: ElecGame, asks: Sequence[Curve], family: DeviationFamily) -> FalsifierReport:
    """Best unilateral ask deviation from ``asks`` (admissible staircases only)."""
    asks = tuple(asks)
    offers = [generalized_inverse(a) for a in asks]
    base = clear_offers(offers, game.demand, game.p_lolc).phi
    best = _Best()
    checked = skipped = 0
    for j, cost in enumerate(game.costs):
        candidates = [("truthful", dominant_strategy(cost, game.p_lolc))]
        candidates += list(_ask_staircases(family, cost, game.p_lolc))
        for code, ask in candidates:
            if check_admissible([ask], [cost]) is not None:
                skipped += 1
                continue
            checked += 1
            trial = offers[:j] + [generalized_inverse(ask)] + offers[j + 1 :]
            share = clear_offers(trial, game.demand, game.p_lolc).phi[j]
            best.offer(share - base[j], j, code, lambda: Witness(j, code, base[j], share, {"ask": ask}))
    return best.report(checked, skipped)


@dataclass(frozen=True)
class UniquenessReport:
    checked: int
    excluded: tuple[int, ...]
    mismatches: tuple[int, ...]
    reference_price: Fraction
    reference_phi: tuple[Fraction, ...]

    @property
    def consistent(self) -> bool:
        return not self.mismatches


def check_equilibrium_uniqueness(
    game: ElecGame, profiles: Sequence[Sequence[Curve]], max_steps: int = 2
) -> UniquenessReport:
    """Profiles surviving the deviation scan must reproduce the truthful outcome.

    Profiles with an improving deviation are excluded (they are not
    equilibria), the rest are compared with the truthful profile on the
    clearing price and the whole share vector.
    """
    ref = game.clear(game.truthful())
    excluded: list[int] = []
    mismatches: list[int] = []
    for k, asks in enumerate(profiles):
        if scan_deviations(game, asks, electricity_family(game, asks, max_steps)).witness:
            excluded.append(k)
            continue
        out = game.clear(asks)
        if out.p_elec != ref.p_elec or out.phi != ref.phi:
            mismatches.append(k)
    return UniquenessReport(len(profiles), tuple(excluded), tuple(mismatches), ref.p_elec, ref.phi)


def alternative_profiles(game: ElecGame, rng: random.Random, count: int) -> list[tuple[Curve, ...]]:
    """Profiles that differ from truthful asks without changing who sells what.

    Producers that sell nothing raise their whole ask above the clearing
    price; fully dispatched stairs priced below the clearing interval may be
    marked up while staying below it.
    """
    truthful = game.truthful()
    ref = game.clear(truthful)
    out: list[tuple[Curve, ...]] = []
    while len(out) < count:
        asks = list(truthful)
        for j, cost in enumerate(game.costs):
            end = cost.domain_end
            assert end is not None
            if ref.phi[j] == 0 and rng.random() < 0.8:
                level = ref.p_elec + Fraction(rng.randint(1, 8), rng.randint(1, 4))
                level = min(level, game.p_lolc)
                if level > ref.p_elec and level >= max(cost.at + cost.start[:-1]):
                    asks[j] = Curve.step_left([(end, level)], game.p_lolc, domain_end=end)
            elif rng.random() < 0.5:
                ceiling = ref.p_under
                segs = []
                for x, v in _staircase_segments(cost):
                    if v < ceiling:
                        v = v + (ceiling - v) * Fraction(rng.randint(0, 3), 4)
                    segs.append((x, v))
                asks[j] = Curve.step_left(segs, game.p_lolc, domain_end=end)
        out.append(tuple(asks))
    return out


# -- monotonicity in the carbon cost --------------------------------------------


@dataclass(frozen=True)
class MonotonicityReport:
    samples: int
    violations: tuple[tuple[str, Fraction, Fraction, Fraction, Fraction], ...]

    @property
    def ok(self) -> bool:
        return not self.violations


def check_monotonicity(
    scenario: Scenario, tau_samples: Iterable[Fraction] | None = None
) -> MonotonicityReport:
    """``p_elec`` must not decrease and total sales must not increase with ``tau``.

    By default the samples are every knot and every midpoint between knots.
    """
    if tau_samples is None:
        knots = tau_knots(scenario)
        taus = sorted(set(knots) | {(a + b) / 2 for a, b in zip(knots, knots[1:])})
    else:
        taus = sorted(set(tau_samples))
    outs = [tau_clearing(scenario, t) for t in taus]
    bad = []
    for (ta, a), (tb, b) in zip(zip(taus, outs), zip(taus[1:], outs[1:])):
        if b.p_elec < a.p_elec:
            bad.append(("p_elec", ta, tb, a.p_elec, b.p_elec))
        if b.elec.total_sold > a.elec.total_sold:
            bad.append(("total_sold", ta, tb, a.elec.total_sold, b.elec.total_sold))
    return MonotonicityReport(len(taus), tuple(bad))


# -- random instances ------------------------------------------------------------


def _small(rng: random.Random, lo: int, hi: int) -> Fraction:
    """Rational with a small denominator so that ties happen often."""
    den = rng.choice((1, 1, 1, 2, 4))
    return Fraction(rng.randint(lo * den, hi * den), den)


def random_demand(rng: random.Random, kind: str | None = None) -> Curve:
    kind = kind or rng.choice(("step", "piecewise_linear"))
    n = rng.randint(1, 4)
    prices = sorted({_small(rng, 1, 90) for _ in range(n)})
    values = sorted({_small(rng, 1, 60) for _ in range(len(prices) + 1)}, reverse=True)
    if kind == "step":
        pts = list(zip(prices, values))
        tail = values[len(pts)] if len(values) > len(pts) else ZERO
        return Curve.step_left(pts, tail)
    pts = [(ZERO, values[0])] + list(zip(prices, values[1:]))
    if rng.random() < 0.5:
        pts.append((pts[-1][0] + _small(rng, 1, 20), ZERO))
    return Curve.piecewise_linear(pts)


def random_cost(rng: random.Random, max_stairs: int = 6) -> Curve:
    """Increasing marginal-cost staircase on ``[0, kappa]``."""
    n = rng.randint(1, max_stairs)
    ends = sorted({_small(rng, 1, 20) for _ in range(n)})
    levels = sorted(_small(rng, 0, 60) for _ in ends)
    return Curve.step_left(list(zip(ends, levels)), levels[-1], domain_end=ends[-1])


def random_ask(rng: random.Random, kappa: Fraction, p_lolc: Fraction, max_stairs: int = 6) -> Curve:
    n = rng.randint(1, max_stairs)
    inner = sorted({_small(rng, 0, int(kappa) + 1) for _ in range(n - 1)} - {ZERO})
    ends = [x for x in inner if x < kappa] + [kappa]
    levels = [_small(rng, 0, int(p_lolc)) for _ in ends]
    return Curve.step_left(list(zip(ends, levels)), p_lolc, domain_end=kappa)


def random_admissible_ask(
    rng: random.Random, cost: Curve, p_lolc: Fraction, tries: int = 200
) -> Curve:
    """Rejection-sample a staircase ask that never undercuts ``cost``.

    Falls back to the cost plus a random markup if no draw is accepted.
    """
    kappa = cost.domain_end
    assert kappa is not None
    for _ in range(tries):
        ask = random_ask(rng, kappa, p_lolc)
        if rng.random() < 0.5:
            # mix cost breakpoints in so that ties with the cost occur
            segs = [(x, max(v, ask.eval(x))) for x, v in _staircase_segments(cost)]
            ask = Curve.step_left(segs, p_lolc, domain_end=kappa)
        if check_admissible([ask], [cost]) is None:
            return ask
    return dominant_strategy(cost.shifted(_small(rng, 0, 10)), p_lolc)


def random_elec_game(rng: random.Random, max_producers: int = 5, max_stairs: int = 6) -> ElecGame:
    costs = tuple(random_cost(rng, max_stairs) for _ in range(rng.randint(1, max_producers)))
    return ElecGame(costs, random_demand(rng), Fraction(100))


def random_bid(rng: random.Random, max_steps: int = 4) -> Curve:
    n = rng.randint(1, max_steps)
    ends = sorted({_small(rng, 1, 20) for _ in range(n)})
    return bid_curve([(w, _small(rng, 0, 40)) for w in ends])


def random_scenario(
    rng: random.Random, max_producers: int = 5, demand_kind: str | None = None
) -> Scenario:
    """Scenario with flat costs, distinct ``(c, e)`` pairs and a valid price cap."""
    n = rng.randint(1, max_producers)
    pairs: set[tuple[Fraction, Fraction]] = set()
    while len(pairs) < n:
        pairs.add((_small(rng, 0, 40), _small(rng, 1, 4)))
    producers = tuple(
        Producer(c, e, _small(rng, 1, 20), f"P{k + 1}") for k, (c, e) in enumerate(sorted(pairs))
    )
    penalty = _small(rng, 1, 40)
    p_lolc = max(p.c + p.e * penalty for p in producers) + _small(rng, 1, 20)
    cap = sum((p.e * p.kappa for p in producers), ZERO) / 2
    return Scenario(producers, random_demand(rng, demand_kind), cap, penalty, p_lolc)


def subset_sums(values: Sequence[Fraction]) -> set[Fraction]:
    sums = {ZERO}
    for v in values:
        sums |= {s + v for s in sums}
    return sums


def willing_to_buy_structure(scenario: Scenario) -> list[tuple[Fraction, Fraction, Fraction]]:
    """``(tau, W, W_bar)`` at every knot and midpoint, for structural checks."""
    knots = tau_knots(scenario)
    taus = sorted(set(knots) | {(a + b) / 2 for a, b in zip(knots, knots[1:])})
    rows = []
    for t in taus:
        w = willing_to_buy(scenario, t)
        rows.append((t, w.w, w.w_bar))
    return rows
