"""Acceptance criteria, each at its stated sample size and runtime budget.

Run ``pytest tests/test_acceptance.py -v`` (or execute this file) to get one
PASS/FAIL line per criterion.
"""

from __future__ import annotations

import random
import subprocess
import sys
import time
from fractions import Fraction as F
from pathlib import Path

import pytest

from coupled_markets import equilibrium as eq
from coupled_markets import verifier as vf
from coupled_markets.carbon_auction import allowance_demand, clear_auction
from coupled_markets.curves import aggregate, generalized_inverse
from coupled_markets.power_exchange import (
    clear_market,
    clearing_interval,
    equal_split_rationing,
    proportional_rationing,
)
from tests import oracles
from tests._report import record
from tests.builders import s0

pytestmark = pytest.mark.acceptance
ROOT = Path(__file__).resolve().parent.parent


def _random_asks(rng, n_max=5, stairs=6):
    n = rng.randint(1, n_max)
    return [vf.random_ask(rng, vf._small(rng, 1, 20), F(100), stairs) for _ in range(n)]


def conservation_violations(instances, seed, rationing=proportional_rationing):
    """``(sum mismatches, per-producer bound violations)`` on random instances."""
    rng = random.Random(seed)
    bad_sum = bad_bound = 0
    for _ in range(instances):
        asks = _random_asks(rng)
        demand = vf.random_demand(rng)
        out = clear_market(asks, demand, F(100), rationing)
        sizes = [generalized_inverse(a).eval(out.p_elec) for a in asks]
        bad_sum += out.total_sold != min(demand.eval(out.p_elec), sum(sizes, F(0)))
        bad_bound += not all(0 <= x <= size for x, size in zip(out.phi, sizes))
    return bad_sum, bad_bound


def dominance_witnesses(profiles, seed, rationing=proportional_rationing):
    """Per sampled profile, whether some producer gains by not asking its cost."""
    rng = random.Random(seed)
    flags = []
    for _ in range(profiles):
        game = vf.random_elec_game(rng)
        rep = vf.check_dominance(game, 1, rng.randrange(2**32), rationing)
        flags.append(rep.witness is not None)
    return flags


def test_criterion_01_conservation():
    t = time.perf_counter()
    bad_sum, bad_bound = conservation_violations(1000, seed=1)
    dt = time.perf_counter() - t
    ok = record(
        1,
        bad_sum == 0 and bad_bound == 0 and dt < 10,
        f"1000 instances, {bad_sum} sum mismatches, {bad_bound} share-bound violations, {dt:.1f}s (< 10s)",
    )
    assert ok


def test_criterion_02_grid_oracle():
    rng = random.Random(2)
    t = time.perf_counter()
    mismatches = []
    for k in range(200):
        asks = _random_asks(rng)
        demand = vf.random_demand(rng)
        p_under, _ = clearing_interval(
            aggregate([generalized_inverse(a) for a in asks]), demand, F(100)
        )
        expected = oracles.lowest_excess_price(asks, demand, F(100))
        bids = [vf.random_bid(rng) for _ in range(rng.randint(1, 5))]
        theta0 = sum((allowance_demand(b).eval(0) for b in bids), F(0))
        cap = theta0 * F(rng.randint(1, 9), 8)
        p_co2 = clear_auction(bids, cap).p_co2
        expected_co2 = oracles.carbon_price(bids, cap)
        if (p_under, p_co2) != (expected, expected_co2):
            mismatches.append((k, p_under, expected, p_co2, expected_co2))
    dt = time.perf_counter() - t
    ok = record(2, not mismatches and dt < 30, f"200 instances, {len(mismatches)} mismatches, {dt:.1f}s (< 30s)")
    assert ok, mismatches[:3]


def test_criterion_03_dominance():
    t = time.perf_counter()
    flags = dominance_witnesses(500, seed=3)
    dt = time.perf_counter() - t
    ok = record(3, not any(flags) and dt < 60, f"500 profiles, {sum(flags)} violations, {dt:.1f}s (< 60s)")
    assert ok


def test_criterion_04_outcome_consistency():
    rng = random.Random(4)
    t = time.perf_counter()
    profiles = mismatched = excluded = 0
    while profiles < 50:
        game = vf.random_elec_game(rng, max_producers=4, max_stairs=4)
        alts = vf.alternative_profiles(game, rng, 5)
        rep = vf.check_equilibrium_uniqueness(game, alts, max_steps=1)
        profiles += len(alts) - len(rep.excluded)
        excluded += len(rep.excluded)
        mismatched += len(rep.mismatches)
    dt = time.perf_counter() - t
    ok = record(
        4,
        mismatched == 0 and dt < 30,
        f"{profiles} surviving profiles ({excluded} excluded), {mismatched} mismatches, {dt:.1f}s (< 30s)",
    )
    assert ok


def test_criterion_05_monotonicity():
    rng = random.Random(5)
    t = time.perf_counter()
    failures = []
    for k in range(100):
        scenario = vf.random_scenario(rng)
        rep = vf.check_monotonicity(scenario)
        if not rep.ok:
            failures.append((k, rep.violations[0]))
    dt = time.perf_counter() - t
    ok = record(5, not failures and dt < 60, f"100 scenarios, {len(failures)} with violations, {dt:.1f}s (< 60s)")
    assert ok, failures[:3]


def test_criterion_06_willing_to_buy_structure():
    rng = random.Random(6)
    t = time.perf_counter()
    bad = 0
    for _ in range(60):
        scenario = vf.random_scenario(rng)
        sums = vf.subset_sums([p.e * p.kappa for p in scenario.producers])
        for _, w, w_bar in vf.willing_to_buy_structure(scenario):
            bad += w_bar not in sums or w > w_bar
    dt = time.perf_counter() - t
    ok = record(6, bad == 0 and dt < 10, f"60 scenarios, {bad} violations, {dt:.1f}s (< 10s)")
    assert ok


def test_criterion_07_carbon_allocation():
    rng = random.Random(7)
    t = time.perf_counter()
    bad = 0
    for _ in range(500):
        bids = [vf.random_bid(rng) for _ in range(rng.randint(1, 5))]
        thetas = [allowance_demand(b) for b in bids]
        theta0 = sum((th.eval(0) for th in thetas), F(0))
        cap = theta0 * F(rng.randint(1, 16), 16)
        out = clear_auction(bids, cap)
        within = all(
            th.eval_right(out.p_co2) <= d <= th.eval(out.p_co2) for th, d in zip(thetas, out.delta)
        )
        bad += sum(out.delta) != cap or not within
    dt = time.perf_counter() - t
    ok = record(7, bad == 0 and dt < 10, f"500 profiles, {bad} violations, {dt:.1f}s (< 10s)")
    assert ok


def test_criterion_08_s0_pipeline():
    scenario = s0()
    t = time.perf_counter()
    report = eq.solve(scenario)
    dt = time.perf_counter() - t
    checks = {
        "tau_guess = 14": report.tau_guess == 14,
        "tau_bar_guess = 14": report.tau_bar_guess == 14,
        "Case A with P2": report.case == eq.CaseA(1),
        "falsifier best_improvement = 0": report.falsifier.best_improvement == 0,
        "claim (i) p_co2 = tau_guess": report.claims["carbon_price_is_tau_guess"],
        "claim (ii) p_elec = p_elec(tau_guess)": report.claims["elec_price_is_p_elec_at_tau_guess"],
        "claim (iii) no allowances without sales": report.claims["no_allowances_without_sales"],
        "discontinuity flag raised": report.flags["willing_to_buy_discontinuous"],
        "runtime < 120s": dt < 120,
    }
    failed = [name for name, ok in checks.items() if not ok]
    detail = (
        f"eps={report.eps} delta={report.delta_param} p_co2={report.p_co2} "
        f"p_elec={report.p_elec} (predicted {report.predicted.p_elec}) {dt:.1f}s"
    )
    if failed:
        detail += "; failed: " + ", ".join(failed)
    ok = record(8, not failed, detail)
    assert ok, failed


def test_criterion_09_mutation_detected():
    """The broken rule must trip a check that the proportional rule passes.

    Dominance witnesses are compared profile by profile against the
    proportional rule, so witnesses that the correct rule also produces do
    not count as detection.
    """
    t = time.perf_counter()
    sum_bad, bound_bad = conservation_violations(300, seed=9, rationing=equal_split_rationing)
    base_sum, base_bound = conservation_violations(300, seed=9)
    mutant = dominance_witnesses(200, seed=9, rationing=equal_split_rationing)
    baseline = dominance_witnesses(200, seed=9)
    extra = sum(m and not b for m, b in zip(mutant, baseline))
    dt = time.perf_counter() - t
    conservation_tripped = (sum_bad + bound_bad) > 0 and base_sum + base_bound == 0
    detected = conservation_tripped or extra > 0
    ok = record(
        9,
        detected and dt < 60,
        f"equal-split rule: {sum_bad} sum mismatches, {bound_bad} share-bound violations, "
        f"{extra} dominance witnesses absent under the proportional rule, {dt:.1f}s (< 60s)",
    )
    assert ok


def _cli(*args: str) -> bytes:
    proc = subprocess.run(
        [sys.executable, "-m", "coupled_markets", *args], capture_output=True, cwd=ROOT, check=False
    )
    assert proc.returncode in (0, 3), proc.stderr.decode()
    return proc.stdout


def test_criterion_10_determinism():
    scenario = str(ROOT / "scenarios" / "s0.toml")
    runs = {
        "equilibrium": [_cli("equilibrium", "--scenario", scenario) for _ in range(2)],
        "verify": [_cli("verify", "--scenario", scenario, "--seed", "11") for _ in range(2)],
    }
    same = {k: v[0] == v[1] and len(v[0]) > 0 for k, v in runs.items()}
    ok = record(10, all(same.values()), ", ".join(f"{k}: {'identical' if s else 'DIFFERENT'}" for k, s in same.items()))
    assert ok


if __name__ == "__main__":  # pragma: no cover
    sys.exit(pytest.main([__file__, "-q"]))
