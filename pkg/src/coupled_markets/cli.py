"""Command-line entry point: ``coupled-markets <command> --scenario FILE``."""

from __future__ import annotations

import argparse
import sys
from fractions import Fraction
from typing import Sequence

from . import equilibrium as eq
from . import scenario_io as sio
from . import verifier as vf
from .carbon_auction import clear_auction
from .coupling import ScenarioError, regulated_cost
from .curves import CurveError

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_WITNESS = 3
EXIT_NO_PARAMETERS = 4


def _fraction(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"{text!r} is not an exact number") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coupled-markets",
        description="Exact clearing and equilibrium construction for coupled electricity and CO2 markets.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--scenario", required=True, help="scenario file (TOML)")
        p.add_argument("--format", choices=("json", "csv"), default="json")
        p.add_argument("--seed", type=int, default=None, help="seed for randomized checks")
        p.add_argument("--grid", type=int, default=None, help="search rounds / sample count")
        return p

    p = add("clear-elec", "clear electricity with asks c + tau * e")
    p.add_argument("--tau", type=_fraction, default=Fraction(0))
    add("clear-carbon", "clear the allowance auction (file bids, else the constructed ones)")
    add("equilibrium", "construct and check the equilibrium candidate")
    add("verify", "run the falsifiers on the scenario")
    p = add("sweep-tau", "tabulate clearing results over a tau grid")
    p.add_argument("--from", dest="tau_from", type=_fraction, default=None)
    p.add_argument("--to", dest="tau_to", type=_fraction, default=None)
    p.add_argument("--samples", type=int, default=61)
    add("check-design", "check that the cap brackets the willing-to-buy quantities")
    return parser


def _settings(args: argparse.Namespace, scenario) -> dict[str, int]:
    cfg = scenario.verify
    return {
        "seed": args.seed if args.seed is not None else cfg.get("seed", 0),
        "grid": args.grid if args.grid is not None else cfg.get("grid", cfg.get("samples", 200)),
        "rounds": cfg.get("rounds", 6),
        "max_steps": cfg.get("max_steps", 2),
    }


def _emit(doc: dict, fmt: str, out) -> None:
    if fmt == "csv":
        rows = [(k, v) for k, v in sorted(doc.items()) if isinstance(v, str)]
        out.write("key,value\n" + "".join(f"{k},{v}\n" for k, v in rows))
    else:
        out.write(sio.to_json(doc))


def main(argv: Sequence[str] | None = None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    args = build_parser().parse_args(argv)
    try:
        loaded = sio.parse_scenario(args.scenario)
    except sio.ScenarioFileError as exc:
        err.write(f"error: {exc}\n")
        return EXIT_INVALID
    scenario = loaded.scenario
    names = [p.name for p in scenario.producers]
    settings = _settings(args, scenario)
    try:
        return _dispatch(args, loaded, scenario, names, settings, out, err)
    except eq.DesignRejected as exc:
        err.write(f"design rejected: {exc}\n")
        return EXIT_INVALID
    except eq.NoValidatedParameters as exc:
        err.write(f"error: {exc}\n")
        return EXIT_NO_PARAMETERS
    except (ScenarioError, CurveError, ValueError) as exc:
        err.write(f"error: {exc}\n")
        return EXIT_INVALID


def _dispatch(args, loaded, scenario, names, settings, out, err) -> int:
    cmd = args.command
    if cmd == "clear-elec":
        _emit(sio.tau_document(eq.tau_clearing(scenario, args.tau), scenario), args.format, out)
        return EXIT_OK

    if cmd == "check-design":
        check = eq.design_check(scenario)
        _emit(sio.design_document(check), args.format, out)
        if not check.ok:
            err.write(f"design rejected: {check.reason}\n")
            return EXIT_INVALID
        return EXIT_OK

    if cmd == "sweep-tau":
        lo = args.tau_from if args.tau_from is not None else Fraction(0)
        hi = args.tau_to if args.tau_to is not None else scenario.penalty
        if args.samples < 2 or hi < lo:
            err.write("error: need --samples >= 2 and --from <= --to\n")
            return EXIT_INVALID
        taus = [lo + (hi - lo) * k / (args.samples - 1) for k in range(args.samples)]
        rows = sio.sweep_rows(scenario, taus)
        if args.format == "csv":
            out.write(sio.to_csv(rows))
        else:
            doc = {"rows": []}
            for row in rows:
                d: dict = {}
                for k in sio.SWEEP_COLUMNS:
                    sio._put(d, k, row[k])
                doc["rows"].append(d)
            out.write(sio.to_json(doc))
        return EXIT_OK

    if cmd == "clear-carbon":
        bids = loaded.bids
        source = "file"
        if bids is None:
            bids = eq.solve(scenario, rounds=settings["rounds"], max_steps=settings["max_steps"]).bids
            source = "constructed"
        doc = sio.carbon_document(clear_auction(bids, scenario.W), names)
        doc["bids_source"] = source
        _emit(doc, args.format, out)
        return EXIT_OK

    if cmd == "equilibrium":
        rounds = args.grid if args.grid is not None else settings["rounds"]
        report = eq.solve(scenario, rounds=rounds, max_steps=settings["max_steps"])
        _emit(sio.report_document(report, scenario), args.format, out)
        return EXIT_OK

    if cmd == "verify":
        return _verify(loaded, scenario, names, settings, args, out)

    raise AssertionError(cmd)  # pragma: no cover


def _verify(loaded, scenario, names, settings, args, out) -> int:
    """Coupled deviations, dominance at the realised costs, and monotonicity."""
    tau_guess, tau_bar = eq.guess_prices(scenario)
    if loaded.bids is not None:
        bids = loaded.bids
        g_eps, g_delta = eq.structural_gaps(scenario)
        family = vf.structural_family(
            scenario, bids, tau_guess, tau_bar, g_eps, g_delta, settings["max_steps"]
        )
        source = "file"
    else:
        report = eq.solve(scenario, rounds=settings["rounds"], max_steps=settings["max_steps"])
        bids = report.bids
        family = vf.structural_family(
            scenario, bids, tau_guess, tau_bar, report.eps, report.delta_param, settings["max_steps"]
        )
        source = "constructed"
    coupled = vf.check_coupled_nash(scenario, bids, family)
    carbon = clear_auction(bids, scenario.W)
    costs = tuple(
        regulated_cost(p, d, carbon.p_co2, scenario.penalty)
        for p, d in zip(scenario.producers, carbon.delta)
    )
    game = vf.ElecGame(costs, scenario.demand, scenario.p_lolc)
    dominance = vf.check_dominance(game, settings["grid"], settings["seed"])
    mono = vf.check_monotonicity(scenario)
    doc = {
        "bids_source": source,
        "seed": settings["seed"],
        "samples": settings["grid"],
        "coupled_nash": sio.falsifier_document(coupled, names),
        "dominance": sio.falsifier_document(dominance, names),
        "monotonicity": sio.monotonicity_document(mono),
    }
    _emit(doc, args.format, out)
    if coupled.witness is not None or dominance.witness is not None:
        return EXIT_WITNESS
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
