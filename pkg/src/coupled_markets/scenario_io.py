"""Scenario files (TOML with exact decimals) and machine-readable results.

Numbers in scenario files are read as exact rationals: ``12.5`` becomes
``25/2``, and ``"1/3"`` strings are accepted wherever a number is.  Results
serialize every rational as a ``"num/den"`` string next to a ``<key>_approx``
float.
"""

from __future__ import annotations

import csv
import io
import json
import re
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Any, Iterable, Sequence

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .carbon_auction import CarbonOutcome, bid_curve
from .coupling import Producer, Scenario, ScenarioError
from .curves import Curve, CurveError
from .equilibrium import CaseA, DesignCheck, EquilibriumReport, TauOutcome, tau_clearing, willing_to_buy
from .power_exchange import ElecOutcome, check_demand
from .verifier import FalsifierReport, MonotonicityReport

ZERO = Fraction(0)

VERIFY_KEYS = {"seed", "grid", "samples", "max_steps", "rounds"}


class ScenarioFileError(ValueError):
    """A scenario file is malformed or violates a modelling assumption."""

    def __init__(self, source: str, line: int | None, message: str):
        where = f"{source}:{line}" if line else source
        super().__init__(f"{where}: {message}")
        self.source = source
        self.line = line
        self.message = message


@dataclass(frozen=True)
class ScenarioFile:
    scenario: Scenario
    bids: tuple[Curve, ...] | None
    bid_segments: tuple[tuple[tuple[Fraction, Fraction], ...], ...] | None


# -- locating keys in the source text ---------------------------------------------

_HEADER = re.compile(r"^\s*(\[\[?)\s*([A-Za-z0-9_.]+)\s*\]\]?")
_KEY = re.compile(r"^\s*([A-Za-z0-9_]+)\s*=")


class _Lines:
    """Line numbers of tables and keys, for error messages."""

    def __init__(self, text: str):
        self.tables: dict[tuple[str, int], int] = {}
        self.keys: dict[tuple[str, int, str], int] = {}
        counts: dict[str, int] = {}
        table, index = "", 0
        depth = 0
        for n, line in enumerate(text.splitlines(), start=1):
            stripped = line.split("#", 1)[0]
            if depth == 0:
                m = _HEADER.match(stripped)
                if m:
                    table = m.group(2)
                    if m.group(1) == "[[":
                        index = counts.get(table, -1) + 1
                        counts[table] = index
                    else:
                        index = 0
                    self.tables[(table, index)] = n
                    continue
                m = _KEY.match(stripped)
                if m:
                    self.keys.setdefault((table, index, m.group(1)), n)
            depth += stripped.count("[") - stripped.count("]")
            depth = max(depth, 0)

    def table(self, name: str, index: int = 0) -> int | None:
        return self.tables.get((name, index))

    def key(self, name: str, index: int, key: str) -> int | None:
        return self.keys.get((name, index, key)) or self.table(name, index)


def _number(value: Any, what: str) -> Fraction:
    if isinstance(value, bool):
        raise ValueError(f"{what} must be a number, not a boolean")
    if isinstance(value, (int, Fraction)):
        return Fraction(value)
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except (ValueError, ZeroDivisionError):
            raise ValueError(f"{what} = {value!r} is not an exact number") from None
    raise ValueError(f"{what} must be a number")


def _parse_float(text: str) -> Fraction:
    if text.lower().lstrip("+-") in {"inf", "nan"}:
        raise ValueError(f"non-finite number {text!r} is not allowed")
    return Fraction(text.replace("_", ""))


def _pairs(value: Any, what: str) -> list[tuple[Fraction, Fraction]]:
    if not isinstance(value, list):
        raise ValueError(f"{what} must be a list of [x, y] pairs")
    out = []
    for item in value:
        if not isinstance(item, list) or len(item) != 2:
            raise ValueError(f"{what} must be a list of [x, y] pairs")
        out.append((_number(item[0], what), _number(item[1], what)))
    return out


def parse_scenario_text(text: str, source: str = "<scenario>") -> ScenarioFile:
    """Parse and validate scenario text; errors carry the offending line."""
    try:
        data = tomllib.loads(text, parse_float=_parse_float)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ScenarioFileError(source, int(m.group(1)) if m else None, f"syntax error: {exc}") from None
    except ValueError as exc:
        raise ScenarioFileError(source, None, f"syntax error: {exc}") from None
    lines = _Lines(text)

    def fail(line: int | None, message: str) -> ScenarioFileError:
        return ScenarioFileError(source, line, message)

    unknown = set(data) - {"producers", "demand", "market", "verify"}
    if unknown:
        raise fail(None, f"unknown section(s): {', '.join(sorted(unknown))}")
    for section in ("producers", "demand", "market"):
        if section not in data:
            raise fail(None, f"missing required section [{section}]")

    raw_producers = data["producers"]
    if not isinstance(raw_producers, list) or not raw_producers:
        raise fail(lines.table("producers"), "at least one [[producers]] entry is required")
    producers: list[Producer] = []
    bid_segments: list[tuple[tuple[Fraction, Fraction], ...]] = []
    seen: dict[tuple[Fraction, Fraction], str] = {}
    for k, raw in enumerate(raw_producers):
        at = lambda key: lines.key("producers", k, key)  # noqa: E731
        extra = set(raw) - {"name", "c", "e", "kappa", "bid"}
        if extra:
            raise fail(lines.table("producers", k), f"unknown producer key(s): {', '.join(sorted(extra))}")
        name = str(raw.get("name", f"P{k + 1}"))
        values: dict[str, Fraction] = {}
        for key in ("c", "e", "kappa"):
            if key not in raw:
                raise fail(lines.table("producers", k), f"producer {name!r} is missing {key!r}")
            try:
                values[key] = _number(raw[key], key)
            except ValueError as exc:
                raise fail(at(key), f"producer {name!r}: {exc}") from None
        if values["kappa"] <= 0:
            raise fail(at("kappa"), f"producer {name!r}: capacity kappa must be positive")
        if values["e"] <= 0:
            raise fail(at("e"), f"producer {name!r}: emission rate e must be positive")
        if values["c"] < 0:
            raise fail(at("c"), f"producer {name!r}: base cost c must be non-negative")
        pair = (values["c"], values["e"])
        if pair in seen:
            raise fail(
                lines.table("producers", k),
                f"producer {name!r} has the same (c, e) as {seen[pair]!r}; "
                "no two producers may share both base cost and emission rate",
            )
        seen[pair] = name
        producers.append(Producer(values["c"], values["e"], values["kappa"], name))
        if "bid" in raw:
            try:
                segs = _pairs(raw["bid"], "bid")
                if any(b <= a for (a, _), (b, _) in zip(segs, segs[1:])) or not segs or segs[0][0] <= 0:
                    raise ValueError("bid quantities must be positive and strictly increasing")
                bid_curve(segs)
            except (ValueError, CurveError) as exc:
                raise fail(at("bid"), f"producer {name!r}: {exc}") from None
            bid_segments.append(tuple(segs))

    if bid_segments and len(bid_segments) != len(producers):
        raise fail(lines.table("producers"), "either every producer has a bid or none does")

    demand = _parse_demand(data["demand"], lines, fail)
    market = data["market"]
    extra = set(market) - {"W", "penalty", "p_lolc"}
    if extra:
        raise fail(lines.table("market"), f"unknown market key(s): {', '.join(sorted(extra))}")
    mvals: dict[str, Fraction] = {}
    for key in ("W", "penalty", "p_lolc"):
        if key not in market:
            raise fail(lines.table("market"), f"market is missing {key!r}")
        try:
            mvals[key] = _number(market[key], key)
        except ValueError as exc:
            raise fail(lines.key("market", 0, key), str(exc)) from None
    if mvals["W"] <= 0:
        raise fail(lines.key("market", 0, "W"), "allowance cap W must be positive")
    if mvals["penalty"] < 0:
        raise fail(lines.key("market", 0, "penalty"), "penalty must be non-negative")
    top = max(p.c + p.e * mvals["penalty"] for p in producers)
    if mvals["p_lolc"] <= top:
        raise fail(
            lines.key("market", 0, "p_lolc"),
            f"p_lolc = {mvals['p_lolc']} must exceed every production cost at the "
            f"penalty price (largest is {top})",
        )

    verify = data.get("verify", {})
    extra = set(verify) - VERIFY_KEYS
    if extra:
        raise fail(lines.table("verify"), f"unknown verify key(s): {', '.join(sorted(extra))}")
    for key, value in verify.items():
        if isinstance(value, bool) or not isinstance(value, int) or value < 0:
            raise fail(lines.key("verify", 0, key), f"verify.{key} must be a non-negative integer")

    try:
        scenario = Scenario(
            tuple(producers), demand, mvals["W"], mvals["penalty"], mvals["p_lolc"], dict(verify)
        )
    except ScenarioError as exc:  # pragma: no cover - every check is mirrored above
        raise fail(None, str(exc)) from None
    bids = tuple(bid_curve(s) for s in bid_segments) if bid_segments else None
    return ScenarioFile(scenario, bids, tuple(bid_segments) if bid_segments else None)


def _parse_demand(raw: dict, lines: _Lines, fail) -> Curve:
    extra = set(raw) - {"kind", "breakpoints", "tail"}
    if extra:
        raise fail(lines.table("demand"), f"unknown demand key(s): {', '.join(sorted(extra))}")
    kind = raw.get("kind")
    if kind not in ("step", "piecewise_linear"):
        raise fail(lines.key("demand", 0, "kind"), "demand kind must be 'step' or 'piecewise_linear'")
    line = lines.key("demand", 0, "breakpoints")
    try:
        pts = _pairs(raw.get("breakpoints", []), "breakpoints")
        tail = _number(raw["tail"], "tail") if "tail" in raw else None
        if any(b <= a for (a, _), (b, _) in zip(pts, pts[1:])):
            raise ValueError("breakpoint prices must be strictly increasing")
        if kind == "step":
            if tail is None:
                tail = ZERO
            if pts and pts[0][0] <= 0:
                raise ValueError("step demand breakpoints need prices > 0")
            demand = Curve.step_left(pts, tail)
        else:
            if not pts or pts[0][0] != 0:
                raise ValueError("piecewise-linear demand needs a first breakpoint at price 0")
            demand = Curve.piecewise_linear(pts, tail)
    except (ValueError, CurveError) as exc:
        raise fail(line, f"demand: {exc}") from None
    if demand.eval(0) <= 0:
        raise fail(line, "demand: quantity demanded at price 0 must be positive")
    try:
        check_demand(demand)
    except CurveError as exc:
        raise fail(line, f"demand: {exc}") from None
    return demand


def parse_scenario(path: str | Path) -> ScenarioFile:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioFileError(str(p), None, f"cannot read file: {exc.strerror}") from None
    return parse_scenario_text(text, str(p))


# -- writing scenarios -------------------------------------------------------------


def _toml_number(x: Fraction) -> str:
    if x.denominator == 1:
        return str(x.numerator)
    den = x.denominator
    for prime in (2, 5):
        while den % prime == 0:
            den //= prime
    if den == 1:
        digits = 0
        while (x * 10**digits).denominator != 1:
            digits += 1
        sign = "-" if x < 0 else ""
        whole = abs(x.numerator) * 10**digits // x.denominator
        s = str(whole).rjust(digits + 1, "0")
        return f"{sign}{s[:-digits]}.{s[-digits:]}"
    return f'"{x.numerator}/{x.denominator}"'


def _toml_pairs(pts: Iterable[tuple[Fraction, Fraction]]) -> str:
    return "[" + ", ".join(f"[{_toml_number(a)}, {_toml_number(b)}]" for a, b in pts) + "]"


def demand_breakpoints(demand: Curve) -> tuple[str, list[tuple[Fraction, Fraction]], Fraction]:
    """``(kind, breakpoints, tail)`` reproducing ``demand`` on re-parsing."""
    if demand.is_step:
        return "step", [(demand.xs[i], demand.at[i]) for i in range(1, len(demand.xs))], demand.tail
    inner_jump = any(demand.at[i] != demand.start[i] for i in range(len(demand.xs) - 1))
    if inner_jump:
        raise ValueError("demand with jumps and sloped pieces has no file representation")
    return "piecewise_linear", list(zip(demand.xs, demand.at)), demand.tail


def dump_scenario(scenario: Scenario, bids: Sequence[Sequence[tuple[Fraction, Fraction]]] | None = None) -> str:
    out: list[str] = []
    for k, p in enumerate(scenario.producers):
        out.append("[[producers]]")
        out.append(f"name = {json.dumps(p.name)}")
        out += [f"c = {_toml_number(p.c)}", f"e = {_toml_number(p.e)}", f"kappa = {_toml_number(p.kappa)}"]
        if bids is not None:
            out.append(f"bid = {_toml_pairs(bids[k])}")
        out.append("")
    kind, pts, tail = demand_breakpoints(scenario.demand)
    out += ["[demand]", f'kind = "{kind}"', f"breakpoints = {_toml_pairs(pts)}", f"tail = {_toml_number(tail)}", ""]
    out += [
        "[market]",
        f"W = {_toml_number(scenario.W)}",
        f"penalty = {_toml_number(scenario.penalty)}",
        f"p_lolc = {_toml_number(scenario.p_lolc)}",
    ]
    if scenario.verify:
        out += ["", "[verify]"] + [f"{k} = {v}" for k, v in sorted(scenario.verify.items())]
    return "\n".join(out) + "\n"


# -- result documents ------------------------------------------------------------


def exact(x: Fraction) -> str:
    return f"{x.numerator}/{x.denominator}"


def approx(x: Fraction) -> float:
    return float(x)


def _put(doc: dict, key: str, value: Any) -> None:
    """Store ``value``; rationals (and lists of them) get a ``_approx`` twin."""
    if isinstance(value, Fraction):
        doc[key] = exact(value)
        doc[f"{key}_approx"] = approx(value)
    elif isinstance(value, (list, tuple)) and value and all(isinstance(v, Fraction) for v in value):
        doc[key] = [exact(v) for v in value]
        doc[f"{key}_approx"] = [approx(v) for v in value]
    else:
        doc[key] = value


def _doc(**fields: Any) -> dict:
    d: dict = {}
    for k, v in fields.items():
        _put(d, k, v)
    return d


def curve_document(curve: Curve) -> dict:
    return _doc(
        xs=list(curve.xs),
        at=list(curve.at),
        start=list(curve.start),
        slope=list(curve.slope),
        domain_end=curve.domain_end,
    )


def elec_document(out: ElecOutcome, names: Sequence[str]) -> dict:
    return _doc(
        p_under=out.p_under,
        p_over=out.p_over,
        p_elec=out.p_elec,
        phi=list(out.phi),
        total_sold=out.total_sold,
        producers=list(names),
    )


def carbon_document(out: CarbonOutcome, names: Sequence[str]) -> dict:
    return _doc(p_co2=out.p_co2, delta=list(out.delta), producers=list(names))


def tau_document(out: TauOutcome, scenario: Scenario) -> dict:
    w = willing_to_buy(scenario, out.tau)
    d = elec_document(out.elec, [p.name for p in scenario.producers])
    _put(d, "tau", out.tau)
    _put(d, "W", w.w)
    _put(d, "W_bar", w.w_bar)
    d["active"] = sorted(scenario.producers[j].name for j in out.active)
    return d


def falsifier_document(rep: FalsifierReport, names: Sequence[str]) -> dict:
    d = _doc(
        checked_count=rep.checked_count,
        skipped_count=rep.skipped_count,
        best_improvement=rep.best_improvement,
        scope=rep.scope,
    )
    if rep.witness is None:
        d["witness"] = None
    else:
        w = rep.witness
        wd = _doc(
            producer=names[w.producer],
            deviation=w.deviation,
            baseline_share=w.baseline_share,
            deviated_share=w.deviated_share,
        )
        replay: dict = {}
        for k, v in sorted(w.replay.items()):
            if isinstance(v, Fraction) or (isinstance(v, tuple) and v and isinstance(v[0], Fraction)):
                _put(replay, k, list(v) if isinstance(v, tuple) else v)
            elif isinstance(v, Curve):
                replay[k] = curve_document(v)
            elif hasattr(v, "encoding"):
                replay[k] = v.encoding
        wd["replay"] = replay
        d["witness"] = wd
    return d


def design_document(check: DesignCheck) -> dict:
    return _doc(ok=check.ok, reason=check.reason, w_zero=check.w_zero, w_bar_penalty=check.w_bar_penalty)


def report_document(rep: EquilibriumReport, scenario: Scenario) -> dict:
    names = [p.name for p in scenario.producers]
    if isinstance(rep.case, CaseA):
        case = {"kind": "A", "leaving": names[rep.case.i_bar]}
    else:
        case = {"kind": "B", "leaving": names[rep.case.i_l], "entering": names[rep.case.i_r]}
    d = _doc(
        tau_guess=rep.tau_guess,
        tau_bar_guess=rep.tau_bar_guess,
        eps=rep.eps,
        delta_param=rep.delta_param,
        attempts=rep.attempts,
    )
    d["case"] = case
    d["bids"] = {n: curve_document(b) for n, b in zip(names, rep.bids)}
    d["asks"] = {n: curve_document(a) for n, a in zip(names, rep.asks)}
    d["carbon"] = carbon_document(rep.outcome.carbon, names)
    d["elec"] = elec_document(rep.outcome.elec, names)
    _put(d, "covered_emissions", list(rep.covered_emissions))
    d["predicted_at_tau_guess"] = tau_document(rep.predicted, scenario)
    w_left, w_here, w_right = rep.w_at_guess
    d["willing_to_buy_at_tau_guess"] = _doc(left=w_left, value=w_here, right=w_right)
    d["claims"] = dict(rep.claims)
    d["case_identities"] = dict(rep.case_identities)
    d["flags"] = dict(rep.flags)
    d["discrepancies"] = list(rep.discrepancies)
    d["falsifier"] = falsifier_document(rep.falsifier, names)  # type: ignore[arg-type]
    return d


def monotonicity_document(rep: MonotonicityReport) -> dict:
    return {
        "samples": rep.samples,
        "ok": rep.ok,
        "violations": [
            _doc(quantity=k, tau_from=a, tau_to=b, value_from=va, value_to=vb)
            for k, a, b, va, vb in rep.violations
        ],
    }


def to_json(doc: Any) -> str:
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def document_fraction(doc: dict, key: str) -> Fraction:
    """Read back an exact rational written by :func:`_put`."""
    return Fraction(doc[key])


SWEEP_COLUMNS = ("tau", "p_elec", "total_sold", "W", "W_bar")


def sweep_rows(scenario: Scenario, taus: Sequence[Fraction]) -> list[dict[str, Fraction]]:
    rows = []
    for t in taus:
        out = tau_clearing(scenario, t)
        w = willing_to_buy(scenario, t)
        rows.append({"tau": t, "p_elec": out.p_elec, "total_sold": out.elec.total_sold, "W": w.w, "W_bar": w.w_bar})
    return rows


def to_csv(rows: Sequence[dict[str, Fraction]], columns: Sequence[str] = SWEEP_COLUMNS) -> str:
    """Exact columns first, then one ``<col>_approx`` column per exact column."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(list(columns) + [f"{c}_approx" for c in columns])
    for row in rows:
        writer.writerow([exact(row[c]) for c in columns] + [repr(approx(row[c])) for c in columns])
    return buf.getvalue()
