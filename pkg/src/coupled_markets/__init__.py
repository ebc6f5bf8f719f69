"""Exact clearing of coupled electricity and CO2 allowance markets."""

from .carbon_auction import CarbonOutcome, allowance_demand, bid_curve, clear_auction
from .coupling import Producer, Scenario, ScenarioError, check_admissible, regulated_cost
from .curves import Curve, CurveError, generalized_inverse
from .equilibrium import (
    CaseA,
    CaseB,
    DesignRejected,
    EquilibriumReport,
    NoValidatedParameters,
    NonclassifiableCrossing,
    ParameterError,
    build_bids,
    classify_case,
    design_check,
    find_eps_delta,
    guess_prices,
    solve,
    tau_breakpoints,
    tau_clearing,
    willing_to_buy,
)
from .power_exchange import ElecOutcome, clear_market

__all__ = [
    "CarbonOutcome",
    "CaseA",
    "CaseB",
    "Curve",
    "CurveError",
    "DesignRejected",
    "ElecOutcome",
    "EquilibriumReport",
    "NoValidatedParameters",
    "NonclassifiableCrossing",
    "ParameterError",
    "Producer",
    "Scenario",
    "ScenarioError",
    "allowance_demand",
    "bid_curve",
    "build_bids",
    "check_admissible",
    "classify_case",
    "clear_auction",
    "clear_market",
    "design_check",
    "find_eps_delta",
    "generalized_inverse",
    "guess_prices",
    "regulated_cost",
    "solve",
    "tau_breakpoints",
    "tau_clearing",
    "willing_to_buy",
]
