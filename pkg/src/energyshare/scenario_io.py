"""Scenario files, result files, and their validation.

Scenarios are JSON. Single-resource form:

    {"a": -200.0, "prosumers": [{"c": 0.003, "d": 0.042, "D": 100.0}, ...]}

with an optional per-prosumer "a_i" (all or none). Multi-resource form
replaces "c"/"d" with a "resources" list:

    {"a": -200.0, "prosumers": [
        {"D": 100.0, "resources": [{"c": 0.003, "d": 0.02}, ...]}, ...]}

Result files mirror the solver/simulation reports, stamped with the tool
version and a digest of the input, and round-trip losslessly (floats are
written in shortest round-trip form).
"""

from __future__ import annotations

import hashlib
import json
from typing import Any

import numpy as np

import energyshare
from energyshare.equilibrium import (
    MrpProsumer,
    MrpResource,
    MrpScenario,
    SolveReport,
)
from energyshare.market import (
    EquilibriumOutcome,
    MarketParams,
    Prosumer,
    Scenario,
    classify_roles,
)
from energyshare.protocol import SimulationResult


class ScenarioError(ValueError):
    """A scenario document is malformed; the message names the field."""


def _require_number(value: Any, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError(f"{path}: expected a number, got {value!r}")
    return float(value)


def _require_keys(obj: dict, path: str, required: set[str], optional: set[str] = frozenset()):
    missing = required - obj.keys()
    if missing:
        raise ScenarioError(f"{path}: missing field(s) {sorted(missing)}")
    unknown = obj.keys() - required - optional
    if unknown:
        raise ScenarioError(f"{path}: unknown field(s) {sorted(unknown)}")


def parse_scenario(doc: Any) -> Scenario | MrpScenario:
    """Validate a scenario document; messages point at the offending field."""
    if not isinstance(doc, dict):
        raise ScenarioError("top level: expected a JSON object")
    _require_keys(doc, "top level", {"a", "prosumers"})
    a = _require_number(doc["a"], "a")
    entries = doc["prosumers"]
    if not isinstance(entries, list) or not entries:
        raise ScenarioError("prosumers: expected a non-empty list")
    kinds = {"resources" in e for e in entries if isinstance(e, dict)}
    if kinds == {True, False}:
        raise ScenarioError(
            "prosumers: cannot mix single-resource and multi-resource entries"
        )
    multi = kinds == {True}

    try:
        market = MarketParams(a=a, n=len(entries))
    except ValueError as exc:
        raise ScenarioError(f"a: {exc}")

    if multi:
        prosumers = []
        for i, entry in enumerate(entries):
            path = f"prosumers[{i}]"
            if not isinstance(entry, dict):
                raise ScenarioError(f"{path}: expected an object")
            _require_keys(entry, path, {"D", "resources"})
            if not isinstance(entry["resources"], list) or not entry["resources"]:
                raise ScenarioError(f"{path}.resources: expected a non-empty list")
            resources = []
            for k, res in enumerate(entry["resources"]):
                rpath = f"{path}.resources[{k}]"
                if not isinstance(res, dict):
                    raise ScenarioError(f"{rpath}: expected an object")
                _require_keys(res, rpath, {"c", "d"})
                try:
                    resources.append(
                        MrpResource(
                            c=_require_number(res["c"], f"{rpath}.c"),
                            d=_require_number(res["d"], f"{rpath}.d"),
                        )
                    )
                except ValueError as exc:
                    raise ScenarioError(f"{rpath}: {exc}")
            try:
                prosumers.append(
                    MrpProsumer(
                        resources=tuple(resources),
                        demand_reduction=_require_number(entry["D"], f"{path}.D"),
                    )
                )
            except ValueError as exc:
                raise ScenarioError(f"{path}: {exc}")
        return MrpScenario(market=market, prosumers=tuple(prosumers))

    prosumers = []
    for i, entry in enumerate(entries):
        path = f"prosumers[{i}]"
        if not isinstance(entry, dict):
            raise ScenarioError(f"{path}: expected an object")
        _require_keys(entry, path, {"c", "d", "D"}, optional={"a_i"})
        a_i = None
        if "a_i" in entry:
            a_i = _require_number(entry["a_i"], f"{path}.a_i")
        try:
            prosumers.append(
                Prosumer(
                    c=_require_number(entry["c"], f"{path}.c"),
                    d=_require_number(entry["d"], f"{path}.d"),
                    demand_reduction=_require_number(entry["D"], f"{path}.D"),
                    price_sensitivity=a_i,
                )
            )
        except ValueError as exc:
            raise ScenarioError(f"{path}: {exc}")
    try:
        return Scenario(market=market, prosumers=tuple(prosumers))
    except ValueError as exc:
        raise ScenarioError(f"prosumers: {exc}")


def load_scenario(path: str) -> Scenario | MrpScenario:
    with open(path, "r") as fh:
        text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"not valid JSON: {exc}")
    return parse_scenario(doc)


def scenario_to_dict(scenario: Scenario | MrpScenario) -> dict:
    if isinstance(scenario, MrpScenario):
        return {
            "a": scenario.market.a,
            "prosumers": [
                {
                    "D": p.demand_reduction,
                    "resources": [{"c": r.c, "d": r.d} for r in p.resources],
                }
                for p in scenario.prosumers
            ],
        }
    prosumers = []
    for p in scenario.prosumers:
        entry: dict[str, float] = {"c": p.c, "d": p.d, "D": p.demand_reduction}
        if p.price_sensitivity is not None:
            entry["a_i"] = p.price_sensitivity
        prosumers.append(entry)
    return {"a": scenario.market.a, "prosumers": prosumers}


def dumps_scenario(scenario: Scenario | MrpScenario) -> str:
    """Canonical serialized form; byte-identical for equal scenarios."""
    return json.dumps(scenario_to_dict(scenario), indent=2) + "\n"


def file_digest(path: str) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def _listify(values) -> list:
    return [float(v) for v in np.asarray(values, dtype=float)]


def report_payload(report: SolveReport) -> dict:
    payload = {
        "p": _listify(report.p),
        "bids": _listify(report.bids),
        "price": float(report.price),
        "xi": float(report.xi),
        "kkt_residual": float(report.kkt_residual),
    }
    if report.resource_counts is not None:
        payload["resource_counts"] = list(report.resource_counts)
        payload["p_by_prosumer"] = _listify(report.production_by_prosumer())
    return payload


def outcome_payload(scenario: Scenario, outcome: EquilibriumOutcome) -> dict:
    overrides = scenario.sensitivities() if scenario.heterogeneous else None
    return {
        "p": _listify(outcome.p),
        "bids": _listify(outcome.bids),
        "q": _listify(outcome.trade.q),
        "lambda_c": float(outcome.trade.lambda_c),
        "roles": classify_roles(outcome.bids, scenario.market, overrides),
        # settlement: positive = buyer pays, negative = seller receives
        "payments": _listify(outcome.trade.q * outcome.trade.lambda_c),
        "cost_per_prosumer": _listify(outcome.cost_per_prosumer),
        "social_disutility": float(outcome.social_disutility),
    }


def comparison_payload(report) -> dict:
    """Mirror an analysis ComparisonReport for a result file."""
    return {
        "idl_costs": _listify(report.idl_costs),
        "smk_costs": _listify(report.smk_costs),
        "sco_costs": _listify(report.sco_costs),
        "idl_total": float(report.idl_total),
        "smk_total": float(report.smk_total),
        "sco_total": float(report.sco_total),
        "rel_idl_sco": float(report.rel_idl_sco),
        "rel_smk_sco": float(report.rel_smk_sco),
        "poa": float(report.poa),
        "price": float(report.price),
        "md_variance": float(report.md_variance),
    }


def simulation_payload(scenario: Scenario, result: SimulationResult) -> dict:
    return {
        "converged": result.converged,
        "round_count": len(result.rounds),
        "final_residual": float(result.rounds[-1].residual),
        "rounds": [
            {
                "round": log.round_index,
                "lambda_c": float(log.price),
                "residual": float(log.residual),
                "bids": _listify(log.bids),
            }
            for log in result.rounds
        ],
        "outcome": outcome_payload(scenario, result.outcome),
    }


def write_result(path: str | None, input_digest: str, body: dict) -> str:
    """Assemble a result document; write it when a path is given.

    Returns the serialized text either way so callers can print it.
    """
    document = {
        "tool": "energyshare",
        "version": energyshare.__version__,
        "input_digest": input_digest,
        **body,
    }
    text = json.dumps(document, indent=2) + "\n"
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text
