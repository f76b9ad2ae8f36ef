"""Command-line front end over JSON scenarios and CSV tables.

Exit codes: 0 success, 2 bad input (flags or scenario schema), 3 solver
error, 4 non-convergence of the bidding loop.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from energyshare import analysis, equilibrium, protocol, scenario_io
from energyshare.equilibrium import MrpScenario, SolverError
from energyshare.market import disutility, outcome_from_bids
from energyshare.protocol import NonConvergenceError, ProtocolConfig
from energyshare.scenario_io import ScenarioError

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_SOLVER = 3
EXIT_NO_CONVERGENCE = 4


def _fail(code: int, message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def _parse_float_list(text: str, flag: str) -> list[float]:
    try:
        values = [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise ScenarioError(f"{flag}: expected a comma-separated number list")
    if not values:
        raise ScenarioError(f"{flag}: expected at least one value")
    return values


def _parse_int_list(text: str, flag: str) -> list[int]:
    values = _parse_float_list(text, flag)
    ints = [int(v) for v in values]
    if any(i != v for i, v in zip(ints, values)):
        raise ScenarioError(f"{flag}: expected integers")
    return ints


def _cmd_solve(args: argparse.Namespace) -> int:
    digest = scenario_io.file_digest(args.scenario)
    scenario = scenario_io.load_scenario(args.scenario)
    multi = isinstance(scenario, MrpScenario)
    scheme = args.scheme

    if scheme in ("ne", "sco") and multi:
        raise ScenarioError(f"scheme {scheme} needs a single-resource scenario")
    if scheme in ("mrp-ne", "mrp-sco") and not multi:
        raise ScenarioError(f"scheme {scheme} needs a multi-resource scenario")

    if scheme == "ne":
        if scenario.heterogeneous:
            report = equilibrium.solve_ne_heterogeneous(scenario)
        else:
            report = equilibrium.solve_ne_closed_form(scenario)
        outcome = outcome_from_bids(scenario, report.bids)
        result = {
            **scenario_io.report_payload(report),
            **scenario_io.outcome_payload(scenario, outcome),
        }
    elif scheme == "sco":
        report = equilibrium.solve_social_optimum(scenario)
        costs = [disutility(p, pi) for p, pi in zip(scenario.prosumers, report.p)]
        result = {
            **scenario_io.report_payload(report),
            "cost_per_prosumer": [float(v) for v in costs],
            "social_disutility": float(sum(costs)),
        }
    elif scheme == "idl":
        if multi:
            productions = [
                equilibrium.solve_mrp_individual(p) for p in scenario.prosumers
            ]
            costs = [
                float(np.sum([r.c * x * x + r.d * x for r, x in zip(p.resources, px)]))
                for p, px in zip(scenario.prosumers, productions)
            ]
            result = {
                "p": [[float(x) for x in px] for px in productions],
                "cost_per_prosumer": costs,
                "social_disutility": float(sum(costs)),
            }
        else:
            costs = equilibrium.solve_individual(scenario)
            result = {
                "p": [p.demand_reduction for p in scenario.prosumers],
                "cost_per_prosumer": [float(v) for v in costs],
                "social_disutility": float(costs.sum()),
            }
    elif scheme == "mrp-ne":
        report = equilibrium.solve_mrp_ne(scenario)
        result = scenario_io.report_payload(report)
    else:  # mrp-sco
        report = equilibrium.solve_mrp_social(scenario)
        result = scenario_io.report_payload(report)

    text = scenario_io.write_result(
        args.out, digest, {"scheme": scheme, "result": result}
    )
    if args.out is None:
        sys.stdout.write(text)
    return EXIT_OK


def _cmd_simulate(args: argparse.Namespace) -> int:
    digest = scenario_io.file_digest(args.scenario)
    scenario = scenario_io.load_scenario(args.scenario)
    if isinstance(scenario, MrpScenario):
        raise ScenarioError("simulate needs a single-resource scenario")
    config = ProtocolConfig(
        update_mode=args.mode,
        damping=args.damping,
        price_tolerance=args.tol,
        max_iter=args.max_iter,
    )
    result = protocol.run_protocol(scenario, config)
    if args.log is not None:
        protocol.write_round_log_csv(args.log, result.rounds)
    text = scenario_io.write_result(
        args.out, digest, {"simulation": scenario_io.simulation_payload(scenario, result)}
    )
    if args.out is None:
        sys.stdout.write(text)
    return EXIT_OK


def _bounds_from_args(args: argparse.Namespace) -> analysis.GeneratorBounds:
    return analysis.GeneratorBounds(
        c_lo=args.c_lo,
        c_hi=args.c_hi,
        d_lo=args.d_lo,
        d_hi=args.d_hi,
        demand_lo=args.demand_lo,
        demand_hi=args.demand_hi,
        a=args.a,
        seed=args.base_seed,
    )


def _cmd_sweep(args: argparse.Namespace) -> int:
    try:
        bounds = _bounds_from_args(args)
    except ValueError as exc:
        raise ScenarioError(str(exc))
    seeds = range(args.seeds)

    if args.kind == "n":
        if args.n is None:
            raise ScenarioError("--kind n requires --n")
        n_values = _parse_int_list(args.n, "--n")
        cells = analysis.sweep_n(bounds, n_values, seeds)
        header = [
            "n",
            "seed",
            "smk_total",
            "sco_total",
            "rel_cost_diff",
            "avg_cost_diff",
            "md_variance",
            "poa",
        ]
        rows = [
            (
                c.n,
                c.seed,
                c.smk_total,
                c.sco_total,
                c.rel_cost_diff,
                c.avg_cost_diff,
                c.md_variance,
                c.poa,
            )
            for c in cells
        ]
    elif args.kind == "a":
        if args.scenario is None:
            raise ScenarioError("--kind a requires --scenario")
        if args.mult is None:
            raise ScenarioError("--kind a requires --mult")
        scenario = scenario_io.load_scenario(args.scenario)
        if isinstance(scenario, MrpScenario):
            raise ScenarioError("sweep --kind a needs a single-resource scenario")
        multipliers = _parse_float_list(args.mult, "--mult")
        if any(m < 1 for m in multipliers):
            raise ScenarioError("--mult: multipliers must be >= 1")
        cells = analysis.sweep_a(scenario, multipliers)
        header = ["multiplier", "a", "smk_total", "sco_total"]
        rows = [(c.multiplier, c.a, c.smk_total, c.sco_total) for c in cells]
    else:  # heterogeneity
        if args.n is None:
            raise ScenarioError("--kind heterogeneity requires --n")
        n_values = _parse_int_list(args.n, "--n")
        factors = _parse_float_list(args.het_factors, "--het-factors")
        if any(f < 1 for f in factors):
            raise ScenarioError("--het-factors: factors must be >= 1")
        cells = analysis.sweep_heterogeneity(bounds, factors, n_values, seeds)
        header = [
            "het_factor",
            "n",
            "seed",
            "smk_total",
            "sco_total",
            "rel_cost_diff",
            "avg_cost_diff",
            "md_variance",
            "poa",
        ]
        rows = [
            (
                c.het_factor,
                c.n,
                c.seed,
                c.smk_total,
                c.sco_total,
                c.rel_cost_diff,
                c.avg_cost_diff,
                c.md_variance,
                c.poa,
            )
            for c in cells
        ]

    analysis.write_table_csv(args.out, header, rows)
    return EXIT_OK


def _cmd_partition(args: argparse.Namespace) -> int:
    scenario = scenario_io.load_scenario(args.scenario)
    if not isinstance(scenario, MrpScenario):
        raise ScenarioError("partition needs a multi-resource scenario")
    z_chain = _parse_int_list(args.z_chain, "--z-chain")
    steps = analysis.partition_study(scenario, z_chain)
    header = [
        "prosumer_count",
        "total_disutility",
        "md_variance",
        "relative_social_cost",
        "price",
        "min_residual_product",
        "demand_split_error",
    ]
    rows = [
        (
            s.prosumer_count,
            s.total_disutility,
            s.md_variance,
            s.relative_social_cost,
            s.price,
            s.min_residual_product,
            s.demand_split_error,
        )
        for s in steps
    ]
    if args.out is None:
        analysis.write_table_csv(sys.stdout, header, rows)
    else:
        analysis.write_table_csv(args.out, header, rows)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="energyshare",
        description="Prosumer energy-sharing market: solvers, bidding simulation, experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    solve = sub.add_parser("solve", help="solve a scenario under one scheme")
    solve.add_argument("scenario", help="scenario JSON path")
    solve.add_argument(
        "--scheme",
        required=True,
        choices=["ne", "sco", "idl", "mrp-ne", "mrp-sco"],
        help="ne: sharing equilibrium, sco: social optimum, idl: no-trade baseline",
    )
    solve.add_argument("--out", help="result JSON path (default: stdout)")
    solve.set_defaults(func=_cmd_solve)

    simulate = sub.add_parser("simulate", help="run the smart-meter bidding loop")
    simulate.add_argument("scenario", help="scenario JSON path")
    simulate.add_argument(
        "--mode",
        default=protocol.UPDATE_SIMULTANEOUS,
        choices=[protocol.UPDATE_SIMULTANEOUS, protocol.UPDATE_SEQUENTIAL],
    )
    simulate.add_argument("--damping", type=float, default=0.5)
    simulate.add_argument("--tol", type=float, default=1e-10, help="price tolerance ($/kW)")
    simulate.add_argument("--max-iter", type=int, default=10000)
    simulate.add_argument("--log", help="write the round log CSV here")
    simulate.add_argument("--out", help="result JSON path (default: stdout)")
    simulate.set_defaults(func=_cmd_simulate)

    sweep = sub.add_parser("sweep", help="run an experiment sweep, write CSV")
    sweep.add_argument("--kind", required=True, choices=["n", "a", "heterogeneity"])
    sweep.add_argument("--out", required=True, help="output CSV path")
    sweep.add_argument("--n", help="comma-separated participant counts")
    sweep.add_argument("--seeds", type=int, default=10, help="number of seeds (0..k-1)")
    sweep.add_argument("--mult", help="comma-separated |a| multipliers (kind a)")
    sweep.add_argument(
        "--het-factors",
        default="1,2,4,6,8,10",
        help="comma-separated heterogeneity factors (kind heterogeneity)",
    )
    sweep.add_argument("--scenario", help="scenario JSON (kind a)")
    sweep.add_argument("--c-lo", type=float, default=0.001)
    sweep.add_argument("--c-hi", type=float, default=0.01)
    sweep.add_argument("--d-lo", type=float, default=0.02)
    sweep.add_argument("--d-hi", type=float, default=0.12)
    sweep.add_argument("--demand-lo", type=float, default=0.0)
    sweep.add_argument("--demand-hi", type=float, default=1000.0)
    sweep.add_argument("--a", type=float, default=-200.0)
    sweep.add_argument("--base-seed", type=int, default=0)
    sweep.set_defaults(func=_cmd_sweep)

    partition = sub.add_parser(
        "partition", help="equal-partition competition study on an MRP scenario"
    )
    partition.add_argument("scenario", help="multi-resource scenario JSON path")
    partition.add_argument(
        "--z-chain", required=True, help="comma-separated split factors, applied in order"
    )
    partition.add_argument("--out", help="output CSV path (default: stdout)")
    partition.set_defaults(func=_cmd_partition)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as exc:
        return _fail(EXIT_INPUT, str(exc))
    except NonConvergenceError as exc:
        return _fail(EXIT_NO_CONVERGENCE, f"did not converge: {exc}")
    except FileNotFoundError as exc:
        return _fail(EXIT_INPUT, str(exc))
    except SolverError as exc:
        return _fail(EXIT_SOLVER, str(exc))
    except ValueError as exc:
        return _fail(EXIT_SOLVER, str(exc))


if __name__ == "__main__":
    sys.exit(main())
