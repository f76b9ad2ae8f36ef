"""Energy-sharing market for prosumers with supply-demand-function bidding.

Participants submit a single willingness-to-buy bid; an affine
supply-demand function turns the cleared price into a traded quantity, so
whether a prosumer buys or sells is decided by the market, not declared up
front. The package provides the market vocabulary, direct equilibrium
solvers, a discrete-round smart-meter bidding simulation, and the
comparison/sweep experiment layer, plus a CLI over JSON scenarios.
"""

from energyshare.market import (
    Prosumer,
    MarketParams,
    Scenario,
    TradeOutcome,
    EquilibriumOutcome,
    disutility,
    marginal_disutility,
    clear_price,
    settle,
    total_cost,
    classify_roles,
    outcome_from_bids,
)
from energyshare.equilibrium import (
    MrpResource,
    MrpProsumer,
    MrpScenario,
    SolveReport,
    SolverError,
    solve_ne_closed_form,
    solve_social_optimum,
    solve_individual,
    solve_mrp_ne,
    solve_mrp_social,
    solve_mrp_individual,
    solve_ne_heterogeneous,
)
from energyshare.protocol import (
    ProtocolConfig,
    RoundLog,
    SimulationResult,
    NonConvergenceError,
    best_response,
    deduce_neighbor_sum,
    run_protocol,
    stationarity_residuals,
    write_round_log_csv,
)

__version__ = "0.1.0"

__all__ = [
    "Prosumer",
    "MarketParams",
    "Scenario",
    "TradeOutcome",
    "EquilibriumOutcome",
    "disutility",
    "marginal_disutility",
    "clear_price",
    "settle",
    "total_cost",
    "classify_roles",
    "outcome_from_bids",
    "MrpResource",
    "MrpProsumer",
    "MrpScenario",
    "SolveReport",
    "SolverError",
    "solve_ne_closed_form",
    "solve_social_optimum",
    "solve_individual",
    "solve_mrp_ne",
    "solve_mrp_social",
    "solve_mrp_individual",
    "solve_ne_heterogeneous",
    "ProtocolConfig",
    "RoundLog",
    "SimulationResult",
    "NonConvergenceError",
    "best_response",
    "deduce_neighbor_sum",
    "run_protocol",
    "stationarity_residuals",
    "write_round_log_csv",
    "__version__",
]
