"""Discrete-round simulation of the smart-meter bidding loop.

Each prosumer sits behind a smart meter holding its private cost data. A
round goes: every meter turns the last broadcast price into the other
meters' aggregate bid (the clearing rule is invertible), best-responds
with a fresh bid, and the platform clears and broadcasts the new price.
The loop stops when the price stops moving. Updates are damped because
undamped simultaneous responses can oscillate; a sequential mode updates
one meter at a time instead.

A simulation is single-threaded and deterministic: the same scenario and
config reproduce the same round log bit for bit.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import IO, Iterable

import numpy as np

from energyshare.market import (
    EquilibriumOutcome,
    MarketParams,
    Prosumer,
    Scenario,
    clear_price,
    outcome_from_bids,
    settle,
)

UPDATE_SIMULTANEOUS = "simultaneous"
UPDATE_SEQUENTIAL = "sequential"


class NonConvergenceError(RuntimeError):
    """The bidding loop hit max_iter with the price still moving."""

    def __init__(self, residual: float, rounds: tuple["RoundLog", ...]):
        super().__init__(
            f"price residual {residual:.3e} $/kW after {len(rounds)} rounds"
        )
        self.residual = residual
        self.rounds = rounds


@dataclass(frozen=True)
class ProtocolConfig:
    """Knobs of the bidding loop.

    damping is the weight on the fresh best response (1.0 disables it);
    price_tolerance is the stop test on the price change per round, with a
    secondary stall guard on the largest bid change.
    """

    update_mode: str = UPDATE_SIMULTANEOUS
    damping: float = 0.5
    price_tolerance: float = 1e-10
    max_iter: int = 10000
    initial_price: float = 0.0
    bid_stall_tolerance: float = 1e-9

    def __post_init__(self) -> None:
        if self.update_mode not in (UPDATE_SIMULTANEOUS, UPDATE_SEQUENTIAL):
            raise ValueError(f"unknown update_mode {self.update_mode!r}")
        if not 0.0 < self.damping <= 1.0:
            raise ValueError(f"damping must be in (0, 1], got {self.damping}")
        if not self.price_tolerance > 0:
            raise ValueError("price_tolerance must be > 0")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass(frozen=True)
class RoundLog:
    """State after one full round: bids, cleared price, price change."""

    round_index: int
    bids: np.ndarray
    price: float
    residual: float
    neighbor_sums: np.ndarray


@dataclass(frozen=True)
class SimulationResult:
    converged: bool
    rounds: tuple[RoundLog, ...]
    outcome: EquilibriumOutcome


def _response_coeffs(
    c: np.ndarray, d: np.ndarray, demand: np.ndarray, a_own: np.ndarray
):
    """Affine best-response coefficients: b* = -(const + coef_s*S)/coef_b.

    Derived from the stationarity condition of a prosumer's reduced
    problem: md(p) - price + q/(sum of the others' slopes) = 0, with
    price, q and p eliminated through the clearing rule and the balance.
    """
    a_total = float(np.sum(a_own))
    a_others = a_total - a_own
    coef_b = (2.0 - 2.0 * c * a_others) / a_total
    coef_s = (1.0 - a_own / a_others + 2.0 * c * a_own) / a_total
    const = 2.0 * c * demand + d
    return coef_b, coef_s, const


def best_response(
    prosumer: Prosumer,
    others_bid_sum: float,
    market: MarketParams,
    others_a_sum: float | None = None,
) -> float:
    """Bid minimizing the prosumer's cost given the others' aggregate bid.

    The reduced objective is strictly convex (automatic for c > 0 and a
    negative slope), so the unique minimizer is the root of an affine
    stationarity condition. Pass others_a_sum when prosumers carry their
    own slopes; by default all share the market slope.
    """
    if others_a_sum is None:
        if market.n < 2:
            raise ValueError("a best response needs at least one other prosumer")
        a_own = market.a
        others_a_sum = (market.n - 1) * market.a
    else:
        a_own = (
            prosumer.price_sensitivity
            if prosumer.price_sensitivity is not None
            else market.a
        )
    a_total = a_own + others_a_sum
    coef_b = (2.0 - 2.0 * prosumer.c * others_a_sum) / a_total
    coef_s = (
        1.0 - a_own / others_a_sum + 2.0 * prosumer.c * a_own
    ) / a_total
    const = 2.0 * prosumer.c * prosumer.demand_reduction + prosumer.d
    return -(const + coef_s * others_bid_sum) / coef_b


def deduce_neighbor_sum(
    own_bid: float,
    price: float,
    market: MarketParams,
    a_sum: float | None = None,
) -> float:
    """Invert the clearing rule: the others' aggregate bid behind a price.

    a_sum overrides n*a when prosumers carry their own slopes.
    """
    if a_sum is None:
        a_sum = market.n * market.a
    return -a_sum * price - own_bid


def stationarity_residuals(scenario: Scenario, bids: np.ndarray) -> np.ndarray:
    """Per-prosumer violation of the best-response condition at a bid vector.

    Zero (to float noise) exactly at the equilibrium; used as the
    convergence certificate for iterative solves.
    """
    c, d, demand = scenario.coeff_arrays()
    a_own = scenario.sensitivities()
    overrides = a_own if scenario.heterogeneous else None
    trade = settle(bids, scenario.market, overrides)
    p = demand - trade.q
    a_others = float(np.sum(a_own)) - a_own
    md = 2.0 * c * p + d
    return np.abs(md - trade.lambda_c + trade.q / a_others)


def run_protocol(
    scenario: Scenario, config: ProtocolConfig = ProtocolConfig()
) -> SimulationResult:
    """Iterate the bidding loop until the cleared price settles.

    Bids start at zero with a zero initial price broadcast. Every round is
    logged with the per-meter aggregates the meters deduced. Raises
    NonConvergenceError (carrying the round history) if max_iter rounds
    pass without the price settling.
    """
    n = scenario.market.n
    if n < 2:
        raise ValueError("the bidding protocol needs at least 2 prosumers")
    c, d, demand = scenario.coeff_arrays()
    a_own = scenario.sensitivities()
    overrides = a_own if scenario.heterogeneous else None
    a_total = float(np.sum(a_own))
    coef_b, coef_s, const = _response_coeffs(c, d, demand, a_own)
    damping = config.damping

    bids = np.zeros(n)
    price = config.initial_price
    rounds: list[RoundLog] = []
    converged = False
    for round_index in range(1, config.max_iter + 1):
        if config.update_mode == UPDATE_SIMULTANEOUS:
            neighbor_sums = -a_total * price - bids
            responses = -(const + coef_s * neighbor_sums) / coef_b
            new_bids = (1.0 - damping) * bids + damping * responses
        else:
            new_bids = bids.copy()
            neighbor_sums = np.empty(n)
            for i in range(n):
                neighbor_sums[i] = new_bids.sum() - new_bids[i]
                response = -(const[i] + coef_s[i] * neighbor_sums[i]) / coef_b[i]
                new_bids[i] = (1.0 - damping) * new_bids[i] + damping * response
        new_price = clear_price(new_bids, scenario.market, overrides)
        residual = abs(new_price - price)
        rounds.append(
            RoundLog(
                round_index=round_index,
                bids=new_bids.copy(),
                price=new_price,
                residual=residual,
                neighbor_sums=neighbor_sums.copy(),
            )
        )
        bid_change = float(np.max(np.abs(new_bids - bids)))
        bids = new_bids
        price = new_price
        if residual <= config.price_tolerance or (
            round_index > 1 and bid_change <= config.bid_stall_tolerance
        ):
            converged = True
            break
    if not converged:
        raise NonConvergenceError(rounds[-1].residual, tuple(rounds))

    return SimulationResult(
        converged=True,
        rounds=tuple(rounds),
        outcome=outcome_from_bids(scenario, bids),
    )


def write_round_log_csv(target: str | IO[str], rounds: Iterable[RoundLog]) -> None:
    """Write a round log as CSV: round, lambda_c, residual, b_1..b_N."""
    rounds = list(rounds)
    if not rounds:
        raise ValueError("no rounds to write")
    n = len(rounds[0].bids)
    header = ["round", "lambda_c", "residual"] + [f"b_{i + 1}" for i in range(n)]

    def _write(fh: IO[str]) -> None:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for log in rounds:
            writer.writerow(
                [log.round_index, repr(float(log.price)), repr(float(log.residual))]
                + [repr(float(b)) for b in log.bids]
            )

    if isinstance(target, (str, bytes)):
        with open(target, "w", newline="") as fh:
            _write(fh)
    else:
        _write(target)
