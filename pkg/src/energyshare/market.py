"""Market vocabulary: participants, bids, clearing, settlement and costs.

Every participant ("prosumer") owes a fixed load reduction and pays a
quadratic disutility for adjusting its own production. Each one submits a
single willingness-to-buy bid b; the traded quantity follows the affine
supply-demand function q = a*price + b, so a bid above the market average
makes the prosumer a buyer and a bid below makes it a seller. The market
clears at the price where net traded quantity is zero.

Units are kW for energy quantities and $ for money throughout; prices are
$/kW. All functions here are pure and safe to call concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

ROLE_SELLER = "seller"
ROLE_BUYER = "buyer"
ROLE_NEUTRAL = "neutral"

# |b_i - mean(b)| at or below this counts as "does not trade"; the clearing
# rule itself is indifferent about the exact tie.
NEUTRAL_BID_TOL = 1e-12


@dataclass(frozen=True)
class Prosumer:
    """One participant's private data.

    c, d: quadratic and linear disutility coefficients ($/kW^2, $/kW).
    demand_reduction: required load reduction (kW).
    price_sensitivity: optional per-prosumer supply-demand-function slope
        (kW per $/kW, negative). None means the market-wide slope applies;
        a scenario must either set it for every prosumer or for none.
    """

    c: float
    d: float
    demand_reduction: float
    price_sensitivity: float | None = None

    def __post_init__(self) -> None:
        if not self.c > 0:
            raise ValueError(f"c must be > 0, got {self.c}")
        if not self.d > 0:
            raise ValueError(f"d must be > 0, got {self.d}")
        if not np.isfinite(self.demand_reduction):
            raise ValueError("demand_reduction must be finite")
        if self.price_sensitivity is not None and not self.price_sensitivity < 0:
            raise ValueError(
                f"price_sensitivity must be < 0, got {self.price_sensitivity}"
            )


@dataclass(frozen=True)
class MarketParams:
    """Market-wide price sensitivity and participant count.

    The sharing game itself needs n >= 2 (its interaction terms divide by
    (n-1)*a); solvers enforce that. n == 1 is still representable so the
    no-trade baselines remain evaluable.
    """

    a: float
    n: int

    def __post_init__(self) -> None:
        if not self.a < 0:
            raise ValueError(f"price sensitivity a must be < 0, got {self.a}")
        if self.n < 1:
            raise ValueError(f"participant count n must be >= 1, got {self.n}")


@dataclass(frozen=True)
class Scenario:
    """A market instance: parameters plus an ordered list of prosumers."""

    market: MarketParams
    prosumers: tuple[Prosumer, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "prosumers", tuple(self.prosumers))
        if len(self.prosumers) != self.market.n:
            raise ValueError(
                f"scenario has {len(self.prosumers)} prosumers but market.n"
                f" = {self.market.n}"
            )
        with_a = sum(p.price_sensitivity is not None for p in self.prosumers)
        if with_a not in (0, len(self.prosumers)):
            raise ValueError(
                "per-prosumer price sensitivities must be set for all"
                " prosumers or for none"
            )

    @property
    def heterogeneous(self) -> bool:
        """True when each prosumer carries its own price sensitivity."""
        return self.prosumers[0].price_sensitivity is not None

    def coeff_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Per-prosumer (c, d, demand_reduction) as float arrays."""
        c = np.array([p.c for p in self.prosumers], dtype=float)
        d = np.array([p.d for p in self.prosumers], dtype=float)
        dem = np.array([p.demand_reduction for p in self.prosumers], dtype=float)
        return c, d, dem

    def sensitivities(self) -> np.ndarray:
        """Effective per-prosumer slope: own value, or the market-wide one."""
        if self.heterogeneous:
            return np.array(
                [p.price_sensitivity for p in self.prosumers], dtype=float
            )
        return np.full(self.market.n, self.market.a, dtype=float)


@dataclass(frozen=True)
class TradeOutcome:
    """Traded quantity per prosumer (kW, buyer-positive) and clearing price."""

    q: np.ndarray
    lambda_c: float


@dataclass(frozen=True)
class EquilibriumOutcome:
    """A settled market allocation.

    p: production adjustment per prosumer (kW); p + q equals the demand
    reduction for every prosumer. cost_per_prosumer is disutility plus the
    sharing payment q*price; the payments net out, so the costs sum to the
    total disutility.
    """

    p: np.ndarray
    bids: np.ndarray
    trade: TradeOutcome
    cost_per_prosumer: np.ndarray
    social_disutility: float


def disutility(prosumer: Prosumer, p: float) -> float:
    """Cost ($) of adjusting production by p kW: c*p^2 + d*p."""
    return prosumer.c * p * p + prosumer.d * p


def marginal_disutility(prosumer: Prosumer, p: float) -> float:
    """Derivative of the disutility at p: 2*c*p + d ($/kW)."""
    return 2.0 * prosumer.c * p + prosumer.d


def total_cost(prosumer: Prosumer, p: float, q: float, lambda_c: float) -> float:
    """Disutility plus the sharing payment q*lambda_c ($)."""
    return disutility(prosumer, p) + q * lambda_c


def _sensitivity_sum(
    n: int, market: MarketParams, a_overrides: Sequence[float] | None
) -> float:
    if a_overrides is None:
        return market.n * market.a
    if len(a_overrides) != n:
        raise ValueError(
            f"expected {n} price sensitivities, got {len(a_overrides)}"
        )
    total = float(np.sum(np.asarray(a_overrides, dtype=float)))
    if total == 0.0:
        raise ValueError("price sensitivities sum to zero; market cannot clear")
    return total


def clear_price(
    bids: Sequence[float],
    market: MarketParams,
    a_overrides: Sequence[float] | None = None,
) -> float:
    """Price at which net traded quantity is zero.

    With the shared slope the price is -sum(b) / (n*a); with per-prosumer
    slopes it is -sum(b) / sum(a_i). Rejects a zero slope sum.
    """
    b = np.asarray(bids, dtype=float)
    if b.shape != (market.n,):
        raise ValueError(f"expected {market.n} bids, got shape {b.shape}")
    if not np.all(np.isfinite(b)):
        raise ValueError("bids must be finite")
    return -float(np.sum(b)) / _sensitivity_sum(len(b), market, a_overrides)


def settle(
    bids: Sequence[float],
    market: MarketParams,
    a_overrides: Sequence[float] | None = None,
) -> TradeOutcome:
    """Clear the market and split the traded quantities.

    Each prosumer trades q_i = a_i*price + b_i; with a shared slope this
    reduces to q_i = b_i - mean(b), which keeps the quantities summing to
    zero at full float precision.
    """
    b = np.asarray(bids, dtype=float)
    price = clear_price(b, market, a_overrides)
    if a_overrides is None:
        q = b - float(np.mean(b))
    else:
        q = np.asarray(a_overrides, dtype=float) * price + b
    return TradeOutcome(q=q, lambda_c=price)


def classify_roles(
    bids: Sequence[float],
    market: MarketParams,
    a_overrides: Sequence[float] | None = None,
) -> list[str]:
    """Label each prosumer seller/buyer/neutral from its traded quantity.

    With a shared slope the traded quantity is b_i - mean(b), so "buyer"
    is exactly "bids above average". Quantities within NEUTRAL_BID_TOL of
    zero are neutral.
    """
    trade = settle(bids, market, a_overrides)
    roles = []
    for q in trade.q:
        if q > NEUTRAL_BID_TOL:
            roles.append(ROLE_BUYER)
        elif q < -NEUTRAL_BID_TOL:
            roles.append(ROLE_SELLER)
        else:
            roles.append(ROLE_NEUTRAL)
    return roles


def outcome_from_bids(scenario: Scenario, bids: Sequence[float]) -> EquilibriumOutcome:
    """Settle a bid vector and price the resulting allocation.

    Production follows from each prosumer's balance p_i = D_i - q_i; the
    per-prosumer cost is disutility plus the sharing payment.
    """
    overrides = scenario.sensitivities() if scenario.heterogeneous else None
    trade = settle(bids, scenario.market, overrides)
    _, _, demand = scenario.coeff_arrays()
    p = demand - trade.q
    costs = np.array(
        [
            total_cost(pro, p_i, q_i, trade.lambda_c)
            for pro, p_i, q_i in zip(scenario.prosumers, p, trade.q)
        ]
    )
    social = float(
        np.sum([disutility(pro, p_i) for pro, p_i in zip(scenario.prosumers, p)])
    )
    return EquilibriumOutcome(
        p=p,
        bids=np.asarray(bids, dtype=float).copy(),
        trade=trade,
        cost_per_prosumer=costs,
        social_disutility=social,
    )
