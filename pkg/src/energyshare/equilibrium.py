"""Direct solvers: sharing-game equilibria, social optima, and baselines.

The single-resource sharing game has a unique Nash equilibrium, and it is
the minimizer of an equivalent convex program: each prosumer's quadratic
coefficient is shifted by -1/(2(n-1)a) and its linear coefficient by
D_i/((n-1)a), subject to the aggregate balance constraint. That program
separates per prosumer, so the equilibrium has a closed form. The
multi-resource variant couples the resources of one prosumer and is solved
as a dense KKT linear system. An iterative best-response solver covers
per-prosumer price sensitivities, where no closed form exists.

Solvers are pure functions of their scenario; run as many in parallel as
you like.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from energyshare import protocol
from energyshare.market import MarketParams, Scenario, disutility


class SolverError(ValueError):
    """A scenario violates a solver precondition or yields no solution."""


@dataclass(frozen=True)
class MrpResource:
    """Disutility coefficients of one resource of a multi-resource prosumer."""

    c: float
    d: float

    def __post_init__(self) -> None:
        if not self.c > 0:
            raise ValueError(f"c must be > 0, got {self.c}")
        if not self.d > 0:
            raise ValueError(f"d must be > 0, got {self.d}")


@dataclass(frozen=True)
class MrpProsumer:
    """A participant controlling several resources behind one bid."""

    resources: tuple[MrpResource, ...]
    demand_reduction: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "resources", tuple(self.resources))
        if not self.resources:
            raise ValueError("a prosumer needs at least one resource")
        if not np.isfinite(self.demand_reduction):
            raise ValueError("demand_reduction must be finite")


@dataclass(frozen=True)
class MrpScenario:
    """A market of multi-resource prosumers; market.n is the prosumer count."""

    market: MarketParams
    prosumers: tuple[MrpProsumer, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "prosumers", tuple(self.prosumers))
        if len(self.prosumers) != self.market.n:
            raise ValueError(
                f"scenario has {len(self.prosumers)} prosumers but market.n"
                f" = {self.market.n}"
            )

    @property
    def resource_counts(self) -> tuple[int, ...]:
        return tuple(len(p.resources) for p in self.prosumers)

    @property
    def total_resources(self) -> int:
        return sum(self.resource_counts)

    def flat_coeffs(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(c, d) for all resources in prosumer order, plus per-prosumer D."""
        c = np.array([r.c for p in self.prosumers for r in p.resources])
        d = np.array([r.d for p in self.prosumers for r in p.resources])
        dem = np.array([p.demand_reduction for p in self.prosumers])
        return c, d, dem


@dataclass(frozen=True)
class SolveReport:
    """Solution of one solve.

    p: production adjustments, one per prosumer (single-resource) or one per
       resource in prosumer order (multi-resource; see resource_counts).
    bids: equilibrium-consistent bid per prosumer.
    price: clearing price lambda* ($/kW); xi is the dual of the aggregate
       balance constraint and equals -price by convention.
    kkt_residual: largest violation of the solver's optimality system.
    """

    p: np.ndarray
    bids: np.ndarray
    price: float
    xi: float
    kkt_residual: float
    resource_counts: tuple[int, ...] | None = None

    def production_by_prosumer(self) -> np.ndarray:
        """Total adjustment per prosumer (sums resources for MRP reports)."""
        if self.resource_counts is None:
            return self.p
        splits = np.cumsum(self.resource_counts)[:-1]
        return np.array([seg.sum() for seg in np.split(self.p, splits)])


def _balanced_quadratic_min(
    quad: np.ndarray, lin: np.ndarray, total: float
) -> tuple[np.ndarray, float]:
    """Minimize sum(quad*x^2 + lin*x) subject to sum(x) = total.

    Requires quad > 0 elementwise. Returns (x, mu) where mu is the common
    gradient value 2*quad*x + lin at the optimum.
    """
    w = 1.0 / (2.0 * quad)
    mu = (total + float(np.sum(lin * w))) / float(np.sum(w))
    return (mu - lin) * w, mu


def _require_game_size(n: int) -> None:
    # interaction terms divide by (n-1)*a
    if n < 2:
        raise SolverError(f"the sharing game needs at least 2 prosumers, got {n}")


def solve_ne_closed_form(scenario: Scenario) -> SolveReport:
    """Nash equilibrium of the shared-slope game, via its convex reduction.

    The clearing price comes out as the average marginal disutility, the
    bids as b_i = D_i - p_i - a*price, and the production adjustments sum
    to the total demand reduction.
    """
    if scenario.heterogeneous:
        raise SolverError(
            "closed form needs the shared market slope; use"
            " solve_ne_heterogeneous for per-prosumer sensitivities"
        )
    n = scenario.market.n
    _require_game_size(n)
    a = scenario.market.a
    c, d, demand = scenario.coeff_arrays()
    k = 1.0 / ((n - 1) * a)
    p, price = _balanced_quadratic_min(c - 0.5 * k, d + demand * k, float(demand.sum()))
    bids = demand - p - a * price
    residual = float(
        np.max(np.abs(2.0 * (c - 0.5 * k) * p + (d + demand * k) - price))
    )
    return SolveReport(p=p, bids=bids, price=price, xi=-price, kkt_residual=residual)


def solve_social_optimum(scenario: Scenario) -> SolveReport:
    """Minimum-total-disutility allocation under the aggregate balance.

    Equalizes marginal disutilities across prosumers; works for any n >= 1
    since no market interaction is involved. The reported bids embed the
    allocation in the market's bid language for uniformity.
    """
    a = scenario.market.a
    c, d, demand = scenario.coeff_arrays()
    p, price = _balanced_quadratic_min(c, d, float(demand.sum()))
    bids = demand - p - a * price
    residual = float(np.max(np.abs(2.0 * c * p + d - price)))
    return SolveReport(p=p, bids=bids, price=price, xi=-price, kkt_residual=residual)


def solve_individual(scenario: Scenario) -> np.ndarray:
    """Per-prosumer cost of meeting the reduction alone: f_i(D_i)."""
    return np.array(
        [disutility(p, p.demand_reduction) for p in scenario.prosumers]
    )


def solve_mrp_individual(prosumer: MrpProsumer) -> np.ndarray:
    """Split one prosumer's reduction over its resources at minimum cost.

    Marginal disutilities come out equal across the prosumer's resources.
    """
    c = np.array([r.c for r in prosumer.resources])
    d = np.array([r.d for r in prosumer.resources])
    p, _ = _balanced_quadratic_min(c, d, prosumer.demand_reduction)
    return p


def solve_mrp_social(scenario: MrpScenario) -> SolveReport:
    """Social optimum over all resources of all prosumers."""
    a = scenario.market.a
    c, d, demand = scenario.flat_coeffs()
    p, price = _balanced_quadratic_min(c, d, float(demand.sum()))
    residual = float(np.max(np.abs(2.0 * c * p + d - price)))
    splits = np.cumsum(scenario.resource_counts)[:-1]
    per_prosumer = np.array([seg.sum() for seg in np.split(p, splits)])
    bids = demand - per_prosumer - a * price
    return SolveReport(
        p=p,
        bids=bids,
        price=price,
        xi=-price,
        kkt_residual=residual,
        resource_counts=scenario.resource_counts,
    )


def solve_mrp_ne(scenario: MrpScenario) -> SolveReport:
    """Nash equilibrium of the multi-resource sharing game.

    Solves the equivalent convex program's KKT conditions as one dense
    linear system in the resource adjustments and the balance dual. The
    cross terms couple only resources of the same prosumer, so each
    diagonal block is 2*diag(c) plus a positive rank-one bump, which keeps
    the system nonsingular for valid inputs; that is asserted numerically
    before solving. A single prosumer has nobody to trade with, so its
    game collapses to the social optimum and is answered by it.
    """
    n_pros = scenario.market.n
    if n_pros == 1:
        return solve_mrp_social(scenario)
    a = scenario.market.a
    c, d, demand = scenario.flat_coeffs()
    counts = scenario.resource_counts
    n_res = scenario.total_resources
    k = 1.0 / ((n_pros - 1) * a)

    system = np.zeros((n_res + 1, n_res + 1))
    rhs = np.zeros(n_res + 1)
    offset = 0
    for count, dem_i in zip(counts, demand):
        block = slice(offset, offset + count)
        system[block, block] = -k
        rhs[block] = -d[block] - dem_i * k
        offset += count
    system[np.arange(n_res), np.arange(n_res)] += 2.0 * c
    system[:n_res, n_res] = 1.0
    system[n_res, :n_res] = 1.0
    rhs[n_res] = demand.sum()

    offset = 0
    for count in counts:
        block = system[offset : offset + count, offset : offset + count]
        if np.linalg.eigvalsh(block).min() <= 0:
            raise SolverError(
                "infeasible parameters: a prosumer's cost block is not"
                " positive definite"
            )
        offset += count

    try:
        sol = np.linalg.solve(system, rhs)
    except np.linalg.LinAlgError as exc:
        raise SolverError(f"infeasible parameters: singular KKT system ({exc})")
    p = sol[:n_res]
    price = -float(sol[n_res])
    residual = float(np.max(np.abs(system @ sol - rhs)))
    splits = np.cumsum(counts)[:-1]
    per_prosumer = np.array([seg.sum() for seg in np.split(p, splits)])
    bids = demand - per_prosumer - a * price
    return SolveReport(
        p=p,
        bids=bids,
        price=price,
        xi=-price,
        kkt_residual=residual,
        resource_counts=counts,
    )


def solve_ne_heterogeneous(
    scenario: Scenario,
    damping: float = 0.5,
    max_iter: int = 10000,
    price_tolerance: float = 1e-10,
) -> SolveReport:
    """Equilibrium under per-prosumer price sensitivities.

    No closed form exists here, so the solver runs the damped bidding
    iteration to a fixed point and validates it against each prosumer's
    stationarity condition. Non-convergence raises with the last residual
    attached.
    """
    _require_game_size(scenario.market.n)
    config = protocol.ProtocolConfig(
        damping=damping, max_iter=max_iter, price_tolerance=price_tolerance
    )
    result = protocol.run_protocol(scenario, config)
    outcome = result.outcome
    residual = float(
        np.max(protocol.stationarity_residuals(scenario, outcome.bids))
    )
    return SolveReport(
        p=outcome.p,
        bids=outcome.bids,
        price=outcome.trade.lambda_c,
        xi=-outcome.trade.lambda_c,
        kkt_residual=residual,
    )
