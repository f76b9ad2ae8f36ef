"""Experiment layer: scheme comparisons, sweeps, partitions, generators.

Reproducible studies over the market: individual-vs-sharing-vs-optimal
comparisons, participant-count and price-sensitivity sweeps, competition
studies via equal partitions of multi-resource prosumers, and seeded
random scenario generation. Every cell of a sweep is a pure solver call,
so sweeps parallelize trivially; this module keeps them serial and in
deterministic order.

Emits plain CSV tables (one row per cell) for external plotting tools.
Column units: energy in kW, money in $, prices in $/kW, marginal
disutility variance in ($/kW)^2; relative differences are dimensionless.
"""

from __future__ import annotations

import csv
import statistics
import time
from dataclasses import dataclass, replace
from typing import IO, Iterable, Sequence

import numpy as np

from energyshare.equilibrium import (
    MrpProsumer,
    MrpResource,
    MrpScenario,
    SolveReport,
    SolverError,
    solve_individual,
    solve_mrp_ne,
    solve_mrp_social,
    solve_ne_closed_form,
    solve_ne_heterogeneous,
    solve_social_optimum,
)
from energyshare.market import (
    MarketParams,
    Prosumer,
    Scenario,
    disutility,
    outcome_from_bids,
)
from energyshare.protocol import ProtocolConfig, run_protocol

# RNG stream tags so single-resource and multi-resource draws never collide
_STREAM_SINGLE = 0
_STREAM_MRP = 1


@dataclass(frozen=True)
class GeneratorBounds:
    """Uniform draw ranges for random scenarios, plus the base seed.

    Defaults are the stock experiment ranges: c in [0.001, 0.01] $/kW^2,
    d in [0.02, 0.12] $/kW, demand reduction in [0, 1000] kW, slope -200.
    het_factor A switches on per-prosumer slopes drawn from [A*a, 0).
    """

    c_lo: float = 0.001
    c_hi: float = 0.01
    d_lo: float = 0.02
    d_hi: float = 0.12
    demand_lo: float = 0.0
    demand_hi: float = 1000.0
    a: float = -200.0
    het_factor: float | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0 < self.c_lo <= self.c_hi:
            raise ValueError("need 0 < c_lo <= c_hi")
        if not 0 < self.d_lo <= self.d_hi:
            raise ValueError("need 0 < d_lo <= d_hi")
        if not self.demand_lo <= self.demand_hi:
            raise ValueError("need demand_lo <= demand_hi")
        if not self.a < 0:
            raise ValueError("price sensitivity a must be < 0")
        if self.het_factor is not None and not self.het_factor >= 1:
            raise ValueError("het_factor must be >= 1")


@dataclass(frozen=True)
class ComparisonReport:
    """Costs of the three schemes on one scenario.

    Per-prosumer costs: individual baseline f_i(D_i), sharing-market cost
    (disutility plus trade payment), and the social planner's f_i. PoA is
    the sharing-to-optimal total disutility ratio.
    """

    idl_costs: np.ndarray
    smk_costs: np.ndarray
    sco_costs: np.ndarray
    idl_total: float
    smk_total: float
    sco_total: float
    rel_idl_sco: float
    rel_smk_sco: float
    poa: float
    price: float
    md_variance: float


@dataclass(frozen=True)
class SweepCell:
    """One (participant count, seed) cell of the efficiency sweep."""

    n: int
    seed: int
    het_factor: float | None
    smk_total: float
    sco_total: float
    rel_cost_diff: float
    avg_cost_diff: float
    md_variance: float
    poa: float


@dataclass(frozen=True)
class ASweepCell:
    """One price-sensitivity multiplier cell."""

    multiplier: float
    a: float
    smk_total: float
    sco_total: float


@dataclass(frozen=True)
class PartitionPlan:
    """How to split each multi-resource prosumer into z new ones.

    groups holds, per new prosumer, the flat resource indices it takes
    over; source the original prosumer index; demands the reassigned
    reduction obligations; residuals the per-new-prosumer demand left
    uncovered by the parent's equilibrium production (equal within a
    parent by construction, which makes the same-sign condition hold).
    """

    z: int
    source: tuple[int, ...]
    groups: tuple[tuple[int, ...], ...]
    demands: tuple[float, ...]
    residuals: tuple[float, ...]


@dataclass(frozen=True)
class PartitionStep:
    """One row of a competition study: the market at a given prosumer count."""

    prosumer_count: int
    total_disutility: float
    md_variance: float
    relative_social_cost: float
    price: float
    min_residual_product: float
    demand_split_error: float


@dataclass(frozen=True)
class TimingCell:
    n: int
    direct_median_s: float
    iterative_median_s: float


def _rng(seed: int, n: int, stream: int) -> np.random.Generator:
    # PCG64 with an explicit seed sequence: identical draws on every
    # platform and run for the same (seed, size, stream)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, n, stream])))


def generate_scenario(bounds: GeneratorBounds, n: int, seed: int | None = None) -> Scenario:
    """Draw a single-resource scenario with n prosumers.

    Draw order: all c, all d, all demand reductions, then per-prosumer
    slopes when het_factor is set. Same (bounds, n, seed) always yields
    the same scenario.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = _rng(bounds.seed if seed is None else seed, n, _STREAM_SINGLE)
    c = rng.uniform(bounds.c_lo, bounds.c_hi, n)
    d = rng.uniform(bounds.d_lo, bounds.d_hi, n)
    dem = rng.uniform(bounds.demand_lo, bounds.demand_hi, n)
    if bounds.het_factor is not None:
        a_i = rng.uniform(bounds.het_factor * bounds.a, 0.0, n)
        prosumers = tuple(
            Prosumer(c=ci, d=di, demand_reduction=Di, price_sensitivity=ai)
            for ci, di, Di, ai in zip(c, d, dem, a_i)
        )
    else:
        prosumers = tuple(
            Prosumer(c=ci, d=di, demand_reduction=Di)
            for ci, di, Di in zip(c, d, dem)
        )
    return Scenario(market=MarketParams(a=bounds.a, n=n), prosumers=prosumers)


def generate_mrp_scenario(
    bounds: GeneratorBounds,
    prosumer_count: int,
    resources_each: int | Sequence[int],
    seed: int | None = None,
) -> MrpScenario:
    """Draw a multi-resource scenario.

    resources_each may be one count for everybody or a per-prosumer list.
    Draw order per prosumer: its resource c's, its resource d's, its
    demand reduction.
    """
    if prosumer_count < 1:
        raise ValueError("prosumer_count must be >= 1")
    if isinstance(resources_each, int):
        counts = [resources_each] * prosumer_count
    else:
        counts = list(resources_each)
    if len(counts) != prosumer_count or any(k < 1 for k in counts):
        raise ValueError("resources_each must give a positive count per prosumer")
    rng = _rng(bounds.seed if seed is None else seed, prosumer_count, _STREAM_MRP)
    prosumers = []
    for k in counts:
        c = rng.uniform(bounds.c_lo, bounds.c_hi, k)
        d = rng.uniform(bounds.d_lo, bounds.d_hi, k)
        dem = float(rng.uniform(bounds.demand_lo, bounds.demand_hi))
        prosumers.append(
            MrpProsumer(
                resources=tuple(MrpResource(c=ci, d=di) for ci, di in zip(c, d)),
                demand_reduction=dem,
            )
        )
    return MrpScenario(
        market=MarketParams(a=bounds.a, n=prosumer_count), prosumers=tuple(prosumers)
    )


def _solve_ne(scenario: Scenario) -> SolveReport:
    if scenario.heterogeneous:
        return solve_ne_heterogeneous(scenario)
    return solve_ne_closed_form(scenario)


def md_variance(scenario: Scenario | MrpScenario, productions: np.ndarray) -> float:
    """Population variance of resource-level marginal disutilities.

    For multi-resource scenarios productions is flat in prosumer order.
    Zero exactly when the allocation is socially optimal.
    """
    if isinstance(scenario, MrpScenario):
        c, d, _ = scenario.flat_coeffs()
    else:
        c, d, _ = scenario.coeff_arrays()
    md = 2.0 * c * np.asarray(productions, dtype=float) + d
    return float(np.var(md))


def compare_schemes(scenario: Scenario) -> ComparisonReport:
    """Individual baseline vs sharing market vs social optimum.

    Relative differences are against the social optimum's total; PoA is
    their cost ratio (1 when the schemes coincide).
    """
    idl_costs = solve_individual(scenario)
    ne = _solve_ne(scenario)
    outcome = outcome_from_bids(scenario, ne.bids)
    sco = solve_social_optimum(scenario)
    sco_costs = np.array(
        [disutility(pro, p) for pro, p in zip(scenario.prosumers, sco.p)]
    )
    idl_total = float(idl_costs.sum())
    smk_total = outcome.social_disutility
    sco_total = float(sco_costs.sum())
    if sco_total != 0.0:
        rel_idl = (idl_total - sco_total) / sco_total
        rel_smk = (smk_total - sco_total) / sco_total
        poa = smk_total / sco_total
    else:
        rel_idl = float("inf") if idl_total else 0.0
        rel_smk = float("inf") if smk_total else 0.0
        poa = float("inf") if smk_total else 1.0
    return ComparisonReport(
        idl_costs=idl_costs,
        smk_costs=outcome.cost_per_prosumer,
        sco_costs=sco_costs,
        idl_total=idl_total,
        smk_total=smk_total,
        sco_total=sco_total,
        rel_idl_sco=rel_idl,
        rel_smk_sco=rel_smk,
        poa=poa,
        price=ne.price,
        md_variance=md_variance(scenario, ne.p),
    )


def sweep_n(
    bounds: GeneratorBounds, n_values: Sequence[int], seeds: Sequence[int]
) -> list[SweepCell]:
    """Efficiency of sharing as the participant count grows.

    One random scenario per (n, seed) cell. Reports the relative and
    per-participant cost gaps between the sharing equilibrium and the
    social optimum, and the marginal-disutility variance at equilibrium.
    """
    for n in n_values:
        if not 2 <= n <= 10000:
            raise ValueError(f"n values must be in [2, 10000], got {n}")
    cells = []
    for n in n_values:
        for seed in seeds:
            scenario = generate_scenario(bounds, n, seed)
            ne = _solve_ne(scenario)
            sco = solve_social_optimum(scenario)
            c, d, _ = scenario.coeff_arrays()
            smk_total = float(np.sum(c * ne.p**2 + d * ne.p))
            sco_total = float(np.sum(c * sco.p**2 + d * sco.p))
            cells.append(
                SweepCell(
                    n=n,
                    seed=seed,
                    het_factor=bounds.het_factor,
                    smk_total=smk_total,
                    sco_total=sco_total,
                    rel_cost_diff=(smk_total - sco_total) / sco_total,
                    avg_cost_diff=(smk_total - sco_total) / n,
                    md_variance=md_variance(scenario, ne.p),
                    poa=smk_total / sco_total,
                )
            )
    return cells


def sweep_heterogeneity(
    bounds: GeneratorBounds,
    het_factors: Sequence[float],
    n_values: Sequence[int],
    seeds: Sequence[int],
) -> list[SweepCell]:
    """sweep_n at several degrees of slope heterogeneity."""
    cells = []
    for factor in het_factors:
        cells.extend(sweep_n(replace(bounds, het_factor=factor), n_values, seeds))
    return cells


def _scale_sensitivity(scenario: Scenario, multiplier: float) -> Scenario:
    market = MarketParams(a=scenario.market.a * multiplier, n=scenario.market.n)
    if scenario.heterogeneous:
        prosumers = tuple(
            replace(p, price_sensitivity=p.price_sensitivity * multiplier)
            for p in scenario.prosumers
        )
    else:
        prosumers = scenario.prosumers
    return Scenario(market=market, prosumers=prosumers)


def sweep_a(scenario: Scenario, multipliers: Sequence[float]) -> list[ASweepCell]:
    """Total sharing cost as the price sensitivity magnitude grows.

    Multipliers scale |a| and must be >= 1; the sharing total is
    non-increasing along the sweep and floored by the social optimum.
    """
    cells = []
    sco_total = _social_total(scenario)
    for m in multipliers:
        if not m >= 1:
            raise ValueError(f"multipliers must be >= 1, got {m}")
        scaled = _scale_sensitivity(scenario, float(m))
        ne = _solve_ne(scaled)
        c, d, _ = scaled.coeff_arrays()
        smk_total = float(np.sum(c * ne.p**2 + d * ne.p))
        cells.append(
            ASweepCell(
                multiplier=float(m),
                a=scaled.market.a,
                smk_total=smk_total,
                sco_total=sco_total,
            )
        )
    return cells


def _social_total(scenario: Scenario) -> float:
    sco = solve_social_optimum(scenario)
    c, d, _ = scenario.coeff_arrays()
    return float(np.sum(c * sco.p**2 + d * sco.p))


def mrp_total_disutility(scenario: MrpScenario, productions: np.ndarray) -> float:
    """Summed resource disutility at a flat production vector."""
    c, d, _ = scenario.flat_coeffs()
    p = np.asarray(productions, dtype=float)
    return float(np.sum(c * p**2 + d * p))


def make_equal_partition(
    scenario: MrpScenario, z: int, require_equal_c: bool = False
) -> PartitionPlan:
    """Split every prosumer into z equal heirs around the current equilibrium.

    Each heir takes a contiguous group of its parent's resources; its
    demand is that group's equilibrium production plus an equal share of
    the parent's trading residual. Equal residual shares make every
    residual product non-negative, so the partition qualifies as an equal
    partition for any instance. require_equal_c enforces the strict scope
    (one shared c and one shared resource count) under which the
    efficiency improvement is guaranteed rather than empirical.
    """
    if z < 1:
        raise SolverError(f"z must be a positive integer, got {z}")
    counts = scenario.resource_counts
    for i, k in enumerate(counts):
        if k % z != 0:
            raise SolverError(
                f"z = {z} does not divide prosumer {i}'s resource count {k}"
            )
    if require_equal_c:
        c, _, _ = scenario.flat_coeffs()
        if np.ptp(c) != 0.0:
            raise SolverError("strict mode requires one shared c for all resources")
        if len(set(counts)) != 1:
            raise SolverError("strict mode requires equal resource counts")

    ne = solve_mrp_ne(scenario)
    source: list[int] = []
    groups: list[tuple[int, ...]] = []
    demands: list[float] = []
    residuals: list[float] = []
    offset = 0
    for i, (prosumer, k) in enumerate(zip(scenario.prosumers, counts)):
        block = ne.p[offset : offset + k]
        share = (prosumer.demand_reduction - float(block.sum())) / z
        group_size = k // z
        for g in range(z):
            idx = tuple(range(offset + g * group_size, offset + (g + 1) * group_size))
            group_p = float(ne.p[list(idx)].sum())
            source.append(i)
            groups.append(idx)
            demands.append(group_p + share)
            residuals.append(share)
        offset += k
    return PartitionPlan(
        z=z,
        source=tuple(source),
        groups=tuple(groups),
        demands=tuple(demands),
        residuals=tuple(residuals),
    )


def apply_partition(scenario: MrpScenario, plan: PartitionPlan) -> MrpScenario:
    """Materialize the partitioned market."""
    flat_resources = [r for p in scenario.prosumers for r in p.resources]
    prosumers = tuple(
        MrpProsumer(
            resources=tuple(flat_resources[j] for j in group),
            demand_reduction=demand,
        )
        for group, demand in zip(plan.groups, plan.demands)
    )
    return MrpScenario(
        market=MarketParams(a=scenario.market.a, n=len(prosumers)),
        prosumers=prosumers,
    )


def verify_partition(scenario: MrpScenario, plan: PartitionPlan) -> tuple[float, float]:
    """(smallest residual product, largest demand split error) of a plan.

    The first must be >= 0 and the second ~0 for a valid equal partition.
    """
    residuals = np.asarray(plan.residuals)
    source = np.asarray(plan.source)
    min_product = float("inf")
    for i in range(scenario.market.n):
        r = residuals[source == i]
        products = np.outer(r, r)
        min_product = min(min_product, float(products.min()))
    demands = np.asarray(plan.demands)
    split_error = 0.0
    for i, prosumer in enumerate(scenario.prosumers):
        split_error = max(
            split_error,
            abs(float(demands[source == i].sum()) - prosumer.demand_reduction),
        )
    return min_product, split_error


def partition_study(
    scenario: MrpScenario, z_chain: Sequence[int], require_equal_c: bool = False
) -> list[PartitionStep]:
    """Competition study: re-solve the market along a chain of partitions.

    The relative social cost compares each stage's total disutility to the
    single-owner (social optimal) cost of the same resource pool.
    """
    sco_total = mrp_total_disutility(scenario, solve_mrp_social(scenario).p)

    def _step(scn: MrpScenario, report: SolveReport, min_prod: float, err: float):
        total = mrp_total_disutility(scn, report.p)
        return PartitionStep(
            prosumer_count=scn.market.n,
            total_disutility=total,
            md_variance=md_variance(scn, report.p),
            relative_social_cost=total / sco_total - 1.0,
            price=report.price,
            min_residual_product=min_prod,
            demand_split_error=err,
        )

    current = scenario
    steps = [_step(current, solve_mrp_ne(current), float("nan"), float("nan"))]
    for z in z_chain:
        plan = make_equal_partition(current, z, require_equal_c)
        min_prod, err = verify_partition(current, plan)
        current = apply_partition(current, plan)
        steps.append(_step(current, solve_mrp_ne(current), min_prod, err))
    return steps


def estimate_poa_beta(cells: Iterable[SweepCell]) -> float:
    """Empirical constant bounding n*(PoA - 1) over a sweep."""
    return max(cell.n * (cell.poa - 1.0) for cell in cells)


def timing_benchmark(
    bounds: GeneratorBounds,
    n_values: Sequence[int],
    repeats: int = 5,
    config: ProtocolConfig | None = None,
) -> list[TimingCell]:
    """Median wall-clock times: direct solve vs iterative protocol."""
    config = config or ProtocolConfig()
    cells = []
    for n in n_values:
        scenario = generate_scenario(bounds, n)
        direct = []
        iterative = []
        for _ in range(repeats):
            start = time.perf_counter()
            solve_ne_closed_form(scenario)
            direct.append(time.perf_counter() - start)
            start = time.perf_counter()
            run_protocol(scenario, config)
            iterative.append(time.perf_counter() - start)
        cells.append(
            TimingCell(
                n=n,
                direct_median_s=statistics.median(direct),
                iterative_median_s=statistics.median(iterative),
            )
        )
    return cells


def write_table_csv(
    target: str | IO[str], header: Sequence[str], rows: Iterable[Sequence]
) -> None:
    """Write rows as CSV with floats in shortest round-trip form."""

    def _fmt(value):
        if value is None:
            return ""
        if isinstance(value, (float, np.floating)):
            return repr(float(value))
        return str(value)

    def _write(fh: IO[str]) -> None:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(list(header))
        for row in rows:
            writer.writerow([_fmt(v) for v in row])

    if isinstance(target, (str, bytes)):
        with open(target, "w", newline="") as fh:
            _write(fh)
    else:
        _write(target)
